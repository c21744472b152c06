#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <functional>
#include <random>

#include "bikesim/rebalance.hpp"
#include "helpers.hpp"

using namespace bikesim::rebalance;

TEST_CASE("baseline predictor: same slot-of-week mean with half-up rounding") {
    const std::size_t cells = 2;
    DemandHistory h(cells);
    // two full prior weeks; slot 10 of week saw 3 then 2 requests in cell 0
    for (int i = 0; i < 3; ++i) h.record(0, 10);
    for (int i = 0; i < 2; ++i) h.record(0, 10 + bikesim::demandio::kSlotsPerWeek);
    std::int64_t now = 2 * bikesim::demandio::kSlotsPerWeek + 9;  // predicting slot ...+10
    BaselinePredictor p;
    auto out = p.predict(h, now, 4, 1);
    REQUIRE(out.size() == cells);
    CHECK(out[0] == 3);  // mean 2.5 rounds half-up to 3
    CHECK(out[1] == 0);
    CHECK_FALSE(p.last_call_had_insufficient_history());
}

TEST_CASE("baseline predictor: trailing-window fallback and cold start") {
    DemandHistory h(1);
    BaselinePredictor p;
    // cold start: now_slot < window
    auto cold = p.predict(h, 2, 4, 1);
    CHECK(cold[0] == 0);
    CHECK(p.last_call_had_insufficient_history());

    // less than a week of history: trailing mean over the window
    h.record(0, 6);
    h.record(0, 7);
    h.record(0, 7);  // window slots 6,7,8,9 hold 1,2,0,0 -> mean 0.75 -> 1
    auto out = p.predict(h, 10, 4, 1);
    CHECK(out[0] == 1);
    CHECK_FALSE(p.last_call_had_insufficient_history());
}

TEST_CASE("perfect foresight returns the actual slot demand") {
    std::vector<std::pair<std::size_t, std::int64_t>> truth = {{0, 5}, {0, 5}, {1, 5}, {1, 6}};
    PerfectForesightPredictor p(2, truth);
    DemandHistory unused(2);
    auto out = p.predict(unused, 4, 4, 1);
    CHECK(out[0] == 2);
    CHECK(out[1] == 1);
    auto out6 = p.predict(unused, 5, 4, 1);
    CHECK(out6[1] == 1);
    auto far = p.predict(unused, 100, 4, 1);
    CHECK(far[0] == 0);
}

TEST_CASE("external file predictor") {
    std::string path = testutil::scratch_path("forecast.txt");
    {
        std::ofstream out(path);
        out << "bikesim-forecast 1 2 3\n";
        out << "1 2 3\n";
        out << "4 5 6\n";
    }
    ExternalFilePredictor p(path);
    DemandHistory unused(2);
    auto out = p.predict(unused, 1, 4, 1);  // target slot 2
    CHECK(out[0] == 3);
    CHECK(out[1] == 6);

    std::string bad = testutil::scratch_path("forecast_bad.txt");
    {
        std::ofstream out(bad);
        out << "wrong-magic 1 2 3\n";
    }
    CHECK_THROWS(ExternalFilePredictor(bad));
    CHECK_THROWS(ExternalFilePredictor("/nonexistent/forecast"));
}

// ---- transportation LP oracle --------------------------------------------

namespace {

// brute force over all integer T with row sums <= B; slack is implied:
// S_j = max(0, D_j - inflow_j)
std::int64_t brute_force_objective(const std::vector<std::int64_t>& B,
                                   const std::vector<std::int64_t>& D,
                                   const std::vector<std::vector<std::int64_t>>& C,
                                   const std::vector<std::int64_t>& lambda) {
    const std::size_t n = B.size();
    std::vector<std::int64_t> inflow(n, 0);
    std::int64_t best = std::numeric_limits<std::int64_t>::max();

    // enumerate row i's allocation recursively, then recurse to row i+1
    std::function<void(std::size_t, std::size_t, std::int64_t, std::int64_t)> row_fill =
        [&](std::size_t i, std::size_t j, std::int64_t left, std::int64_t cost) {
            if (j == n) {
                if (i + 1 == n) {
                    std::int64_t total = cost;
                    for (std::size_t k = 0; k < n; ++k) {
                        total += lambda[k] * std::max<std::int64_t>(0, D[k] - inflow[k]);
                    }
                    best = std::min(best, total);
                } else {
                    row_fill(i + 1, 0, B[i + 1], cost);
                }
                return;
            }
            for (std::int64_t t = 0; t <= left; ++t) {
                inflow[j] += t;
                row_fill(i, j + 1, left - t, cost + t * C[i][j]);
                inflow[j] -= t;
            }
        };
    if (n == 0) return 0;
    row_fill(0, 0, B[0], 0);
    return best;
}

}  // namespace

TEST_CASE("transportation LP matches brute force on 200 random instances") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> nd(1, 4);
    std::uniform_int_distribution<std::int64_t> bd(0, 3);
    std::uniform_int_distribution<std::int64_t> cost(0, 5000);
    std::uniform_int_distribution<std::int64_t> lam(1000, 60000);

    for (int inst = 0; inst < 200; ++inst) {
        std::size_t n = nd(rng);
        std::vector<std::int64_t> B(n), D(n), lambda(n);
        std::vector<std::vector<std::int64_t>> C(n, std::vector<std::int64_t>(n));
        for (std::size_t i = 0; i < n; ++i) {
            B[i] = bd(rng);
            D[i] = bd(rng);
            lambda[i] = lam(rng);
            for (std::size_t j = 0; j < n; ++j) C[i][j] = i == j ? 0 : cost(rng);
        }
        TransportPlan plan = solve_transportation(B, D, C, lambda);
        std::int64_t expect = brute_force_objective(B, D, C, lambda);
        CHECK(plan.objective == expect);

        // constraints hold exactly
        std::vector<std::int64_t> out(n, 0), in(n, 0);
        for (const auto& f : plan.flows) {
            CHECK(f.amount > 0);
            CHECK(f.from != f.to);
            out[f.from] += f.amount;
            in[f.to] += f.amount;
        }
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(plan.slack[i] >= 0);
            CHECK(plan.slack[i] <= D[i]);
            // diagonal flow (kept in place, not reported) closes the balance
            std::int64_t diag = D[i] - in[i] - plan.slack[i];
            CHECK(diag >= 0);
            CHECK(out[i] + diag <= B[i]);
        }
    }
}

TEST_CASE("transportation LP edge cases") {
    // zero supply: everything is slack
    auto plan = solve_transportation({0, 0}, {2, 1}, {{0, 10}, {10, 0}}, {100, 100});
    CHECK(plan.flows.empty());
    CHECK(plan.slack == std::vector<std::int64_t>{2, 1});
    CHECK(plan.objective == 300);

    // simple move is cheaper than slack
    auto plan2 = solve_transportation({2, 0}, {0, 1}, {{0, 7}, {7, 0}}, {100, 100});
    REQUIRE(plan2.flows.size() == 1);
    CHECK(plan2.flows[0].from == 0);
    CHECK(plan2.flows[0].to == 1);
    CHECK(plan2.flows[0].amount == 1);
    CHECK(plan2.objective == 7);

    // unreachable arc forces slack
    auto plan3 = solve_transportation({2, 0}, {0, 1},
                                      {{0, bikesim::routing::kUnreachable},
                                       {bikesim::routing::kUnreachable, 0}},
                                      {100, 100});
    CHECK(plan3.flows.empty());
    CHECK(plan3.slack[1] == 1);

    CHECK_THROWS_AS(solve_transportation({1}, {1, 2}, {{0}}, {1}), std::invalid_argument);
    CHECK_THROWS_AS(solve_transportation({-1}, {0}, {{0}}, {1}), std::invalid_argument);
}

TEST_CASE("net demand and default lambda") {
    CHECK(net_demand({5, 1, 0}, {2, 3, 1}) == std::vector<std::int64_t>{3, 0, 0});
    auto lambda = default_lambda({{0, 400}, {250, 0}});
    REQUIRE(lambda.size() == 2);
    CHECK(lambda[0] == 4000);
    CHECK(lambda[1] == 4000);
    // unreachable entries ignored
    auto l2 = default_lambda({{0, bikesim::routing::kUnreachable}, {7, 0}});
    CHECK(l2[0] == 70);
}

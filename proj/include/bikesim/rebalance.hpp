#pragma once

// Predictive rebalancing: per-cell demand history and forecasting
// (pluggable predictor seam) plus the unbalanced transportation problem
// solved as a min-cost flow on the bipartite supply/demand graph with a
// slack source. Integer flows fall out of the construction.

#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "bikesim/demandio.hpp"
#include "bikesim/routing.hpp"

namespace bikesim::rebalance {

using routing::LengthMm;

// ---- demand history / forecast -------------------------------------------

/// Request counts per (cell, 15-minute slot), filled as check-outs happen.
class DemandHistory {
public:
    explicit DemandHistory(std::size_t n_cells) : counts_(n_cells) {}

    void record(std::size_t cell, std::int64_t slot) {
        auto& v = counts_.at(cell);
        if (v.size() <= static_cast<std::size_t>(slot)) v.resize(slot + 1, 0);
        v[slot]++;
    }

    std::int64_t count(std::size_t cell, std::int64_t slot) const {
        if (slot < 0) return 0;
        const auto& v = counts_.at(cell);
        return static_cast<std::size_t>(slot) < v.size() ? v[slot] : 0;
    }

    std::size_t n_cells() const { return counts_.size(); }

private:
    std::vector<std::vector<std::int64_t>> counts_;
};

class Predictor {
public:
    virtual ~Predictor() = default;
    /// Expected demand per cell for the slot `prediction_ahead` slots
    /// after `now_slot`, given `window` slots of trailing history.
    virtual std::vector<std::int64_t> predict(const DemandHistory& history,
                                              std::int64_t now_slot, int window,
                                              int prediction_ahead) const = 0;
    virtual std::string name() const = 0;
};

/// Historical average: mean of the same slot-of-week over all complete
/// prior weeks; falls back to the trailing-window mean when the history
/// is shorter than a week. Rounded half-up. Returns all zeros (with the
/// insufficient-history flag set) when the window is not yet covered.
class BaselinePredictor : public Predictor {
public:
    std::vector<std::int64_t> predict(const DemandHistory& history, std::int64_t now_slot,
                                      int window, int prediction_ahead) const override {
        const std::size_t n = history.n_cells();
        std::vector<std::int64_t> out(n, 0);
        insufficient_ = now_slot < window;
        if (insufficient_) return out;
        std::int64_t target = now_slot + prediction_ahead;
        for (std::size_t c = 0; c < n; ++c) {
            std::int64_t sum = 0, obs = 0;
            for (std::int64_t s = target - demandio::kSlotsPerWeek; s >= 0;
                 s -= demandio::kSlotsPerWeek) {
                sum += history.count(c, s);
                ++obs;
            }
            if (obs == 0) {
                for (std::int64_t s = now_slot - window; s < now_slot; ++s) {
                    sum += history.count(c, s);
                    ++obs;
                }
            }
            // round half-up
            out[c] = obs > 0 ? (2 * sum + obs) / (2 * obs) : 0;
        }
        return out;
    }

    std::string name() const override { return "baseline-historical"; }
    bool last_call_had_insufficient_history() const { return insufficient_; }

private:
    mutable bool insufficient_ = false;
};

/// Upper-bound oracle: reads the actual demand of the target slot from
/// the trip file, per cell.
class PerfectForesightPredictor : public Predictor {
public:
    PerfectForesightPredictor(std::size_t n_cells, std::vector<std::pair<std::size_t, std::int64_t>>
                                                       cell_slot_of_request)
        : truth_(n_cells) {
        for (auto [cell, slot] : cell_slot_of_request) {
            auto& v = truth_.at(cell);
            if (v.size() <= static_cast<std::size_t>(slot)) v.resize(slot + 1, 0);
            v[slot]++;
        }
    }

    std::vector<std::int64_t> predict(const DemandHistory&, std::int64_t now_slot, int,
                                      int prediction_ahead) const override {
        std::vector<std::int64_t> out(truth_.size(), 0);
        auto target = static_cast<std::size_t>(now_slot + prediction_ahead);
        for (std::size_t c = 0; c < truth_.size(); ++c) {
            if (target < truth_[c].size()) out[c] = truth_[c][target];
        }
        return out;
    }

    std::string name() const override { return "perfect-foresight"; }

private:
    std::vector<std::vector<std::int64_t>> truth_;
};

/// Injects a separately produced cells x slots forecast matrix.
class ExternalFilePredictor : public Predictor {
public:
    explicit ExternalFilePredictor(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("forecast file: cannot open " + path);
        std::string magic;
        int version = 0;
        std::size_t cells = 0, slots = 0;
        in >> magic >> version >> cells >> slots;
        if (magic != "bikesim-forecast" || version != 1) {
            throw std::runtime_error("forecast file: bad header in " + path);
        }
        matrix_.assign(cells, std::vector<std::int64_t>(slots, 0));
        for (auto& row : matrix_) {
            for (auto& v : row) in >> v;
        }
        if (!in) throw std::runtime_error("forecast file: truncated " + path);
    }

    std::vector<std::int64_t> predict(const DemandHistory&, std::int64_t now_slot, int,
                                      int prediction_ahead) const override {
        std::vector<std::int64_t> out(matrix_.size(), 0);
        auto target = static_cast<std::size_t>(now_slot + prediction_ahead);
        for (std::size_t c = 0; c < matrix_.size(); ++c) {
            if (target < matrix_[c].size()) out[c] = matrix_[c][target];
        }
        return out;
    }

    std::string name() const override { return "external-file"; }

private:
    std::vector<std::vector<std::int64_t>> matrix_;
};

// ---- transportation problem ----------------------------------------------

struct TransportPlan {
    struct Flow {
        std::size_t from, to;
        std::int64_t amount;
    };
    std::vector<Flow> flows;              // inter-cell moves, T_{i,j} > 0, i != j
    std::vector<std::int64_t> slack;      // S_i per cell
    std::int64_t objective = 0;           // sum C*T + sum lambda*S
};

namespace detail {

// standard min-cost max-flow, successive shortest paths with potentials
class MinCostFlow {
public:
    explicit MinCostFlow(std::size_t n) : head_(n, -1) {}

    int add_edge(std::size_t from, std::size_t to, std::int64_t cap, std::int64_t cost) {
        int id = static_cast<int>(edges_.size());
        edges_.push_back({static_cast<int>(to), head_[from], cap, cost});
        head_[from] = id;
        edges_.push_back({static_cast<int>(from), head_[to], 0, -cost});
        head_[to] = id + 1;
        return id;
    }

    std::int64_t flow_on(int edge_id) const { return edges_[edge_id ^ 1].cap; }

    /// push up to `limit` units from s to t; returns (flow, cost)
    std::pair<std::int64_t, std::int64_t> run(std::size_t s, std::size_t t, std::int64_t limit) {
        const std::size_t n = head_.size();
        std::vector<std::int64_t> potential(n, 0);
        std::int64_t total_flow = 0, total_cost = 0;
        const std::int64_t inf = std::numeric_limits<std::int64_t>::max();
        while (total_flow < limit) {
            std::vector<std::int64_t> dist(n, inf);
            std::vector<int> pre(n, -1);
            using QE = std::pair<std::int64_t, std::size_t>;
            std::priority_queue<QE, std::vector<QE>, std::greater<>> pq;
            dist[s] = 0;
            pq.push({0, s});
            while (!pq.empty()) {
                auto [d, u] = pq.top();
                pq.pop();
                if (d != dist[u]) continue;
                for (int e = head_[u]; e != -1; e = edges_[e].next) {
                    if (edges_[e].cap <= 0) continue;
                    auto v = static_cast<std::size_t>(edges_[e].to);
                    std::int64_t nd = d + edges_[e].cost + potential[u] - potential[v];
                    if (nd < dist[v]) {
                        dist[v] = nd;
                        pre[v] = e;
                        pq.push({nd, v});
                    }
                }
            }
            if (dist[t] == inf) break;
            for (std::size_t v = 0; v < n; ++v) {
                if (dist[v] < inf) potential[v] += dist[v];
            }
            std::int64_t push = limit - total_flow;
            for (int e = pre[t]; e != -1; e = pre[edges_[e ^ 1].to]) {
                push = std::min(push, edges_[e].cap);
            }
            for (int e = pre[t]; e != -1; e = pre[edges_[e ^ 1].to]) {
                edges_[e].cap -= push;
                edges_[e ^ 1].cap += push;
                total_cost += push * edges_[e].cost;
            }
            total_flow += push;
        }
        return {total_flow, total_cost};
    }

private:
    struct E {
        int to, next;
        std::int64_t cap, cost;
    };
    std::vector<E> edges_;
    std::vector<int> head_;
};

}  // namespace detail

/// Solve the unbalanced transportation problem: minimize
/// sum C[i][j] T[i][j] + sum lambda[i] S[i] subject to row sums <= B,
/// inflow + slack >= D, T integer >= 0. Costs in mm (or any uniform
/// unit). Unreachable C entries exclude the arc.
inline TransportPlan solve_transportation(const std::vector<std::int64_t>& supply,
                                          const std::vector<std::int64_t>& demand,
                                          const std::vector<std::vector<LengthMm>>& cost,
                                          const std::vector<std::int64_t>& lambda) {
    const std::size_t n = supply.size();
    if (demand.size() != n || cost.size() != n || lambda.size() != n) {
        throw std::invalid_argument("solve_transportation: dimension mismatch");
    }
    std::int64_t total_demand = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (supply[i] < 0 || demand[i] < 0 || lambda[i] < 0) {
            throw std::invalid_argument("solve_transportation: negative input");
        }
        if (cost[i].size() != n) throw std::invalid_argument("solve_transportation: cost not square");
        total_demand += demand[i];
    }

    // nodes: 0 source | 1..n supply | n+1..2n demand | 2n+1 slack | 2n+2 sink
    detail::MinCostFlow mcf(2 * n + 3);
    const std::size_t src = 0, slack_node = 2 * n + 1, sink = 2 * n + 2;
    std::vector<std::vector<int>> arc_id(n, std::vector<int>(n, -1));
    std::vector<int> slack_id(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (supply[i] > 0) mcf.add_edge(src, 1 + i, supply[i], 0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (supply[i] == 0) continue;
        for (std::size_t j = 0; j < n; ++j) {
            if (demand[j] == 0 || cost[i][j] == routing::kUnreachable) continue;
            arc_id[i][j] = mcf.add_edge(1 + i, n + 1 + j, supply[i], cost[i][j]);
        }
    }
    if (total_demand > 0) mcf.add_edge(src, slack_node, total_demand, 0);
    for (std::size_t j = 0; j < n; ++j) {
        if (demand[j] == 0) continue;
        slack_id[j] = mcf.add_edge(slack_node, n + 1 + j, demand[j], lambda[j]);
        mcf.add_edge(n + 1 + j, sink, demand[j], 0);
    }
    auto [flow, obj] = mcf.run(src, sink, total_demand);
    if (flow != total_demand) throw std::logic_error("solve_transportation: infeasible (bug)");

    TransportPlan plan;
    plan.slack.assign(n, 0);
    plan.objective = obj;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (arc_id[i][j] < 0) continue;
            std::int64_t f = mcf.flow_on(arc_id[i][j]);
            if (f > 0 && i != j) plan.flows.push_back({i, j, f});
        }
        if (slack_id[i] >= 0) plan.slack[i] = mcf.flow_on(slack_id[i]);
    }
    return plan;
}

/// Gross forecast minus bikes already present, floored at zero.
inline std::vector<std::int64_t> net_demand(const std::vector<std::int64_t>& forecast,
                                            const std::vector<std::int64_t>& present) {
    std::vector<std::int64_t> out(forecast.size());
    for (std::size_t i = 0; i < forecast.size(); ++i) {
        out[i] = std::max<std::int64_t>(0, forecast[i] - present[i]);
    }
    return out;
}

/// Default slack penalty: well above every transport cost so unmet
/// demand is strictly a last resort.
inline std::vector<std::int64_t> default_lambda(const std::vector<std::vector<LengthMm>>& cost) {
    LengthMm max_c = 0;
    for (const auto& row : cost) {
        for (LengthMm c : row) {
            if (c != routing::kUnreachable) max_c = std::max(max_c, c);
        }
    }
    if (max_c == 0) max_c = 1;
    return std::vector<std::int64_t>(cost.size(), 10 * max_c);
}

}  // namespace bikesim::rebalance

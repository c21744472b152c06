#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "bikesim/engine.hpp"

using namespace bikesim::engine;

TEST_CASE("dispatch order matches a sort oracle") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<TimeMs> delay(0, 5000);
    Engine eng;
    const int n = 100000;
    struct Expect {
        TimeMs time;
        int seq;
    };
    std::vector<Expect> expect;
    std::vector<int> fired;
    for (int i = 0; i < n; ++i) {
        TimeMs d = delay(rng);
        expect.push_back({d, i});
        eng.schedule(d, [&fired, i] { fired.push_back(i); });
    }
    std::stable_sort(expect.begin(), expect.end(),
                     [](const Expect& a, const Expect& b) { return a.time < b.time; });
    eng.run_until(10000);
    REQUIRE(fired.size() == expect.size());
    for (int i = 0; i < n; ++i) CHECK(fired[i] == expect[i].seq);
    CHECK(eng.now() == 10000);
}

TEST_CASE("same-time events fire in insertion order, including nested") {
    Engine eng;
    std::vector<int> order;
    eng.schedule(10, [&] {
        order.push_back(1);
        eng.schedule(0, [&] { order.push_back(3); });  // same time, queued after
    });
    eng.schedule(10, [&] { order.push_back(2); });
    eng.run_until(10);
    CHECK(order == std::vector<int>{1, 2, 3});
}

TEST_CASE("run_until boundary semantics") {
    Engine eng;
    int hits = 0;
    eng.schedule(100, [&] { ++hits; });
    eng.schedule(101, [&] { ++hits; });
    eng.run_until(100);
    CHECK(hits == 1);
    CHECK(eng.now() == 100);
    CHECK(eng.pending());
    eng.drain();
    CHECK(hits == 2);
    CHECK(eng.now() == 101);
    CHECK_THROWS_AS(eng.schedule(-1, [] {}), std::invalid_argument);
}

TEST_CASE("cancellation") {
    Engine eng;
    int hits = 0;
    auto h = eng.schedule(5, [&] { ++hits; });
    CHECK(h.cancel());
    eng.run_until(10);
    CHECK(hits == 0);
    CHECK_FALSE(h.fired());

    auto h2 = eng.schedule(1, [&] { ++hits; });
    eng.run_until(20);
    CHECK(hits == 1);
    CHECK_FALSE(h2.cancel());  // already fired
    CHECK(h2.fired());
}

TEST_CASE("cancel storm matches reference interpreter") {
    // n events; each, when it fires, cancels a pseudorandom other event.
    // The reference interpreter replays the same rule over a sorted list.
    const int n = 2000;
    std::mt19937_64 seq_rng(99);
    std::vector<TimeMs> times(n);
    std::vector<int> victim(n);
    std::uniform_int_distribution<TimeMs> delay(0, 500);
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int i = 0; i < n; ++i) {
        times[i] = delay(seq_rng);
        victim[i] = pick(seq_rng);
    }

    // reference: stable sort by (time, index), walk in order
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return times[a] < times[b]; });
    std::vector<bool> ref_cancelled(n, false), ref_fired(n, false);
    for (int i : order) {
        if (ref_cancelled[i]) continue;
        ref_fired[i] = true;
        if (!ref_fired[victim[i]]) ref_cancelled[victim[i]] = true;
    }

    Engine eng;
    std::vector<EventHandle> handles(n);
    std::vector<bool> fired(n, false);
    for (int i = 0; i < n; ++i) {
        handles[i] = eng.schedule(times[i], [&, i] {
            fired[i] = true;
            handles[victim[i]].cancel();
        });
    }
    eng.run_until(1000);
    for (int i = 0; i < n; ++i) CHECK(fired[i] == ref_fired[i]);
}

TEST_CASE("rng substreams are deterministic and independent of order") {
    Rng a = Rng::substream(123, 7);
    Rng b = Rng::substream(123, 7);
    Rng c = Rng::substream(123, 8);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 100; ++i) {
        auto x = a.next_u64();
        all_equal = all_equal && (x == b.next_u64());
        any_diff = any_diff || (x != c.next_u64());
    }
    CHECK(all_equal);
    CHECK(any_diff);

    Rng d(42);
    for (int i = 0; i < 10000; ++i) {
        double v = d.next_double();
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
    }
    CHECK(d.next_below(1) == 0);
    for (int i = 0; i < 100; ++i) CHECK(d.next_below(7) < 7);
}

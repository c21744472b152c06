#pragma once

// Shortest-path service: contraction-hierarchies preprocessing with a
// bidirectional Dijkstra query, plus a plain Dijkstra used as oracle and
// as fallback on small graphs. All lengths are integer millimeters.

#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "bikesim/geo.hpp"

namespace bikesim::routing {

using geo::LengthMm;
using geo::RoadNetwork;

inline constexpr LengthMm kUnreachable = std::numeric_limits<LengthMm>::max();

struct Route {
    std::vector<std::uint32_t> nodes;  // node indices, source..target
    LengthMm length = 0;
    double duration_s = 0.0;  // filled by travel_time

    bool found() const { return !nodes.empty(); }
};

/// seconds = meters / (km/h converted to m/s)
inline double travel_time_s(double length_m, double speed_kmh) {
    if (speed_kmh <= 0.0) throw std::invalid_argument("travel_time: non-positive speed");
    return length_m / (speed_kmh * 1000.0 / 3600.0);
}

/// Millisecond travel time for millimeter lengths; exact for the
/// fixed-point time base used by the engine.
inline std::int64_t travel_time_ms(LengthMm length_mm, double speed_kmh) {
    if (speed_kmh <= 0.0) throw std::invalid_argument("travel_time: non-positive speed");
    return static_cast<std::int64_t>(std::llround(static_cast<double>(length_mm) * 3.6 / speed_kmh));
}

/// Plain one-to-one Dijkstra with parent tracking. The test oracle.
inline Route dijkstra(const RoadNetwork& net, std::uint32_t s, std::uint32_t t) {
    const std::size_t n = net.num_nodes();
    std::vector<LengthMm> dist(n, kUnreachable);
    std::vector<std::uint32_t> parent(n, std::numeric_limits<std::uint32_t>::max());
    using QEntry = std::pair<LengthMm, std::uint32_t>;
    std::priority_queue<QEntry, std::vector<QEntry>, std::greater<>> pq;
    dist[s] = 0;
    pq.push({0, s});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d != dist[u]) continue;
        if (u == t) break;
        for (const auto& e : net.out_edges(u)) {
            LengthMm nd = d + e.length;
            if (nd < dist[e.to]) {
                dist[e.to] = nd;
                parent[e.to] = u;
                pq.push({nd, e.to});
            }
        }
    }
    Route r;
    if (dist[t] == kUnreachable) return r;
    r.length = dist[t];
    for (std::uint32_t v = t;; v = parent[v]) {
        r.nodes.push_back(v);
        if (v == s) break;
    }
    std::reverse(r.nodes.begin(), r.nodes.end());
    return r;
}

/// One-to-all distances, used for cell cost matrices.
inline std::vector<LengthMm> dijkstra_all(const RoadNetwork& net, std::uint32_t s) {
    const std::size_t n = net.num_nodes();
    std::vector<LengthMm> dist(n, kUnreachable);
    using QEntry = std::pair<LengthMm, std::uint32_t>;
    std::priority_queue<QEntry, std::vector<QEntry>, std::greater<>> pq;
    dist[s] = 0;
    pq.push({0, s});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d != dist[u]) continue;
        for (const auto& e : net.out_edges(u)) {
            LengthMm nd = d + e.length;
            if (nd < dist[e.to]) {
                dist[e.to] = nd;
                pq.push({nd, e.to});
            }
        }
    }
    return dist;
}

class ContractedGraph {
public:
    struct Arc {
        std::uint32_t to = 0;
        LengthMm length = 0;
        std::int32_t bridged = -1;  // contracted middle node for shortcuts
    };

    const RoadNetwork* base = nullptr;
    std::vector<std::uint32_t> level;  // contraction order, bijective onto 0..n-1
    // upward/downward search graphs (arcs towards higher-level endpoints)
    std::vector<std::vector<Arc>> up;    // forward arcs u -> v with level[v] > level[u]
    std::vector<std::vector<Arc>> down;  // reverse arcs v -> u (original u -> v), level[u] > level[v]
    std::size_t shortcut_count = 0;

    std::size_t num_nodes() const { return level.size(); }
};

namespace detail {

struct WorkArc {
    std::uint32_t to;
    LengthMm length;
    std::int32_t bridged;
};

// bounded Dijkstra in the remaining (uncontracted) graph, skipping `skip`;
// returns shortest distance from s to each node in `targets` capped by limit
class WitnessSearch {
public:
    explicit WitnessSearch(std::size_t n)
        : dist_(n, kUnreachable) {}

    void run(const std::vector<std::vector<WorkArc>>& fwd, const std::vector<bool>& contracted,
             std::uint32_t s, std::uint32_t skip, LengthMm limit, int max_settled) {
        for (std::uint32_t v : touched_) dist_[v] = kUnreachable;
        touched_.clear();
        using QEntry = std::pair<LengthMm, std::uint32_t>;
        std::priority_queue<QEntry, std::vector<QEntry>, std::greater<>> pq;
        dist_[s] = 0;
        touched_.push_back(s);
        pq.push({0, s});
        int settled = 0;
        while (!pq.empty() && settled < max_settled) {
            auto [d, u] = pq.top();
            pq.pop();
            if (d != dist_[u]) continue;
            if (d > limit) break;
            ++settled;
            for (const auto& a : fwd[u]) {
                if (a.to == skip || contracted[a.to]) continue;
                LengthMm nd = d + a.length;
                if (nd < dist_[a.to]) {
                    if (dist_[a.to] == kUnreachable) touched_.push_back(a.to);
                    dist_[a.to] = nd;
                    pq.push({nd, a.to});
                }
            }
        }
    }

    LengthMm dist(std::uint32_t v) const { return dist_[v]; }

private:
    std::vector<LengthMm> dist_;
    std::vector<std::uint32_t> touched_;
};

}  // namespace detail

/// Build the contraction hierarchy. Node order: lazy edge-difference with
/// a deleted-neighbor counter, ties by node index. Deterministic.
inline ContractedGraph preprocess(const RoadNetwork& net) {
    const std::size_t n = net.num_nodes();
    using detail::WorkArc;

    std::vector<std::vector<WorkArc>> fwd(n), bwd(n);
    for (const auto& e : net.edges) {
        fwd[e.from].push_back({e.to, e.length, -1});
        bwd[e.to].push_back({e.from, e.length, -1});
    }

    std::vector<bool> contracted(n, false);
    std::vector<int> deleted_neighbors(n, 0);
    detail::WitnessSearch witness(n);

    struct Shortcut {
        std::uint32_t from, to;
        LengthMm length;
        std::uint32_t bridged;
    };

    // simulate contraction of v: collect needed shortcuts
    auto simulate = [&](std::uint32_t v, std::vector<Shortcut>* out) -> int {
        int added = 0;
        for (const auto& in : bwd[v]) {
            std::uint32_t u = in.to;
            if (contracted[u]) continue;
            LengthMm max_len = 0;
            for (const auto& outarc : fwd[v]) {
                if (!contracted[outarc.to] && outarc.to != u) {
                    max_len = std::max(max_len, in.length + outarc.length);
                }
            }
            if (max_len == 0) continue;
            witness.run(fwd, contracted, u, v, max_len, 2000);
            for (const auto& outarc : fwd[v]) {
                std::uint32_t w = outarc.to;
                if (contracted[w] || w == u) continue;
                LengthMm via = in.length + outarc.length;
                if (witness.dist(w) <= via) continue;  // witness path exists
                ++added;
                if (out) out->push_back({u, w, via, v});
            }
        }
        return added;
    };

    auto priority = [&](std::uint32_t v) -> std::int64_t {
        int shortcuts = simulate(v, nullptr);
        int degree = 0;
        for (const auto& a : fwd[v]) degree += contracted[a.to] ? 0 : 1;
        for (const auto& a : bwd[v]) degree += contracted[a.to] ? 0 : 1;
        return static_cast<std::int64_t>(2 * shortcuts) - degree + deleted_neighbors[v];
    };

    using QEntry = std::pair<std::int64_t, std::uint32_t>;
    std::priority_queue<QEntry, std::vector<QEntry>, std::greater<>> queue;
    for (std::uint32_t v = 0; v < n; ++v) queue.push({priority(v), v});

    ContractedGraph cg;
    cg.base = &net;
    cg.level.assign(n, 0);
    std::vector<Shortcut> shortcuts;
    std::uint32_t next_level = 0;

    std::vector<Shortcut> buf;
    while (!queue.empty()) {
        auto [prio, v] = queue.top();
        queue.pop();
        if (contracted[v]) continue;
        std::int64_t current = priority(v);
        if (!queue.empty() && current > queue.top().first) {  // lazy update
            queue.push({current, v});
            continue;
        }
        buf.clear();
        simulate(v, &buf);
        contracted[v] = true;
        cg.level[v] = next_level++;
        for (const auto& sc : buf) {
            shortcuts.push_back(sc);
            fwd[sc.from].push_back({sc.to, sc.length, static_cast<std::int32_t>(sc.bridged)});
            bwd[sc.to].push_back({sc.from, sc.length, static_cast<std::int32_t>(sc.bridged)});
        }
        for (const auto& a : fwd[v]) {
            if (!contracted[a.to]) deleted_neighbors[a.to]++;
        }
        for (const auto& a : bwd[v]) {
            if (!contracted[a.to]) deleted_neighbors[a.to]++;
        }
    }
    cg.shortcut_count = shortcuts.size();

    // assemble upward/downward search graphs: base edges plus shortcuts,
    // keeping only the shortest arc per (from, to)
    cg.up.assign(n, {});
    cg.down.assign(n, {});
    auto add_arc = [&](std::uint32_t from, std::uint32_t to, LengthMm len, std::int32_t mid) {
        if (cg.level[to] > cg.level[from]) {
            cg.up[from].push_back({to, len, mid});
        } else {
            cg.down[to].push_back({from, len, mid});
        }
    };
    for (const auto& e : net.edges) add_arc(e.from, e.to, e.length, -1);
    for (const auto& sc : shortcuts) add_arc(sc.from, sc.to, sc.length, static_cast<std::int32_t>(sc.bridged));
    auto tidy = [](std::vector<ContractedGraph::Arc>& arcs) {
        std::sort(arcs.begin(), arcs.end(), [](const auto& a, const auto& b) {
            if (a.to != b.to) return a.to < b.to;
            return a.length < b.length;
        });
        arcs.erase(std::unique(arcs.begin(), arcs.end(),
                               [](const auto& a, const auto& b) { return a.to == b.to; }),
                   arcs.end());
    };
    for (auto& arcs : cg.up) tidy(arcs);
    for (auto& arcs : cg.down) tidy(arcs);
    return cg;
}

namespace detail {

struct SearchSide {
    std::vector<LengthMm> dist;
    std::vector<std::int64_t> parent_arc;  // encoded (node << 2 | side) -- see unpack below
    std::vector<std::uint32_t> parent;
    std::vector<std::int32_t> parent_mid;
    std::vector<std::uint32_t> touched;

    explicit SearchSide(std::size_t n)
        : dist(n, kUnreachable), parent(n, 0), parent_mid(n, -1) {}

    void reset() {
        for (auto v : touched) dist[v] = kUnreachable;
        touched.clear();
    }
};

}  // namespace detail

/// Recursively unpack an arc (possibly a shortcut) into base node ids,
/// appending everything after `from` up to and including `to`.
inline void unpack_arc(const ContractedGraph& cg, std::uint32_t from, std::uint32_t to,
                       std::int32_t bridged, std::vector<std::uint32_t>& out) {
    if (bridged < 0) {
        out.push_back(to);
        return;
    }
    auto mid = static_cast<std::uint32_t>(bridged);
    auto find_arc = [&](std::uint32_t a, std::uint32_t b) -> const ContractedGraph::Arc* {
        for (const auto& arc : cg.up[a]) {
            if (arc.to == b) return &arc;
        }
        for (const auto& arc : cg.down[b]) {
            if (arc.to == a) return &arc;
        }
        return nullptr;
    };
    const auto* first = find_arc(from, mid);
    const auto* second = find_arc(mid, to);
    if (!first || !second) throw std::logic_error("unpack_arc: missing shortcut constituent");
    unpack_arc(cg, from, mid, first->bridged, out);
    unpack_arc(cg, mid, to, second->bridged, out);
}

/// CH query: bidirectional Dijkstra on the upward graphs.
inline Route shortest_path(const ContractedGraph& cg, std::uint32_t s, std::uint32_t t) {
    const std::size_t n = cg.num_nodes();
    if (s >= n || t >= n) throw std::out_of_range("shortest_path: node out of range");
    Route route;
    if (s == t) {
        route.nodes = {s};
        route.length = 0;
        return route;
    }

    thread_local std::vector<LengthMm> dist_f, dist_b;
    thread_local std::vector<std::uint32_t> par_f, par_b;
    thread_local std::vector<std::int32_t> mid_f, mid_b;
    thread_local std::vector<std::uint32_t> touched;
    if (dist_f.size() != n) {
        dist_f.assign(n, kUnreachable);
        dist_b.assign(n, kUnreachable);
        par_f.assign(n, 0);
        par_b.assign(n, 0);
        mid_f.assign(n, -1);
        mid_b.assign(n, -1);
        touched.clear();
    }
    for (auto v : touched) {
        dist_f[v] = kUnreachable;
        dist_b[v] = kUnreachable;
    }
    touched.clear();

    using QEntry = std::pair<LengthMm, std::uint32_t>;
    std::priority_queue<QEntry, std::vector<QEntry>, std::greater<>> qf, qb;
    dist_f[s] = 0;
    dist_b[t] = 0;
    touched.push_back(s);
    touched.push_back(t);
    qf.push({0, s});
    qb.push({0, t});

    LengthMm best = kUnreachable;
    std::uint32_t meet = std::numeric_limits<std::uint32_t>::max();

    auto relax = [&](auto& q, std::vector<LengthMm>& dist, std::vector<std::uint32_t>& par,
                     std::vector<std::int32_t>& mid, const std::vector<LengthMm>& other,
                     const std::vector<std::vector<ContractedGraph::Arc>>& graph) {
        auto [d, u] = q.top();
        q.pop();
        if (d != dist[u]) return;
        if (d >= best) return;
        if (other[u] != kUnreachable) {
            LengthMm total = d + other[u];
            if (total < best || (total == best && u < meet)) {
                best = total;
                meet = u;
            }
        }
        for (const auto& a : graph[u]) {
            LengthMm nd = d + a.length;
            if (nd < dist[a.to]) {
                if (dist[a.to] == kUnreachable) touched.push_back(a.to);
                dist[a.to] = nd;
                par[a.to] = u;
                mid[a.to] = a.bridged;
                q.push({nd, a.to});
            }
        }
    };

    while (!qf.empty() || !qb.empty()) {
        LengthMm top_f = qf.empty() ? kUnreachable : qf.top().first;
        LengthMm top_b = qb.empty() ? kUnreachable : qb.top().first;
        if (std::min(top_f, top_b) >= best) break;
        if (top_f <= top_b) {
            relax(qf, dist_f, par_f, mid_f, dist_b, cg.up);
        } else {
            relax(qb, dist_b, par_b, mid_b, dist_f, cg.down);
        }
    }
    if (best == kUnreachable) return route;  // no route
    route.length = best;

    // forward half: s .. meet (walk parents back, then unpack each arc)
    std::vector<std::pair<std::uint32_t, std::int32_t>> chain;  // (node, arc mid into node)
    for (std::uint32_t v = meet; v != s; v = par_f[v]) chain.push_back({v, mid_f[v]});
    route.nodes.push_back(s);
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        unpack_arc(cg, route.nodes.back(), it->first, it->second, route.nodes);
    }
    // backward half: meet .. t (parents lead towards t in original direction)
    for (std::uint32_t v = meet; v != t;) {
        std::uint32_t next = par_b[v];
        unpack_arc(cg, v, next, mid_b[v], route.nodes);
        v = next;
    }
    return route;
}

/// Router facade: CH on big graphs, bidirectional-free plain Dijkstra on
/// tiny ones, identical results either way.
class Router {
public:
    explicit Router(const RoadNetwork& net, std::size_t ch_threshold = 1000) : net_(&net) {
        if (net.num_nodes() >= ch_threshold) {
            cg_ = preprocess(net);
            use_ch_ = true;
        }
    }

    Route route(std::uint32_t s, std::uint32_t t) const {
        if (use_ch_) return shortest_path(cg_, s, t);
        Route r = dijkstra(*net_, s, t);
        if (s == t) {
            r.nodes = {s};
            r.length = 0;
        }
        return r;
    }

    LengthMm distance(std::uint32_t s, std::uint32_t t) const { return route(s, t).length; }

    const RoadNetwork& network() const { return *net_; }
    bool using_ch() const { return use_ch_; }
    const ContractedGraph& contracted() const { return cg_; }

private:
    const RoadNetwork* net_;
    ContractedGraph cg_;
    bool use_ch_ = false;
};

/// Road-distance matrix between cell centroids (snapped to nearest nodes).
/// Disconnected pairs get kUnreachable.
inline std::vector<std::vector<LengthMm>> cell_cost_matrix(const geo::GridIndex& grid,
                                                           const RoadNetwork& net) {
    const std::size_t n = grid.cell_count();
    std::vector<std::uint32_t> anchors(n);
    geo::NodeIndex idx(net);
    for (std::size_t i = 0; i < n; ++i) anchors[i] = idx.nearest(grid.cells[i].centroid);
    std::vector<std::vector<LengthMm>> cost(n, std::vector<LengthMm>(n, kUnreachable));
    for (std::size_t i = 0; i < n; ++i) {
        auto dist = dijkstra_all(net, anchors[i]);
        for (std::size_t j = 0; j < n; ++j) cost[i][j] = dist[anchors[j]];
        cost[i][i] = 0;
    }
    return cost;
}

}  // namespace bikesim::routing

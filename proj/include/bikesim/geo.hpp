#pragma once

// Road network loading (OSM XML), geodesic helpers, nearest-node index
// and the hexagonal grid partition used by demand prediction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace bikesim::geo {

using NodeId = std::int64_t;
using LengthMm = std::int64_t;  // all edge lengths in integer millimeters

struct Location {
    double lon = 0.0;
    double lat = 0.0;

    bool valid() const {
        return lon >= -180.0 && lon <= 180.0 && lat >= -90.0 && lat <= 90.0;
    }
};

inline constexpr double kEarthRadiusM = 6371000.0;

/// Great-circle distance in meters.
inline double haversine_m(const Location& a, const Location& b) {
    const double deg = M_PI / 180.0;
    double dlat = (b.lat - a.lat) * deg;
    double dlon = (b.lon - a.lon) * deg;
    double s = std::sin(dlat / 2), t = std::sin(dlon / 2);
    double h = s * s + std::cos(a.lat * deg) * std::cos(b.lat * deg) * t * t;
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

inline LengthMm haversine_mm(const Location& a, const Location& b) {
    return static_cast<LengthMm>(std::llround(haversine_m(a, b) * 1000.0));
}

struct Edge {
    std::uint32_t from = 0;  // dense node index, not OSM id
    std::uint32_t to = 0;
    LengthMm length = 0;
};

struct BoundingBox {
    double west = -180.0, south = -90.0, east = 180.0, north = 90.0;

    bool contains(const Location& p) const {
        return p.lon >= west && p.lon <= east && p.lat >= south && p.lat <= north;
    }
};

class RoadNetwork {
public:
    std::vector<NodeId> node_ids;       // dense index -> external id, sorted ascending
    std::vector<Location> node_locs;    // parallel to node_ids
    std::vector<Edge> edges;            // sorted by (from, to)
    std::vector<std::uint32_t> adj_offset;  // CSR offsets into edges, size nodes+1

    std::size_t num_nodes() const { return node_ids.size(); }
    std::size_t num_edges() const { return edges.size(); }
    bool empty() const { return node_ids.empty(); }

    const Location& loc(std::uint32_t idx) const { return node_locs[idx]; }

    std::optional<std::uint32_t> index_of(NodeId id) const {
        auto it = std::lower_bound(node_ids.begin(), node_ids.end(), id);
        if (it == node_ids.end() || *it != id) return std::nullopt;
        return static_cast<std::uint32_t>(it - node_ids.begin());
    }

    struct EdgeRange {
        const Edge* first;
        const Edge* last;
        const Edge* begin() const { return first; }
        const Edge* end() const { return last; }
    };

    EdgeRange out_edges(std::uint32_t node) const {
        return {edges.data() + adj_offset[node], edges.data() + adj_offset[node + 1]};
    }

    /// Rebuild the CSR adjacency from `edges`; sorts and deduplicates,
    /// keeping the shortest parallel edge.
    void finalize() {
        std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
            if (a.from != b.from) return a.from < b.from;
            if (a.to != b.to) return a.to < b.to;
            return a.length < b.length;
        });
        std::vector<Edge> kept;
        kept.reserve(edges.size());
        for (const Edge& e : edges) {
            if (e.from == e.to) continue;
            if (!kept.empty() && kept.back().from == e.from && kept.back().to == e.to) continue;
            kept.push_back(e);
        }
        edges = std::move(kept);
        adj_offset.assign(num_nodes() + 1, 0);
        for (const Edge& e : edges) adj_offset[e.from + 1]++;
        for (std::size_t i = 1; i < adj_offset.size(); ++i) adj_offset[i] += adj_offset[i - 1];
    }
};

namespace detail {

// Minimal XML element scanner, sufficient for OSM extracts: finds tags and
// their attributes without building a DOM.
struct XmlElement {
    std::string name;
    std::unordered_map<std::string, std::string> attrs;
    bool self_closing = false;
    bool closing = false;  // </name>
};

class XmlScanner {
public:
    explicit XmlScanner(std::istream& in) : in_(in) {}

    bool next(XmlElement& el) {
        char c;
        // scan to the next '<'
        while (in_.get(c) && c != '<') {}
        if (!in_) return false;
        std::string tag;
        while (in_.get(c) && c != '>') tag.push_back(c);
        if (tag.empty()) return false;
        if (tag[0] == '?' || tag[0] == '!') return next(el);  // prolog/comment
        el = XmlElement{};
        std::size_t i = 0;
        if (tag[0] == '/') {
            el.closing = true;
            i = 1;
        }
        while (i < tag.size() && !isspace((unsigned char)tag[i]) && tag[i] != '/') {
            el.name.push_back(tag[i++]);
        }
        while (i < tag.size()) {
            while (i < tag.size() && (isspace((unsigned char)tag[i]))) ++i;
            if (i >= tag.size()) break;
            if (tag[i] == '/') {
                el.self_closing = true;
                ++i;
                continue;
            }
            std::string key, val;
            while (i < tag.size() && tag[i] != '=' && !isspace((unsigned char)tag[i])) {
                key.push_back(tag[i++]);
            }
            while (i < tag.size() && (tag[i] == '=' || isspace((unsigned char)tag[i]))) ++i;
            if (i < tag.size() && (tag[i] == '"' || tag[i] == '\'')) {
                char q = tag[i++];
                while (i < tag.size() && tag[i] != q) val.push_back(tag[i++]);
                ++i;
            }
            if (!key.empty()) el.attrs.emplace(std::move(key), std::move(val));
        }
        return true;
    }

private:
    std::istream& in_;
};

/// Largest strongly connected component via iterative Tarjan.
inline std::vector<bool> largest_scc_mask(std::size_t n, const std::vector<Edge>& edges,
                                          const std::vector<std::uint32_t>& adj_offset) {
    std::vector<std::int32_t> index(n, -1), lowlink(n, 0), comp(n, -1);
    std::vector<bool> on_stack(n, false);
    std::vector<std::uint32_t> stack;
    std::int32_t counter = 0, ncomp = 0;

    struct Frame {
        std::uint32_t v;
        std::uint32_t edge;
    };
    std::vector<Frame> call;
    for (std::uint32_t root = 0; root < n; ++root) {
        if (index[root] != -1) continue;
        call.push_back({root, adj_offset[root]});
        index[root] = lowlink[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!call.empty()) {
            Frame& f = call.back();
            if (f.edge < adj_offset[f.v + 1]) {
                std::uint32_t w = edges[f.edge].to;
                ++f.edge;
                if (index[w] == -1) {
                    index[w] = lowlink[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    call.push_back({w, adj_offset[w]});
                } else if (on_stack[w]) {
                    lowlink[f.v] = std::min(lowlink[f.v], index[w]);
                }
            } else {
                std::uint32_t v = f.v;
                call.pop_back();
                if (!call.empty()) {
                    lowlink[call.back().v] = std::min(lowlink[call.back().v], lowlink[v]);
                }
                if (lowlink[v] == index[v]) {
                    while (true) {
                        std::uint32_t w = stack.back();
                        stack.pop_back();
                        on_stack[w] = false;
                        comp[w] = ncomp;
                        if (w == v) break;
                    }
                    ++ncomp;
                }
            }
        }
    }
    std::vector<std::size_t> sizes(ncomp, 0);
    for (std::size_t i = 0; i < n; ++i) sizes[comp[i]]++;
    std::int32_t best = 0;
    for (std::int32_t c = 1; c < ncomp; ++c) {
        if (sizes[c] > sizes[best]) best = c;
    }
    std::vector<bool> keep(n, false);
    for (std::size_t i = 0; i < n; ++i) keep[i] = (comp[i] == best);
    return keep;
}

}  // namespace detail

struct LoadOptions {
    // highway values rejected even though tagged; bicycles are barred there
    std::vector<std::string> blocked_highway = {"motorway", "motorway_link"};
};

/// Parse an OSM XML extract, keep highway ways inside the bbox, emit a
/// directed graph and prune everything outside the largest strongly
/// connected component.
inline RoadNetwork load_network(const std::string& path, const BoundingBox& bbox,
                                const LoadOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_network: cannot open " + path);

    std::unordered_map<NodeId, Location> raw_nodes;
    struct RawWay {
        std::vector<NodeId> nds;
        std::string highway, oneway, junction;
    };
    std::vector<RawWay> ways;

    detail::XmlScanner scan(in);
    detail::XmlElement el;
    std::optional<RawWay> cur;
    while (scan.next(el)) {
        if (el.closing) {
            if (el.name == "way" && cur) {
                if (!cur->highway.empty()) ways.push_back(std::move(*cur));
                cur.reset();
            }
            continue;
        }
        if (el.name == "node") {
            NodeId id = std::stoll(el.attrs.at("id"));
            Location p{std::stod(el.attrs.at("lon")), std::stod(el.attrs.at("lat"))};
            raw_nodes.emplace(id, p);
        } else if (el.name == "way") {
            cur = RawWay{};
            if (el.self_closing) cur.reset();
        } else if (cur && el.name == "nd") {
            cur->nds.push_back(std::stoll(el.attrs.at("ref")));
        } else if (cur && el.name == "tag") {
            const std::string& k = el.attrs.at("k");
            if (k == "highway") cur->highway = el.attrs.at("v");
            else if (k == "oneway") cur->oneway = el.attrs.at("v");
            else if (k == "junction") cur->junction = el.attrs.at("v");
        }
    }

    // collect nodes actually used by accepted ways, restricted to bbox
    auto blocked = [&](const std::string& hw) {
        return std::find(opts.blocked_highway.begin(), opts.blocked_highway.end(), hw) !=
               opts.blocked_highway.end();
    };
    std::set<NodeId> used;
    for (const RawWay& w : ways) {
        if (blocked(w.highway)) continue;
        for (NodeId id : w.nds) {
            auto it = raw_nodes.find(id);
            if (it != raw_nodes.end() && bbox.contains(it->second)) used.insert(id);
        }
    }

    RoadNetwork net;
    net.node_ids.assign(used.begin(), used.end());
    net.node_locs.reserve(net.node_ids.size());
    for (NodeId id : net.node_ids) net.node_locs.push_back(raw_nodes.at(id));

    for (const RawWay& w : ways) {
        if (blocked(w.highway)) continue;
        bool fwd = true, bwd = true;
        if (w.oneway == "yes" || w.oneway == "1" || w.oneway == "true" ||
            w.junction == "roundabout") {
            bwd = false;
        } else if (w.oneway == "-1") {
            fwd = false;
        }
        for (std::size_t i = 0; i + 1 < w.nds.size(); ++i) {
            auto a = net.index_of(w.nds[i]);
            auto b = net.index_of(w.nds[i + 1]);
            if (!a || !b || *a == *b) continue;
            LengthMm len = haversine_mm(net.loc(*a), net.loc(*b));
            if (len <= 0) continue;
            if (fwd) net.edges.push_back({*a, *b, len});
            if (bwd) net.edges.push_back({*b, *a, len});
        }
    }
    net.finalize();
    if (net.empty()) throw std::runtime_error("load_network: empty network after filtering");

    // prune to the largest SCC
    auto keep = detail::largest_scc_mask(net.num_nodes(), net.edges, net.adj_offset);
    RoadNetwork pruned;
    std::vector<std::int32_t> remap(net.num_nodes(), -1);
    for (std::uint32_t i = 0; i < net.num_nodes(); ++i) {
        if (keep[i]) {
            remap[i] = static_cast<std::int32_t>(pruned.node_ids.size());
            pruned.node_ids.push_back(net.node_ids[i]);
            pruned.node_locs.push_back(net.node_locs[i]);
        }
    }
    for (const Edge& e : net.edges) {
        if (remap[e.from] >= 0 && remap[e.to] >= 0) {
            pruned.edges.push_back({static_cast<std::uint32_t>(remap[e.from]),
                                    static_cast<std::uint32_t>(remap[e.to]), e.length});
        }
    }
    pruned.finalize();
    if (pruned.empty()) throw std::runtime_error("load_network: empty network after pruning");
    return pruned;
}

/// Versioned line-oriented cache of a loaded network; byte-stable.
inline void save_network(const RoadNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_network: cannot write " + path);
    out << "bikesim-network 1 " << net.num_nodes() << " " << net.num_edges() << "\n";
    out.precision(9);
    out << std::fixed;
    for (std::size_t i = 0; i < net.num_nodes(); ++i) {
        out << net.node_ids[i] << " " << net.node_locs[i].lon << " " << net.node_locs[i].lat
            << "\n";
    }
    for (const Edge& e : net.edges) {
        out << e.from << " " << e.to << " " << e.length << "\n";
    }
}

inline RoadNetwork read_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_network: cannot open " + path);
    std::string magic;
    int version = 0;
    std::size_t n = 0, m = 0;
    in >> magic >> version >> n >> m;
    if (magic != "bikesim-network" || version != 1) {
        throw std::runtime_error("read_network: bad header in " + path);
    }
    RoadNetwork net;
    net.node_ids.resize(n);
    net.node_locs.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        in >> net.node_ids[i] >> net.node_locs[i].lon >> net.node_locs[i].lat;
    }
    net.edges.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        in >> net.edges[i].from >> net.edges[i].to >> net.edges[i].length;
    }
    if (!in) throw std::runtime_error("read_network: truncated file " + path);
    net.finalize();
    return net;
}

/// Uniform lon/lat bucket index over network nodes for nearest-node
/// queries; expanding ring search, deterministic smallest-index tie-break.
class NodeIndex {
public:
    explicit NodeIndex(const RoadNetwork& net, double cell_deg = 0.005) : net_(&net), cell_(cell_deg) {
        for (std::uint32_t i = 0; i < net.num_nodes(); ++i) {
            buckets_[key(net.loc(i))].push_back(i);
        }
    }

    std::uint32_t nearest(const Location& p) const {
        if (net_->empty()) throw std::logic_error("nearest: empty network");
        std::uint32_t best = 0;
        double best_d = -1.0;
        auto [cx, cy] = cell_of(p);
        // meters spanned by one bucket (conservative lower bound)
        double cell_m = cell_ * 110574.0 * 0.7;
        int stop_ring = std::numeric_limits<int>::max();
        for (int ring = 0; ring <= stop_ring; ++ring) {
            for (int dx = -ring; dx <= ring; ++dx) {
                for (int dy = -ring; dy <= ring; ++dy) {
                    if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
                    auto it = buckets_.find(pack(cx + dx, cy + dy));
                    if (it == buckets_.end()) continue;
                    for (std::uint32_t idx : it->second) {
                        double d = haversine_m(p, net_->loc(idx));
                        if (best_d < 0 || d < best_d ||
                            (d == best_d && net_->node_ids[idx] < net_->node_ids[best])) {
                            best_d = d;
                            best = idx;
                        }
                    }
                }
            }
            if (best_d >= 0.0 && stop_ring == std::numeric_limits<int>::max()) {
                // a closer node can only live within best_d meters of p
                stop_ring = ring + static_cast<int>(best_d / cell_m) + 2;
            }
        }
        return best;
    }

private:
    std::pair<int, int> cell_of(const Location& p) const {
        return {static_cast<int>(std::floor(p.lon / cell_)),
                static_cast<int>(std::floor(p.lat / cell_))};
    }
    std::int64_t key(const Location& p) const {
        auto [x, y] = cell_of(p);
        return pack(x, y);
    }
    static std::int64_t pack(int x, int y) {
        return (static_cast<std::int64_t>(x) << 32) ^ static_cast<std::uint32_t>(y);
    }

    const RoadNetwork* net_;
    double cell_;
    std::unordered_map<std::int64_t, std::vector<std::uint32_t>> buckets_;
};

/// Snap a point to the node minimizing great-circle distance; ties go to
/// the smallest external node id.
inline std::uint32_t nearest_node(const RoadNetwork& net, const Location& p) {
    if (net.empty()) throw std::logic_error("nearest_node: empty network");
    std::uint32_t best = 0;
    double best_d = haversine_m(p, net.loc(0));
    for (std::uint32_t i = 1; i < net.num_nodes(); ++i) {
        double d = haversine_m(p, net.loc(i));
        if (d < best_d || (d == best_d && net.node_ids[i] < net.node_ids[best])) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

// -------------------------------------------------------------------------
// Hexagonal grid partition (axial coordinates over a local planar
// projection). resolution = hex edge length in meters.

struct GridCell {
    std::int32_t q = 0, r = 0;  // axial hex coordinates
    Location centroid;
    std::vector<Location> boundary;  // 6 vertices
};

class GridIndex {
public:
    std::vector<GridCell> cells;                  // cell_id = index
    std::vector<std::uint32_t> node_to_cell;      // per network node index
    Location origin;                              // projection reference
    double edge_m = 0.0;

    std::size_t cell_count() const { return cells.size(); }
};

namespace detail {

inline std::pair<double, double> project(const Location& p, const Location& origin) {
    const double deg = M_PI / 180.0;
    double x = (p.lon - origin.lon) * deg * kEarthRadiusM * std::cos(origin.lat * deg);
    double y = (p.lat - origin.lat) * deg * kEarthRadiusM;
    return {x, y};
}

inline Location unproject(double x, double y, const Location& origin) {
    const double deg = M_PI / 180.0;
    Location p;
    p.lat = origin.lat + y / (deg * kEarthRadiusM);
    p.lon = origin.lon + x / (deg * kEarthRadiusM * std::cos(origin.lat * deg));
    return p;
}

// pointy-top axial hex containing planar point (x, y), edge length s
inline std::pair<std::int32_t, std::int32_t> hex_of(double x, double y, double s) {
    double qf = (std::sqrt(3.0) / 3.0 * x - 1.0 / 3.0 * y) / s;
    double rf = (2.0 / 3.0 * y) / s;
    // cube rounding
    double xf = qf, zf = rf, yf = -xf - zf;
    double rx = std::round(xf), ry = std::round(yf), rz = std::round(zf);
    double dx = std::abs(rx - xf), dy = std::abs(ry - yf), dz = std::abs(rz - zf);
    if (dx > dy && dx > dz) rx = -ry - rz;
    else if (dy > dz) ry = -rx - rz;
    else rz = -rx - ry;
    (void)ry;
    return {static_cast<std::int32_t>(rx), static_cast<std::int32_t>(rz)};
}

inline std::pair<double, double> hex_center(std::int32_t q, std::int32_t r, double s) {
    double x = s * std::sqrt(3.0) * (q + r / 2.0);
    double y = s * 1.5 * r;
    return {x, y};
}

}  // namespace detail

/// Partition the network's extent into hexagonal cells; only hexes that
/// contain at least one routable node become cells.
inline GridIndex build_grid(const RoadNetwork& net, double edge_m) {
    if (net.empty()) throw std::invalid_argument("build_grid: empty network");
    if (edge_m <= 0.0) throw std::invalid_argument("build_grid: non-positive resolution");
    GridIndex grid;
    grid.edge_m = edge_m;
    // projection origin: south-west corner of the node extent
    double lon0 = net.node_locs[0].lon, lat0 = net.node_locs[0].lat;
    for (const Location& p : net.node_locs) {
        lon0 = std::min(lon0, p.lon);
        lat0 = std::min(lat0, p.lat);
    }
    grid.origin = {lon0, lat0};

    std::map<std::pair<std::int32_t, std::int32_t>, std::uint32_t> ids;  // ordered: stable ids
    std::vector<std::pair<std::int32_t, std::int32_t>> node_hex(net.num_nodes());
    for (std::uint32_t i = 0; i < net.num_nodes(); ++i) {
        auto [x, y] = detail::project(net.loc(i), grid.origin);
        node_hex[i] = detail::hex_of(x, y, edge_m);
        ids.emplace(node_hex[i], 0);
    }
    if (ids.size() > 100000) throw std::invalid_argument("build_grid: resolution yields too many cells");
    std::uint32_t next = 0;
    for (auto& [qr, id] : ids) id = next++;

    grid.cells.resize(ids.size());
    for (const auto& [qr, id] : ids) {
        GridCell& c = grid.cells[id];
        c.q = qr.first;
        c.r = qr.second;
        auto [cx, cy] = detail::hex_center(c.q, c.r, edge_m);
        c.centroid = detail::unproject(cx, cy, grid.origin);
        for (int k = 0; k < 6; ++k) {
            double ang = M_PI / 180.0 * (60.0 * k - 30.0) + M_PI / 2.0;
            c.boundary.push_back(
                detail::unproject(cx + edge_m * std::cos(ang), cy + edge_m * std::sin(ang), grid.origin));
        }
    }
    grid.node_to_cell.resize(net.num_nodes());
    for (std::uint32_t i = 0; i < net.num_nodes(); ++i) {
        grid.node_to_cell[i] = ids.at(node_hex[i]);
    }
    return grid;
}

}  // namespace bikesim::geo

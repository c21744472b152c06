#pragma once

// Shared synthetic fixtures for the test suites: lattice road networks,
// random strongly-connected graphs and small station layouts.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "bikesim/demandio.hpp"
#include "bikesim/geo.hpp"

namespace testutil {

using bikesim::geo::Location;
using bikesim::geo::RoadNetwork;

// reference point: Boston-ish, so coordinates are realistic
inline constexpr double kLon0 = -71.06;
inline constexpr double kLat0 = 42.355;

inline Location offset_m(double dx_m, double dy_m) {
    const double deg = M_PI / 180.0;
    Location p;
    p.lat = kLat0 + dy_m / (deg * bikesim::geo::kEarthRadiusM);
    p.lon = kLon0 + dx_m / (deg * bikesim::geo::kEarthRadiusM * std::cos(kLat0 * deg));
    return p;
}

/// w x h lattice with bidirectional edges between 4-neighbors.
inline RoadNetwork grid_network(int w, int h, double spacing_m) {
    RoadNetwork net;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            net.node_ids.push_back(static_cast<std::int64_t>(y) * w + x);
            net.node_locs.push_back(offset_m(x * spacing_m, y * spacing_m));
        }
    }
    auto idx = [w](int x, int y) { return static_cast<std::uint32_t>(y * w + x); };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (x + 1 < w) {
                auto len = bikesim::geo::haversine_mm(net.node_locs[idx(x, y)],
                                                      net.node_locs[idx(x + 1, y)]);
                net.edges.push_back({idx(x, y), idx(x + 1, y), len});
                net.edges.push_back({idx(x + 1, y), idx(x, y), len});
            }
            if (y + 1 < h) {
                auto len = bikesim::geo::haversine_mm(net.node_locs[idx(x, y)],
                                                      net.node_locs[idx(x, y + 1)]);
                net.edges.push_back({idx(x, y), idx(x, y + 1), len});
                net.edges.push_back({idx(x, y + 1), idx(x, y), len});
            }
        }
    }
    net.finalize();
    return net;
}

/// n nodes on a ring (guaranteeing strong connectivity) plus extra random
/// directed edges with random integer lengths.
inline RoadNetwork random_strongly_connected(std::mt19937_64& rng, int n, int extra_edges) {
    RoadNetwork net;
    std::uniform_real_distribution<double> spread(0.0, 3000.0);
    for (int i = 0; i < n; ++i) {
        net.node_ids.push_back(i);
        net.node_locs.push_back(offset_m(spread(rng), spread(rng)));
    }
    std::uniform_int_distribution<std::int64_t> len(1000, 2000000);  // 1 m .. 2 km in mm
    for (int i = 0; i < n; ++i) {
        net.edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>((i + 1) % n),
                             len(rng)});
    }
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int e = 0; e < extra_edges; ++e) {
        int a = pick(rng), b = pick(rng);
        if (a == b) continue;
        net.edges.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                             len(rng)});
    }
    net.finalize();
    return net;
}

/// k x k station grid over a lattice network footprint.
inline std::vector<bikesim::demandio::StationRecord> station_grid(int k, double extent_m,
                                                                  int capacity) {
    std::vector<bikesim::demandio::StationRecord> out;
    for (int y = 0; y < k; ++y) {
        for (int x = 0; x < k; ++x) {
            bikesim::demandio::StationRecord s;
            s.id = y * k + x + 1;
            s.location = offset_m((x + 0.5) * extent_m / k, (y + 0.5) * extent_m / k);
            s.capacity = capacity;
            out.push_back(s);
        }
    }
    return out;
}

/// unique scratch path under the build tree
inline std::string scratch_path(const std::string& name) {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "bikesim-tests";
    fs::create_directories(dir);
    return (dir / name).string();
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace testutil

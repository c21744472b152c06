#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>

#include "bikesim/geo.hpp"
#include "helpers.hpp"

using namespace bikesim::geo;

TEST_CASE("haversine basics") {
    Location a{-71.06, 42.355};
    CHECK(haversine_m(a, a) == 0.0);

    // one degree of latitude = pi/180 * R
    Location b{-71.06, 43.355};
    double expect = M_PI / 180.0 * kEarthRadiusM;
    CHECK(haversine_m(a, b) == Catch::Approx(expect).epsilon(1e-9));
    CHECK(haversine_m(a, b) == haversine_m(b, a));
    CHECK(haversine_mm(a, b) == std::llround(expect * 1000.0));
}

static std::string write_osm_fixture() {
    // square of four nodes, a bidirectional south edge, a oneway east edge,
    // a motorway (filtered) and a node outside the bbox
    std::string path = testutil::scratch_path("fixture.osm");
    std::ofstream out(path);
    out << R"(<?xml version="1.0"?>
<osm version="0.6">
  <node id="1" lat="42.3550" lon="-71.0600"/>
  <node id="2" lat="42.3550" lon="-71.0580"/>
  <node id="3" lat="42.3570" lon="-71.0580"/>
  <node id="4" lat="42.3570" lon="-71.0600"/>
  <node id="5" lat="50.0000" lon="-71.0600"/>
  <way id="10">
    <nd ref="1"/><nd ref="2"/>
    <tag k="highway" v="residential"/>
  </way>
  <way id="11">
    <nd ref="2"/><nd ref="3"/>
    <tag k="highway" v="primary"/>
    <tag k="oneway" v="yes"/>
  </way>
  <way id="12">
    <nd ref="3"/><nd ref="4"/><nd ref="1"/>
    <tag k="highway" v="tertiary"/>
  </way>
  <way id="13">
    <nd ref="1"/><nd ref="5"/>
    <tag k="highway" v="motorway"/>
  </way>
  <way id="14">
    <nd ref="2"/><nd ref="4"/>
  </way>
</osm>
)";
    return path;
}

TEST_CASE("load_network parses ways, filters and prunes") {
    std::string path = write_osm_fixture();
    BoundingBox bbox{-72.0, 42.0, -70.0, 43.0};
    RoadNetwork net = load_network(path, bbox);

    // node 5 outside bbox and only reachable via a blocked motorway
    REQUIRE(net.num_nodes() == 4);
    CHECK_FALSE(net.index_of(5).has_value());

    auto has_edge = [&](NodeId a, NodeId b) {
        auto ia = net.index_of(a), ib = net.index_of(b);
        REQUIRE(ia);
        REQUIRE(ib);
        for (const auto& e : net.out_edges(*ia)) {
            if (e.to == *ib) return true;
        }
        return false;
    };
    CHECK(has_edge(1, 2));
    CHECK(has_edge(2, 1));   // bidirectional
    CHECK(has_edge(2, 3));
    CHECK_FALSE(has_edge(3, 2));  // oneway=yes
    CHECK(has_edge(3, 4));
    CHECK(has_edge(4, 1));
    // untagged way 14 contributes nothing
    CHECK_FALSE(has_edge(2, 4));

    // edge lengths are exact haversine millimeters
    auto i1 = *net.index_of(1), i2 = *net.index_of(2);
    for (const auto& e : net.out_edges(i1)) {
        if (e.to == i2) CHECK(e.length == haversine_mm(net.loc(i1), net.loc(i2)));
    }
}

TEST_CASE("load_network drops nodes outside the largest SCC") {
    // line 1->2->3 all oneway: SCCs are singletons; nothing survives as a
    // component of size > 1, so the largest (a singleton) remains
    std::string path = testutil::scratch_path("scc.osm");
    {
        std::ofstream out(path);
        out << R"(<osm>
  <node id="1" lat="42.3550" lon="-71.0600"/>
  <node id="2" lat="42.3550" lon="-71.0580"/>
  <node id="3" lat="42.3570" lon="-71.0580"/>
  <node id="4" lat="42.3570" lon="-71.0600"/>
  <way id="1"><nd ref="1"/><nd ref="2"/><nd ref="3"/><tag k="highway" v="residential"/></way>
  <way id="2"><nd ref="3"/><nd ref="2"/><nd ref="1"/><tag k="highway" v="residential"/></way>
  <way id="3"><nd ref="3"/><nd ref="4"/><tag k="highway" v="residential"/><tag k="oneway" v="yes"/></way>
</osm>)";
    }
    RoadNetwork net = load_network(path, BoundingBox{});
    // node 4 is a dead end (no way back) -> pruned with its edge
    CHECK(net.num_nodes() == 3);
    CHECK_FALSE(net.index_of(4).has_value());
}

TEST_CASE("network cache round trip") {
    RoadNetwork net = testutil::grid_network(5, 4, 120.0);
    std::string path = testutil::scratch_path("net.cache");
    save_network(net, path);
    RoadNetwork back = read_network(path);
    REQUIRE(back.num_nodes() == net.num_nodes());
    REQUIRE(back.num_edges() == net.num_edges());
    CHECK(back.node_ids == net.node_ids);
    for (std::size_t i = 0; i < net.num_edges(); ++i) {
        CHECK(back.edges[i].from == net.edges[i].from);
        CHECK(back.edges[i].to == net.edges[i].to);
        CHECK(back.edges[i].length == net.edges[i].length);
    }
    // byte-stable: saving again produces identical bytes
    std::string path2 = testutil::scratch_path("net2.cache");
    save_network(back, path2);
    CHECK(testutil::slurp(path) == testutil::slurp(path2));
}

TEST_CASE("NodeIndex matches brute-force nearest") {
    std::mt19937_64 rng(7);
    RoadNetwork net = testutil::random_strongly_connected(rng, 200, 300);
    NodeIndex index(net);
    std::uniform_real_distribution<double> d(-500.0, 3500.0);
    for (int i = 0; i < 500; ++i) {
        Location p = testutil::offset_m(d(rng), d(rng));
        CHECK(index.nearest(p) == nearest_node(net, p));
    }
}

TEST_CASE("hex grid partition") {
    RoadNetwork net = testutil::grid_network(12, 12, 100.0);
    CHECK_THROWS_AS(build_grid(net, 0.0), std::invalid_argument);

    GridIndex grid = build_grid(net, 150.0);
    REQUIRE(grid.cell_count() > 1);
    REQUIRE(grid.node_to_cell.size() == net.num_nodes());

    // node -> cell assignment is exactly the hex containing the node
    for (std::uint32_t i = 0; i < net.num_nodes(); ++i) {
        auto [x, y] = detail::project(net.loc(i), grid.origin);
        auto [q, r] = detail::hex_of(x, y, grid.edge_m);
        const GridCell& c = grid.cells[grid.node_to_cell[i]];
        CHECK(c.q == q);
        CHECK(c.r == r);
    }
    // centroids round-trip to their own hex
    for (const GridCell& c : grid.cells) {
        auto [x, y] = detail::project(c.centroid, grid.origin);
        auto [q, r] = detail::hex_of(x, y, grid.edge_m);
        CHECK(q == c.q);
        CHECK(r == c.r);
        CHECK(c.boundary.size() == 6);
    }
    // every cell contains at least one node
    std::vector<int> count(grid.cell_count(), 0);
    for (auto c : grid.node_to_cell) count[c]++;
    for (int n : count) CHECK(n >= 1);
    // finer resolution -> at least as many cells
    CHECK(build_grid(net, 60.0).cell_count() >= grid.cell_count());
}

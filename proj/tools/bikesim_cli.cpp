// bikesim command-line front end:
//   prepare  cache a road network / build a request file
//   run      execute one simulation
//   sweep    batch runner over a parameter axis
//   preset   print a named scenario configuration
//   report   recompute KPIs from a persisted event log
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <iostream>
#include <variant>

#include <CLI11.hpp>

#include "bikesim/config.hpp"
#include "bikesim/demandio.hpp"
#include "bikesim/sim.hpp"

namespace {

using bikesim::config::Preset;
using bikesim::config::RunConfig;
using bikesim::config::SweepSpec;

// assemble a RunConfig from --preset, --config and flag overrides
struct RunFlags {
    std::string preset, config_file;
    std::string network, stations, requests, out;
    std::string mode, rebalancing, predictor;
    std::int64_t seed = -1;
    int fleet = -1;
    double horizon_days = -1.0;
};

RunConfig make_config(const RunFlags& f) {
    RunConfig cfg;
    if (!f.preset.empty()) {
        Preset p = bikesim::config::preset(f.preset);
        if (!std::holds_alternative<RunConfig>(p)) {
            throw std::invalid_argument("preset '" + f.preset + "' is a sweep; use `sweep`");
        }
        cfg = std::get<RunConfig>(p);
    }
    if (!f.config_file.empty()) cfg = bikesim::config::parse_file(f.config_file);
    if (!f.network.empty()) cfg.network_file = f.network;
    if (!f.stations.empty()) cfg.stations_file = f.stations;
    if (!f.requests.empty()) cfg.requests_file = f.requests;
    if (!f.out.empty()) cfg.out_dir = f.out;
    if (f.seed >= 0) cfg.seed = static_cast<std::uint64_t>(f.seed);
    if (f.fleet >= 0) cfg.mode.fleet_size = f.fleet;
    if (f.horizon_days > 0) cfg.horizon_days = f.horizon_days;
    if (!f.mode.empty()) {
        auto m = bikesim::modes::mode_from(f.mode);
        if (!m) throw std::invalid_argument("unknown mode: " + f.mode);
        cfg.mode.mode = *m;
    }
    if (!f.rebalancing.empty()) {
        cfg.mode.rebalancing = bikesim::config::detail::rebalancing_from(f.rebalancing);
    }
    if (!f.predictor.empty()) cfg.mode.predictor = f.predictor;
    bikesim::config::apply_env_overrides(cfg);
    cfg.validate();
    return cfg;
}

void add_run_flags(CLI::App* app, RunFlags& f) {
    app->add_option("--preset", f.preset, "scenario preset name");
    app->add_option("--config", f.config_file, "config file (key = value)");
    app->add_option("--network", f.network, "network cache or OSM XML");
    app->add_option("--stations", f.stations, "stations CSV");
    app->add_option("--requests", f.requests, "request file");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--seed", f.seed, "RNG seed");
    app->add_option("--fleet", f.fleet, "fleet size");
    app->add_option("--mode", f.mode, "station | dockless | autonomous");
    app->add_option("--rebalancing", f.rebalancing, "none | ideal | predictive");
    app->add_option("--predictor", f.predictor,
                    "baseline-historical | perfect-foresight | external-file");
    app->add_option("--horizon-days", f.horizon_days, "simulation horizon in days");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bikesim: shared-bicycle fleet simulator"};
    app.require_subcommand(1);

    // ---- prepare ----
    auto* prep = app.add_subcommand("prepare", "preprocess network / demand inputs");
    std::string p_osm, p_trips, p_stations, p_out, p_t0, p_t1;
    double p_radius = 300.0;
    std::int64_t p_seed = 1;
    bool p_synthetic = false;
    int p_count = 2000, p_days = 7;
    double p_west = -180, p_south = -90, p_east = 180, p_north = 90;
    prep->add_option("--osm", p_osm, "OSM XML to convert into a network cache");
    prep->add_option("--trips", p_trips, "trip CSV to convert into requests");
    prep->add_flag("--synthetic", p_synthetic, "generate synthetic requests instead");
    prep->add_option("--stations", p_stations, "stations CSV (for requests)");
    prep->add_option("--out", p_out, "output file")->required();
    prep->add_option("--t0", p_t0, "window start, 'YYYY-MM-DD HH:MM:SS' UTC");
    prep->add_option("--t1", p_t1, "window end (exclusive)");
    prep->add_option("--scatter-radius", p_radius, "request scatter radius, m");
    prep->add_option("--seed", p_seed, "scatter RNG seed");
    prep->add_option("--count", p_count, "synthetic request count");
    prep->add_option("--days", p_days, "synthetic horizon days");
    prep->add_option("--west", p_west, "bbox west");
    prep->add_option("--south", p_south, "bbox south");
    prep->add_option("--east", p_east, "bbox east");
    prep->add_option("--north", p_north, "bbox north");

    // ---- run ----
    auto* runc = app.add_subcommand("run", "execute one simulation");
    RunFlags rf;
    add_run_flags(runc, rf);

    // ---- sweep ----
    auto* sw = app.add_subcommand("sweep", "batch runner over a parameter axis");
    RunFlags sf;
    add_run_flags(sw, sf);
    std::string s_axis;
    std::vector<double> s_values;
    std::vector<int> s_fleets;
    std::vector<std::uint64_t> s_seeds;
    unsigned s_workers = std::thread::hardware_concurrency();
    sw->add_option("--axis", s_axis, "parameter to sweep");
    sw->add_option("--values", s_values, "axis values");
    sw->add_option("--fleets", s_fleets, "fleet sizes");
    sw->add_option("--seeds", s_seeds, "seeds per combination");
    sw->add_option("--workers", s_workers, "parallel workers");

    // ---- preset ----
    auto* pre = app.add_subcommand("preset", "print a named scenario configuration");
    std::string pre_name;
    pre->add_option("name", pre_name, "preset name")->required();

    // ---- report ----
    auto* rep = app.add_subcommand("report", "recompute KPIs from an event log");
    std::string rep_log, rep_kv;
    rep->add_option("--log", rep_log, "event log file")->required();
    rep->add_option("--kv", rep_kv, "also write key=value report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*prep) {
            if (!p_osm.empty()) {
                bikesim::geo::BoundingBox bbox{p_west, p_south, p_east, p_north};
                auto net = bikesim::geo::load_network(p_osm, bbox);
                bikesim::geo::save_network(net, p_out);
                std::cout << "network: " << net.num_nodes() << " nodes, " << net.num_edges()
                          << " edges -> " << p_out << "\n";
            } else if (p_synthetic) {
                if (p_stations.empty()) throw std::invalid_argument("--synthetic needs --stations");
                auto stations = bikesim::demandio::load_stations(p_stations);
                bikesim::demandio::SyntheticSpec spec;
                spec.days = p_days;
                spec.total_requests = p_count;
                spec.scatter_radius_m = p_radius;
                spec.seed = static_cast<std::uint64_t>(p_seed);
                auto reqs = bikesim::demandio::synthetic_requests(stations, spec);
                bikesim::demandio::save_requests(reqs, p_out);
                std::cout << "synthetic requests: " << reqs.size() << " -> " << p_out << "\n";
            } else if (!p_trips.empty()) {
                if (p_t0.empty() || p_t1.empty()) {
                    throw std::invalid_argument("--trips needs --t0 and --t1");
                }
                std::int64_t t0 = bikesim::demandio::parse_timestamp(p_t0);
                std::int64_t t1 = bikesim::demandio::parse_timestamp(p_t1);
                auto loaded = bikesim::demandio::load_trips(p_trips, t0, t1);
                auto reqs = bikesim::demandio::scatter_requests(
                    loaded.trips, static_cast<std::uint64_t>(p_seed), p_radius);
                bikesim::demandio::save_requests(reqs, p_out);
                std::cout << "requests: " << reqs.size() << " (skipped " << loaded.skipped
                          << " rows) -> " << p_out << "\n";
            } else {
                throw std::invalid_argument("prepare: need --osm, --trips or --synthetic");
            }
        } else if (*runc) {
            RunConfig cfg = make_config(rf);
            auto art = bikesim::sim::run(cfg);
            bikesim::metrics::write_report_table(art.report, std::cout);
            std::cout << "artifacts in " << art.out_dir << "\n";
        } else if (*sw) {
            SweepSpec spec;
            if (!sf.preset.empty() &&
                std::holds_alternative<SweepSpec>(bikesim::config::preset(sf.preset))) {
                spec = std::get<SweepSpec>(bikesim::config::preset(sf.preset));
                RunFlags base_flags = sf;
                base_flags.preset.clear();
                RunConfig overrides = spec.base;
                // data-path / output flags still apply to the sweep base
                if (!base_flags.network.empty()) overrides.network_file = base_flags.network;
                if (!base_flags.stations.empty()) overrides.stations_file = base_flags.stations;
                if (!base_flags.requests.empty()) overrides.requests_file = base_flags.requests;
                if (!base_flags.out.empty()) overrides.out_dir = base_flags.out;
                spec.base = overrides;
            } else {
                spec.base = make_config(sf);
                spec.axis = s_axis;
                spec.values = s_values;
                spec.fleet_sizes = s_fleets.empty() ? std::vector<int>{spec.base.mode.fleet_size}
                                                    : s_fleets;
                spec.seeds = s_seeds.empty() ? std::vector<std::uint64_t>{spec.base.seed}
                                             : s_seeds;
            }
            if (!s_axis.empty()) spec.axis = s_axis;
            if (!s_values.empty()) spec.values = s_values;
            if (!s_fleets.empty()) spec.fleet_sizes = s_fleets;
            if (!s_seeds.empty()) spec.seeds = s_seeds;
            if (spec.axis.empty()) throw std::invalid_argument("sweep: --axis required");
            std::string out = spec.base.out_dir;
            std::cout << "sweep " << spec.axis << ": " << spec.combinations()
                      << " combinations\n";
            if (spec.axis == "level_of_service") {
                if (spec.fleet_sizes.size() != 2) {
                    throw std::invalid_argument("level_of_service sweep needs a [lo, hi] bracket");
                }
                auto si = bikesim::sim::load_inputs(spec.base);
                int fleet = bikesim::sim::level_of_service_fleet(
                    spec.base, si, spec.values.at(0), spec.fleet_sizes[0], spec.fleet_sizes[1],
                    spec.seeds);
                if (fleet < 0) {
                    std::cout << "target " << spec.values.at(0)
                              << " % not reachable within bracket\n";
                } else {
                    std::cout << "smallest fleet with >= " << spec.values.at(0)
                              << " % served: " << fleet << "\n";
                }
            } else {
                auto result = bikesim::sim::sweep(spec, out, s_workers);
                std::size_t failed = 0;
                for (const auto& row : result.rows) failed += row.ok ? 0 : 1;
                std::cout << "matrix -> " << result.csv_path << " (" << failed << " failures)\n";
            }
        } else if (*pre) {
            Preset p = bikesim::config::preset(pre_name);
            if (std::holds_alternative<RunConfig>(p)) {
                std::cout << bikesim::config::serialize(std::get<RunConfig>(p));
            } else {
                const auto& s = std::get<SweepSpec>(p);
                std::cout << "# sweep preset\naxis = " << s.axis << "\nvalues =";
                for (double v : s.values) std::cout << " " << v;
                std::cout << "\nfleet_sizes =";
                for (int f : s.fleet_sizes) std::cout << " " << f;
                std::cout << "\nseeds =";
                for (auto sd : s.seeds) std::cout << " " << sd;
                std::cout << "\n" << bikesim::config::serialize(s.base);
            }
        } else if (*rep) {
            auto k = bikesim::metrics::compute_kpis(rep_log);
            bikesim::metrics::write_report_table(k, std::cout);
            if (!rep_kv.empty()) {
                std::ofstream kv(rep_kv);
                bikesim::metrics::write_report_kv(k, kv);
            }
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

#pragma once

// Single-run wiring (setup -> engine -> metrics -> artifacts), the
// parallel sweep runner and the level-of-service fleet search.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "bikesim/config.hpp"
#include "bikesim/demandio.hpp"
#include "bikesim/metrics.hpp"
#include "bikesim/modes.hpp"
#include "bikesim/routing.hpp"

namespace bikesim::sim {

namespace fs = std::filesystem;
using config::RunConfig;
using config::SweepSpec;

/// Network, stations and requests loaded once and shared (read-only)
/// across runs; CH preprocessing is the expensive part.
struct SharedInputs {
    geo::RoadNetwork network;
    std::unique_ptr<routing::Router> router;
    std::vector<demandio::StationRecord> stations;
    std::vector<demandio::Request> requests;
};

inline bool file_has_magic(const std::string& path, const std::string& magic) {
    std::ifstream in(path);
    std::string word;
    in >> word;
    return in && word == magic;
}

inline SharedInputs load_inputs(const RunConfig& cfg) {
    SharedInputs si;
    if (file_has_magic(cfg.network_file, "bikesim-network")) {
        si.network = geo::read_network(cfg.network_file);
    } else {
        si.network = geo::load_network(cfg.network_file, geo::BoundingBox{});
    }
    si.router = std::make_unique<routing::Router>(si.network);
    si.stations = demandio::load_stations(cfg.stations_file);
    si.requests = demandio::read_requests(cfg.requests_file);
    return si;
}

/// Core simulation: everything except artifact I/O. The log may or may
/// not be file-backed.
inline metrics::KpiReport simulate(const RunConfig& cfg, const SharedInputs& si,
                                   metrics::EventLog& log) {
    cfg.validate();
    modes::World world(*si.router, cfg.mode, si.stations, si.requests, log, cfg.seed,
                       cfg.horizon_ms(), config::config_hash(cfg));
    world.run();
    return log.accumulator().finalize();
}

struct RunArtifacts {
    metrics::KpiReport report;
    std::string out_dir, log_path, report_kv_path, report_txt_path, timeline_path;
};

/// Full run: write the event log, reports, activity timeline and the
/// config echo into cfg.out_dir. Partial artifacts are removed on error.
inline RunArtifacts run(const RunConfig& cfg, const SharedInputs& si) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    RunArtifacts a;
    a.out_dir = cfg.out_dir;
    a.log_path = (fs::path(cfg.out_dir) / "events.log").string();
    a.report_kv_path = (fs::path(cfg.out_dir) / "report.kv").string();
    a.report_txt_path = (fs::path(cfg.out_dir) / "report.txt").string();
    a.timeline_path = (fs::path(cfg.out_dir) / "timeline.csv").string();
    std::string config_path = (fs::path(cfg.out_dir) / "config.txt").string();
    try {
        {
            std::ofstream cf(config_path);
            cf << config::serialize(cfg);
        }
        metrics::EventLog log(a.log_path);
        a.report = simulate(cfg, si, log);
        {
            std::ofstream kv(a.report_kv_path);
            metrics::write_report_kv(a.report, kv);
            std::ofstream txt(a.report_txt_path);
            metrics::write_report_table(a.report, txt);
        }
        auto tl = metrics::timeline(a.log_path, 15 * engine::kMsPerMinute);
        metrics::write_timeline_csv(tl, a.timeline_path);
    } catch (...) {
        for (const auto& p : {a.log_path, a.report_kv_path, a.report_txt_path, a.timeline_path,
                              config_path}) {
            std::error_code ec;
            fs::remove(p, ec);
        }
        throw;
    }
    return a;
}

inline RunArtifacts run(const RunConfig& cfg) {
    SharedInputs si = load_inputs(cfg);
    return run(cfg, si);
}

// ---- sweep runner ---------------------------------------------------------

struct SweepRow {
    double value = 0.0;
    int fleet = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    metrics::KpiReport report;
};

struct SweepResult {
    std::string axis;
    std::vector<SweepRow> rows;  // deterministic combination order
    std::string csv_path;
};

inline void write_sweep_csv(const SweepResult& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("sweep: cannot write " + path);
    out << "axis,value,fleet_size,seed,ok,served_pct,avg_trip_min,avg_wait_min,"
           "wait_or_walk_min,trips_per_bike_day,total_charges,vkt_total_km,"
           "vkt_rebalancing_pct,error\n";
    out << std::fixed;
    out.precision(6);
    for (const auto& row : r.rows) {
        out << r.axis << "," << row.value << "," << row.fleet << "," << row.seed << ","
            << (row.ok ? 1 : 0) << ",";
        if (row.ok) {
            const auto& k = row.report;
            out << k.served_pct << "," << k.avg_trip_min << "," << k.avg_wait_min << ","
                << k.wait_or_walk_min << "," << k.trips_per_bike_day << "," << k.total_charges
                << "," << k.vkt_total_km << ","
                << k.vkt_pct[static_cast<int>(metrics::ActivityClass::Rebalancing)] << ",";
        } else {
            out << ",,,,,,,,";
        }
        out << row.error << "\n";
    }
}

/// Run every (value, fleet, seed) combination; parallel across runs,
/// per-run artifacts in out_dir/<axis>=<value>_fleet=<f>_seed=<s>/ and
/// bit-identical regardless of worker count.
inline SweepResult sweep(const SweepSpec& spec, const std::string& out_dir,
                         unsigned workers = std::thread::hardware_concurrency()) {
    if (spec.values.empty() || spec.fleet_sizes.empty() || spec.seeds.empty()) {
        throw std::invalid_argument("sweep: empty axis");
    }
    SharedInputs si = load_inputs(spec.base);
    fs::create_directories(out_dir);

    struct Combo {
        double value;
        int fleet;
        std::uint64_t seed;
    };
    std::vector<Combo> combos;
    for (double v : spec.values) {
        for (int f : spec.fleet_sizes) {
            for (std::uint64_t s : spec.seeds) combos.push_back({v, f, s});
        }
    }
    SweepResult result;
    result.axis = spec.axis;
    result.rows.resize(combos.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= combos.size()) return;
            const Combo& c = combos[i];
            SweepRow& row = result.rows[i];
            row.value = c.value;
            row.fleet = c.fleet;
            row.seed = c.seed;
            try {
                RunConfig cfg = spec.base;
                config::apply_param(cfg, spec.axis, c.value);
                cfg.mode.fleet_size = c.fleet;
                cfg.seed = c.seed;
                std::ostringstream dir;
                dir << spec.axis << "=" << c.value << "_fleet=" << c.fleet << "_seed=" << c.seed;
                cfg.out_dir = (fs::path(out_dir) / dir.str()).string();
                row.report = run(cfg, si).report;
                row.ok = true;
            } catch (const std::exception& e) {
                row.ok = false;
                row.error = e.what();  // recorded; sweep continues
            }
        }
    };
    if (workers == 0) workers = 1;
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    result.csv_path = (fs::path(out_dir) / "sweep.csv").string();
    write_sweep_csv(result, result.csv_path);
    return result;
}

// ---- level-of-service search ----------------------------------------------

/// Smallest fleet size whose mean served % over `seeds` reaches
/// `target_pct`; monotone bisection over [lo, hi]. Returns -1 when even
/// `hi` falls short.
inline int level_of_service_fleet(RunConfig base, const SharedInputs& si, double target_pct,
                                  int lo, int hi, const std::vector<std::uint64_t>& seeds) {
    if (lo < 0 || hi < lo || seeds.empty()) {
        throw std::invalid_argument("level_of_service_fleet: bad bracket");
    }
    auto mean_served = [&](int fleet) {
        double sum = 0.0;
        for (std::uint64_t s : seeds) {
            RunConfig cfg = base;
            cfg.mode.fleet_size = fleet;
            cfg.seed = s;
            metrics::EventLog log;  // in-memory, no artifacts
            sum += simulate(cfg, si, log).served_pct;
        }
        return sum / static_cast<double>(seeds.size());
    };
    if (mean_served(hi) < target_pct) return -1;
    while (lo < hi) {
        int mid = lo + (hi - lo) / 2;
        if (mean_served(mid) >= target_pct) hi = mid;
        else lo = mid + 1;
    }
    return lo;
}

}  // namespace bikesim::sim

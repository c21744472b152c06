#pragma once

// Run configuration: line-oriented `key = value` files with [sections],
// scenario presets, and the config hash recorded in every run log.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bikesim/engine.hpp"
#include "bikesim/modes.hpp"

namespace bikesim::config {

using engine::TimeMs;

struct RunConfig {
    modes::ModeConfig mode;

    std::string network_file = "data/network.txt";    // cache or raw OSM XML
    std::string stations_file = "data/stations.csv";
    std::string requests_file = "data/requests.txt";
    std::string window_t0, window_t1;  // informational; used by `prepare`

    double horizon_days = 7.0;
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    TimeMs horizon_ms() const {
        return static_cast<TimeMs>(std::llround(horizon_days * engine::kMsPerDay));
    }

    void validate() const {
        mode.validate();
        if (horizon_days <= 0) throw std::invalid_argument("horizon_days must be > 0");
        if (network_file.empty() || stations_file.empty() || requests_file.empty()) {
            throw std::invalid_argument("data paths must be set");
        }
    }
};

struct SweepSpec {
    RunConfig base;
    std::string axis;             // RunConfig parameter name
    std::vector<double> values;
    std::vector<int> fleet_sizes;
    std::vector<std::uint64_t> seeds;

    std::size_t combinations() const {
        return values.size() * fleet_sizes.size() * seeds.size();
    }
};

// ---- serialization --------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline const char* to_string(modes::RebalancingScenario s) {
    switch (s) {
        case modes::RebalancingScenario::None: return "none";
        case modes::RebalancingScenario::Ideal: return "ideal";
        case modes::RebalancingScenario::Predictive: return "predictive";
    }
    return "?";
}

inline modes::RebalancingScenario rebalancing_from(const std::string& s) {
    if (s == "none") return modes::RebalancingScenario::None;
    if (s == "ideal") return modes::RebalancingScenario::Ideal;
    if (s == "predictive") return modes::RebalancingScenario::Predictive;
    throw std::invalid_argument("unknown rebalancing scenario: " + s);
}

}  // namespace detail

inline std::string serialize(const RunConfig& c) {
    using detail::fmt_double;
    std::ostringstream os;
    os << "[run]\n";
    os << "seed = " << c.seed << "\n";
    os << "out = " << c.out_dir << "\n";
    os << "horizon_days = " << fmt_double(c.horizon_days) << "\n";
    os << "\n[data]\n";
    os << "network = " << c.network_file << "\n";
    os << "stations = " << c.stations_file << "\n";
    os << "requests = " << c.requests_file << "\n";
    os << "window_t0 = " << c.window_t0 << "\n";
    os << "window_t1 = " << c.window_t1 << "\n";
    os << "\n[mode]\n";
    os << "mode = " << modes::to_string(c.mode.mode) << "\n";
    os << "fleet_size = " << c.mode.fleet_size << "\n";
    os << "walk_radius_m = " << fmt_double(c.mode.walk_radius_m) << "\n";
    os << "walking_speed_kmh = " << fmt_double(c.mode.walking_speed_kmh) << "\n";
    os << "riding_speed_kmh = " << fmt_double(c.mode.riding_speed_kmh) << "\n";
    os << "beta = " << fmt_double(c.mode.beta) << "\n";
    os << "min_bikes_docks = " << c.mode.min_bikes_docks << "\n";
    os << "retry_cap = " << c.mode.retry_cap << "\n";
    os << "\n[autonomous]\n";
    os << "speed_kmh = " << fmt_double(c.mode.autonomous_speed_kmh) << "\n";
    os << "radius_m = " << fmt_double(c.mode.autonomous_radius_m) << "\n";
    os << "rebalancing = " << detail::to_string(c.mode.rebalancing) << "\n";
    os << "predictor = " << c.mode.predictor << "\n";
    os << "forecast_file = " << c.mode.forecast_file << "\n";
    os << "predictor_window = " << c.mode.predictor_window << "\n";
    os << "prediction_ahead = " << c.mode.prediction_ahead << "\n";
    os << "prediction_period = " << c.mode.prediction_period << "\n";
    os << "claim_midroute = " << (c.mode.claim_rebalancing_midroute ? "true" : "false") << "\n";
    os << "grid_edge_m = " << fmt_double(c.mode.grid_edge_m) << "\n";
    os << "\n[battery]\n";
    os << "autonomy_km = " << fmt_double(c.mode.battery.autonomy_km) << "\n";
    os << "recharge_hours = " << fmt_double(c.mode.battery.recharge_hours) << "\n";
    os << "min_level = " << fmt_double(c.mode.battery.min_level) << "\n";
    return os.str();
}

inline RunConfig parse(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = detail::trim(line);
        if (s.empty() || s[0] == '#') continue;
        if (s.front() == '[' && s.back() == ']') {
            section = s.substr(1, s.size() - 2);
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        }
        std::string key = detail::trim(s.substr(0, eq));
        std::string val = detail::trim(s.substr(eq + 1));
        kv[section + "." + key] = val;
    }

    RunConfig c;
    auto take = [&](const std::string& key) -> std::string {
        auto it = kv.find(key);
        if (it == kv.end()) return {};
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    auto take_d = [&](const std::string& key, double& out) {
        std::string v = take(key);
        if (!v.empty()) out = std::stod(v);
    };
    auto take_i = [&](const std::string& key, auto& out) {
        std::string v = take(key);
        if (!v.empty()) out = static_cast<std::decay_t<decltype(out)>>(std::stoll(v));
    };
    auto take_s = [&](const std::string& key, std::string& out) {
        if (kv.count(key)) out = take(key);
    };
    auto take_b = [&](const std::string& key, bool& out) {
        std::string v = take(key);
        if (v == "true" || v == "1") out = true;
        else if (v == "false" || v == "0") out = false;
        else if (!v.empty()) throw std::invalid_argument(key + ": expected true/false");
    };

    take_i("run.seed", c.seed);
    take_s("run.out", c.out_dir);
    take_d("run.horizon_days", c.horizon_days);
    take_s("data.network", c.network_file);
    take_s("data.stations", c.stations_file);
    take_s("data.requests", c.requests_file);
    take_s("data.window_t0", c.window_t0);
    take_s("data.window_t1", c.window_t1);
    std::string mode_name = take("mode.mode");
    if (!mode_name.empty()) {
        auto m = modes::mode_from(mode_name);
        if (!m) throw std::invalid_argument("unknown mode: " + mode_name);
        c.mode.mode = *m;
    }
    take_i("mode.fleet_size", c.mode.fleet_size);
    take_d("mode.walk_radius_m", c.mode.walk_radius_m);
    take_d("mode.walking_speed_kmh", c.mode.walking_speed_kmh);
    take_d("mode.riding_speed_kmh", c.mode.riding_speed_kmh);
    take_d("mode.beta", c.mode.beta);
    take_i("mode.min_bikes_docks", c.mode.min_bikes_docks);
    take_i("mode.retry_cap", c.mode.retry_cap);
    take_d("autonomous.speed_kmh", c.mode.autonomous_speed_kmh);
    take_d("autonomous.radius_m", c.mode.autonomous_radius_m);
    std::string reb = take("autonomous.rebalancing");
    if (!reb.empty()) c.mode.rebalancing = detail::rebalancing_from(reb);
    take_s("autonomous.predictor", c.mode.predictor);
    take_s("autonomous.forecast_file", c.mode.forecast_file);
    take_i("autonomous.predictor_window", c.mode.predictor_window);
    take_i("autonomous.prediction_ahead", c.mode.prediction_ahead);
    take_i("autonomous.prediction_period", c.mode.prediction_period);
    take_b("autonomous.claim_midroute", c.mode.claim_rebalancing_midroute);
    take_d("autonomous.grid_edge_m", c.mode.grid_edge_m);
    take_d("battery.autonomy_km", c.mode.battery.autonomy_km);
    take_d("battery.recharge_hours", c.mode.battery.recharge_hours);
    take_d("battery.min_level", c.mode.battery.min_level);

    if (!kv.empty()) {
        throw std::invalid_argument("unknown config key: " + kv.begin()->first);
    }
    return c;
}

inline RunConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    return parse(in);
}

/// Environment overrides, restricted to seed and output paths.
inline void apply_env_overrides(RunConfig& c) {
    if (const char* s = std::getenv("BIKESIM_SEED")) c.seed = std::stoull(s);
    if (const char* o = std::getenv("BIKESIM_OUT")) c.out_dir = o;
}

/// FNV-1a over the canonical serialization; stable across platforms.
/// The output directory is excluded: it does not affect the run.
inline std::string config_hash(const RunConfig& c) {
    RunConfig canon = c;
    canon.out_dir.clear();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : serialize(canon)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

/// Set a single parameter by name (sweep axes).
inline void apply_param(RunConfig& c, const std::string& name, double value) {
    if (name == "fleet_size") c.mode.fleet_size = static_cast<int>(value);
    else if (name == "walk_radius_m") c.mode.walk_radius_m = value;
    else if (name == "walking_speed_kmh") c.mode.walking_speed_kmh = value;
    else if (name == "riding_speed_kmh") c.mode.riding_speed_kmh = value;
    else if (name == "autonomous_speed_kmh") c.mode.autonomous_speed_kmh = value;
    else if (name == "autonomous_radius_m") c.mode.autonomous_radius_m = value;
    else if (name == "beta") c.mode.beta = value;
    else if (name == "min_bikes_docks") c.mode.min_bikes_docks = static_cast<int>(value);
    else if (name == "retry_cap") c.mode.retry_cap = static_cast<int>(value);
    else if (name == "autonomy_km") c.mode.battery.autonomy_km = value;
    else if (name == "recharge_hours") c.mode.battery.recharge_hours = value;
    else if (name == "min_level") c.mode.battery.min_level = value;
    else if (name == "predictor_window") c.mode.predictor_window = static_cast<int>(value);
    else if (name == "prediction_ahead") c.mode.prediction_ahead = static_cast<int>(value);
    else if (name == "prediction_period") c.mode.prediction_period = static_cast<int>(value);
    else if (name == "grid_edge_m") c.mode.grid_edge_m = value;
    else if (name == "horizon_days") c.horizon_days = value;
    else throw std::invalid_argument("unknown sweep parameter: " + name);
}

// ---- presets --------------------------------------------------------------

using Preset = std::variant<RunConfig, SweepSpec>;

inline std::vector<std::string> preset_names() {
    return {"sb-nominal",      "dl-nominal",       "au-nominal-nr",
            "au-nominal-ir",   "au-nominal-pr",    "same-fleet-2000",
            "same-fleet-3000", "level-of-service-99", "appendix-sweeps"};
}

inline Preset preset(const std::string& name) {
    RunConfig c;  // shared nominal defaults: Boston week, 300 m walk radius,
                  // 5 km/h walk, 10.2 km/h ride
    auto au_nominal = [&] {
        c.mode.mode = modes::Mode::Autonomous;
        c.mode.fleet_size = 1000;
        c.mode.autonomous_radius_m = 2000;
        c.mode.autonomous_speed_kmh = 8.0;
        c.mode.battery = modes::BatteryModel{70.0, 4.5, 0.15};
        c.mode.rebalancing = modes::RebalancingScenario::None;
    };

    if (name == "sb-nominal") {
        c.mode.mode = modes::Mode::Station;
        c.mode.fleet_size = 3500;
        c.mode.beta = 0.9;
        c.mode.min_bikes_docks = 3;
        return c;
    }
    if (name == "dl-nominal") {
        c.mode.mode = modes::Mode::Dockless;
        c.mode.fleet_size = 8000;
        return c;
    }
    if (name == "au-nominal-nr") {
        au_nominal();
        return c;
    }
    if (name == "au-nominal-ir") {
        au_nominal();
        c.mode.rebalancing = modes::RebalancingScenario::Ideal;
        return c;
    }
    if (name == "au-nominal-pr") {
        au_nominal();
        c.mode.rebalancing = modes::RebalancingScenario::Predictive;
        c.mode.predictor = "baseline-historical";
        return c;
    }
    if (name == "same-fleet-2000" || name == "same-fleet-3000") {
        au_nominal();
        c.mode.fleet_size = name == "same-fleet-2000" ? 2000 : 3000;
        return c;
    }
    if (name == "level-of-service-99") {
        // bisection target: smallest autonomous fleet serving >= 99 %
        au_nominal();
        SweepSpec s;
        s.base = c;
        s.axis = "level_of_service";
        s.values = {99.0};
        s.fleet_sizes = {125, 4000};  // bracket [lo, hi]
        s.seeds = {1, 2, 3};
        return s;
    }
    if (name == "appendix-sweeps") {
        au_nominal();
        SweepSpec s;
        s.base = c;
        s.axis = "autonomous_speed_kmh";
        s.values = {1.0, 2.5, 5.0, 10.0, 15.0, 20.0};
        s.fleet_sizes = {500, 1000, 1500, 2000};
        s.seeds = {1, 2, 3};
        return s;
    }
    std::string msg = "unknown preset '" + name + "'; available:";
    for (const auto& n : preset_names()) msg += " " + n;
    throw std::invalid_argument(msg);
}

}  // namespace bikesim::config

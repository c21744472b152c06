#pragma once

// The three bike-sharing modes as event-driven life-cycle processes:
// station-based (with beta-rebalancing), dockless, and autonomous
// (no / ideal / predictive rebalancing, battery management).

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bikesim/demandio.hpp"
#include "bikesim/engine.hpp"
#include "bikesim/geo.hpp"
#include "bikesim/metrics.hpp"
#include "bikesim/rebalance.hpp"
#include "bikesim/routing.hpp"

namespace bikesim::modes {

using demandio::Request;
using engine::TimeMs;
using geo::LengthMm;
using geo::Location;
using metrics::ActivityClass;
using metrics::BikeState;
using metrics::TripOutcome;

enum class Mode { Station, Dockless, Autonomous };

inline const char* to_string(Mode m) {
    switch (m) {
        case Mode::Station: return "station";
        case Mode::Dockless: return "dockless";
        case Mode::Autonomous: return "autonomous";
    }
    return "?";
}

inline std::optional<Mode> mode_from(const std::string& s) {
    if (s == "station") return Mode::Station;
    if (s == "dockless") return Mode::Dockless;
    if (s == "autonomous") return Mode::Autonomous;
    return std::nullopt;
}

enum class RebalancingScenario { None, Ideal, Predictive };

struct BatteryModel {
    double autonomy_km = 70.0;
    double recharge_hours = 4.5;
    double min_level = 0.15;  // fraction; below this the bike goes to charge

    LengthMm autonomy_mm() const { return static_cast<LengthMm>(autonomy_km * 1e6); }
    LengthMm min_charge_mm() const {
        return static_cast<LengthMm>(std::llround(min_level * autonomy_km * 1e6));
    }
    TimeMs full_recharge_ms() const {
        return static_cast<TimeMs>(std::llround(recharge_hours * engine::kMsPerHour));
    }
};

struct ModeConfig {
    Mode mode = Mode::Station;
    int fleet_size = 0;
    double walk_radius_m = 300.0;
    double walking_speed_kmh = 5.0;
    double riding_speed_kmh = 10.2;
    double autonomous_speed_kmh = 8.0;
    double autonomous_radius_m = 2000.0;
    double beta = 0.9;                 // station-mode rebalancing probability
    int min_bikes_docks = 3;
    RebalancingScenario rebalancing = RebalancingScenario::None;
    BatteryModel battery;
    int predictor_window = 4;          // W, 15-min slots
    int prediction_ahead = 1;          // P
    int prediction_period = 1;         // T
    std::string predictor = "baseline-historical";
    std::string forecast_file;         // for the external-file predictor
    bool claim_rebalancing_midroute = true;
    int retry_cap = 5;
    double grid_edge_m = 460.0;        // hex edge for the rebalancing grid

    void validate() const {
        if (fleet_size < 0) throw std::invalid_argument("fleet_size < 0");
        if (walking_speed_kmh <= 0 || riding_speed_kmh <= 0 || autonomous_speed_kmh <= 0) {
            throw std::invalid_argument("speeds must be > 0");
        }
        if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("beta outside [0,1]");
        if (walk_radius_m < 0 || autonomous_radius_m < 0) {
            throw std::invalid_argument("radius < 0");
        }
        if (battery.autonomy_km <= 0 || battery.recharge_hours <= 0 ||
            battery.min_level < 0 || battery.min_level >= 1) {
            throw std::invalid_argument("bad battery parameters");
        }
    }
};

struct Station {
    std::int64_t id = 0;
    Location location;
    std::uint32_t node = 0;  // snapped network node
    int capacity = 0;
    std::vector<std::int64_t> docked;  // bike ids, kept sorted ascending

    int free_docks() const { return capacity - static_cast<int>(docked.size()); }
    int bikes() const { return static_cast<int>(docked.size()); }
};

struct Bike {
    std::int64_t id = 0;
    std::uint32_t node = 0;
    BikeState state = BikeState::Idle;
    LengthMm charge_mm = 0;  // remaining battery range; autonomous only
    // active drive, for mid-route preemption of rebalancing moves
    struct Drive {
        std::vector<std::uint32_t> nodes;
        std::vector<LengthMm> cum;  // cumulative length to nodes[k]
        TimeMs start = 0;
        TimeMs duration = 0;
        engine::EventHandle arrival;
    };
    std::optional<Drive> drive;

    double soc(const BatteryModel& b) const {
        return static_cast<double>(charge_mm) / static_cast<double>(b.autonomy_mm());
    }
};

/// soc' = max(0, soc - distance / autonomy)
inline double discharge(double soc, double distance_m, const BatteryModel& battery) {
    return std::max(0.0, soc - distance_m / (battery.autonomy_km * 1000.0));
}

/// Proportional placement with largest-remainder rounding, capped at
/// station capacity (station mode).
inline std::vector<int> proportional_placement(const std::vector<int>& capacities, int fleet,
                                               bool cap_at_capacity) {
    std::int64_t total = 0;
    for (int c : capacities) total += c;
    if (total <= 0) throw std::invalid_argument("proportional_placement: zero total capacity");
    std::vector<int> out(capacities.size(), 0);
    std::vector<std::pair<double, std::size_t>> rema;
    std::int64_t placed = 0;
    for (std::size_t i = 0; i < capacities.size(); ++i) {
        double exact = static_cast<double>(fleet) * capacities[i] / static_cast<double>(total);
        out[i] = static_cast<int>(exact);
        placed += out[i];
        rema.push_back({exact - out[i], i});
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t k = 0; placed < fleet; k = (k + 1) % rema.size()) {
        std::size_t i = rema[k].second;
        if (!cap_at_capacity || out[i] < capacities[i]) {
            out[i]++;
            ++placed;
        }
    }
    if (cap_at_capacity) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            while (out[i] > capacities[i]) {  // shed overflow to remainder order
                out[i]--;
                for (auto& [frac, j] : rema) {
                    if (out[j] < capacities[j]) {
                        out[j]++;
                        break;
                    }
                }
            }
        }
    }
    return out;
}

class World {
public:
    World(const routing::Router& router, const ModeConfig& config,
          const std::vector<demandio::StationRecord>& station_records,
          std::vector<Request> requests, metrics::EventLog& log, std::uint64_t seed,
          TimeMs horizon_ms, const std::string& config_hash = "-")
        : router_(router),
          net_(router.network()),
          node_index_(router.network()),
          cfg_(config),
          log_(log),
          seed_(seed),
          horizon_ms_(horizon_ms),
          requests_(std::move(requests)) {
        cfg_.validate();
        init_stations(station_records);
        init_fleet();

        metrics::LogRecord run;
        run.kind = metrics::LogRecord::Kind::Run;
        run.mode = to_string(cfg_.mode);
        run.fleet = cfg_.fleet_size;
        run.horizon_ms = horizon_ms_;
        run.seed = seed_;
        run.config_hash = config_hash;
        log_.record(run);
        for (const Bike& b : bikes_) log_bike(0, b.id, BikeState::Idle, ActivityClass::Idle, 0);

        if (cfg_.mode == Mode::Autonomous && cfg_.rebalancing == RebalancingScenario::Predictive) {
            init_rebalancing();
        }
    }

    /// Execute the whole run: replay requests, drain in-flight activity,
    /// close the log with an END marker.
    void run() {
        for (const Request& r : requests_) {
            if (r.depart_ms < 0 || r.depart_ms >= horizon_ms_) continue;
            eng_.schedule(r.depart_ms, [this, &r] { start_request(r); });
        }
        eng_.run_until(horizon_ms_);
        eng_.drain();  // let trips already underway finish; no new demand arrives
        metrics::LogRecord end;
        end.kind = metrics::LogRecord::Kind::End;
        end.t = std::max(horizon_ms_, eng_.now());
        log_.record(end);
        log_.flush();
    }

    const std::vector<Station>& stations() const { return stations_; }
    const std::vector<Bike>& bikes() const { return bikes_; }
    engine::Engine& engine_ref() { return eng_; }
    const geo::GridIndex* grid() const { return grid_ ? &*grid_ : nullptr; }

private:
    // ---- setup ----------------------------------------------------------

    void init_stations(const std::vector<demandio::StationRecord>& records) {
        if (records.empty()) throw std::invalid_argument("World: no stations");
        for (const auto& r : records) {
            Station s;
            s.id = r.id;
            s.location = r.location;
            s.node = node_index_.nearest(r.location);
            s.capacity = r.capacity;
            stations_.push_back(s);
        }
        std::sort(stations_.begin(), stations_.end(),
                  [](const Station& a, const Station& b) { return a.id < b.id; });
    }

    void init_fleet() {
        std::vector<int> caps;
        std::int64_t total_cap = 0;
        for (const Station& s : stations_) {
            caps.push_back(s.capacity);
            total_cap += s.capacity;
        }
        bool station_mode = cfg_.mode == Mode::Station;
        if (station_mode && cfg_.fleet_size > total_cap - cfg_.min_bikes_docks) {
            throw std::invalid_argument("fleet_size exceeds dock capacity");
        }
        auto placement = proportional_placement(caps, cfg_.fleet_size, station_mode);
        std::int64_t next_id = 0;
        for (std::size_t i = 0; i < stations_.size(); ++i) {
            for (int k = 0; k < placement[i]; ++k) {
                Bike b;
                b.id = next_id++;
                b.node = stations_[i].node;
                b.state = BikeState::Idle;
                b.charge_mm = cfg_.battery.autonomy_mm();  // soc 1.0
                if (station_mode) stations_[i].docked.push_back(b.id);
                bikes_.push_back(b);
            }
        }
    }

    void init_rebalancing() {
        grid_ = geo::build_grid(net_, cfg_.grid_edge_m);
        cost_ = routing::cell_cost_matrix(*grid_, net_);
        lambda_ = rebalance::default_lambda(cost_);
        history_ = std::make_unique<rebalance::DemandHistory>(grid_->cell_count());
        cell_anchor_.resize(grid_->cell_count());
        for (std::size_t c = 0; c < grid_->cell_count(); ++c) {
            cell_anchor_[c] = node_index_.nearest(grid_->cells[c].centroid);
        }
        if (cfg_.predictor == "baseline-historical") {
            predictor_ = std::make_unique<rebalance::BaselinePredictor>();
        } else if (cfg_.predictor == "perfect-foresight") {
            std::vector<std::pair<std::size_t, std::int64_t>> truth;
            for (const Request& r : requests_) {
                auto node = node_index_.nearest(r.origin);
                truth.push_back({grid_->node_to_cell[node], r.depart_ms / demandio::kSlotMs});
            }
            predictor_ = std::make_unique<rebalance::PerfectForesightPredictor>(
                grid_->cell_count(), std::move(truth));
        } else if (cfg_.predictor == "external-file") {
            predictor_ = std::make_unique<rebalance::ExternalFilePredictor>(cfg_.forecast_file);
        } else {
            throw std::invalid_argument("unknown predictor: " + cfg_.predictor);
        }
        TimeMs period = static_cast<TimeMs>(cfg_.prediction_period) * demandio::kSlotMs;
        schedule_tick(period);
    }

    void schedule_tick(TimeMs period) {
        if (eng_.now() + period >= horizon_ms_) return;
        eng_.schedule(period, [this, period] {
            rebalance_tick();
            schedule_tick(period);
        });
    }

    // ---- logging helpers -------------------------------------------------

    void log_bike(TimeMs t, std::int64_t bike, BikeState state, ActivityClass cls, LengthMm dist) {
        metrics::LogRecord r;
        r.kind = metrics::LogRecord::Kind::Bike;
        r.t = t;
        r.bike = bike;
        r.state = state;
        r.dist_class = cls;
        r.dist_mm = dist;
        log_.record(r);
    }

    void log_dock(Station& s, int delta) {
        metrics::LogRecord r;
        r.kind = metrics::LogRecord::Kind::Dock;
        r.t = eng_.now();
        r.station = s.id;
        r.delta = delta;
        r.occupancy = s.bikes();
        log_.record(r);
    }

    // ---- trip bookkeeping ------------------------------------------------

    struct Trip {
        const Request* req = nullptr;
        std::uint32_t origin_node = 0, dest_node = 0;
        TimeMs walk_origin = 0, wait = 0, ride = 0, walk_dest = 0;
        int retries = 0;
        std::int64_t bike = -1;
        engine::Rng rng{0};
    };

    using TripPtr = std::shared_ptr<Trip>;

    void start_request(const Request& req) {
        metrics::LogRecord r;
        r.kind = metrics::LogRecord::Kind::Req;
        r.t = eng_.now();
        r.id = req.id;
        log_.record(r);

        auto trip = std::make_shared<Trip>();
        trip->req = &req;
        trip->origin_node = node_index_.nearest(req.origin);
        trip->dest_node = node_index_.nearest(req.destination);
        trip->rng = engine::Rng::substream(seed_, static_cast<std::uint64_t>(req.id));
        if (history_) {
            history_->record(grid_->node_to_cell[trip->origin_node],
                             req.depart_ms / demandio::kSlotMs);
        }
        switch (cfg_.mode) {
            case Mode::Station: sb_find_bike(trip, req.origin, trip->origin_node); break;
            case Mode::Dockless: dl_find_bike(trip, req.origin); break;
            case Mode::Autonomous: au_request(trip); break;
        }
    }

    void finish(const TripPtr& trip, TripOutcome outcome) {
        metrics::LogRecord r;
        r.kind = metrics::LogRecord::Kind::Trip;
        r.t = eng_.now();
        r.id = trip->req->id;
        r.outcome = outcome;
        r.walk_origin_ms = trip->walk_origin;
        r.wait_ms = trip->wait;
        r.ride_ms = trip->ride;
        r.walk_dest_ms = trip->walk_dest;
        r.depart_ms = trip->req->depart_ms;
        r.bike = trip->bike;
        log_.record(r);
    }

    // ---- shared geometry helpers ----------------------------------------

    LengthMm road_mm(std::uint32_t from, std::uint32_t to) const {
        return router_.distance(from, to);
    }

    TimeMs walk_ms(LengthMm mm) const { return routing::travel_time_ms(mm, cfg_.walking_speed_kmh); }
    TimeMs ride_ms(LengthMm mm) const { return routing::travel_time_ms(mm, cfg_.riding_speed_kmh); }
    TimeMs drive_ms(LengthMm mm) const {
        return routing::travel_time_ms(mm, cfg_.autonomous_speed_kmh);
    }

    // ---- station-based mode ---------------------------------------------

    std::vector<std::size_t> stations_within(const Location& p, double radius_m) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < stations_.size(); ++i) {
            if (geo::haversine_m(p, stations_[i].location) <= radius_m) out.push_back(i);
        }
        return out;
    }

    /// closest by road distance from `from_node`, ties by station id
    std::optional<std::size_t> closest_station(const std::vector<std::size_t>& candidates,
                                               std::uint32_t from_node) const {
        std::optional<std::size_t> best;
        LengthMm best_d = 0;
        for (std::size_t i : candidates) {
            LengthMm d = road_mm(from_node, stations_[i].node);
            if (d == routing::kUnreachable) continue;
            if (!best || d < best_d || (d == best_d && stations_[i].id < stations_[*best].id)) {
                best = i;
                best_d = d;
            }
        }
        return best;
    }

    /// beta-rebalancing: instantly relocate one bike from the nearest
    /// station holding more than min_bikes into `target`.
    bool beta_pull_bike(std::size_t target) {
        if (stations_[target].free_docks() <= 0) return false;
        std::optional<std::size_t> src;
        double best_d = 0;
        for (std::size_t i = 0; i < stations_.size(); ++i) {
            if (i == target || stations_[i].bikes() <= cfg_.min_bikes_docks) continue;
            double d = geo::haversine_m(stations_[target].location, stations_[i].location);
            if (!src || d < best_d || (d == best_d && stations_[i].id < stations_[*src].id)) {
                src = i;
                best_d = d;
            }
        }
        if (!src) return false;
        teleport_bike(*src, target);
        return true;
    }

    /// symmetric dock-side rebalancing: free a dock at `target` by
    /// relocating a bike to the nearest station with spare docks.
    bool beta_push_bike(std::size_t target) {
        if (stations_[target].bikes() <= 0) return false;
        std::optional<std::size_t> dst;
        double best_d = 0;
        for (std::size_t i = 0; i < stations_.size(); ++i) {
            if (i == target || stations_[i].free_docks() <= cfg_.min_bikes_docks) continue;
            double d = geo::haversine_m(stations_[target].location, stations_[i].location);
            if (!dst || d < best_d || (d == best_d && stations_[i].id < stations_[*dst].id)) {
                dst = i;
                best_d = d;
            }
        }
        if (!dst) return false;
        teleport_bike(target, *dst);
        return true;
    }

    void teleport_bike(std::size_t from, std::size_t to) {
        Station& src = stations_[from];
        Station& dst = stations_[to];
        std::int64_t bike = src.docked.front();  // smallest id
        src.docked.erase(src.docked.begin());
        dst.docked.insert(std::lower_bound(dst.docked.begin(), dst.docked.end(), bike), bike);
        bikes_[bike].node = dst.node;
        log_dock(src, -1);
        log_dock(dst, +1);
        metrics::LogRecord r;
        r.kind = metrics::LogRecord::Kind::Rebal;
        r.t = eng_.now();
        r.station = src.id;
        r.id = dst.id;
        log_.record(r);
    }

    void sb_find_bike(const TripPtr& trip, const Location& at, std::uint32_t at_node) {
        if (trip->retries > kSbRetryCap) {
            finish(trip, TripOutcome::NoBikes);
            return;
        }
        auto in_radius = stations_within(at, cfg_.walk_radius_m);
        if (in_radius.empty()) {
            finish(trip, TripOutcome::NoWalkableStations);
            return;
        }
        std::vector<std::size_t> with_bikes;
        for (std::size_t i : in_radius) {
            if (stations_[i].bikes() > 0) with_bikes.push_back(i);
        }
        if (with_bikes.empty()) {
            bool rebalanced = false;
            if (trip->rng.next_double() < cfg_.beta) {
                auto target = closest_station(in_radius, at_node);
                if (target) rebalanced = beta_pull_bike(*target);
                if (rebalanced) with_bikes.push_back(*target);
            }
            if (!rebalanced) {
                finish(trip, TripOutcome::NoBikes);
                return;
            }
        }
        auto chosen = closest_station(with_bikes, at_node);
        if (!chosen) {
            finish(trip, TripOutcome::NoBikes);
            return;
        }
        LengthMm d = road_mm(at_node, stations_[*chosen].node);
        TimeMs t = walk_ms(d);
        trip->walk_origin += t;
        std::size_t st = *chosen;
        eng_.schedule(t, [this, trip, st] { sb_arrive_station(trip, st); });
    }

    void sb_arrive_station(const TripPtr& trip, std::size_t st_idx) {
        Station& st = stations_[st_idx];
        if (st.bikes() == 0) {  // emptied while walking: look again from here
            trip->retries++;
            sb_find_bike(trip, st.location, st.node);
            return;
        }
        std::int64_t bike = st.docked.front();
        st.docked.erase(st.docked.begin());
        log_dock(st, -1);
        trip->bike = bike;
        bikes_[bike].state = BikeState::InUse;
        log_bike(eng_.now(), bike, BikeState::InUse, ActivityClass::Idle, 0);
        sb_find_dock(trip, st_idx);
    }

    void sb_find_dock(const TripPtr& trip, std::size_t from_idx) {
        auto near_dest = stations_within(trip->req->destination, cfg_.walk_radius_m);
        std::vector<std::size_t> with_docks;
        for (std::size_t i : near_dest) {
            if (stations_[i].free_docks() > 0) with_docks.push_back(i);
        }
        if (with_docks.empty() && !near_dest.empty()) {
            if (trip->rng.next_double() < cfg_.beta) {
                auto target = closest_station(near_dest, trip->dest_node);
                if (target && beta_push_bike(*target)) with_docks.push_back(*target);
            }
        }
        if (with_docks.empty()) {
            // no walkable dock: ride to the globally nearest free dock so
            // the bike can always be returned
            std::vector<std::size_t> all;
            for (std::size_t i = 0; i < stations_.size(); ++i) {
                if (stations_[i].free_docks() > 0 && i != from_idx) all.push_back(i);
            }
            auto fallback = closest_station(all, trip->dest_node);
            if (!fallback) {
                // fleet fills every dock: park at origin station (cannot
                // happen when min free docks are enforced at init)
                finish(trip, TripOutcome::NoDocks);
                return;
            }
            with_docks.push_back(*fallback);
        }
        auto chosen = closest_station(with_docks, trip->dest_node);
        if (!chosen) {  // cannot happen on an SCC-pruned network
            finish(trip, TripOutcome::NoDocks);
            return;
        }
        LengthMm d = road_mm(stations_[from_idx].node, stations_[*chosen].node);
        TimeMs t = ride_ms(d);
        trip->ride += t;
        std::size_t st = *chosen;
        eng_.schedule(t, [this, trip, st, d] { sb_arrive_dock(trip, st, d); });
    }

    void sb_arrive_dock(const TripPtr& trip, std::size_t st_idx, LengthMm dist) {
        Station& st = stations_[st_idx];
        bikes_[trip->bike].node = st.node;
        if (st.free_docks() == 0) {  // filled while riding: search from here
            log_bike(eng_.now(), trip->bike, BikeState::InUse, ActivityClass::InUse, dist);
            sb_find_dock(trip, st_idx);
            return;
        }
        st.docked.insert(std::lower_bound(st.docked.begin(), st.docked.end(), trip->bike),
                         trip->bike);
        log_dock(st, +1);
        bikes_[trip->bike].state = BikeState::Idle;
        log_bike(eng_.now(), trip->bike, BikeState::Idle, ActivityClass::InUse, dist);
        LengthMm d = road_mm(st.node, trip->dest_node);
        TimeMs t = walk_ms(d);
        trip->walk_dest += t;
        eng_.schedule(t, [this, trip] { finish(trip, TripOutcome::Served); });
    }

    // ---- dockless mode ---------------------------------------------------

    std::optional<std::int64_t> dl_nearest_bike(const Location& at) const {
        std::optional<std::int64_t> best;
        double best_d = 0;
        for (const Bike& b : bikes_) {
            if (b.state != BikeState::Idle) continue;
            double d = geo::haversine_m(at, net_.loc(b.node));
            if (d > cfg_.walk_radius_m) continue;
            if (!best || d < best_d || (d == best_d && b.id < *best)) {
                best = b.id;
                best_d = d;
            }
        }
        return best;
    }

    void dl_find_bike(const TripPtr& trip, const Location& at) {
        if (trip->retries >= cfg_.retry_cap) {
            finish(trip, TripOutcome::RetryCap);
            return;
        }
        auto bike = dl_nearest_bike(at);
        if (!bike) {
            finish(trip, TripOutcome::NoBikes);
            return;
        }
        std::uint32_t at_node = trip->retries == 0 ? trip->origin_node
                                                   : node_index_.nearest(at);
        LengthMm d = road_mm(at_node, bikes_[*bike].node);
        TimeMs t = walk_ms(d);
        trip->walk_origin += t;
        std::int64_t id = *bike;
        eng_.schedule(t, [this, trip, id] { dl_arrive_bike(trip, id); });
    }

    void dl_arrive_bike(const TripPtr& trip, std::int64_t bike_id) {
        Bike& b = bikes_[bike_id];
        if (b.state != BikeState::Idle) {  // someone took it: look around
            trip->retries++;
            dl_find_bike(trip, net_.loc(b.node));
            return;
        }
        trip->bike = bike_id;
        b.state = BikeState::InUse;
        log_bike(eng_.now(), bike_id, BikeState::InUse, ActivityClass::Idle, 0);
        LengthMm d = road_mm(b.node, trip->dest_node);
        TimeMs t = ride_ms(d);
        trip->ride += t;
        eng_.schedule(t, [this, trip, d] {
            Bike& b2 = bikes_[trip->bike];
            b2.node = trip->dest_node;
            b2.state = BikeState::Idle;
            log_bike(eng_.now(), trip->bike, BikeState::Idle, ActivityClass::InUse, d);
            finish(trip, TripOutcome::Served);  // dropped at destination
        });
    }

    // ---- autonomous mode -------------------------------------------------

    bool au_eligible(const Bike& b) const {
        if (b.charge_mm < cfg_.battery.min_charge_mm()) return false;
        if (b.state == BikeState::Idle) return true;
        if (b.state == BikeState::Rebalancing && cfg_.claim_rebalancing_midroute) return true;
        return false;
    }

    /// current network node of a bike partway through a drive, plus the
    /// distance covered so far (snapped back to the last passed node)
    std::pair<std::uint32_t, LengthMm> drive_position(const Bike& b) const {
        const auto& d = *b.drive;
        if (d.duration <= 0) return {d.nodes.back(), d.cum.back()};
        double frac = static_cast<double>(eng_.now() - d.start) / static_cast<double>(d.duration);
        frac = std::clamp(frac, 0.0, 1.0);
        auto target = static_cast<LengthMm>(frac * static_cast<double>(d.cum.back()));
        std::size_t k = 0;
        while (k + 1 < d.cum.size() && d.cum[k + 1] <= target) ++k;
        return {d.nodes[k], d.cum[k]};
    }

    /// nearest eligible bike by road distance within the autonomous
    /// radius; claims it atomically (preempting a rebalancing move).
    std::optional<std::int64_t> assign_bike(const TripPtr& trip) {
        struct Cand {
            std::int64_t id;
            std::uint32_t node;
            double air_m;
        };
        std::vector<Cand> cands;
        for (const Bike& b : bikes_) {
            if (!au_eligible(b)) continue;
            std::uint32_t node = b.state == BikeState::Rebalancing ? drive_position(b).first
                                                                   : b.node;
            double air = geo::haversine_m(trip->req->origin, net_.loc(node));
            if (air > cfg_.autonomous_radius_m) continue;
            cands.push_back({b.id, node, air});
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.air_m != b.air_m) return a.air_m < b.air_m;
            return a.id < b.id;
        });
        std::optional<std::int64_t> best;
        LengthMm best_d = 0;
        for (const Cand& c : cands) {
            // air distance lower-bounds road distance: stop once no
            // remaining candidate can beat the best
            if (best && static_cast<LengthMm>(c.air_m * 999.0) > best_d) break;
            LengthMm d = road_mm(c.node, trip->origin_node);
            if (d == routing::kUnreachable) continue;
            if (!best || d < best_d || (d == best_d && c.id < *best)) {
                best = c.id;
                best_d = d;
            }
        }
        return best;
    }

    void au_request(const TripPtr& trip) {
        if (cfg_.rebalancing == RebalancingScenario::Ideal) {
            au_ideal_serve(trip);
            return;
        }
        if (trip->retries >= cfg_.retry_cap) {
            finish(trip, TripOutcome::RetryCap);
            return;
        }
        auto bike_id = assign_bike(trip);
        if (!bike_id) {
            finish(trip, TripOutcome::NoBikes);
            return;
        }
        Bike& b = bikes_[*bike_id];
        if (b.state == BikeState::Rebalancing) preempt_rebalancing(b);
        trip->bike = b.id;
        send_bike(b, trip->origin_node, cfg_.autonomous_speed_kmh, BikeState::ToUser,
                  ActivityClass::Pickup,
                  [this, trip](Bike& arrived, TimeMs elapsed, LengthMm dist) {
                      trip->wait += elapsed;
                      arrived.state = BikeState::InUse;
                      log_bike(eng_.now(), arrived.id, BikeState::InUse, ActivityClass::Pickup,
                               dist);
                      au_ride(trip, arrived);
                  },
                  [this, trip](Bike&, TimeMs elapsed, LengthMm) {
                      // bike ran out of battery on the way: user asks again
                      trip->wait += elapsed;
                      trip->retries++;
                      au_request(trip);
                  });
    }

    void au_ideal_serve(const TripPtr& trip) {
        // nearest eligible bike anywhere teleports to the user; the road
        // distance it would have driven is accounted (in-use class) and
        // discharged, but no time elapses
        struct Cand {
            std::int64_t id;
            std::uint32_t node;
            double air_m;
        };
        std::vector<Cand> cands;
        for (const Bike& b : bikes_) {
            if (!au_eligible(b)) continue;
            std::uint32_t node = b.state == BikeState::Rebalancing ? drive_position(b).first
                                                                   : b.node;
            cands.push_back({b.id, node, geo::haversine_m(trip->req->origin, net_.loc(node))});
        }
        if (cands.empty()) {
            finish(trip, TripOutcome::NoBikes);
            return;
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.air_m != b.air_m) return a.air_m < b.air_m;
            return a.id < b.id;
        });
        std::optional<std::int64_t> best;
        LengthMm best_d = 0;
        std::uint32_t best_node = 0;
        for (const Cand& c : cands) {
            if (best && static_cast<LengthMm>(c.air_m * 999.0) > best_d) break;
            LengthMm d = road_mm(c.node, trip->origin_node);
            if (d == routing::kUnreachable) continue;
            if (!best || d < best_d || (d == best_d && c.id < *best)) {
                best = c.id;
                best_d = d;
                best_node = c.node;
            }
        }
        if (!best) {
            finish(trip, TripOutcome::NoBikes);
            return;
        }
        Bike& b = bikes_[*best];
        if (b.state == BikeState::Rebalancing) preempt_rebalancing(b);
        (void)best_node;
        b.node = trip->origin_node;
        b.charge_mm = std::max<LengthMm>(0, b.charge_mm - best_d);
        trip->bike = b.id;
        b.state = BikeState::InUse;
        log_bike(eng_.now(), b.id, BikeState::InUse, ActivityClass::InUse, best_d);
        au_ride(trip, b);
    }

    void au_ride(const TripPtr& trip, Bike& b) {
        LengthMm d = router_.distance(b.node, trip->dest_node);
        TimeMs t = routing::travel_time_ms(d, cfg_.riding_speed_kmh);
        trip->ride += t;
        std::int64_t id = b.id;
        eng_.schedule(t, [this, trip, id, d] {
            Bike& b2 = bikes_[id];
            b2.node = trip->dest_node;
            b2.charge_mm = std::max<LengthMm>(0, b2.charge_mm - d);
            b2.state = BikeState::Idle;
            log_bike(eng_.now(), id, BikeState::Idle, ActivityClass::InUse, d);
            finish(trip, TripOutcome::Served);
            battery_check(b2);
        });
    }

    /// Drive a bike along the road network. If the battery cannot cover
    /// the route the bike strands at the farthest reachable node.
    /// `on_arrive(bike, elapsed)` fires at the destination; `on_strand`
    /// (optional) when the battery dies en route.
    template <typename OnArrive, typename OnStrand>
    void send_bike(Bike& b, std::uint32_t target, double speed_kmh, BikeState drive_state,
                   ActivityClass cls, OnArrive on_arrive, OnStrand on_strand) {
        auto route = router_.route(b.node, target);
        Bike::Drive d;
        d.nodes = route.nodes;
        d.cum.resize(d.nodes.size(), 0);
        for (std::size_t k = 1; k < d.nodes.size(); ++k) {
            // reconstruct per-segment lengths from the base graph
            LengthMm seg = 0;
            for (const auto& e : net_.out_edges(d.nodes[k - 1])) {
                if (e.to == d.nodes[k]) {
                    seg = e.length;
                    break;
                }
            }
            d.cum[k] = d.cum[k - 1] + seg;
        }
        bool strands = route.length > b.charge_mm;
        LengthMm travel = strands ? b.charge_mm : route.length;
        std::size_t stop = 0;
        while (stop + 1 < d.cum.size() && d.cum[stop + 1] <= travel) ++stop;
        LengthMm dist = strands ? d.cum[stop] : route.length;
        std::uint32_t stop_node = strands ? d.nodes[stop] : target;

        d.start = eng_.now();
        d.duration = routing::travel_time_ms(dist, speed_kmh);
        TimeMs dur = d.duration;
        std::int64_t id = b.id;
        bool will_strand = strands;
        auto handle = eng_.schedule(dur, [this, id, stop_node, dist, cls, will_strand, dur,
                                          on_arrive, on_strand] {
            Bike& b2 = bikes_[id];
            b2.node = stop_node;
            b2.charge_mm = std::max<LengthMm>(0, b2.charge_mm - dist);
            b2.drive.reset();
            if (will_strand) {
                b2.state = BikeState::Stranded;
                log_bike(eng_.now(), id, BikeState::Stranded, cls, dist);
                metrics::LogRecord r;
                r.kind = metrics::LogRecord::Kind::Strand;
                r.t = eng_.now();
                r.bike = id;
                log_.record(r);
                on_strand(b2, dur, dist);
            } else {
                on_arrive(b2, dur, dist);  // callback logs the completed leg
            }
        });
        d.arrival = handle;
        b.state = drive_state;
        // only the state flip is logged here (zero-distance transition out
        // of the prior leg); the leg distance goes with the arrival record
        log_bike(eng_.now(), b.id, drive_state, ActivityClass::Idle, 0);
        b.drive = std::move(d);
    }

    /// cancel a rebalancing move in flight, settle distance and battery
    void preempt_rebalancing(Bike& b) {
        auto [node, covered] = drive_position(b);
        b.drive->arrival.cancel();
        b.node = node;
        b.charge_mm = std::max<LengthMm>(0, b.charge_mm - covered);
        b.drive.reset();
        b.state = BikeState::Idle;
        log_bike(eng_.now(), b.id, BikeState::Idle, ActivityClass::Rebalancing, covered);
    }

    void battery_check(Bike& b) {
        if (b.state != BikeState::Idle) return;
        if (b.charge_mm >= cfg_.battery.min_charge_mm()) return;  // strict <
        // nearest charging station (co-located with docking stations):
        // road distance over the closest few by air
        std::vector<std::pair<double, std::size_t>> by_air;
        for (std::size_t i = 0; i < stations_.size(); ++i) {
            by_air.push_back({geo::haversine_m(net_.loc(b.node), stations_[i].location), i});
        }
        std::sort(by_air.begin(), by_air.end(), [this](const auto& a, const auto& b2) {
            if (a.first != b2.first) return a.first < b2.first;
            return stations_[a.second].id < stations_[b2.second].id;
        });
        std::optional<std::size_t> best;
        LengthMm best_d = 0;
        int probed = 0;
        for (const auto& [air, idx] : by_air) {
            if (best && (static_cast<LengthMm>(air * 999.0) > best_d || probed >= 8)) break;
            LengthMm d = road_mm(b.node, stations_[idx].node);
            ++probed;
            if (d == routing::kUnreachable) continue;
            if (!best || d < best_d || (d == best_d && stations_[idx].id < stations_[*best].id)) {
                best = idx;
                best_d = d;
            }
        }
        if (!best) return;
        std::uint32_t target = stations_[*best].node;
        send_bike(b, target, cfg_.autonomous_speed_kmh, BikeState::ToCharge, ActivityClass::Charge,
                  [this](Bike& arrived, TimeMs, LengthMm dist) { start_charging(arrived, dist); },
                  [](Bike&, TimeMs, LengthMm) { /* stranded on the way to charge */ });
    }

    void start_charging(Bike& b, LengthMm drive_dist) {
        b.state = BikeState::Charging;
        log_bike(eng_.now(), b.id, BikeState::Charging, ActivityClass::Charge, drive_dist);
        metrics::LogRecord r;
        r.kind = metrics::LogRecord::Kind::Charge;
        r.t = eng_.now();
        r.bike = b.id;
        log_.record(r);
        // linear model: time proportional to the missing fraction
        LengthMm autonomy = cfg_.battery.autonomy_mm();
        double missing = static_cast<double>(autonomy - b.charge_mm) / static_cast<double>(autonomy);
        TimeMs dur = static_cast<TimeMs>(std::llround(missing * cfg_.battery.full_recharge_ms()));
        std::int64_t id = b.id;
        eng_.schedule(dur, [this, id] {
            Bike& b2 = bikes_[id];
            b2.charge_mm = cfg_.battery.autonomy_mm();
            b2.state = BikeState::Idle;
            log_bike(eng_.now(), id, BikeState::Idle, ActivityClass::Charge, 0);
        });
    }

    // ---- predictive rebalancing -----------------------------------------

    void rebalance_tick() {
        std::int64_t now_slot = eng_.now() / demandio::kSlotMs;
        auto forecast = predictor_->predict(*history_, now_slot, cfg_.predictor_window,
                                            cfg_.prediction_ahead);
        const std::size_t n = grid_->cell_count();
        std::vector<std::int64_t> supply(n, 0);
        std::vector<std::vector<std::int64_t>> idle_by_cell(n);
        for (const Bike& b : bikes_) {
            if (b.state != BikeState::Idle) continue;
            if (b.charge_mm < cfg_.battery.min_charge_mm()) continue;
            std::size_t cell = grid_->node_to_cell[b.node];
            supply[cell]++;
            idle_by_cell[cell].push_back(b.id);
        }
        auto demand = rebalance::net_demand(forecast, supply);
        bool any = false;
        for (auto d : demand) any = any || d > 0;
        if (!any) return;
        auto plan = rebalance::solve_transportation(supply, demand, cost_, lambda_);
        for (const auto& flow : plan.flows) {
            auto& pool = idle_by_cell[flow.from];
            const Location& centroid = grid_->cells[flow.to].centroid;
            // nearest to the target centroid first, ties by bike id
            std::sort(pool.begin(), pool.end(), [&](std::int64_t a, std::int64_t b2) {
                double da = geo::haversine_m(net_.loc(bikes_[a].node), centroid);
                double db = geo::haversine_m(net_.loc(bikes_[b2].node), centroid);
                if (da != db) return da < db;
                return a < b2;
            });
            std::int64_t moved = 0;
            std::uint32_t target = cell_anchor_[flow.to];
            while (moved < flow.amount && !pool.empty()) {
                std::int64_t id = pool.front();
                pool.erase(pool.begin());
                Bike& b = bikes_[id];
                if (b.state != BikeState::Idle) continue;
                ++moved;
                send_bike(b, target, cfg_.autonomous_speed_kmh, BikeState::Rebalancing,
                          ActivityClass::Rebalancing,
                          [this](Bike& arrived, TimeMs, LengthMm dist) {
                              arrived.state = BikeState::Idle;
                              log_bike(eng_.now(), arrived.id, BikeState::Idle,
                                       ActivityClass::Rebalancing, dist);
                              battery_check(arrived);
                          },
                          [](Bike&, TimeMs, LengthMm) {});
            }
        }
    }

    // station-mode retry guard; generous, re-checks can in principle chain
    static constexpr int kSbRetryCap = 20;

    const routing::Router& router_;
    const geo::RoadNetwork& net_;
    geo::NodeIndex node_index_;
    ModeConfig cfg_;
    metrics::EventLog& log_;
    std::uint64_t seed_ = 0;
    TimeMs horizon_ms_ = 0;
    std::vector<Request> requests_;
    std::vector<Station> stations_;
    std::vector<Bike> bikes_;
    engine::Engine eng_;

    std::optional<geo::GridIndex> grid_;
    std::vector<std::vector<LengthMm>> cost_;
    std::vector<std::int64_t> lambda_;
    std::vector<std::uint32_t> cell_anchor_;
    std::unique_ptr<rebalance::DemandHistory> history_;
    std::unique_ptr<rebalance::Predictor> predictor_;
};

}  // namespace bikesim::modes

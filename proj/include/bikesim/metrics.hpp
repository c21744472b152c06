#pragma once

// Append-only run log and KPI computation. The engine emits LogRecords;
// the same accumulator consumes them online and when recomputing from a
// persisted log, so both paths agree by construction.

#include <array>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bikesim/engine.hpp"

namespace bikesim::metrics {

using engine::TimeMs;

enum class TripOutcome { Served, NoWalkableStations, NoBikes, NoDocks, RetryCap };

inline const char* to_string(TripOutcome o) {
    switch (o) {
        case TripOutcome::Served: return "served";
        case TripOutcome::NoWalkableStations: return "no_station";
        case TripOutcome::NoBikes: return "no_bike";
        case TripOutcome::NoDocks: return "no_dock";
        case TripOutcome::RetryCap: return "retry_cap";
    }
    return "?";
}

inline std::optional<TripOutcome> trip_outcome_from(const std::string& s) {
    if (s == "served") return TripOutcome::Served;
    if (s == "no_station") return TripOutcome::NoWalkableStations;
    if (s == "no_bike") return TripOutcome::NoBikes;
    if (s == "no_dock") return TripOutcome::NoDocks;
    if (s == "retry_cap") return TripOutcome::RetryCap;
    return std::nullopt;
}

// distance/activity classes for odometers and time splits
enum class ActivityClass { InUse = 0, Pickup = 1, Rebalancing = 2, Charge = 3, Idle = 4 };
inline constexpr int kDistClasses = 4;   // idle never moves
inline constexpr int kTimeClasses = 5;

inline const char* to_string(ActivityClass c) {
    switch (c) {
        case ActivityClass::InUse: return "in_use";
        case ActivityClass::Pickup: return "pickup";
        case ActivityClass::Rebalancing: return "rebalancing";
        case ActivityClass::Charge: return "charge";
        case ActivityClass::Idle: return "idle";
    }
    return "?";
}

enum class BikeState { Idle, ToUser, InUse, ToCharge, Charging, Rebalancing, Stranded };

inline const char* to_string(BikeState s) {
    switch (s) {
        case BikeState::Idle: return "idle";
        case BikeState::ToUser: return "to_user";
        case BikeState::InUse: return "in_use";
        case BikeState::ToCharge: return "to_charge";
        case BikeState::Charging: return "charging";
        case BikeState::Rebalancing: return "rebalancing";
        case BikeState::Stranded: return "stranded";
    }
    return "?";
}

inline std::optional<BikeState> bike_state_from(const std::string& s) {
    if (s == "idle") return BikeState::Idle;
    if (s == "to_user") return BikeState::ToUser;
    if (s == "in_use") return BikeState::InUse;
    if (s == "to_charge") return BikeState::ToCharge;
    if (s == "charging") return BikeState::Charging;
    if (s == "rebalancing") return BikeState::Rebalancing;
    if (s == "stranded") return BikeState::Stranded;
    return std::nullopt;
}

inline ActivityClass time_class_of(BikeState s) {
    switch (s) {
        case BikeState::InUse: return ActivityClass::InUse;
        case BikeState::ToUser: return ActivityClass::Pickup;
        case BikeState::Rebalancing: return ActivityClass::Rebalancing;
        case BikeState::ToCharge:
        case BikeState::Charging: return ActivityClass::Charge;
        default: return ActivityClass::Idle;
    }
}

struct LogRecord {
    enum class Kind { Run, Req, Trip, Bike, Dock, Rebal, Charge, Strand, End } kind;
    TimeMs t = 0;
    // Req / Trip
    std::int64_t id = 0;
    TripOutcome outcome = TripOutcome::Served;
    TimeMs walk_origin_ms = 0, wait_ms = 0, ride_ms = 0, walk_dest_ms = 0;
    TimeMs depart_ms = 0;
    // Bike
    std::int64_t bike = -1;
    BikeState state = BikeState::Idle;
    ActivityClass dist_class = ActivityClass::Idle;
    std::int64_t dist_mm = 0;
    // Dock
    std::int64_t station = 0;
    int delta = 0, occupancy = 0;
    // Run header
    std::string mode;
    std::int64_t fleet = 0;
    TimeMs horizon_ms = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

inline std::string format_record(const LogRecord& r) {
    std::ostringstream os;
    switch (r.kind) {
        case LogRecord::Kind::Run:
            os << "RUN " << r.mode << " " << r.fleet << " " << r.horizon_ms << " " << r.seed
               << " " << r.config_hash;
            break;
        case LogRecord::Kind::Req:
            os << "REQ " << r.t << " " << r.id;
            break;
        case LogRecord::Kind::Trip:
            os << "TRIP " << r.t << " " << r.id << " " << to_string(r.outcome) << " "
               << r.walk_origin_ms << " " << r.wait_ms << " " << r.ride_ms << " "
               << r.walk_dest_ms << " " << r.depart_ms << " " << r.bike;
            break;
        case LogRecord::Kind::Bike:
            os << "BIKE " << r.t << " " << r.bike << " " << to_string(r.state) << " "
               << to_string(r.dist_class) << " " << r.dist_mm;
            break;
        case LogRecord::Kind::Dock:
            os << "DOCK " << r.t << " " << r.station << " " << r.delta << " " << r.occupancy;
            break;
        case LogRecord::Kind::Rebal:
            os << "REBAL " << r.t << " " << r.station << " " << r.id;
            break;
        case LogRecord::Kind::Charge:
            os << "CHARGE " << r.t << " " << r.bike;
            break;
        case LogRecord::Kind::Strand:
            os << "STRAND " << r.t << " " << r.bike;
            break;
        case LogRecord::Kind::End:
            os << "END " << r.t;
            break;
    }
    return os.str();
}

inline LogRecord parse_record(const std::string& line) {
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    LogRecord r;
    if (kind == "RUN") {
        r.kind = LogRecord::Kind::Run;
        is >> r.mode >> r.fleet >> r.horizon_ms >> r.seed >> r.config_hash;
    } else if (kind == "REQ") {
        r.kind = LogRecord::Kind::Req;
        is >> r.t >> r.id;
    } else if (kind == "TRIP") {
        r.kind = LogRecord::Kind::Trip;
        std::string outcome;
        is >> r.t >> r.id >> outcome >> r.walk_origin_ms >> r.wait_ms >> r.ride_ms >>
            r.walk_dest_ms >> r.depart_ms >> r.bike;
        auto o = trip_outcome_from(outcome);
        if (!o) throw std::runtime_error("bad TRIP outcome: " + outcome);
        r.outcome = *o;
    } else if (kind == "BIKE") {
        r.kind = LogRecord::Kind::Bike;
        std::string state, cls;
        is >> r.t >> r.bike >> state >> cls >> r.dist_mm;
        auto s = bike_state_from(state);
        if (!s) throw std::runtime_error("bad BIKE state: " + state);
        r.state = *s;
        for (int c = 0; c <= 4; ++c) {
            if (cls == to_string(static_cast<ActivityClass>(c))) r.dist_class = static_cast<ActivityClass>(c);
        }
    } else if (kind == "DOCK") {
        r.kind = LogRecord::Kind::Dock;
        is >> r.t >> r.station >> r.delta >> r.occupancy;
    } else if (kind == "REBAL") {
        r.kind = LogRecord::Kind::Rebal;
        is >> r.t >> r.station >> r.id;
    } else if (kind == "CHARGE") {
        r.kind = LogRecord::Kind::Charge;
        is >> r.t >> r.bike;
    } else if (kind == "STRAND") {
        r.kind = LogRecord::Kind::Strand;
        is >> r.t >> r.bike;
    } else if (kind == "END") {
        r.kind = LogRecord::Kind::End;
        is >> r.t;
    } else {
        throw std::runtime_error("unknown log record: " + line);
    }
    if (!is && kind != "RUN") throw std::runtime_error("truncated log record: " + line);
    return r;
}

struct KpiReport {
    std::string mode;
    std::int64_t fleet = 0;
    double horizon_days = 0.0;

    std::int64_t demand = 0;
    std::int64_t served = 0;
    std::int64_t unserved = 0;
    std::map<std::string, std::int64_t> unserved_by_reason;

    double served_pct = 0.0, unserved_pct = 0.0;
    // trip decomposition, minutes, over served trips; -1 marks "no served trips"
    double avg_trip_min = -1.0;
    double avg_walk_origin_min = -1.0, avg_wait_min = -1.0, avg_ride_min = -1.0,
           avg_walk_dest_min = -1.0;
    double walk_origin_gt10_pct = 0.0, walk_origin_gt15_pct = 0.0;
    double walk_dest_gt10_pct = 0.0, walk_dest_gt15_pct = 0.0;
    double wait_gt10_pct = 0.0, wait_gt15_pct = 0.0;
    double wait_or_walk_min = -1.0;  // mode-dependent comparative metric

    double bikes_used_pct = 0.0;
    double trips_per_bike_day = 0.0;
    std::int64_t rebalanced_bikes = 0;
    std::int64_t total_charges = 0;
    double charges_per_day = 0.0;
    std::int64_t stranded_bikes = 0;

    double vkt_total_km = 0.0;
    std::array<double, kDistClasses> vkt_pct{};   // in_use, pickup, rebalancing, charge
    std::array<double, kTimeClasses> time_pct{};  // + idle

    // exact integer totals, used by conservation checks
    std::array<std::int64_t, kDistClasses> dist_mm_by_class{};
    std::array<std::int64_t, kTimeClasses> time_ms_by_class{};
};

/// Streaming KPI accumulator. Feed records in log order, then finalize().
class KpiAccumulator {
public:
    void feed(const LogRecord& r) {
        switch (r.kind) {
            case LogRecord::Kind::Run:
                mode_ = r.mode;
                fleet_ = r.fleet;
                horizon_ms_ = r.horizon_ms;
                break;
            case LogRecord::Kind::Req:
                ++demand_;
                break;
            case LogRecord::Kind::Trip:
                ++trips_;
                if (r.outcome == TripOutcome::Served) {
                    ++served_;
                    walk_o_sum_ += r.walk_origin_ms;
                    wait_sum_ += r.wait_ms;
                    ride_sum_ += r.ride_ms;
                    walk_d_sum_ += r.walk_dest_ms;
                    count_tail(r.walk_origin_ms, walk_o_gt10_, walk_o_gt15_);
                    count_tail(r.walk_dest_ms, walk_d_gt10_, walk_d_gt15_);
                    count_tail(r.wait_ms, wait_gt10_, wait_gt15_);
                    if (r.bike >= 0) bikes_with_trip_.insert(r.bike);
                } else {
                    unserved_by_reason_[to_string(r.outcome)]++;
                }
                break;
            case LogRecord::Kind::Bike: {
                auto& b = bikes_[r.bike];
                if (b.first_seen) {
                    b.time_ms[static_cast<int>(time_class_of(b.state))] += r.t - b.since;
                } else {
                    b.first_seen = true;
                }
                b.state = r.state;
                b.since = r.t;
                dist_mm_[static_cast<int>(r.dist_class)] += r.dist_mm;
                break;
            }
            case LogRecord::Kind::Dock:
                break;
            case LogRecord::Kind::Rebal:
                ++rebalanced_;
                break;
            case LogRecord::Kind::Charge:
                ++charges_;
                break;
            case LogRecord::Kind::Strand:
                ++stranded_;
                break;
            case LogRecord::Kind::End:
                end_ms_ = r.t;
                ended_ = true;
                break;
        }
    }

    KpiReport finalize() const {
        if (!ended_) throw std::runtime_error("compute_kpis: truncated log (no END marker)");
        KpiReport k;
        k.mode = mode_;
        k.fleet = fleet_;
        k.horizon_days = static_cast<double>(horizon_ms_) / engine::kMsPerDay;
        k.demand = demand_;
        k.served = served_;
        k.unserved = trips_ - served_;
        k.unserved_by_reason = unserved_by_reason_;
        if (demand_ > 0) {
            k.served_pct = 100.0 * served_ / demand_;
            k.unserved_pct = 100.0 * k.unserved / demand_;
        }
        if (served_ > 0) {
            auto mins = [&](double ms) { return ms / engine::kMsPerMinute / served_; };
            k.avg_walk_origin_min = mins(static_cast<double>(walk_o_sum_));
            k.avg_wait_min = mins(static_cast<double>(wait_sum_));
            k.avg_ride_min = mins(static_cast<double>(ride_sum_));
            k.avg_walk_dest_min = mins(static_cast<double>(walk_d_sum_));
            k.avg_trip_min = k.avg_walk_origin_min + k.avg_wait_min + k.avg_ride_min +
                             k.avg_walk_dest_min;
            k.walk_origin_gt10_pct = 100.0 * walk_o_gt10_ / served_;
            k.walk_origin_gt15_pct = 100.0 * walk_o_gt15_ / served_;
            k.walk_dest_gt10_pct = 100.0 * walk_d_gt10_ / served_;
            k.walk_dest_gt15_pct = 100.0 * walk_d_gt15_ / served_;
            k.wait_gt10_pct = 100.0 * wait_gt10_ / served_;
            k.wait_gt15_pct = 100.0 * wait_gt15_ / served_;
            if (mode_ == "station") k.wait_or_walk_min = k.avg_walk_origin_min + k.avg_walk_dest_min;
            else if (mode_ == "dockless") k.wait_or_walk_min = k.avg_walk_origin_min;
            else k.wait_or_walk_min = k.avg_wait_min;
        }
        if (fleet_ > 0) {
            k.bikes_used_pct = 100.0 * static_cast<double>(bikes_with_trip_.size()) / fleet_;
            if (k.horizon_days > 0) {
                k.trips_per_bike_day = static_cast<double>(served_) / fleet_ / k.horizon_days;
            }
        }
        k.rebalanced_bikes = rebalanced_;
        k.total_charges = charges_;
        k.stranded_bikes = stranded_;
        if (k.horizon_days > 0) k.charges_per_day = charges_ / k.horizon_days;

        std::int64_t total_mm = 0;
        for (int c = 0; c < kDistClasses; ++c) {
            k.dist_mm_by_class[c] = dist_mm_[c];
            total_mm += dist_mm_[c];
        }
        k.vkt_total_km = static_cast<double>(total_mm) / 1e6;
        for (int c = 0; c < kDistClasses; ++c) {
            k.vkt_pct[c] = total_mm > 0 ? 100.0 * dist_mm_[c] / total_mm : 0.0;
        }
        // close each bike's current state at END, idle picks up the rest;
        // the effective horizon covers activity that drained past the
        // nominal end (trips in flight, recharges)
        TimeMs eff_horizon = std::max(horizon_ms_, end_ms_);
        std::array<std::int64_t, kTimeClasses> time_ms{};
        for (const auto& [id, b] : bikes_) {
            auto t = b.time_ms;
            t[static_cast<int>(time_class_of(b.state))] += end_ms_ - b.since;
            std::int64_t busy = 0;
            for (int c = 0; c < kTimeClasses - 1; ++c) busy += t[c];
            t[static_cast<int>(ActivityClass::Idle)] = eff_horizon - busy;
            for (int c = 0; c < kTimeClasses; ++c) time_ms[c] += t[c];
        }
        std::int64_t total_time = 0;
        for (int c = 0; c < kTimeClasses; ++c) {
            k.time_ms_by_class[c] = time_ms[c];
            total_time += time_ms[c];
        }
        for (int c = 0; c < kTimeClasses; ++c) {
            k.time_pct[c] = total_time > 0 ? 100.0 * time_ms[c] / total_time : 0.0;
        }
        return k;
    }

    /// exact per-bike time split against the effective horizon
    /// (conservation checks)
    std::map<std::int64_t, std::array<std::int64_t, kTimeClasses>> per_bike_time() const {
        std::map<std::int64_t, std::array<std::int64_t, kTimeClasses>> out;
        TimeMs eff_horizon = std::max(horizon_ms_, end_ms_);
        for (const auto& [id, b] : bikes_) {
            auto t = b.time_ms;
            t[static_cast<int>(time_class_of(b.state))] += end_ms_ - b.since;
            std::int64_t busy = 0;
            for (int c = 0; c < kTimeClasses - 1; ++c) busy += t[c];
            t[static_cast<int>(ActivityClass::Idle)] = eff_horizon - busy;
            out[id] = t;
        }
        return out;
    }

    /// END time vs nominal horizon, whichever is later
    TimeMs effective_horizon_ms() const { return std::max(horizon_ms_, end_ms_); }

private:
    static void count_tail(TimeMs ms, std::int64_t& gt10, std::int64_t& gt15) {
        if (ms > 10 * engine::kMsPerMinute) ++gt10;
        if (ms > 15 * engine::kMsPerMinute) ++gt15;
    }

    struct BikeAcc {
        bool first_seen = false;
        BikeState state = BikeState::Idle;
        TimeMs since = 0;
        std::array<std::int64_t, kTimeClasses> time_ms{};
    };

    std::string mode_;
    std::int64_t fleet_ = 0;
    TimeMs horizon_ms_ = 0, end_ms_ = 0;
    bool ended_ = false;
    std::int64_t demand_ = 0, trips_ = 0, served_ = 0;
    std::map<std::string, std::int64_t> unserved_by_reason_;
    std::int64_t walk_o_sum_ = 0, wait_sum_ = 0, ride_sum_ = 0, walk_d_sum_ = 0;
    std::int64_t walk_o_gt10_ = 0, walk_o_gt15_ = 0;
    std::int64_t walk_d_gt10_ = 0, walk_d_gt15_ = 0;
    std::int64_t wait_gt10_ = 0, wait_gt15_ = 0;
    std::set<std::int64_t> bikes_with_trip_;
    std::int64_t rebalanced_ = 0, charges_ = 0, stranded_ = 0;
    std::array<std::int64_t, kDistClasses> dist_mm_{};
    std::map<std::int64_t, BikeAcc> bikes_;
};

/// Append-only run log: streams lines to disk (optional) and keeps the
/// online accumulator in sync. Records must arrive in non-decreasing time.
class EventLog {
public:
    EventLog() = default;

    explicit EventLog(const std::string& path) : path_(path) {
        out_.open(path);
        if (!out_) throw std::runtime_error("EventLog: cannot write " + path);
    }

    void record(const LogRecord& r) {
        if (r.kind != LogRecord::Kind::Run && r.t < last_t_) {
            throw std::logic_error("EventLog: out-of-order record");
        }
        last_t_ = std::max(last_t_, r.t);
        acc_.feed(r);
        std::string line = format_record(r);
        if (out_.is_open()) out_ << line << "\n";
        if (keep_lines_) lines_.push_back(std::move(line));
        ++count_;
    }

    void flush() {
        if (out_.is_open()) out_.flush();
    }

    void keep_in_memory(bool on) { keep_lines_ = on; }
    const std::vector<std::string>& lines() const { return lines_; }
    std::size_t count() const { return count_; }
    const KpiAccumulator& accumulator() const { return acc_; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ofstream out_;
    std::vector<std::string> lines_;
    bool keep_lines_ = false;
    TimeMs last_t_ = 0;
    std::size_t count_ = 0;
    KpiAccumulator acc_;
};

/// Recompute the full KPI report from a persisted log file.
inline KpiReport compute_kpis(const std::string& log_path) {
    std::ifstream in(log_path);
    if (!in) throw std::runtime_error("compute_kpis: cannot open " + log_path);
    KpiAccumulator acc;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        acc.feed(parse_record(line));
    }
    return acc.finalize();
}

// -------------------------------------------------------------------------
// Per-bin activity timeline for plotting.

struct Timeline {
    TimeMs bin_ms = 0;
    std::size_t bins = 0;
    // users by activity per bin
    std::vector<std::int64_t> users_walking_origin, users_waiting, users_riding,
        users_walking_dest;
    // bikes by time class per bin (sampled at bin start)
    std::array<std::vector<std::int64_t>, kTimeClasses> bikes_by_class;
    std::vector<std::int64_t> trips_served, trips_unserved;  // completions per bin
};

inline Timeline timeline(const std::string& log_path, TimeMs bin_ms) {
    if (bin_ms <= 0) throw std::invalid_argument("timeline: non-positive bin");
    std::ifstream in(log_path);
    if (!in) throw std::runtime_error("timeline: cannot open " + log_path);

    TimeMs horizon = 0;
    std::vector<LogRecord> bike_recs, trip_recs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        LogRecord r = parse_record(line);
        if (r.kind == LogRecord::Kind::Run) horizon = r.horizon_ms;
        else if (r.kind == LogRecord::Kind::Bike) bike_recs.push_back(r);
        else if (r.kind == LogRecord::Kind::Trip) trip_recs.push_back(r);
    }
    Timeline tl;
    tl.bin_ms = bin_ms;
    tl.bins = static_cast<std::size_t>((horizon + bin_ms - 1) / bin_ms);
    auto init = [&](std::vector<std::int64_t>& v) { v.assign(tl.bins, 0); };
    init(tl.users_walking_origin);
    init(tl.users_waiting);
    init(tl.users_riding);
    init(tl.users_walking_dest);
    init(tl.trips_served);
    init(tl.trips_unserved);
    for (auto& v : tl.bikes_by_class) init(v);

    auto mark = [&](std::vector<std::int64_t>& v, TimeMs a, TimeMs b) {
        // count the user in every bin their activity interval overlaps
        if (b <= a) return;
        auto first = static_cast<std::size_t>(a / bin_ms);
        auto last = static_cast<std::size_t>((b - 1) / bin_ms);
        for (std::size_t i = first; i <= last && i < tl.bins; ++i) v[i]++;
    };
    for (const auto& r : trip_recs) {
        TimeMs t0 = r.depart_ms;
        mark(tl.users_walking_origin, t0, t0 + r.walk_origin_ms);
        t0 += r.walk_origin_ms;
        mark(tl.users_waiting, t0, t0 + r.wait_ms);
        t0 += r.wait_ms;
        mark(tl.users_riding, t0, t0 + r.ride_ms);
        t0 += r.ride_ms;
        mark(tl.users_walking_dest, t0, t0 + r.walk_dest_ms);
        std::size_t bin = std::min(tl.bins - 1, static_cast<std::size_t>(r.t / bin_ms));
        if (tl.bins > 0) {
            (r.outcome == TripOutcome::Served ? tl.trips_served : tl.trips_unserved)[bin]++;
        }
    }
    // bike states: piecewise-constant between transitions
    std::map<std::int64_t, std::pair<TimeMs, BikeState>> cur;
    auto fill = [&](std::int64_t /*bike*/, TimeMs a, TimeMs b, BikeState s) {
        if (b <= a || tl.bins == 0) return;
        auto& v = tl.bikes_by_class[static_cast<int>(time_class_of(s))];
        auto first = static_cast<std::size_t>(a / bin_ms);
        auto last = static_cast<std::size_t>((b - 1) / bin_ms);
        for (std::size_t i = first; i <= last && i < tl.bins; ++i) v[i]++;
    };
    for (const auto& r : bike_recs) {
        auto it = cur.find(r.bike);
        if (it != cur.end()) fill(r.bike, it->second.first, r.t, it->second.second);
        cur[r.bike] = {r.t, r.state};
    }
    for (const auto& [id, st] : cur) fill(id, st.first, horizon, st.second);
    return tl;
}

inline void write_timeline_csv(const Timeline& tl, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_timeline_csv: cannot write " + path);
    out << "bin_start_s,users_walk_origin,users_waiting,users_riding,users_walk_dest,"
           "bikes_in_use,bikes_pickup,bikes_rebalancing,bikes_charge,bikes_idle,"
           "trips_served,trips_unserved\n";
    for (std::size_t i = 0; i < tl.bins; ++i) {
        out << (i * tl.bin_ms / 1000) << "," << tl.users_walking_origin[i] << ","
            << tl.users_waiting[i] << "," << tl.users_riding[i] << ","
            << tl.users_walking_dest[i];
        for (const auto& v : tl.bikes_by_class) out << "," << v[i];
        out << "," << tl.trips_served[i] << "," << tl.trips_unserved[i] << "\n";
    }
}

// -------------------------------------------------------------------------
// Report emission

inline void write_report_kv(const KpiReport& k, std::ostream& out) {
    out << std::fixed << std::setprecision(4);
    out << "mode=" << k.mode << "\n";
    out << "fleet=" << k.fleet << "\n";
    out << "horizon_days=" << k.horizon_days << "\n";
    out << "demand=" << k.demand << "\n";
    out << "served=" << k.served << "\n";
    out << "unserved=" << k.unserved << "\n";
    out << "served_pct=" << k.served_pct << "\n";
    out << "unserved_pct=" << k.unserved_pct << "\n";
    for (const auto& [reason, n] : k.unserved_by_reason) {
        out << "unserved_" << reason << "=" << n << "\n";
    }
    out << "avg_trip_min=" << k.avg_trip_min << "\n";
    out << "avg_walk_origin_min=" << k.avg_walk_origin_min << "\n";
    out << "avg_wait_min=" << k.avg_wait_min << "\n";
    out << "avg_ride_min=" << k.avg_ride_min << "\n";
    out << "avg_walk_dest_min=" << k.avg_walk_dest_min << "\n";
    out << "wait_or_walk_min=" << k.wait_or_walk_min << "\n";
    out << "walk_origin_gt10_pct=" << k.walk_origin_gt10_pct << "\n";
    out << "walk_origin_gt15_pct=" << k.walk_origin_gt15_pct << "\n";
    out << "walk_dest_gt10_pct=" << k.walk_dest_gt10_pct << "\n";
    out << "walk_dest_gt15_pct=" << k.walk_dest_gt15_pct << "\n";
    out << "wait_gt10_pct=" << k.wait_gt10_pct << "\n";
    out << "wait_gt15_pct=" << k.wait_gt15_pct << "\n";
    out << "bikes_used_pct=" << k.bikes_used_pct << "\n";
    out << "trips_per_bike_day=" << k.trips_per_bike_day << "\n";
    out << "rebalanced_bikes=" << k.rebalanced_bikes << "\n";
    out << "total_charges=" << k.total_charges << "\n";
    out << "charges_per_day=" << k.charges_per_day << "\n";
    out << "stranded_bikes=" << k.stranded_bikes << "\n";
    out << "vkt_total_km=" << k.vkt_total_km << "\n";
    const char* dist_names[] = {"in_use", "pickup", "rebalancing", "charge"};
    for (int c = 0; c < kDistClasses; ++c) {
        out << "vkt_" << dist_names[c] << "_pct=" << k.vkt_pct[c] << "\n";
    }
    const char* time_names[] = {"in_use", "pickup", "rebalancing", "charge", "idle"};
    for (int c = 0; c < kTimeClasses; ++c) {
        out << "time_" << time_names[c] << "_pct=" << k.time_pct[c] << "\n";
    }
}

inline void write_report_table(const KpiReport& k, std::ostream& out) {
    auto pct = [](double v) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(2) << v << " %";
        return os.str();
    };
    auto mins = [](double v) {
        std::ostringstream os;
        if (v < 0) os << "-";
        else os << std::fixed << std::setprecision(2) << v << " min";
        return os.str();
    };
    out << "=== " << k.mode << " | fleet " << k.fleet << " | " << std::setprecision(3)
        << k.horizon_days << " days ===\n";
    out << "User demand            " << k.demand << "\n";
    out << "Average trip time      " << mins(k.avg_trip_min) << "\n";
    out << "  Walk time at origin  " << mins(k.avg_walk_origin_min) << "\n";
    out << "  Wait time            " << mins(k.avg_wait_min) << "\n";
    out << "  Ride time            " << mins(k.avg_ride_min) << "\n";
    out << "  Walk time at dest    " << mins(k.avg_walk_dest_min) << "\n";
    out << "Served trips           " << pct(k.served_pct) << "\n";
    out << "Unserved trips         " << pct(k.unserved_pct) << "\n";
    for (const auto& [reason, n] : k.unserved_by_reason) {
        out << "  " << reason << "  " << n << "\n";
    }
    out << "Bikes used             " << pct(k.bikes_used_pct) << "\n";
    out << "Trips/bike/day         " << std::fixed << std::setprecision(2)
        << k.trips_per_bike_day << "\n";
    out << "Rebalanced bikes       " << k.rebalanced_bikes << "\n";
    out << "Total charges          " << k.total_charges << "\n";
    out << "Stranded bikes         " << k.stranded_bikes << "\n";
    out << "v.k.t. total           " << std::setprecision(1) << k.vkt_total_km << " km\n";
    const char* dist_names[] = {"in use", "pickup", "rebalancing", "charge"};
    for (int c = 0; c < kDistClasses; ++c) {
        out << "  v.k.t. " << dist_names[c] << "   " << pct(k.vkt_pct[c]) << "\n";
    }
    const char* time_names[] = {"in use", "pickup", "rebalancing", "charge", "idling"};
    for (int c = 0; c < kTimeClasses; ++c) {
        out << "  time " << time_names[c] << "     " << pct(k.time_pct[c]) << "\n";
    }
}

}  // namespace bikesim::metrics

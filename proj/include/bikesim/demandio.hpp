#pragma once

// Trip/station CSV ingestion (Bluebikes export schema, column mapping
// configurable), origin/destination scattering, the canonical request
// file the engine replays, and a synthetic demand generator for tests.

#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bikesim/engine.hpp"
#include "bikesim/geo.hpp"

namespace bikesim::demandio {

using engine::TimeMs;
using geo::Location;

struct Request {
    std::int64_t id = 0;
    Location origin;
    Location destination;
    TimeMs depart_ms = 0;  // relative to the simulation window start
};

struct TripRecord {
    TimeMs start_ms = 0;  // relative to window start
    std::int64_t start_station = 0;
    std::int64_t end_station = 0;
    Location start_loc;
    Location end_loc;
    std::int64_t duration_s = 0;  // informational only
};

struct StationRecord {
    std::int64_t id = 0;
    Location location;
    int capacity = 0;
};

// ---- CSV plumbing --------------------------------------------------------

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    out.push_back(field);
    return out;
}

/// "YYYY-MM-DD HH:MM:SS[.frac]" -> seconds since epoch (UTC).
inline std::int64_t parse_timestamp(const std::string& s) {
    std::tm tm{};
    int y, mo, d, h, mi;
    double sec;
    if (std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%lf", &y, &mo, &d, &h, &mi, &sec) != 6) {
        throw std::runtime_error("bad timestamp: " + s);
    }
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = 0;
    return static_cast<std::int64_t>(timegm(&tm)) + static_cast<std::int64_t>(sec);
}

/// Bluebikes column names; override via config to survive schema drift.
struct TripColumns {
    std::string start_time = "starttime";
    std::string duration = "tripduration";
    std::string start_station = "start station id";
    std::string start_lat = "start station latitude";
    std::string start_lon = "start station longitude";
    std::string end_station = "end station id";
    std::string end_lat = "end station latitude";
    std::string end_lon = "end station longitude";
};

struct TripLoadResult {
    std::vector<TripRecord> trips;
    std::size_t skipped = 0;  // malformed rows
};

/// Load trips whose start time falls in [t0, t1) epoch seconds. Records
/// come out sorted by start time; malformed rows are counted and skipped.
inline TripLoadResult load_trips(const std::string& path, std::int64_t t0_epoch,
                                 std::int64_t t1_epoch, const TripColumns& cols = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_trips: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_trips: empty file " + path);
    auto header = split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    auto need = [&](const std::string& name) {
        auto it = col.find(name);
        if (it == col.end()) throw std::runtime_error("load_trips: missing column '" + name + "'");
        return it->second;
    };
    std::size_t c_time = need(cols.start_time), c_ss = need(cols.start_station),
                c_slat = need(cols.start_lat), c_slon = need(cols.start_lon),
                c_es = need(cols.end_station), c_elat = need(cols.end_lat),
                c_elon = need(cols.end_lon);
    auto c_dur = col.count(cols.duration) ? col[cols.duration] : static_cast<std::size_t>(-1);

    TripLoadResult res;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        try {
            if (f.size() < header.size()) throw std::runtime_error("short row");
            if (f[c_ss].empty() || f[c_es].empty()) throw std::runtime_error("blank station");
            std::int64_t t = parse_timestamp(f[c_time]);
            if (t < t0_epoch || t >= t1_epoch) continue;
            TripRecord r;
            r.start_ms = (t - t0_epoch) * engine::kMsPerSecond;
            r.start_station = std::stoll(f[c_ss]);
            r.end_station = std::stoll(f[c_es]);
            r.start_loc = {std::stod(f[c_slon]), std::stod(f[c_slat])};
            r.end_loc = {std::stod(f[c_elon]), std::stod(f[c_elat])};
            if (!r.start_loc.valid() || !r.end_loc.valid()) throw std::runtime_error("bad coords");
            if (c_dur != static_cast<std::size_t>(-1)) r.duration_s = std::stoll(f[c_dur]);
            res.trips.push_back(r);
        } catch (const std::exception&) {
            ++res.skipped;
        }
    }
    std::stable_sort(res.trips.begin(), res.trips.end(),
                     [](const TripRecord& a, const TripRecord& b) { return a.start_ms < b.start_ms; });
    if (res.trips.empty()) throw std::runtime_error("load_trips: no trips in window");
    return res;
}

struct StationColumns {
    std::string id = "Number";
    std::string lat = "Latitude";
    std::string lon = "Longitude";
    std::string capacity = "Total docks";
};

inline std::vector<StationRecord> load_stations(const std::string& path,
                                                const StationColumns& cols = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_stations: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_stations: empty file " + path);
    auto header = split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    auto need = [&](const std::string& name) {
        auto it = col.find(name);
        if (it == col.end()) {
            throw std::runtime_error("load_stations: missing column '" + name + "'");
        }
        return it->second;
    };
    std::size_t c_id = need(cols.id), c_lat = need(cols.lat), c_lon = need(cols.lon),
                c_cap = need(cols.capacity);
    std::vector<StationRecord> stations;
    std::map<std::int64_t, bool> seen;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() < header.size()) continue;
        StationRecord s;
        s.id = std::stoll(f[c_id]);
        s.location = {std::stod(f[c_lon]), std::stod(f[c_lat])};
        s.capacity = std::stoi(f[c_cap]);
        if (s.capacity < 1) {
            throw std::runtime_error("load_stations: capacity < 1 for station " +
                                     std::to_string(s.id));
        }
        if (seen[s.id]) {
            throw std::runtime_error("load_stations: duplicate id " + std::to_string(s.id));
        }
        seen[s.id] = true;
        stations.push_back(s);
    }
    if (stations.empty()) throw std::runtime_error("load_stations: no stations in " + path);
    return stations;
}

// ---- scattering ----------------------------------------------------------

/// Displace a point by a uniform draw over the disk of given radius
/// (planar approximation around the point).
inline Location scatter_point(const Location& p, double radius_m, engine::Rng& rng) {
    double r = radius_m * std::sqrt(rng.next_double());
    double theta = 2.0 * M_PI * rng.next_double();
    double dx = r * std::cos(theta), dy = r * std::sin(theta);
    const double deg = M_PI / 180.0;
    Location out = p;
    out.lat += dy / (deg * geo::kEarthRadiusM);
    out.lon += dx / (deg * geo::kEarthRadiusM * std::cos(p.lat * deg));
    return out;
}

/// Trip list -> request list with origins/destinations scattered around
/// the station locations. Deterministic given the seed.
inline std::vector<Request> scatter_requests(const std::vector<TripRecord>& trips,
                                             std::uint64_t seed, double radius_m) {
    if (radius_m < 0) throw std::invalid_argument("scatter_requests: negative radius");
    std::vector<Request> out;
    out.reserve(trips.size());
    std::int64_t id = 0;
    for (const TripRecord& t : trips) {
        auto rng = engine::Rng::substream(seed, static_cast<std::uint64_t>(id) * 2 + 1);
        Request r;
        r.id = id++;
        r.depart_ms = t.start_ms;
        r.origin = scatter_point(t.start_loc, radius_m, rng);
        r.destination = scatter_point(t.end_loc, radius_m, rng);
        out.push_back(r);
    }
    return out;
}

// ---- canonical request file ---------------------------------------------

inline void save_requests(const std::vector<Request>& reqs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_requests: cannot write " + path);
    out << "bikesim-requests 1 " << reqs.size() << "\n";
    out.precision(9);
    out << std::fixed;
    for (const Request& r : reqs) {
        out << r.id << " " << r.depart_ms << " " << r.origin.lon << " " << r.origin.lat << " "
            << r.destination.lon << " " << r.destination.lat << "\n";
    }
}

inline std::vector<Request> read_requests(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_requests: cannot open " + path);
    std::string magic;
    int version = 0;
    std::size_t n = 0;
    in >> magic >> version >> n;
    if (magic != "bikesim-requests" || version != 1) {
        throw std::runtime_error("read_requests: bad header in " + path);
    }
    std::vector<Request> reqs(n);
    for (auto& r : reqs) {
        in >> r.id >> r.depart_ms >> r.origin.lon >> r.origin.lat >> r.destination.lon >>
            r.destination.lat;
    }
    if (!in) throw std::runtime_error("read_requests: truncated " + path);
    return reqs;
}

// ---- demand statistics ---------------------------------------------------

inline constexpr TimeMs kSlotMs = 15 * engine::kMsPerMinute;  // 15-minute slots
inline constexpr int kSlotsPerWeek = 7 * 24 * 4;

struct DemandStats {
    std::vector<std::int64_t> per_hour;          // horizon hours
    std::vector<std::int64_t> slot_of_week;      // 672 bins
    std::vector<std::int64_t> air_km_histogram;  // 1 km bins
    double air_dist_below_5km_frac = 0.0;
};

inline DemandStats demand_stats(const std::vector<Request>& reqs) {
    if (reqs.empty()) throw std::invalid_argument("demand_stats: no requests");
    DemandStats st;
    st.slot_of_week.assign(kSlotsPerWeek, 0);
    std::int64_t below5 = 0;
    for (const Request& r : reqs) {
        auto hour = static_cast<std::size_t>(r.depart_ms / engine::kMsPerHour);
        if (st.per_hour.size() <= hour) st.per_hour.resize(hour + 1, 0);
        st.per_hour[hour]++;
        st.slot_of_week[(r.depart_ms / kSlotMs) % kSlotsPerWeek]++;
        double km = geo::haversine_m(r.origin, r.destination) / 1000.0;
        auto bin = static_cast<std::size_t>(km);
        if (st.air_km_histogram.size() <= bin) st.air_km_histogram.resize(bin + 1, 0);
        st.air_km_histogram[bin]++;
        if (km < 5.0) ++below5;
    }
    st.air_dist_below_5km_frac = static_cast<double>(below5) / reqs.size();
    return st;
}

// ---- synthetic demand ----------------------------------------------------

/// Relative request intensity over the day: commuter double peak.
inline double daily_profile(double hour) {
    auto bump = [](double h, double center, double width) {
        double z = (h - center) / width;
        return std::exp(-0.5 * z * z);
    };
    return 0.15 + bump(hour, 8.5, 1.5) + bump(hour, 17.5, 2.0);
}

struct SyntheticSpec {
    int days = 7;
    std::size_t total_requests = 2000;
    double scatter_radius_m = 300.0;
    std::uint64_t seed = 1;
};

/// Spatially inhomogeneous synthetic week: origins/destinations drawn
/// from stations weighted by capacity, two-peak daily profile.
inline std::vector<Request> synthetic_requests(const std::vector<StationRecord>& stations,
                                               const SyntheticSpec& spec) {
    if (stations.size() < 2) throw std::invalid_argument("synthetic_requests: need >= 2 stations");
    std::vector<double> weight(stations.size());
    double wsum = 0;
    for (std::size_t i = 0; i < stations.size(); ++i) {
        weight[i] = stations[i].capacity;
        wsum += weight[i];
    }
    // slot intensities over the horizon
    int slots = spec.days * 24 * 4;
    std::vector<double> intensity(slots);
    double isum = 0;
    for (int s = 0; s < slots; ++s) {
        double hour = (s % (24 * 4)) / 4.0;
        int day = s / (24 * 4);
        double weekend = (day % 7 >= 5) ? 0.7 : 1.0;
        intensity[s] = daily_profile(hour) * weekend;
        isum += intensity[s];
    }
    engine::Rng rng(engine::splitmix64(spec.seed ^ 0x53594e5448ULL));
    std::vector<Request> reqs;
    std::int64_t id = 0;
    double carry = 0.0;
    for (int s = 0; s < slots; ++s) {
        double want = intensity[s] / isum * static_cast<double>(spec.total_requests) + carry;
        int count = static_cast<int>(want);
        carry = want - count;
        for (int k = 0; k < count; ++k) {
            auto pick = [&]() {
                double x = rng.next_double() * wsum;
                for (std::size_t i = 0; i < stations.size(); ++i) {
                    if ((x -= weight[i]) <= 0) return i;
                }
                return stations.size() - 1;
            };
            std::size_t o = pick(), d = pick();
            if (o == d) d = (d + 1) % stations.size();
            Request r;
            r.id = id++;
            r.depart_ms = static_cast<TimeMs>(s) * kSlotMs +
                          static_cast<TimeMs>(rng.next_double() * kSlotMs);
            r.origin = scatter_point(stations[o].location, spec.scatter_radius_m, rng);
            r.destination = scatter_point(stations[d].location, spec.scatter_radius_m, rng);
            reqs.push_back(r);
        }
    }
    std::stable_sort(reqs.begin(), reqs.end(),
                     [](const Request& a, const Request& b) { return a.depart_ms < b.depart_ms; });
    for (std::size_t i = 0; i < reqs.size(); ++i) reqs[i].id = static_cast<std::int64_t>(i);
    return reqs;
}

}  // namespace bikesim::demandio

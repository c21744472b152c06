#pragma once

// Discrete-event kernel: priority queue keyed by (time, insertion seq),
// fixed-point millisecond clock, cancellable timeouts. One Engine per
// simulation run, strictly single-threaded.

#include <cstdint>
#include <functional>
#include <memory>
#include <queue>
#include <stdexcept>

namespace bikesim::engine {

using TimeMs = std::int64_t;  // milliseconds since simulation epoch

inline constexpr TimeMs kMsPerSecond = 1000;
inline constexpr TimeMs kMsPerMinute = 60 * kMsPerSecond;
inline constexpr TimeMs kMsPerHour = 60 * kMsPerMinute;
inline constexpr TimeMs kMsPerDay = 24 * kMsPerHour;

class EventHandle {
public:
    EventHandle() = default;

    /// Prevent the event from firing. Returns false if it already fired
    /// (or the handle is empty).
    bool cancel() {
        if (!state_ || state_->fired) return false;
        state_->cancelled = true;
        return true;
    }

    bool fired() const { return state_ && state_->fired; }
    bool cancelled() const { return state_ && state_->cancelled; }
    bool valid() const { return static_cast<bool>(state_); }

private:
    friend class Engine;
    struct State {
        bool cancelled = false;
        bool fired = false;
    };
    std::shared_ptr<State> state_;
};

class Engine {
public:
    TimeMs now() const { return now_; }
    std::uint64_t dispatched_count() const { return dispatched_; }

    /// Enqueue `fn` at now + delay. Same-time events fire in insertion order.
    EventHandle schedule(TimeMs delay_ms, std::function<void()> fn) {
        if (delay_ms < 0) throw std::invalid_argument("schedule: negative delay");
        EventHandle handle;
        handle.state_ = std::make_shared<EventHandle::State>();
        queue_.push(Entry{now_ + delay_ms, seq_++, std::move(fn), handle.state_});
        return handle;
    }

    /// Dispatch every uncancelled event with time <= t_end, in (time, seq)
    /// order. Returns the final clock: min(t_end, last event time) per the
    /// run-control contract, i.e. t_end when the queue drains first.
    TimeMs run_until(TimeMs t_end) {
        while (!queue_.empty() && queue_.top().time <= t_end) {
            Entry e = queue_.top();
            queue_.pop();
            if (e.state->cancelled) continue;
            now_ = e.time;
            e.state->fired = true;
            ++dispatched_;
            e.fn();
        }
        now_ = std::max(now_, t_end);
        return now_;
    }

    /// Dispatch everything left in the queue; the clock follows the last
    /// event instead of jumping to an arbitrary end time.
    TimeMs drain() {
        while (!queue_.empty()) {
            Entry e = queue_.top();
            queue_.pop();
            if (e.state->cancelled) continue;
            now_ = e.time;
            e.state->fired = true;
            ++dispatched_;
            e.fn();
        }
        return now_;
    }

    bool pending() const { return !queue_.empty(); }

private:
    struct Entry {
        TimeMs time;
        std::uint64_t seq;
        std::function<void()> fn;
        std::shared_ptr<EventHandle::State> state;

        bool operator>(const Entry& o) const {
            if (time != o.time) return time > o.time;
            return seq > o.seq;
        }
    };

    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
    TimeMs now_ = 0;
    std::uint64_t seq_ = 0;
    std::uint64_t dispatched_ = 0;
};

// -------------------------------------------------------------------------
// Deterministic RNG: one master seed per run, per-agent substreams derived
// by hashing so agent behavior does not depend on dispatch interleaving.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// xoshiro-free minimal engine: splitmix64 stream, good enough for
/// simulation draws and fully reproducible across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static Rng substream(std::uint64_t seed, std::uint64_t agent_id) {
        return Rng(splitmix64(seed ^ splitmix64(agent_id + 0x1234567890abcdefULL)));
    }

    std::uint64_t next_u64() {
        state_ = splitmix64(state_);
        return state_;
    }

    /// uniform in [0, 1)
    double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

    /// uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

private:
    std::uint64_t state_;
};

}  // namespace bikesim::engine

#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <string_view>
#include <vector>

namespace pifsim {

enum class TimerCategory : int {
    Scatter = 0,
    Gather,
    ParticleUpdate,
    Allreduce,
    FieldHalo,
    FftAlltoall,
    FinePropagator,
    CoarsePropagator,
    TimeComm,
    Other,
};

inline constexpr int kNumTimerCategories = 10;

std::string_view timer_name(TimerCategory c);

struct TimerTotals {
    double inclusive = 0.0;
    double exclusive = 0.0;
    std::uint64_t calls = 0;
};

/// Per-rank accumulating wall-clock timers with nested scopes.
///
/// Exclusive time of a scope excludes time spent in nested scopes. "Other" is
/// filled by finalize() as wall time minus the sum of exclusive times.
class TimerSet {
  public:
    using Clock = std::chrono::steady_clock;

    TimerSet() : started_(Clock::now()) {}

    class Scope {
      public:
        /// `set` may be null.
        Scope(TimerSet* set, TimerCategory c);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

      private:
        TimerSet* set_;
    };

    /// Sets Other from the elapsed wall time since construction (or `wall` if given).
    void finalize(double wall = -1.0);

    const TimerTotals& operator[](TimerCategory c) const { return totals_[static_cast<int>(c)]; }
    double wall_seconds() const { return wall_; }

  private:
    struct Frame {
        TimerCategory cat;
        Clock::time_point start;
        double child = 0.0;
    };

    void push(TimerCategory c);
    void pop();

    Clock::time_point started_;
    std::vector<Frame> stack_;
    std::array<TimerTotals, kNumTimerCategories> totals_{};
    double wall_ = 0.0;
};

/// RAII timing scope; a null timer set makes it a no-op.
using TimedScope = TimerSet::Scope;

}  // namespace pifsim

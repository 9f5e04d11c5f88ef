#include "pifsim/timers.hpp"

namespace pifsim {

std::string_view timer_name(TimerCategory c) {
    switch (c) {
        case TimerCategory::Scatter: return "Scatter";
        case TimerCategory::Gather: return "Gather";
        case TimerCategory::ParticleUpdate: return "ParticleUpdate";
        case TimerCategory::Allreduce: return "Allreduce";
        case TimerCategory::FieldHalo: return "FieldHalo";
        case TimerCategory::FftAlltoall: return "FftAlltoall";
        case TimerCategory::FinePropagator: return "FinePropagator";
        case TimerCategory::CoarsePropagator: return "CoarsePropagator";
        case TimerCategory::TimeComm: return "TimeComm";
        case TimerCategory::Other: return "Other";
    }
    return "Unknown";
}

TimerSet::Scope::Scope(TimerSet* set, TimerCategory c) : set_(set) {
    if (set_ != nullptr) {
        set_->push(c);
    }
}

TimerSet::Scope::~Scope() {
    if (set_ != nullptr) {
        set_->pop();
    }
}

void TimerSet::push(TimerCategory c) { stack_.push_back({c, Clock::now(), 0.0}); }

void TimerSet::pop() {
    const auto now = Clock::now();
    Frame f = stack_.back();
    stack_.pop_back();
    const double elapsed = std::chrono::duration<double>(now - f.start).count();
    auto& t = totals_[static_cast<int>(f.cat)];
    // Recursive use of the same category only counts the outermost scope inclusively.
    bool nested_same = false;
    for (const auto& g : stack_) {
        if (g.cat == f.cat) {
            nested_same = true;
            break;
        }
    }
    if (!nested_same) {
        t.inclusive += elapsed;
    }
    t.exclusive += elapsed - f.child;
    t.calls += 1;
    if (!stack_.empty()) {
        stack_.back().child += elapsed;
    }
}

void TimerSet::finalize(double wall) {
    wall_ = wall >= 0.0 ? wall : std::chrono::duration<double>(Clock::now() - started_).count();
    double sum = 0.0;
    for (int i = 0; i < kNumTimerCategories; ++i) {
        if (i != static_cast<int>(TimerCategory::Other)) {
            sum += totals_[i].exclusive;
        }
    }
    auto& other = totals_[static_cast<int>(TimerCategory::Other)];
    other.exclusive = wall_ > sum ? wall_ - sum : 0.0;
    other.inclusive = other.exclusive;
    other.calls = 1;
}

}  // namespace pifsim

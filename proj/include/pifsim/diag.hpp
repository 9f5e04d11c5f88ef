#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pifsim/pif.hpp"
#include "pifsim/timers.hpp"

namespace pifsim {

struct StepRecord {
    long step = 0;
    double t = 0.0;
    double field_energy = 0.0;
    double kinetic_energy = 0.0;
    double external_energy = 0.0;  // sum q_j phi_ext(x_j)
    double total_energy = 0.0;     // field + kinetic + external
    Vec3 momentum{0.0, 0.0, 0.0};
    double total_charge = 0.0;
    double fundamental_energy = 0.0;
    std::uint64_t particle_count = 0;
};

/// Local sums for one rank. Field energies are included only if `with_field`.
StepRecord local_diagnostics(const ParticleEnsemble& p, const ExternalFields& ext, const FieldSample& field,
                             bool with_field, long step, double t);

/// Sums per-rank partial records of the same step in the given order and
/// fills derived quantities. Charge is q_per_particle times the global count.
StepRecord combine_records(std::span<const StepRecord> parts, double q_per_particle);

struct DampingFit {
    double gamma = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<double> peak_times;
    std::vector<double> peak_values;
};

struct DampingFitOptions {
    double t_min = -1e300;
    double t_max = 1e300;
    /// Peaks below this value are ignored.
    double min_value = 0.0;
};

/// Least-squares fit of log(peak) against t over interior local maxima;
/// gamma = -slope / 2. Needs at least three peaks.
DampingFit fit_damping_rate(std::span<const double> t, std::span<const double> energy,
                            const DampingFitOptions& opts = {});

/// Per-rank timer totals.
struct RankTimers {
    int rank = 0;
    std::array<TimerTotals, kNumTimerCategories> totals{};
    double wall = 0.0;

    static RankTimers from(int rank, const TimerSet& t);
};

std::string diagnostics_csv(std::span<const StepRecord> records);
std::string timers_csv(std::span<const RankTimers> timers);

/// Average inclusive seconds per category across ranks.
std::array<double, kNumTimerCategories> average_inclusive(std::span<const RankTimers> timers);

/// Writes diagnostics.csv, timers.csv and meta.json into out_dir. Existing
/// files are only replaced when `overwrite` is set.
void write_outputs(const std::filesystem::path& out_dir, std::span<const StepRecord> records,
                   std::span<const RankTimers> timers, const std::string& meta_json, bool overwrite);

}  // namespace pifsim

#include "pifsim/diag.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace pifsim {

StepRecord local_diagnostics(const ParticleEnsemble& p, const ExternalFields& ext, const FieldSample& field,
                             bool with_field, long step, double t) {
    StepRecord r;
    r.step = step;
    r.t = t;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const Vec3& v = p.v[j];
        r.kinetic_energy += 0.5 * p.m[j] * dot(v, v);
        r.momentum = r.momentum + p.m[j] * v;
        if (ext.electric != ExternalFields::Electric::None) {
            r.external_energy += p.q[j] * ext.potential(p.x[j]);
        }
    }
    if (with_field) {
        r.field_energy = field.field_energy;
        r.fundamental_energy = field.fundamental_energy;
    }
    r.particle_count = p.size();
    return r;
}

StepRecord combine_records(std::span<const StepRecord> parts, double q_per_particle) {
    if (parts.empty()) {
        throw InvalidArgument("combine_records: no parts");
    }
    StepRecord out;
    out.step = parts[0].step;
    out.t = parts[0].t;
    for (const auto& p : parts) {
        if (p.step != out.step) {
            throw InvalidArgument("combine_records: parts belong to different steps");
        }
        out.field_energy += p.field_energy;
        out.fundamental_energy += p.fundamental_energy;
        out.kinetic_energy += p.kinetic_energy;
        out.external_energy += p.external_energy;
        out.momentum = out.momentum + p.momentum;
        out.particle_count += p.particle_count;
    }
    out.total_energy = out.field_energy + out.kinetic_energy + out.external_energy;
    out.total_charge = q_per_particle * static_cast<double>(out.particle_count);
    return out;
}

DampingFit fit_damping_rate(std::span<const double> t, std::span<const double> energy, const DampingFitOptions& opts) {
    if (t.size() != energy.size()) {
        throw InvalidArgument("fit_damping_rate: t and energy differ in length");
    }
    DampingFit fit;
    for (std::size_t i = 1; i + 1 < energy.size(); ++i) {
        if (energy[i] >= energy[i - 1] && energy[i] >= energy[i + 1] && t[i] >= opts.t_min && t[i] <= opts.t_max &&
            energy[i] > opts.min_value && energy[i] > 0.0) {
            fit.peak_times.push_back(t[i]);
            fit.peak_values.push_back(energy[i]);
        }
    }
    const std::size_t n = fit.peak_times.size();
    if (n < 3) {
        throw InvalidArgument("fit_damping_rate: need at least 3 peaks, found " + std::to_string(n));
    }
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = std::log(fit.peak_values[i]);
        st += fit.peak_times[i];
        sy += y;
        stt += fit.peak_times[i] * fit.peak_times[i];
        sty += fit.peak_times[i] * y;
    }
    const double dn = static_cast<double>(n);
    const double den = dn * stt - st * st;
    if (!(den > 0.0)) {
        throw InvalidArgument("fit_damping_rate: degenerate peak times");
    }
    fit.slope = (dn * sty - st * sy) / den;
    fit.intercept = (sy - fit.slope * st) / dn;
    fit.gamma = -0.5 * fit.slope;
    return fit;
}

RankTimers RankTimers::from(int rank, const TimerSet& t) {
    RankTimers r;
    r.rank = rank;
    for (int c = 0; c < kNumTimerCategories; ++c) {
        r.totals[static_cast<std::size_t>(c)] = t[static_cast<TimerCategory>(c)];
    }
    r.wall = t.wall_seconds();
    return r;
}

std::string diagnostics_csv(std::span<const StepRecord> records) {
    std::ostringstream os;
    os << "step,t,field_energy,kinetic_energy,total_energy,px,py,pz,total_charge\n";
    os << std::setprecision(17);
    for (const auto& r : records) {
        os << r.step << ',' << r.t << ',' << r.field_energy << ',' << r.kinetic_energy << ',' << r.total_energy << ','
           << r.momentum[0] << ',' << r.momentum[1] << ',' << r.momentum[2] << ',' << r.total_charge << '\n';
    }
    return os.str();
}

std::string timers_csv(std::span<const RankTimers> timers) {
    std::ostringstream os;
    os << "rank,category,seconds_inclusive,seconds_exclusive,calls\n";
    os << std::setprecision(17);
    for (const auto& r : timers) {
        for (int c = 0; c < kNumTimerCategories; ++c) {
            const auto& t = r.totals[static_cast<std::size_t>(c)];
            os << r.rank << ',' << timer_name(static_cast<TimerCategory>(c)) << ',' << t.inclusive << ','
               << t.exclusive << ',' << t.calls << '\n';
        }
    }
    return os.str();
}

std::array<double, kNumTimerCategories> average_inclusive(std::span<const RankTimers> timers) {
    std::array<double, kNumTimerCategories> avg{};
    if (timers.empty()) {
        return avg;
    }
    for (const auto& r : timers) {
        for (std::size_t c = 0; c < avg.size(); ++c) {
            avg[c] += r.totals[c].inclusive;
        }
    }
    for (auto& a : avg) {
        a /= static_cast<double>(timers.size());
    }
    return avg;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content, bool overwrite) {
    if (!overwrite && std::filesystem::exists(path)) {
        throw Error("refusing to overwrite existing " + path.string() + " (pass --overwrite)");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out << content;
    if (!out) {
        throw Error("failed writing " + path.string());
    }
}

}  // namespace

void write_outputs(const std::filesystem::path& out_dir, std::span<const StepRecord> records,
                   std::span<const RankTimers> timers, const std::string& meta_json, bool overwrite) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw Error("cannot create output directory " + out_dir.string() + ": " + ec.message());
    }
    const auto diag = out_dir / "diagnostics.csv";
    const auto tim = out_dir / "timers.csv";
    const auto meta = out_dir / "meta.json";
    if (!overwrite) {
        for (const auto& p : {diag, tim, meta}) {
            if (std::filesystem::exists(p)) {
                throw Error("refusing to overwrite existing " + p.string() + " (pass --overwrite)");
            }
        }
    }
    write_file(diag, diagnostics_csv(records), overwrite);
    write_file(tim, timers_csv(timers), overwrite);
    write_file(meta, meta_json, overwrite);
}

}  // namespace pifsim

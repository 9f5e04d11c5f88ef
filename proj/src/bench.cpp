#include "pifsim/bench.hpp"

#include <cmath>

namespace pifsim::bench {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kVelocityAttr = 16;
constexpr std::uint64_t kPenningPositionAttr = 64;
constexpr int kMaxRejections = 1000;

}  // namespace

std::string to_string(Benchmark b) { return b == Benchmark::Landau ? "landau" : "penning"; }

Benchmark benchmark_from_string(const std::string& s) {
    if (s == "landau") {
        return Benchmark::Landau;
    }
    if (s == "penning") {
        return Benchmark::Penning;
    }
    throw InvalidArgument("unknown benchmark '" + s + "' (expected landau or penning)");
}

BenchmarkSpec BenchmarkSpec::landau(int N, int ppm) {
    BenchmarkSpec s;
    s.kind = Benchmark::Landau;
    s.N = N;
    s.ppm = ppm;
    s.k = 0.5;
    s.alpha = 0.05;
    s.L = 2.0 * kPi / s.k;
    s.Q = -s.L * s.L * s.L;
    return s;
}

BenchmarkSpec BenchmarkSpec::penning(int N, int ppm) {
    BenchmarkSpec s;
    s.kind = Benchmark::Penning;
    s.N = N;
    s.ppm = ppm;
    s.L = 25.0;
    s.Q = -1562.5;
    s.mean = {12.5, 12.5, 12.5};
    s.stddev = {2.0, 1.0, 3.0};
    s.B = {0.0, 0.0, 5.0};
    s.quadrupole = true;
    return s;
}

std::uint64_t BenchmarkSpec::num_particles() const {
    const auto n = static_cast<std::uint64_t>(N);
    return static_cast<std::uint64_t>(ppm) * n * n * n;
}

ExternalFields BenchmarkSpec::externals() const {
    if (quadrupole) {
        return ExternalFields::penning(L, B);
    }
    ExternalFields e;
    e.B = B;
    e.L = L;
    return e;
}

void BenchmarkSpec::validate() const {
    if (N < 4 || N % 2 != 0) {
        throw InvalidArgument("benchmark: modes must be even and >= 4");
    }
    if (ppm < 1) {
        throw InvalidArgument("benchmark: ppm must be >= 1");
    }
    if (!(L > 0.0)) {
        throw InvalidArgument("benchmark: L must be positive");
    }
    if (kind == Benchmark::Landau && !(std::abs(alpha) < 1.0 && k > 0.0)) {
        throw InvalidArgument("benchmark: Landau needs |alpha| < 1 and k > 0");
    }
    if (kind == Benchmark::Penning && !(stddev[0] > 0.0 && stddev[1] > 0.0 && stddev[2] > 0.0)) {
        throw InvalidArgument("benchmark: Penning standard deviations must be positive");
    }
}

double counter_uniform(std::uint64_t seed, std::uint64_t id, std::uint64_t attr) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ id);
    h = splitmix64(h ^ (attr * 0xd1342543de82ef95ULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double counter_normal(std::uint64_t seed, std::uint64_t id, std::uint64_t attr) {
    const double u1 = 1.0 - counter_uniform(seed, id, 2 * attr);  // (0, 1]
    const double u2 = counter_uniform(seed, id, 2 * attr + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

double landau_inverse_cdf(double u, double L, double alpha, double k) {
    if (u <= 0.0) {
        return 0.0;
    }
    if (u >= 1.0) {
        return L;
    }
    const double target = u * L;
    auto g = [&](double x) { return x + alpha / k * std::sin(k * x) - target; };
    double lo = 0.0;
    double hi = L;
    double x = target;
    for (int it = 0; it < 100; ++it) {
        const double gx = g(x);
        if (std::abs(gx) <= 1e-12 * L) {
            return x;
        }
        if (gx > 0.0) {
            hi = x;
        } else {
            lo = x;
        }
        const double dg = 1.0 + alpha * std::cos(k * x);
        double next = x - gx / dg;
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        x = next;
    }
    // Bisection fallback.
    for (int it = 0; it < 200 && hi - lo > 1e-15 * L; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? hi : lo) = mid;
    }
    if (std::abs(g(0.5 * (lo + hi))) > 1e-10 * L) {
        throw Error("landau_inverse_cdf: no convergence");
    }
    return 0.5 * (lo + hi);
}

void sample_particle(const BenchmarkSpec& spec, std::uint64_t id, Vec3& x, Vec3& v) {
    const std::uint64_t seed = spec.seed;
    if (spec.kind == Benchmark::Landau) {
        for (std::uint64_t d = 0; d < 3; ++d) {
            const double u = counter_uniform(seed, id, d);
            x[d] = wrap_periodic(landau_inverse_cdf(u, spec.L, spec.alpha, spec.k), spec.L);
        }
    } else {
        bool inside = false;
        for (int attempt = 0; attempt < kMaxRejections && !inside; ++attempt) {
            inside = true;
            for (std::uint64_t d = 0; d < 3; ++d) {
                const std::uint64_t attr = kPenningPositionAttr + 3 * static_cast<std::uint64_t>(attempt) + d;
                x[d] = spec.mean[d] + spec.stddev[d] * counter_normal(seed, id, attr);
                inside = inside && x[d] >= 0.0 && x[d] < spec.L;
            }
        }
        if (!inside) {
            throw Error("sample_penning: rejection sampling did not produce an in-domain position");
        }
    }
    for (std::uint64_t d = 0; d < 3; ++d) {
        v[d] = counter_normal(seed, id, kVelocityAttr + d);
    }
}

ParticleEnsemble sample_range(const BenchmarkSpec& spec, std::uint64_t id_begin, std::uint64_t id_end) {
    spec.validate();
    const double q = spec.charge_per_particle();
    const double m = std::abs(q);
    ParticleEnsemble p;
    p.reserve(id_end > id_begin ? id_end - id_begin : 0);
    for (std::uint64_t id = id_begin; id < id_end; ++id) {
        Vec3 x{};
        Vec3 v{};
        sample_particle(spec, id, x, v);
        p.push_back(x, v, q, m, id);
    }
    return p;
}

ParticleEnsemble sample_filtered(const BenchmarkSpec& spec, const std::function<bool(const Vec3&)>& keep) {
    spec.validate();
    const double q = spec.charge_per_particle();
    const double m = std::abs(q);
    ParticleEnsemble p;
    const std::uint64_t n = spec.num_particles();
    for (std::uint64_t id = 0; id < n; ++id) {
        Vec3 x{};
        Vec3 v{};
        sample_particle(spec, id, x, v);
        if (keep(x)) {
            p.push_back(x, v, q, m, id);
        }
    }
    return p;
}

ParticleEnsemble sample_landau(const BenchmarkSpec& spec) {
    if (spec.kind != Benchmark::Landau) {
        throw InvalidArgument("sample_landau: spec is not a Landau benchmark");
    }
    return sample_range(spec, 0, spec.num_particles());
}

ParticleEnsemble sample_penning(const BenchmarkSpec& spec) {
    if (spec.kind != Benchmark::Penning) {
        throw InvalidArgument("sample_penning: spec is not a Penning benchmark");
    }
    return sample_range(spec, 0, spec.num_particles());
}

std::pair<std::uint64_t, std::uint64_t> block_range(std::uint64_t n, int parts, int part) {
    const auto p = static_cast<std::uint64_t>(parts);
    const auto r = static_cast<std::uint64_t>(part);
    const std::uint64_t base = n / p;
    const std::uint64_t extra = n % p;
    const std::uint64_t begin = r * base + std::min(r, extra);
    return {begin, begin + base + (r < extra ? 1 : 0)};
}

}  // namespace pifsim::bench

#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "pifsim/pif.hpp"

namespace pifsim::bench {

enum class Benchmark { Landau, Penning };

std::string to_string(Benchmark b);
Benchmark benchmark_from_string(const std::string& s);

struct BenchmarkSpec {
    Benchmark kind = Benchmark::Landau;
    int N = 16;
    int ppm = 10;
    double L = 4.0 * kPi;
    double Q = -(4.0 * kPi) * (4.0 * kPi) * (4.0 * kPi);
    // Landau
    double alpha = 0.05;
    double k = 0.5;
    // Penning
    Vec3 mean{12.5, 12.5, 12.5};
    Vec3 stddev{2.0, 1.0, 3.0};
    Vec3 B{0.0, 0.0, 0.0};
    bool quadrupole = false;
    std::uint64_t seed = 42;

    static BenchmarkSpec landau(int N, int ppm);
    static BenchmarkSpec penning(int N, int ppm);

    std::uint64_t num_particles() const;
    double charge_per_particle() const { return Q / static_cast<double>(num_particles()); }
    ExternalFields externals() const;
    void validate() const;
};

/// Uniform double in [0, 1) determined by (seed, particle id, attribute).
double counter_uniform(std::uint64_t seed, std::uint64_t id, std::uint64_t attr);

/// Standard normal determined by (seed, particle id, attribute).
double counter_normal(std::uint64_t seed, std::uint64_t id, std::uint64_t attr);

/// Solves (x + (alpha/k) sin(k x)) / L = u for x in [0, L].
double landau_inverse_cdf(double u, double L, double alpha, double k);

/// Particle `id` of the global ensemble.
void sample_particle(const BenchmarkSpec& spec, std::uint64_t id, Vec3& x, Vec3& v);

/// Particles with ids in [id_begin, id_end).
ParticleEnsemble sample_range(const BenchmarkSpec& spec, std::uint64_t id_begin, std::uint64_t id_end);

/// Particles of the whole ensemble for which keep(x) holds, in id order.
ParticleEnsemble sample_filtered(const BenchmarkSpec& spec, const std::function<bool(const Vec3&)>& keep);

ParticleEnsemble sample_landau(const BenchmarkSpec& spec);
ParticleEnsemble sample_penning(const BenchmarkSpec& spec);

/// Contiguous id range of block `part` out of `parts` for n ids.
std::pair<std::uint64_t, std::uint64_t> block_range(std::uint64_t n, int parts, int part);

}  // namespace pifsim::bench

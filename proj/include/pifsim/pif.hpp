#pragma once

// Particle state and the PIF cycle: deposit, field solve, gather, push.

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pifsim/comm.hpp"
#include "pifsim/nufft.hpp"
#include "pifsim/spectral.hpp"
#include "pifsim/timers.hpp"

namespace pifsim {

struct ParticleEnsemble {
    std::vector<Vec3> x;
    std::vector<Vec3> v;
    std::vector<double> q;
    std::vector<double> m;
    std::vector<std::uint64_t> ids;

    std::size_t size() const { return ids.size(); }
    void reserve(std::size_t n);
    void push_back(const Vec3& xi, const Vec3& vi, double qi, double mi, std::uint64_t id);
    /// Throws InvalidArgument if attribute arrays differ in length.
    void validate() const;

    comm::ParticleBatch to_batch() const;
    static ParticleEnsemble from_batch(comm::ParticleBatch b);
    /// Appends all particles of `other`.
    void append(const ParticleEnsemble& other);
    /// Particles at the given indices, in that order.
    ParticleEnsemble select(std::span<const std::size_t> idx) const;
};

struct ExternalFields {
    enum class Electric { None, Quadrupole };

    Vec3 B{0.0, 0.0, 0.0};
    Electric electric = Electric::None;
    double L = 0.0;  // domain length for the quadrupole

    static ExternalFields none() { return {}; }
    static ExternalFields penning(double L, const Vec3& B);

    /// E_ext = (-15/L (x - L/2), -15/L (y - L/2), 30/L (z - L/2)) for the quadrupole.
    Vec3 eval(const Vec3& x) const;
    /// Scalar potential with E_ext = -grad(phi), zero at the domain centre.
    double potential(const Vec3& x) const;
};

enum class Shape { Delta, Cic };

/// Per-dimension shape factor S(m) for mode m on an N-mode grid.
double shape_factor_1d(Shape s, int m, int N);

/// rho_k = (S_k / L^3) sum_j q_j exp(-i k.x_j), with rho_0 = 0.
FourierField deposit_charge(const ParticleEnsemble& p, const nufft::Plan& plan, Shape shape = Shape::Delta);

/// E(x_j) = sum_k E_k S_k exp(i k.x_j), real part after a Hermitian check.
std::vector<Vec3> gather_efield(const EField& e, const ParticleEnsemble& p, const nufft::Plan& plan,
                                Shape shape = Shape::Delta);

/// Boris step with total field E_self + E_ext(x) and constant B_ext, then drift and wrap.
void boris_push(ParticleEnsemble& p, std::span<const Vec3> e_self, const ExternalFields& ext, double dt,
                double L);

/// Self-consistent field evaluated at the local particles.
struct FieldSample {
    std::vector<Vec3> E;
    double field_energy = 0.0;
    double fundamental_energy = 0.0;
    /// True when every rank holds the full energy (replicated modes); false
    /// when each rank holds a disjoint share that must be summed.
    bool energy_replicated = true;
};

class FieldSolver {
  public:
    virtual ~FieldSolver() = default;
    virtual FieldSample solve(const ParticleEnsemble& local, TimerSet* timers) = 0;
};

/// PIF with replicated modes. With a communicator of size > 1 the local
/// densities are summed by allreduce (particle decomposition).
class PifSolver final : public FieldSolver {
  public:
    PifSolver(nufft::Plan plan, Shape shape, comm::Communicator* comm = nullptr);
    FieldSample solve(const ParticleEnsemble& local, TimerSet* timers) override;
    const nufft::Plan& plan() const { return plan_; }

  private:
    nufft::Plan plan_;
    Shape shape_;
    comm::Communicator* comm_;
};

/// PIF on slab-distributed modes (domain decomposition).
class DdPifSolver final : public FieldSolver {
  public:
    DdPifSolver(nufft::Plan plan, Shape shape, comm::Communicator& comm);
    FieldSample solve(const ParticleEnsemble& local, TimerSet* timers) override;
    const fft::SlabLayout& layout() const { return layout_; }
    const nufft::Plan& plan() const { return plan_; }

  private:
    nufft::Plan plan_;
    Shape shape_;
    comm::Communicator& comm_;
    fft::SlabLayout layout_;
};

/// Cloud-in-cell charge per node of a periodic Nc^3 grid, [z][y][x] order.
std::vector<double> cic_deposit(std::span<const Vec3> x, std::span<const double> q, int Nc, double L);

/// FFT particle-in-cell on an Nc^3 grid with CIC weighting. With a
/// communicator the grid charges are summed by allreduce.
class PicSolver final : public FieldSolver {
  public:
    PicSolver(int Nc, double L, comm::Communicator* comm = nullptr);
    FieldSample solve(const ParticleEnsemble& local, TimerSet* timers) override;

  private:
    int Nc_;
    double L_;
    comm::Communicator* comm_;
};

struct StepState {
    ParticleEnsemble particles;
    nufft::Plan plan;
    ExternalFields externals;
    Shape shape = Shape::Delta;
    double dt = 0.0;
    double t = 0.0;
    long step = 0;
};

/// One PIF cycle: deposit, Poisson, gather, push.
void pif_step(StepState& s, TimerSet* timers = nullptr);

/// One PIC cycle on an Nc^3 grid followed by the same push.
void pic_step(StepState& s, int Nc, TimerSet* timers = nullptr);

}  // namespace pifsim

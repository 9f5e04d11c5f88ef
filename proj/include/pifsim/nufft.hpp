#pragma once

// Type-1 (points -> modes) and type-2 (modes -> points) nonuniform FFTs on the
// periodic cube [0, L)^3 with the exponential-of-semicircle window, plus
// direct-sum references and slab-distributed variants.

#include <array>
#include <span>
#include <vector>

#include "pifsim/comm.hpp"
#include "pifsim/fft.hpp"
#include "pifsim/spectral.hpp"
#include "pifsim/timers.hpp"
#include "pifsim/types.hpp"

namespace pifsim::nufft {

struct WindowSpec {
    int w = 0;          // support in upsampled grid points
    double sigma = 2.0; // upsampling factor
    double beta = 0.0;  // shape parameter

    /// exp(beta (sqrt(1 - t^2) - 1)) for |t| <= 1, zero outside.
    double eval(double t) const;
};

struct Plan {
    int N = 0;
    double L = 0.0;
    double eps = 0.0;
    WindowSpec window;
    int n_up = 0;
    std::vector<double> deconv;  // 1 / psi_hat(m), index m + N/2

    double spacing() const { return L / n_up; }
    int halo() const { return (window.w + 1) / 2; }
    double deconv_at(int m) const { return deconv[static_cast<std::size_t>(m + N / 2)]; }
};

Plan make_plan(int N, double L, double eps);

/// F[k] = sum_j c_j exp(-i k.x_j).
FourierField type1(const Plan& plan, std::span<const Vec3> points, std::span<const cplx> strengths);
FourierField type1_real(const Plan& plan, std::span<const Vec3> points, std::span<const double> strengths);

/// v_j = sum_k F[k] exp(+i k.x_j).
std::vector<cplx> type2(const Plan& plan, const FourierField& modes, std::span<const Vec3> points);

/// Three type-2 transforms of fields known to be real in physical space. The
/// imaginary residue on the upsampled grid must stay below 1e-10 of the grid
/// magnitude, otherwise Error is thrown.
std::array<std::vector<double>, 3> type2_real3(const Plan& plan, const EField& fields,
                                               std::span<const Vec3> points);

/// Exact O(M N^3) evaluations of the defining sums.
FourierField direct_type1(int N, double L, std::span<const Vec3> points, std::span<const cplx> strengths);
std::vector<cplx> direct_type2(const FourierField& modes, std::span<const Vec3> points);

/// Upsampled-grid plane that owns position z.
int owner_plane(const Plan& plan, double z);

/// Mode values m_z whose upsampled frequency index falls into slab `rank`.
std::vector<int> owned_mz(const Plan& plan, const fft::SlabLayout& layout, int rank);

/// Layout of the upsampled grid over `parts` slabs with the plan's halo.
fft::SlabLayout slab_layout(const Plan& plan, int parts);

/// Distributed type 1. Every point must lie in this rank's slab. Returns the
/// locally owned modes (see owned_mz). Collective over `comm`.
FourierField dd_type1(comm::Communicator& comm, const fft::SlabLayout& layout, const Plan& plan,
                      std::span<const Vec3> points, std::span<const cplx> strengths,
                      TimerSet* timers = nullptr);
FourierField dd_type1_real(comm::Communicator& comm, const fft::SlabLayout& layout, const Plan& plan,
                           std::span<const Vec3> points, std::span<const double> strengths,
                           TimerSet* timers = nullptr);

/// Distributed type 2 from locally owned modes. Collective over `comm`.
std::vector<cplx> dd_type2(comm::Communicator& comm, const fft::SlabLayout& layout, const Plan& plan,
                           const FourierField& owned, std::span<const Vec3> points,
                           TimerSet* timers = nullptr);
std::array<std::vector<double>, 3> dd_type2_real3(comm::Communicator& comm, const fft::SlabLayout& layout,
                                                  const Plan& plan, const EField& owned,
                                                  std::span<const Vec3> points, TimerSet* timers = nullptr);

}  // namespace pifsim::nufft

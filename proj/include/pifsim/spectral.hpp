#pragma once

#include <array>
#include <span>
#include <vector>

#include "pifsim/types.hpp"

namespace pifsim {

enum class FieldUnits { ChargeDensity, FieldComponent };

/// Fourier coefficients on the mode set m in [-N/2, N/2)^3.
///
/// A field may hold only a subset of the m_z values (the portion owned by one
/// slab rank). Coefficients are stored [m_x][m_y][j] with j indexing `mz`, so
/// a complete field is in lexicographic (m_x, m_y, m_z) order with m_z fastest.
struct FourierField {
    int N = 0;
    double L = 0.0;
    FieldUnits units = FieldUnits::ChargeDensity;
    std::vector<int> mz;  // ascending
    std::vector<cplx> coeffs;

    static FourierField zeros(int N, double L, FieldUnits units = FieldUnits::ChargeDensity);
    static FourierField zeros_subset(int N, double L, std::vector<int> mz,
                                     FieldUnits units = FieldUnits::ChargeDensity);

    bool complete() const { return static_cast<int>(mz.size()) == N; }
    std::size_t nz() const { return mz.size(); }
    std::size_t size() const { return coeffs.size(); }

    std::size_t index_of(int jx, int jy, std::size_t jz) const {
        return (static_cast<std::size_t>(jx) * static_cast<std::size_t>(N) + static_cast<std::size_t>(jy)) * nz() + jz;
    }
    /// Integer mode of storage index i.
    std::array<int, 3> mode(std::size_t i) const;
    /// Physical wave vector of storage index i.
    Vec3 wave_vector(std::size_t i) const;

    /// Storage index of the integer mode, or -1 if this field does not hold it.
    long find(int mx, int my, int mz_value) const;

    void validate() const;
};

using EField = std::array<FourierField, 3>;

/// k = (2 pi / L) m for lexicographic index `lex` of the complete mode set.
Vec3 mode_vector(int N, double L, std::size_t lex);

/// Lexicographic index of integer mode m (each component in [-N/2, N/2)).
std::size_t mode_index(int N, int mx, int my, int mz);

/// E_k = -i k / |k|^2 rho_k, zero at k = 0. Modes with any component equal to
/// -N/2 have no partner in the mode set and get E_k = 0 so that the gathered
/// field is real.
EField poisson_efield(const FourierField& rho);

/// (L^3 / 2) * sum_k |E_k|^2 over the modes held.
double field_energy(const EField& e);

/// Field energy restricted to the six modes m = +-e_x, +-e_y, +-e_z.
double fundamental_mode_energy(const EField& e);

/// Reassembles a complete field from subset portions (any order, disjoint).
FourierField assemble(std::span<const FourierField> parts);

/// max_k |F[-k] - conj(F[k])|, skipping modes with a -N/2 component.
double hermitian_defect(const FourierField& f);

}  // namespace pifsim

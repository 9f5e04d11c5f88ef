#include "pifsim/spectral.hpp"

#include <algorithm>

namespace pifsim {

FourierField FourierField::zeros(int N, double L, FieldUnits units) {
    std::vector<int> all(static_cast<std::size_t>(N));
    for (int j = 0; j < N; ++j) {
        all[static_cast<std::size_t>(j)] = j - N / 2;
    }
    return zeros_subset(N, L, std::move(all), units);
}

FourierField FourierField::zeros_subset(int N, double L, std::vector<int> mz, FieldUnits units) {
    if (N < 2 || N % 2 != 0) {
        throw InvalidArgument("FourierField: N must be even and >= 2");
    }
    if (!(L > 0.0)) {
        throw InvalidArgument("FourierField: L must be positive");
    }
    FourierField f;
    f.N = N;
    f.L = L;
    f.units = units;
    f.mz = std::move(mz);
    f.coeffs.assign(static_cast<std::size_t>(N) * static_cast<std::size_t>(N) * f.mz.size(), cplx{});
    f.validate();
    return f;
}

std::array<int, 3> FourierField::mode(std::size_t i) const {
    const std::size_t z = nz();
    const std::size_t jz = i % z;
    const std::size_t rest = i / z;
    const int jy = static_cast<int>(rest % static_cast<std::size_t>(N));
    const int jx = static_cast<int>(rest / static_cast<std::size_t>(N));
    return {jx - N / 2, jy - N / 2, mz[jz]};
}

Vec3 FourierField::wave_vector(std::size_t i) const {
    const auto m = mode(i);
    const double s = 2.0 * kPi / L;
    return {s * m[0], s * m[1], s * m[2]};
}

long FourierField::find(int mx, int my, int mz_value) const {
    const int h = N / 2;
    if (mx < -h || mx >= h || my < -h || my >= h) {
        return -1;
    }
    auto it = std::lower_bound(mz.begin(), mz.end(), mz_value);
    if (it == mz.end() || *it != mz_value) {
        return -1;
    }
    return static_cast<long>(index_of(mx + h, my + h, static_cast<std::size_t>(it - mz.begin())));
}

void FourierField::validate() const {
    for (std::size_t j = 0; j < mz.size(); ++j) {
        if (mz[j] < -N / 2 || mz[j] >= N / 2 || (j > 0 && mz[j] <= mz[j - 1])) {
            throw InvalidArgument("FourierField: m_z list must be ascending within [-N/2, N/2)");
        }
    }
    if (coeffs.size() != static_cast<std::size_t>(N) * static_cast<std::size_t>(N) * mz.size()) {
        throw InvalidArgument("FourierField: coefficient count does not match mode set");
    }
}

Vec3 mode_vector(int N, double L, std::size_t lex) {
    const auto n = static_cast<std::size_t>(N);
    if (lex >= n * n * n) {
        throw InvalidArgument("mode_vector: index out of range");
    }
    const double s = 2.0 * kPi / L;
    const int mz = static_cast<int>(lex % n) - N / 2;
    const int my = static_cast<int>((lex / n) % n) - N / 2;
    const int mx = static_cast<int>(lex / (n * n)) - N / 2;
    return {s * mx, s * my, s * mz};
}

std::size_t mode_index(int N, int mx, int my, int mz) {
    const int h = N / 2;
    if (mx < -h || mx >= h || my < -h || my >= h || mz < -h || mz >= h) {
        throw InvalidArgument("mode_index: mode outside [-N/2, N/2)");
    }
    const auto n = static_cast<std::size_t>(N);
    return (static_cast<std::size_t>(mx + h) * n + static_cast<std::size_t>(my + h)) * n +
           static_cast<std::size_t>(mz + h);
}

EField poisson_efield(const FourierField& rho) {
    rho.validate();
    EField e;
    for (auto& c : e) {
        c = rho;
        c.units = FieldUnits::FieldComponent;
    }
    const int h = rho.N / 2;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        const auto m = rho.mode(i);
        const bool nyquist = m[0] == -h || m[1] == -h || m[2] == -h;
        const bool zero = m[0] == 0 && m[1] == 0 && m[2] == 0;
        if (nyquist || zero) {
            for (auto& c : e) {
                c.coeffs[i] = cplx{};
            }
            continue;
        }
        const Vec3 k = rho.wave_vector(i);
        const double k2 = dot(k, k);
        const cplx f = cplx(0.0, -1.0) * rho.coeffs[i] / k2;
        for (int d = 0; d < 3; ++d) {
            e[static_cast<std::size_t>(d)].coeffs[i] = k[static_cast<std::size_t>(d)] * f;
        }
    }
    return e;
}

double field_energy(const EField& e) {
    double s = 0.0;
    for (const auto& c : e) {
        for (const auto& v : c.coeffs) {
            s += std::norm(v);
        }
    }
    const double L = e[0].L;
    return 0.5 * L * L * L * s;
}

double fundamental_mode_energy(const EField& e) {
    static constexpr int kModes[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    double s = 0.0;
    for (const auto& m : kModes) {
        const long i = e[0].find(m[0], m[1], m[2]);
        if (i < 0) {
            continue;
        }
        for (const auto& c : e) {
            s += std::norm(c.coeffs[static_cast<std::size_t>(i)]);
        }
    }
    const double L = e[0].L;
    return 0.5 * L * L * L * s;
}

FourierField assemble(std::span<const FourierField> parts) {
    if (parts.empty()) {
        throw InvalidArgument("assemble: no parts");
    }
    auto out = FourierField::zeros(parts[0].N, parts[0].L, parts[0].units);
    std::vector<bool> seen(static_cast<std::size_t>(out.N), false);
    const int h = out.N / 2;
    for (const auto& p : parts) {
        if (p.N != out.N) {
            throw InvalidArgument("assemble: inconsistent N");
        }
        for (std::size_t j = 0; j < p.nz(); ++j) {
            const auto jz = static_cast<std::size_t>(p.mz[j] + h);
            if (seen[jz]) {
                throw InvalidArgument("assemble: overlapping portions");
            }
            seen[jz] = true;
            for (int jx = 0; jx < out.N; ++jx) {
                for (int jy = 0; jy < out.N; ++jy) {
                    out.coeffs[out.index_of(jx, jy, jz)] = p.coeffs[p.index_of(jx, jy, j)];
                }
            }
        }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
        throw InvalidArgument("assemble: portions do not cover the mode set");
    }
    return out;
}

double hermitian_defect(const FourierField& f) {
    if (!f.complete()) {
        throw InvalidArgument("hermitian_defect: needs a complete field");
    }
    const int h = f.N / 2;
    double worst = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto m = f.mode(i);
        if (m[0] == -h || m[1] == -h || m[2] == -h) {
            continue;
        }
        const auto j = mode_index(f.N, -m[0], -m[1], -m[2]);
        worst = std::max(worst, std::abs(f.coeffs[j] - std::conj(f.coeffs[i])));
    }
    return worst;
}

}  // namespace pifsim

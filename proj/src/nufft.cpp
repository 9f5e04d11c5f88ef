#include "pifsim/nufft.hpp"

#include <algorithm>
#include <cmath>

namespace pifsim::nufft {

namespace {

constexpr int kMaxW = 17;

int pmod(int a, int n) {
    const int r = a % n;
    return r < 0 ? r + n : r;
}

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(static_cast<std::size_t>(n), 0.0);
    w.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) {
                break;
            }
        }
        x[static_cast<std::size_t>(i)] = -z;
        x[static_cast<std::size_t>(n - 1 - i)] = z;
        const double wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[static_cast<std::size_t>(i)] = wi;
        w[static_cast<std::size_t>(n - 1 - i)] = wi;
    }
}

void check_finite(std::span<const Vec3> points) {
    for (const auto& p : points) {
        if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
            throw InvalidArgument("nufft: non-finite point coordinate");
        }
    }
}

template <class T>
void check_finite_values(std::span<const T> v) {
    for (const auto& s : v) {
        if constexpr (std::is_same_v<T, cplx>) {
            if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) {
                throw InvalidArgument("nufft: non-finite strength");
            }
        } else {
            if (!std::isfinite(s)) {
                throw InvalidArgument("nufft: non-finite strength");
            }
        }
    }
}

// Window weights of one point along the three axes.
struct Footprint {
    int i0[3];
    double wgt[3][kMaxW];
};

inline void footprint(const Plan& plan, const Vec3& x, Footprint& fp) {
    const int w = plan.window.w;
    const double half = 0.5 * w;
    const double inv_half = 1.0 / half;
    const double h = plan.spacing();
    const double beta = plan.window.beta;
    for (int d = 0; d < 3; ++d) {
        const double u = wrap_periodic(x[static_cast<std::size_t>(d)], plan.L) / h;
        const int i0 = static_cast<int>(std::ceil(u - half));
        fp.i0[d] = i0;
        for (int a = 0; a < w; ++a) {
            const double t = (i0 + a - u) * inv_half;
            const double s = 1.0 - t * t;
            fp.wgt[d][a] = s > 0.0 ? std::exp(beta * (std::sqrt(s) - 1.0)) : (s == 0.0 ? std::exp(-beta) : 0.0);
        }
    }
}

void wrapped_indices(int i0, int w, int n, int* out) {
    if (i0 >= 0 && i0 + w <= n) {
        for (int a = 0; a < w; ++a) out[a] = i0 + a;
    } else {
        for (int a = 0; a < w; ++a) out[a] = pmod(i0 + a, n);
    }
}

// Point indices ordered by coarse grid bin, so that consecutive stencils
// touch nearby memory. Counting sort, stable within a bin.
std::vector<std::size_t> bin_order(const Plan& plan, std::span<const Vec3> points) {
    constexpr int kBin = 8;
    const int nb = (plan.n_up + kBin - 1) / kBin;
    const double scale = 1.0 / (plan.spacing() * kBin);
    std::vector<std::size_t> key(points.size());
    std::vector<std::size_t> start(static_cast<std::size_t>(nb) * nb * nb + 1, 0);
    for (std::size_t j = 0; j < points.size(); ++j) {
        int b[3];
        for (int d = 0; d < 3; ++d) {
            const double u = wrap_periodic(points[j][static_cast<std::size_t>(d)], plan.L) * scale;
            b[d] = std::clamp(static_cast<int>(u), 0, nb - 1);
        }
        key[j] = (static_cast<std::size_t>(b[2]) * nb + static_cast<std::size_t>(b[1])) * nb +
                 static_cast<std::size_t>(b[0]);
        ++start[key[j] + 1];
    }
    for (std::size_t i = 1; i < start.size(); ++i) {
        start[i] += start[i - 1];
    }
    std::vector<std::size_t> order(points.size());
    for (std::size_t j = 0; j < points.size(); ++j) {
        order[start[key[j]]++] = j;
    }
    return order;
}

// Adds strengths into planes [z_base, z_base + depth) of an n x n x depth grid.
// With wrap_z the grid is the full periodic cube and z_base must be 0.
template <class T>
void spread(const Plan& plan, std::span<const Vec3> points, std::span<const T> strengths, T* grid, int z_base,
            int depth, bool wrap_z) {
    const int n = plan.n_up;
    const int w = plan.window.w;
    Footprint fp;
    int ix[kMaxW];
    int iy[kMaxW];
    for (const std::size_t j : bin_order(plan, points)) {
        footprint(plan, points[j], fp);
        wrapped_indices(fp.i0[0], w, n, ix);
        wrapped_indices(fp.i0[1], w, n, iy);
        const T s = strengths[j];
        for (int c = 0; c < w; ++c) {
            const int z = fp.i0[2] + c;
            const int zi = wrap_z ? pmod(z, n) : z - z_base;
            if (zi < 0 || zi >= depth) {
                throw Error("nufft: spreading stencil leaves the local slab");
            }
            const T sz = s * fp.wgt[2][c];
            T* plane = grid + static_cast<std::size_t>(zi) * n * n;
            for (int b = 0; b < w; ++b) {
                const T syz = sz * fp.wgt[1][b];
                T* row = plane + static_cast<std::size_t>(iy[b]) * n;
                for (int a = 0; a < w; ++a) {
                    row[ix[a]] += syz * fp.wgt[0][a];
                }
            }
        }
    }
}

// Window-weighted sums of NF interleaved grids (value f of node i at i * NF + f) at each point.
template <class T, int NF>
void interpolate(const Plan& plan, std::span<const Vec3> points, const T* grid, int z_base,
                 int depth, bool wrap_z, std::array<T*, NF> out) {
    const int n = plan.n_up;
    const int w = plan.window.w;
    Footprint fp;
    int ix[kMaxW];
    int iy[kMaxW];
    for (const std::size_t j : bin_order(plan, points)) {
        footprint(plan, points[j], fp);
        wrapped_indices(fp.i0[0], w, n, ix);
        wrapped_indices(fp.i0[1], w, n, iy);
        std::array<T, NF> acc{};
        for (int c = 0; c < w; ++c) {
            const int z = fp.i0[2] + c;
            const int zi = wrap_z ? pmod(z, n) : z - z_base;
            if (zi < 0 || zi >= depth) {
                throw Error("nufft: interpolation stencil leaves the local slab");
            }
            const std::size_t plane = static_cast<std::size_t>(zi) * n * n;
            std::array<T, NF> accz{};
            for (int b = 0; b < w; ++b) {
                const std::size_t row = plane + static_cast<std::size_t>(iy[b]) * n;
                std::array<T, NF> accy{};
                for (int a = 0; a < w; ++a) {
                    const double wx = fp.wgt[0][a];
                    const T* node = grid + (row + static_cast<std::size_t>(ix[a])) * NF;
                    for (int f = 0; f < NF; ++f) {
                        accy[f] += node[f] * wx;
                    }
                }
                for (int f = 0; f < NF; ++f) {
                    accz[f] += accy[f] * fp.wgt[1][b];
                }
            }
            for (int f = 0; f < NF; ++f) {
                acc[f] += accz[f] * fp.wgt[2][c];
            }
        }
        for (int f = 0; f < NF; ++f) {
            out[f][j] = acc[f];
        }
    }
}

std::size_t grid_index(int n, int gx, int gy, int gz) {
    return (static_cast<std::size_t>(gz) * n + static_cast<std::size_t>(gy)) * n + static_cast<std::size_t>(gx);
}

// Reads deconvolved modes out of spectrum planes [z0, z0 + depth).
void extract_modes(const Plan& plan, const std::vector<cplx>& spec, int z0, FourierField& out) {
    const int n = plan.n_up;
    const int N = plan.N;
    for (std::size_t jz = 0; jz < out.nz(); ++jz) {
        const int mz = out.mz[jz];
        const int gz = pmod(mz, n) - z0;
        const double dz = plan.deconv_at(mz);
        for (int jx = 0; jx < N; ++jx) {
            const int mx = jx - N / 2;
            const int gx = pmod(mx, n);
            const double dxz = plan.deconv_at(mx) * dz;
            for (int jy = 0; jy < N; ++jy) {
                const int my = jy - N / 2;
                const double dd = dxz * plan.deconv_at(my);
                out.coeffs[out.index_of(jx, jy, jz)] = spec[grid_index(n, gx, pmod(my, n), gz)] * dd;
            }
        }
    }
}

// Writes deconvolved modes into zeroed spectrum planes [z0, z0 + depth).
void insert_modes(const Plan& plan, const FourierField& f, int z0, std::vector<cplx>& spec) {
    const int n = plan.n_up;
    const int N = plan.N;
    for (std::size_t jz = 0; jz < f.nz(); ++jz) {
        const int mz = f.mz[jz];
        const int gz = pmod(mz, n) - z0;
        const double dz = plan.deconv_at(mz);
        for (int jx = 0; jx < N; ++jx) {
            const int mx = jx - N / 2;
            const int gx = pmod(mx, n);
            const double dxz = plan.deconv_at(mx) * dz;
            for (int jy = 0; jy < N; ++jy) {
                const int my = jy - N / 2;
                const double dd = dxz * plan.deconv_at(my);
                spec[grid_index(n, gx, pmod(my, n), gz)] = f.coeffs[f.index_of(jx, jy, jz)] * dd;
            }
        }
    }
}

void check_field(const Plan& plan, const FourierField& f) {
    f.validate();
    if (f.N != plan.N) {
        throw InvalidArgument("nufft: field N does not match plan");
    }
    for (const auto& v : f.coeffs) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
            throw InvalidArgument("nufft: non-finite mode coefficient");
        }
    }
}

void check_real_grid(const std::vector<cplx>& g) {
    double mag = 0.0;
    double res = 0.0;
    for (const auto& v : g) {
        mag = std::max(mag, std::abs(v.real()));
        res = std::max(res, std::abs(v.imag()));
    }
    if (res > 1e-10 * mag) {
        throw Error("gather: imaginary residue " + std::to_string(res) + " exceeds 1e-10 of field magnitude " +
                    std::to_string(mag) + " (field is not Hermitian)");
    }
}

template <class T>
FourierField type1_impl(const Plan& plan, std::span<const Vec3> points, std::span<const T> strengths) {
    if (points.size() != strengths.size()) {
        throw InvalidArgument("type1: points and strengths differ in length");
    }
    check_finite(points);
    check_finite_values(strengths);
    const int n = plan.n_up;
    const std::size_t total = static_cast<std::size_t>(n) * n * n;
    std::vector<cplx> grid;
    if constexpr (std::is_same_v<T, cplx>) {
        grid.assign(total, cplx{});
        spread<cplx>(plan, points, strengths, grid.data(), 0, n, true);
    } else {
        std::vector<double> real(total, 0.0);
        spread<double>(plan, points, strengths, real.data(), 0, n, true);
        grid.assign(real.begin(), real.end());
    }
    fft::fft3d(grid, n, fft::Direction::Forward);
    auto out = FourierField::zeros(plan.N, plan.L, FieldUnits::ChargeDensity);
    extract_modes(plan, grid, 0, out);
    return out;
}

// Slab helpers for the distributed transforms.
struct SlabGeometry {
    int rank;
    int z0;
    int depth;
    int halo;
    int n;
    int left;
    int right;
    std::size_t plane() const { return static_cast<std::size_t>(n) * n; }
};

SlabGeometry geometry(comm::Communicator& comm, const fft::SlabLayout& layout, const Plan& plan) {
    layout.validate();
    if (layout.parts() != comm.size()) {
        throw InvalidArgument("nufft: layout slab count does not match communicator size");
    }
    if (layout.n != plan.n_up) {
        throw InvalidArgument("nufft: layout grid size does not match plan");
    }
    if (layout.halo < plan.halo()) {
        throw InvalidArgument("nufft: layout halo thinner than window half-width");
    }
    const int r = comm.rank();
    const auto topo = comm::SlabTopology::periodic(r, comm.size());
    return {r, layout.begin(r), layout.counts[static_cast<std::size_t>(r)], plan.halo(), plan.n_up, topo.left,
            topo.right};
}

void check_in_slab(const Plan& plan, const SlabGeometry& g, std::span<const Vec3> points) {
    for (const auto& p : points) {
        const int z = owner_plane(plan, p[2]);
        if (z < g.z0 || z >= g.z0 + g.depth) {
            throw InvalidArgument("dd nufft: point with z=" + std::to_string(p[2]) + " lies outside slab of rank " +
                                  std::to_string(g.rank) + " (migrate before depositing)");
        }
    }
}

std::vector<cplx> recv_planes(comm::Communicator& comm, int src, std::size_t expect) {
    auto v = comm.recv(src).to_complex();
    if (v.size() != expect) {
        throw Error("dd nufft: halo message has unexpected size");
    }
    return v;
}

// Buffer holds planes [z0 - H, z0 + depth + H). Ghost planes are added onto the
// neighbours' owned planes.
void accumulate_halos(comm::Communicator& comm, const SlabGeometry& g, std::vector<cplx>& buf, TimerSet* timers) {
    TimedScope t(timers, TimerCategory::FieldHalo);
    const std::size_t pl = g.plane();
    const std::size_t hs = static_cast<std::size_t>(g.halo) * pl;
    const auto H = static_cast<std::size_t>(g.halo);
    const auto d = static_cast<std::size_t>(g.depth);
    comm.send(g.left, comm::Payload::from_complex(std::span<const cplx>(buf.data(), hs)));
    comm.send(g.right, comm::Payload::from_complex(std::span<const cplx>(buf.data() + (H + d) * pl, hs)));
    const auto from_right = recv_planes(comm, g.right, hs);
    cplx* top = buf.data() + d * pl;
    for (std::size_t i = 0; i < hs; ++i) {
        top[i] += from_right[i];
    }
    const auto from_left = recv_planes(comm, g.left, hs);
    cplx* bottom = buf.data() + H * pl;
    for (std::size_t i = 0; i < hs; ++i) {
        bottom[i] += from_left[i];
    }
}

// Fills ghost planes of a buffer [z0 - H, z0 + depth + H) from the neighbours.
void fill_halos(comm::Communicator& comm, const SlabGeometry& g, std::vector<cplx>& buf, TimerSet* timers) {
    TimedScope t(timers, TimerCategory::FieldHalo);
    const std::size_t pl = g.plane();
    const std::size_t hs = static_cast<std::size_t>(g.halo) * pl;
    const auto H = static_cast<std::size_t>(g.halo);
    const auto d = static_cast<std::size_t>(g.depth);
    comm.send(g.left, comm::Payload::from_complex(std::span<const cplx>(buf.data() + H * pl, hs)));
    comm.send(g.right, comm::Payload::from_complex(std::span<const cplx>(buf.data() + d * pl, hs)));
    const auto from_right = recv_planes(comm, g.right, hs);
    std::copy(from_right.begin(), from_right.end(), buf.begin() + static_cast<std::ptrdiff_t>((H + d) * pl));
    const auto from_left = recv_planes(comm, g.left, hs);
    std::copy(from_left.begin(), from_left.end(), buf.begin());
}

template <class T>
FourierField dd_type1_impl(comm::Communicator& comm, const fft::SlabLayout& layout, const Plan& plan,
                           std::span<const Vec3> points, std::span<const T> strengths, TimerSet* timers) {
    if (comm.size() == 1) {
        return type1_impl<T>(plan, points, strengths);
    }
    if (points.size() != strengths.size()) {
        throw InvalidArgument("dd_type1: points and strengths differ in length");
    }
    check_finite(points);
    check_finite_values(strengths);
    const auto g = geometry(comm, layout, plan);
    check_in_slab(plan, g, points);
    const std::size_t pl = g.plane();
    const int span_planes = g.depth + 2 * g.halo;
    std::vector<cplx> buf;
    if constexpr (std::is_same_v<T, cplx>) {
        buf.assign(static_cast<std::size_t>(span_planes) * pl, cplx{});
        spread<cplx>(plan, points, strengths, buf.data(), g.z0 - g.halo, span_planes, false);
    } else {
        std::vector<double> real(static_cast<std::size_t>(span_planes) * pl, 0.0);
        spread<double>(plan, points, strengths, real.data(), g.z0 - g.halo, span_planes, false);
        buf.assign(real.begin(), real.end());
    }
    accumulate_halos(comm, g, buf, timers);
    std::vector<cplx> local(buf.begin() + static_cast<std::ptrdiff_t>(g.halo * pl),
                            buf.begin() + static_cast<std::ptrdiff_t>((g.halo + g.depth) * pl));
    buf.clear();
    buf.shrink_to_fit();
    fft::distributed_fft(comm, layout, local, fft::Direction::Forward, timers);
    auto out = FourierField::zeros_subset(plan.N, plan.L, owned_mz(plan, layout, g.rank));
    extract_modes(plan, local, g.z0, out);
    return out;
}

// Backward transform of owned modes into a halo-padded real-space slab buffer.
std::vector<cplx> dd_backward_padded(comm::Communicator& comm, const fft::SlabLayout& layout, const Plan& plan,
                                     const SlabGeometry& g, const FourierField& owned, bool check_real,
                                     TimerSet* timers) {
    check_field(plan, owned);
    if (owned.mz != owned_mz(plan, layout, g.rank)) {
        throw InvalidArgument("dd_type2: field does not hold this rank's owned modes");
    }
    const std::size_t pl = g.plane();
    std::vector<cplx> local(static_cast<std::size_t>(g.depth) * pl, cplx{});
    insert_modes(plan, owned, g.z0, local);
    fft::distributed_fft(comm, layout, local, fft::Direction::Backward, timers);
    if (check_real) {
        check_real_grid(local);
        for (auto& v : local) {
            v = cplx(v.real(), 0.0);
        }
    }
    std::vector<cplx> buf(static_cast<std::size_t>(g.depth + 2 * g.halo) * pl, cplx{});
    std::copy(local.begin(), local.end(), buf.begin() + static_cast<std::ptrdiff_t>(g.halo * pl));
    fill_halos(comm, g, buf, timers);
    return buf;
}

}  // namespace

double WindowSpec::eval(double t) const {
    if (std::abs(t) > 1.0) {
        return 0.0;
    }
    return std::exp(beta * (std::sqrt(1.0 - t * t) - 1.0));
}

Plan make_plan(int N, double L, double eps) {
    if (N < 4 || N % 2 != 0) {
        throw InvalidArgument("make_plan: N must be even and >= 4");
    }
    if (!(eps >= 1e-16 && eps <= 1e-1)) {
        throw InvalidArgument("make_plan: eps must lie in [1e-16, 1e-1]");
    }
    if (!(L > 0.0) || !std::isfinite(L)) {
        throw InvalidArgument("make_plan: L must be positive and finite");
    }
    Plan p;
    p.N = N;
    p.L = L;
    p.eps = eps;
    // Small guard so that exact powers of ten are not pushed up by rounding of log10.
    p.window.w = static_cast<int>(std::ceil(std::abs(std::log10(eps)) - 1e-9)) + 1;
    p.window.sigma = 2.0;
    p.window.beta = 2.30 * p.window.w;
    p.n_up = static_cast<int>(std::ceil(p.window.sigma * N));
    if (p.n_up % 2 != 0) {
        ++p.n_up;
    }

    std::vector<double> nodes;
    std::vector<double> weights;
    gauss_legendre(256, nodes, weights);
    const double half = 0.5 * p.window.w;
    p.deconv.assign(static_cast<std::size_t>(N), 0.0);
    std::vector<double> psi(static_cast<std::size_t>(N / 2 + 1), 0.0);
    for (int m = 0; m <= N / 2; ++m) {
        double s = 0.0;
        for (std::size_t q = 0; q < nodes.size(); ++q) {
            const double t = nodes[q];
            s += weights[q] * p.window.eval(t) * std::cos(2.0 * kPi * m * half * t / p.n_up);
        }
        psi[static_cast<std::size_t>(m)] = half * s;
    }
    for (int m = -N / 2; m < N / 2; ++m) {
        const double v = psi[static_cast<std::size_t>(std::abs(m))];
        if (!(v > 0.0) || !std::isfinite(1.0 / v)) {
            throw Error("make_plan: window transform not positive");
        }
        p.deconv[static_cast<std::size_t>(m + N / 2)] = 1.0 / v;
    }
    return p;
}

FourierField type1(const Plan& plan, std::span<const Vec3> points, std::span<const cplx> strengths) {
    return type1_impl<cplx>(plan, points, strengths);
}

FourierField type1_real(const Plan& plan, std::span<const Vec3> points, std::span<const double> strengths) {
    return type1_impl<double>(plan, points, strengths);
}

std::vector<cplx> type2(const Plan& plan, const FourierField& modes, std::span<const Vec3> points) {
    check_field(plan, modes);
    if (!modes.complete()) {
        throw InvalidArgument("type2: field must hold the complete mode set");
    }
    check_finite(points);
    const int n = plan.n_up;
    std::vector<cplx> grid(static_cast<std::size_t>(n) * n * n, cplx{});
    insert_modes(plan, modes, 0, grid);
    fft::fft3d(grid, n, fft::Direction::Backward);
    std::vector<cplx> out(points.size());
    interpolate<cplx, 1>(plan, points, grid.data(), 0, n, true, {out.data()});
    return out;
}

std::array<std::vector<double>, 3> type2_real3(const Plan& plan, const EField& fields, std::span<const Vec3> points) {
    check_finite(points);
    const int n = plan.n_up;
    const std::size_t total = static_cast<std::size_t>(n) * n * n;
    std::vector<double> real(3 * total);
    for (int d = 0; d < 3; ++d) {
        const auto& f = fields[static_cast<std::size_t>(d)];
        check_field(plan, f);
        if (!f.complete()) {
            throw InvalidArgument("type2: field must hold the complete mode set");
        }
        std::vector<cplx> grid(total, cplx{});
        insert_modes(plan, f, 0, grid);
        fft::fft3d(grid, n, fft::Direction::Backward);
        check_real_grid(grid);
        for (std::size_t i = 0; i < total; ++i) {
            real[3 * i + static_cast<std::size_t>(d)] = grid[i].real();
        }
    }
    std::array<std::vector<double>, 3> out;
    for (auto& o : out) {
        o.assign(points.size(), 0.0);
    }
    interpolate<double, 3>(plan, points, real.data(), 0, n, true,
                           {out[0].data(), out[1].data(), out[2].data()});
    return out;
}

FourierField direct_type1(int N, double L, std::span<const Vec3> points, std::span<const cplx> strengths) {
    if (points.size() != strengths.size()) {
        throw InvalidArgument("direct_type1: points and strengths differ in length");
    }
    check_finite(points);
    auto out = FourierField::zeros(N, L, FieldUnits::ChargeDensity);
    const auto n = static_cast<std::size_t>(N);
    std::vector<cplx> ex(n), ey(n), ez(n);
    for (std::size_t j = 0; j < points.size(); ++j) {
        for (int m = -N / 2; m < N / 2; ++m) {
            const double k = 2.0 * kPi * m / L;
            const auto i = static_cast<std::size_t>(m + N / 2);
            ex[i] = std::polar(1.0, -k * points[j][0]);
            ey[i] = std::polar(1.0, -k * points[j][1]);
            ez[i] = std::polar(1.0, -k * points[j][2]);
        }
        for (std::size_t a = 0; a < n; ++a) {
            const cplx ca = strengths[j] * ex[a];
            for (std::size_t b = 0; b < n; ++b) {
                const cplx cab = ca * ey[b];
                cplx* dst = out.coeffs.data() + (a * n + b) * n;
                for (std::size_t c = 0; c < n; ++c) {
                    dst[c] += cab * ez[c];
                }
            }
        }
    }
    return out;
}

std::vector<cplx> direct_type2(const FourierField& modes, std::span<const Vec3> points) {
    modes.validate();
    check_finite(points);
    const int N = modes.N;
    const double L = modes.L;
    const auto n = static_cast<std::size_t>(N);
    std::vector<cplx> out(points.size());
    std::vector<cplx> ex(n), ey(n), ez(modes.nz());
    for (std::size_t j = 0; j < points.size(); ++j) {
        for (int m = -N / 2; m < N / 2; ++m) {
            const double k = 2.0 * kPi * m / L;
            const auto i = static_cast<std::size_t>(m + N / 2);
            ex[i] = std::polar(1.0, k * points[j][0]);
            ey[i] = std::polar(1.0, k * points[j][1]);
        }
        for (std::size_t c = 0; c < modes.nz(); ++c) {
            ez[c] = std::polar(1.0, 2.0 * kPi * modes.mz[c] / L * points[j][2]);
        }
        cplx s{};
        for (std::size_t a = 0; a < n; ++a) {
            cplx sa{};
            for (std::size_t b = 0; b < n; ++b) {
                const cplx* src = modes.coeffs.data() + (a * n + b) * modes.nz();
                cplx sb{};
                for (std::size_t c = 0; c < modes.nz(); ++c) {
                    sb += src[c] * ez[c];
                }
                sa += sb * ey[b];
            }
            s += sa * ex[a];
        }
        out[j] = s;
    }
    return out;
}

int owner_plane(const Plan& plan, double z) {
    const double u = wrap_periodic(z, plan.L) / plan.spacing();
    const int p = static_cast<int>(std::floor(u));
    return std::clamp(p, 0, plan.n_up - 1);
}

std::vector<int> owned_mz(const Plan& plan, const fft::SlabLayout& layout, int rank) {
    std::vector<int> out;
    const int z0 = layout.begin(rank);
    const int z1 = layout.end(rank);
    for (int m = -plan.N / 2; m < plan.N / 2; ++m) {
        const int g = pmod(m, plan.n_up);
        if (g >= z0 && g < z1) {
            out.push_back(m);
        }
    }
    return out;
}

fft::SlabLayout slab_layout(const Plan& plan, int parts) {
    return fft::SlabLayout::balanced(plan.n_up, parts, plan.halo());
}

FourierField dd_type1(comm::Communicator& comm, const fft::SlabLayout& layout, const Plan& plan,
                      std::span<const Vec3> points, std::span<const cplx> strengths, TimerSet* timers) {
    return dd_type1_impl<cplx>(comm, layout, plan, points, strengths, timers);
}

FourierField dd_type1_real(comm::Communicator& comm, const fft::SlabLayout& layout, const Plan& plan,
                           std::span<const Vec3> points, std::span<const double> strengths, TimerSet* timers) {
    return dd_type1_impl<double>(comm, layout, plan, points, strengths, timers);
}

std::vector<cplx> dd_type2(comm::Communicator& comm, const fft::SlabLayout& layout, const Plan& plan,
                           const FourierField& owned, std::span<const Vec3> points, TimerSet* timers) {
    if (comm.size() == 1) {
        return type2(plan, owned, points);
    }
    check_finite(points);
    const auto g = geometry(comm, layout, plan);
    check_in_slab(plan, g, points);
    const auto buf = dd_backward_padded(comm, layout, plan, g, owned, false, timers);
    std::vector<cplx> out(points.size());
    interpolate<cplx, 1>(plan, points, buf.data(), g.z0 - g.halo, g.depth + 2 * g.halo, false, {out.data()});
    return out;
}

std::array<std::vector<double>, 3> dd_type2_real3(comm::Communicator& comm, const fft::SlabLayout& layout,
                                                  const Plan& plan, const EField& owned,
                                                  std::span<const Vec3> points, TimerSet* timers) {
    if (comm.size() == 1) {
        return type2_real3(plan, owned, points);
    }
    check_finite(points);
    const auto g = geometry(comm, layout, plan);
    check_in_slab(plan, g, points);
    std::vector<double> real;
    for (int d = 0; d < 3; ++d) {
        const auto buf = dd_backward_padded(comm, layout, plan, g, owned[static_cast<std::size_t>(d)], true, timers);
        real.resize(3 * buf.size());
        for (std::size_t i = 0; i < buf.size(); ++i) {
            real[3 * i + static_cast<std::size_t>(d)] = buf[i].real();
        }
    }
    std::array<std::vector<double>, 3> out;
    for (auto& o : out) {
        o.assign(points.size(), 0.0);
    }
    interpolate<double, 3>(plan, points, real.data(), g.z0 - g.halo,
                           g.depth + 2 * g.halo, false, {out[0].data(), out[1].data(), out[2].data()});
    return out;
}

}  // namespace pifsim::nufft

#include "pifsim/pif.hpp"

#include <cmath>

namespace pifsim {

// ---------------------------------------------------------------------------
// ParticleEnsemble

void ParticleEnsemble::reserve(std::size_t n) {
    x.reserve(n);
    v.reserve(n);
    q.reserve(n);
    m.reserve(n);
    ids.reserve(n);
}

void ParticleEnsemble::push_back(const Vec3& xi, const Vec3& vi, double qi, double mi, std::uint64_t id) {
    x.push_back(xi);
    v.push_back(vi);
    q.push_back(qi);
    m.push_back(mi);
    ids.push_back(id);
}

void ParticleEnsemble::validate() const {
    const std::size_t n = ids.size();
    if (x.size() != n || v.size() != n || q.size() != n || m.size() != n) {
        throw InvalidArgument("ParticleEnsemble: attribute arrays differ in length");
    }
}

comm::ParticleBatch ParticleEnsemble::to_batch() const {
    return comm::ParticleBatch{x, v, q, m, ids};
}

ParticleEnsemble ParticleEnsemble::from_batch(comm::ParticleBatch b) {
    ParticleEnsemble p;
    p.x = std::move(b.x);
    p.v = std::move(b.v);
    p.q = std::move(b.q);
    p.m = std::move(b.m);
    p.ids = std::move(b.ids);
    p.validate();
    return p;
}

void ParticleEnsemble::append(const ParticleEnsemble& o) {
    x.insert(x.end(), o.x.begin(), o.x.end());
    v.insert(v.end(), o.v.begin(), o.v.end());
    q.insert(q.end(), o.q.begin(), o.q.end());
    m.insert(m.end(), o.m.begin(), o.m.end());
    ids.insert(ids.end(), o.ids.begin(), o.ids.end());
}

ParticleEnsemble ParticleEnsemble::select(std::span<const std::size_t> idx) const {
    ParticleEnsemble p;
    p.reserve(idx.size());
    for (std::size_t i : idx) {
        p.push_back(x[i], v[i], q[i], m[i], ids[i]);
    }
    return p;
}

// ---------------------------------------------------------------------------
// External fields

ExternalFields ExternalFields::penning(double L, const Vec3& B) {
    ExternalFields e;
    e.B = B;
    e.electric = Electric::Quadrupole;
    e.L = L;
    return e;
}

Vec3 ExternalFields::eval(const Vec3& x) const {
    if (electric == Electric::None) {
        return {0.0, 0.0, 0.0};
    }
    const double c = 0.5 * L;
    return {-15.0 / L * (x[0] - c), -15.0 / L * (x[1] - c), 30.0 / L * (x[2] - c)};
}

double ExternalFields::potential(const Vec3& x) const {
    if (electric == Electric::None) {
        return 0.0;
    }
    const double c = 0.5 * L;
    const double dx = x[0] - c;
    const double dy = x[1] - c;
    const double dz = x[2] - c;
    return 7.5 / L * (dx * dx + dy * dy) - 15.0 / L * dz * dz;
}

// ---------------------------------------------------------------------------
// Deposit / gather / push

double shape_factor_1d(Shape s, int m, int N) {
    if (s == Shape::Delta || m == 0) {
        return 1.0;
    }
    const double a = kPi * m / N;
    const double sinc = std::sin(a) / a;
    return sinc * sinc;
}

namespace {

void apply_shape(FourierField& f, Shape shape, double extra) {
    if (shape == Shape::Delta && extra == 1.0) {
        return;
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto m = f.mode(i);
        const double s = shape_factor_1d(shape, m[0], f.N) * shape_factor_1d(shape, m[1], f.N) *
                         shape_factor_1d(shape, m[2], f.N);
        f.coeffs[i] *= s * extra;
    }
}

void zero_mean(FourierField& f) {
    const long i0 = f.find(0, 0, 0);
    if (i0 >= 0) {
        f.coeffs[static_cast<std::size_t>(i0)] = cplx{};
    }
}

double cube(double L) { return L * L * L; }

FourierField finish_density(FourierField rho, Shape shape) {
    apply_shape(rho, shape, 1.0 / cube(rho.L));
    zero_mean(rho);
    return rho;
}

EField shaped(const EField& e, Shape shape) {
    EField out = e;
    for (auto& c : out) {
        apply_shape(c, shape, 1.0);
    }
    return out;
}

std::vector<Vec3> to_vec3(const std::array<std::vector<double>, 3>& c) {
    std::vector<Vec3> out(c[0].size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = {c[0][j], c[1][j], c[2][j]};
    }
    return out;
}

}  // namespace

FourierField deposit_charge(const ParticleEnsemble& p, const nufft::Plan& plan, Shape shape) {
    p.validate();
    return finish_density(nufft::type1_real(plan, p.x, p.q), shape);
}

std::vector<Vec3> gather_efield(const EField& e, const ParticleEnsemble& p, const nufft::Plan& plan, Shape shape) {
    p.validate();
    if (shape == Shape::Delta) {
        return to_vec3(nufft::type2_real3(plan, e, p.x));
    }
    return to_vec3(nufft::type2_real3(plan, shaped(e, shape), p.x));
}

void boris_push(ParticleEnsemble& p, std::span<const Vec3> e_self, const ExternalFields& ext, double dt, double L) {
    p.validate();
    if (e_self.size() != p.size()) {
        throw InvalidArgument("boris_push: field count does not match particle count");
    }
    const bool has_b = ext.B[0] != 0.0 || ext.B[1] != 0.0 || ext.B[2] != 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double qm = p.q[j] / p.m[j];
        const double a = 0.5 * dt * qm;
        const Vec3 e = ext.electric == ExternalFields::Electric::None ? e_self[j] : e_self[j] + ext.eval(p.x[j]);
        Vec3 v = p.v[j] + a * e;
        if (has_b) {
            const Vec3 t = a * ext.B;
            const Vec3 s = (2.0 / (1.0 + dot(t, t))) * t;
            const Vec3 vp = v + cross(v, t);
            v = v + cross(vp, s);
        }
        v = v + a * e;
        p.v[j] = v;
        for (int d = 0; d < 3; ++d) {
            const auto i = static_cast<std::size_t>(d);
            p.x[j][i] = wrap_periodic(p.x[j][i] + dt * v[i], L);
        }
    }
}

// ---------------------------------------------------------------------------
// Solvers

PifSolver::PifSolver(nufft::Plan plan, Shape shape, comm::Communicator* comm)
    : plan_(std::move(plan)), shape_(shape), comm_(comm) {}

FieldSample PifSolver::solve(const ParticleEnsemble& local, TimerSet* timers) {
    local.validate();
    FourierField rho;
    {
        TimedScope t(timers, TimerCategory::Scatter);
        rho = finish_density(nufft::type1_real(plan_, local.x, local.q), shape_);
    }
    if (comm_ != nullptr && comm_->size() > 1) {
        TimedScope t(timers, TimerCategory::Allreduce);
        rho.coeffs = comm_->allreduce_sum(rho.coeffs);
    }
    TimedScope t(timers, TimerCategory::Gather);
    const EField e = poisson_efield(rho);
    FieldSample s;
    s.E = gather_efield(e, local, plan_, shape_);
    s.field_energy = field_energy(e);
    s.fundamental_energy = fundamental_mode_energy(e);
    s.energy_replicated = true;
    return s;
}

DdPifSolver::DdPifSolver(nufft::Plan plan, Shape shape, comm::Communicator& comm)
    : plan_(std::move(plan)), shape_(shape), comm_(comm), layout_(nufft::slab_layout(plan_, comm.size())) {}

FieldSample DdPifSolver::solve(const ParticleEnsemble& local, TimerSet* timers) {
    local.validate();
    FourierField rho;
    {
        TimedScope t(timers, TimerCategory::Scatter);
        rho = finish_density(nufft::dd_type1_real(comm_, layout_, plan_, local.x, local.q, timers), shape_);
    }
    TimedScope t(timers, TimerCategory::Gather);
    const EField e = poisson_efield(rho);
    FieldSample s;
    const EField es = shape_ == Shape::Delta ? e : shaped(e, shape_);
    s.E = to_vec3(nufft::dd_type2_real3(comm_, layout_, plan_, es, local.x, timers));
    s.field_energy = field_energy(e);
    s.fundamental_energy = fundamental_mode_energy(e);
    s.energy_replicated = comm_.size() == 1;
    return s;
}

std::vector<double> cic_deposit(std::span<const Vec3> x, std::span<const double> q, int Nc, double L) {
    if (Nc < 2 || Nc % 2 != 0) {
        throw InvalidArgument("cic_deposit: Nc must be even and >= 2");
    }
    if (x.size() != q.size()) {
        throw InvalidArgument("cic_deposit: positions and charges differ in length");
    }
    const auto n = static_cast<std::size_t>(Nc);
    std::vector<double> grid(n * n * n, 0.0);
    const double inv_h = Nc / L;
    for (std::size_t j = 0; j < x.size(); ++j) {
        int i0[3];
        double f[3];
        for (int d = 0; d < 3; ++d) {
            const double u = wrap_periodic(x[j][static_cast<std::size_t>(d)], L) * inv_h;
            const double fl = std::floor(u);
            i0[d] = static_cast<int>(fl) % Nc;
            f[d] = u - fl;
        }
        for (int c = 0; c < 2; ++c) {
            const double wz = c == 0 ? 1.0 - f[2] : f[2];
            const auto iz = static_cast<std::size_t>((i0[2] + c) % Nc);
            for (int b = 0; b < 2; ++b) {
                const double wy = b == 0 ? 1.0 - f[1] : f[1];
                const auto iy = static_cast<std::size_t>((i0[1] + b) % Nc);
                for (int a = 0; a < 2; ++a) {
                    const double wx = a == 0 ? 1.0 - f[0] : f[0];
                    const auto ix = static_cast<std::size_t>((i0[0] + a) % Nc);
                    grid[(iz * n + iy) * n + ix] += q[j] * wz * wy * wx;
                }
            }
        }
    }
    return grid;
}

PicSolver::PicSolver(int Nc, double L, comm::Communicator* comm) : Nc_(Nc), L_(L), comm_(comm) {
    if (Nc < 2 || Nc % 2 != 0) {
        throw InvalidArgument("PicSolver: Nc must be even and >= 2");
    }
}

FieldSample PicSolver::solve(const ParticleEnsemble& local, TimerSet* timers) {
    local.validate();
    const int n = Nc_;
    const auto nn = static_cast<std::size_t>(n);
    const std::size_t total = nn * nn * nn;
    std::vector<cplx> rho(total);
    {
        TimedScope t(timers, TimerCategory::Scatter);
        const auto charge = cic_deposit(local.x, local.q, n, L_);
        for (std::size_t i = 0; i < total; ++i) {
            rho[i] = charge[i];
        }
    }
    if (comm_ != nullptr && comm_->size() > 1) {
        TimedScope t(timers, TimerCategory::Allreduce);
        rho = comm_->allreduce_sum(rho);
    }
    TimedScope t(timers, TimerCategory::Gather);
    // Node charge / cell volume / n^3 == (1/L^3) * charge.
    fft::fft3d(rho, n, fft::Direction::Forward);
    const double norm = 1.0 / cube(L_);
    std::array<std::vector<cplx>, 3> e;
    for (auto& c : e) {
        c.assign(total, cplx{});
    }
    double energy = 0.0;
    double fundamental = 0.0;
    const double kscale = 2.0 * kPi / L_;
    for (std::size_t gz = 0; gz < nn; ++gz) {
        for (std::size_t gy = 0; gy < nn; ++gy) {
            for (std::size_t gx = 0; gx < nn; ++gx) {
                const int g[3] = {static_cast<int>(gx), static_cast<int>(gy), static_cast<int>(gz)};
                int m[3];
                bool nyquist = false;
                for (int d = 0; d < 3; ++d) {
                    m[d] = g[d] < n / 2 ? g[d] : g[d] - n;
                    nyquist = nyquist || g[d] == n / 2;
                }
                if (nyquist || (m[0] == 0 && m[1] == 0 && m[2] == 0)) {
                    continue;
                }
                const std::size_t i = (gz * nn + gy) * nn + gx;
                const Vec3 k{kscale * m[0], kscale * m[1], kscale * m[2]};
                const cplx f = cplx(0.0, -1.0) * (rho[i] * norm) / dot(k, k);
                double e2 = 0.0;
                for (int d = 0; d < 3; ++d) {
                    const cplx v = k[static_cast<std::size_t>(d)] * f;
                    e[static_cast<std::size_t>(d)][i] = v;
                    e2 += std::norm(v);
                }
                energy += e2;
                if (std::abs(m[0]) + std::abs(m[1]) + std::abs(m[2]) == 1) {
                    fundamental += e2;
                }
            }
        }
    }
    for (auto& c : e) {
        fft::fft3d(c, n, fft::Direction::Backward);
    }
    FieldSample s;
    s.E.resize(local.size());
    const double inv_h = n / L_;
    for (std::size_t j = 0; j < local.size(); ++j) {
        int i0[3];
        double f[3];
        for (int d = 0; d < 3; ++d) {
            const double u = wrap_periodic(local.x[j][static_cast<std::size_t>(d)], L_) * inv_h;
            const double fl = std::floor(u);
            i0[d] = static_cast<int>(fl) % n;
            f[d] = u - fl;
        }
        Vec3 acc{0.0, 0.0, 0.0};
        for (int c = 0; c < 2; ++c) {
            const double wz = c == 0 ? 1.0 - f[2] : f[2];
            const auto iz = static_cast<std::size_t>((i0[2] + c) % n);
            for (int b = 0; b < 2; ++b) {
                const double wy = b == 0 ? 1.0 - f[1] : f[1];
                const auto iy = static_cast<std::size_t>((i0[1] + b) % n);
                for (int a = 0; a < 2; ++a) {
                    const double w = wz * wy * (a == 0 ? 1.0 - f[0] : f[0]);
                    const auto ix = static_cast<std::size_t>((i0[0] + a) % n);
                    const std::size_t i = (iz * nn + iy) * nn + ix;
                    for (int d = 0; d < 3; ++d) {
                        acc[static_cast<std::size_t>(d)] += w * e[static_cast<std::size_t>(d)][i].real();
                    }
                }
            }
        }
        s.E[j] = acc;
    }
    s.field_energy = 0.5 * cube(L_) * energy;
    s.fundamental_energy = 0.5 * cube(L_) * fundamental;
    s.energy_replicated = true;
    return s;
}

// ---------------------------------------------------------------------------
// Steps

void pif_step(StepState& s, TimerSet* timers) {
    PifSolver solver(s.plan, s.shape);
    const auto sample = solver.solve(s.particles, timers);
    {
        TimedScope t(timers, TimerCategory::ParticleUpdate);
        boris_push(s.particles, sample.E, s.externals, s.dt, s.plan.L);
    }
    s.t += s.dt;
    s.step += 1;
}

void pic_step(StepState& s, int Nc, TimerSet* timers) {
    PicSolver solver(Nc, s.plan.L);
    const auto sample = solver.solve(s.particles, timers);
    {
        TimedScope t(timers, TimerCategory::ParticleUpdate);
        boris_push(s.particles, sample.E, s.externals, s.dt, s.plan.L);
    }
    s.t += s.dt;
    s.step += 1;
}

}  // namespace pifsim

#include "doctest.h"
#include "helpers.hpp"
#include "pifsim/nufft.hpp"

using namespace pifsim;
using namespace pifsim::nufft;

TEST_CASE("plan parameters") {
    CHECK(make_plan(16, 1.0, 1e-7).window.w == 8);
    CHECK(make_plan(16, 1.0, 1e-16).window.w == 17);
    CHECK(make_plan(16, 1.0, 1e-3).window.w == 4);
    const auto p = make_plan(16, 1.0, 1e-7);
    CHECK(p.n_up == 32);
    CHECK(p.window.sigma == 2.0);
    CHECK(p.window.beta == doctest::Approx(18.4));
    CHECK(p.halo() == 4);
    for (double d : p.deconv) {
        CHECK(d > 0.0);
        CHECK(std::isfinite(d));
    }
    CHECK(p.deconv_at(3) == p.deconv_at(-3));
    CHECK_THROWS_AS(make_plan(15, 1.0, 1e-7), InvalidArgument);
    CHECK_THROWS_AS(make_plan(2, 1.0, 1e-7), InvalidArgument);
    CHECK_THROWS_AS(make_plan(16, 1.0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(make_plan(16, 1.0, 1e-17), InvalidArgument);
}

TEST_CASE("type 1 trivial cases") {
    const double L = 2.0;
    const auto p = make_plan(8, L, 1e-7);
    const std::vector<Vec3> origin{{0, 0, 0}};
    const std::vector<cplx> one{cplx(1)};
    const auto f = type1(p, origin, one);
    for (const auto& v : f.coeffs) {
        CHECK(std::abs(v - cplx(1)) < 1e-6);
    }
    const auto d = direct_type1(8, L, origin, one);
    for (const auto& v : d.coeffs) {
        CHECK(v == cplx(1));
    }
    const auto empty = type1(p, {}, {});
    for (const auto& v : empty.coeffs) {
        CHECK(v == cplx{});
    }
    const std::vector<Vec3> bad{{std::nan(""), 0, 0}};
    CHECK_THROWS_AS(type1(p, bad, one), InvalidArgument);
}

TEST_CASE("type 2 trivial cases") {
    const double L = 3.0;
    const auto p = make_plan(8, L, 1e-7);
    auto f = FourierField::zeros(8, L);
    const auto pts = testutil::random_points(20, L, 4);
    for (const auto& v : type2(p, f, pts)) {
        CHECK(v == cplx{});
    }
    f.coeffs[mode_index(8, 0, 0, 0)] = cplx(2.5, -1);
    for (const auto& v : type2(p, f, pts)) {
        CHECK(std::abs(v - cplx(2.5, -1)) < 1e-6 * 2.7);
    }
    auto imp = FourierField::zeros(8, L);
    imp.coeffs[mode_index(8, 2, -1, 3)] = 1.0;
    const auto dv = direct_type2(imp, pts);
    for (std::size_t j = 0; j < pts.size(); ++j) {
        const double ph = 2 * kPi / L * (2 * pts[j][0] - pts[j][1] + 3 * pts[j][2]);
        CHECK(std::abs(dv[j] - std::polar(1.0, ph)) < 1e-13);
    }
}

TEST_CASE("direct sums are adjoint") {
    const double L = 1.7;
    const auto pts = testutil::random_points(30, L, 1);
    const auto c = testutil::random_complex(30, 2);
    auto f = FourierField::zeros(6, L);
    f.coeffs = testutil::random_complex(f.size(), 3);
    const auto a = direct_type1(6, L, pts, c);
    const auto b = direct_type2(f, pts);
    cplx lhs{}, rhs{};
    for (std::size_t i = 0; i < f.size(); ++i) {
        lhs += std::conj(a.coeffs[i]) * f.coeffs[i];
    }
    for (std::size_t j = 0; j < c.size(); ++j) {
        rhs += std::conj(c[j]) * b[j];
    }
    CHECK(std::abs(lhs - rhs) < 1e-12 * std::abs(lhs));
}

TEST_CASE("type 1 and type 2 match direct sums to 10 eps") {
    for (int N : {8, 16}) {
        for (double eps : {1e-3, 1e-7, 1e-12}) {
            const double L = 4 * kPi;
            const auto p = make_plan(N, L, eps);
            const auto pts = testutil::random_points(1000, L, static_cast<unsigned>(N));
            const auto c = testutil::random_complex(1000, 17);
            const auto t1 = type1(p, pts, c);
            const auto d1 = direct_type1(N, L, pts, c);
            CAPTURE(N);
            CAPTURE(eps);
            CHECK(testutil::max_rel(t1.coeffs, d1.coeffs) <= 10 * eps);

            auto f = FourierField::zeros(N, L);
            f.coeffs = testutil::random_complex(f.size(), 23);
            CHECK(testutil::max_rel(type2(p, f, pts), direct_type2(f, pts)) <= 10 * eps);
        }
    }
}

TEST_CASE("real strengths give a conjugate-symmetric spectrum") {
    const double L = 2.0;
    const auto p = make_plan(8, L, 1e-12);
    const auto pts = testutil::random_points(200, L, 8);
    const auto q = testutil::random_real(200, 9);
    const auto f = type1_real(p, pts, q);
    double scale = 0.0;
    for (const auto& v : f.coeffs) {
        scale = std::max(scale, std::abs(v));
    }
    CHECK(hermitian_defect(f) <= 1e-13 * scale);
    std::vector<cplx> qc(q.begin(), q.end());
    CHECK(testutil::max_rel(f.coeffs, type1(p, pts, qc).coeffs) < 1e-15);
}

TEST_CASE("real three-component gather matches complex type 2") {
    const double L = 2.0;
    const auto p = make_plan(8, L, 1e-10);
    const auto pts = testutil::random_points(100, L, 10);
    const auto rho = type1_real(p, pts, testutil::random_real(100, 11));
    const auto e = poisson_efield(rho);
    const auto fast = type2_real3(p, e, pts);
    for (int d = 0; d < 3; ++d) {
        const auto ref = direct_type2(e[static_cast<std::size_t>(d)], pts);
        std::vector<double> re(ref.size());
        for (std::size_t j = 0; j < ref.size(); ++j) {
            re[j] = ref[j].real();
            CHECK(std::abs(ref[j].imag()) < 1e-12);
        }
        CHECK(testutil::max_rel(fast[static_cast<std::size_t>(d)], re) < 1e-9);
    }
    auto broken = e;
    broken[0].coeffs[mode_index(8, 1, 0, 0)] += cplx(0, 1);
    CHECK_THROWS_AS(type2_real3(p, broken, pts), Error);
}

TEST_CASE("owned modes partition the mode set") {
    const auto p = make_plan(8, 1.0, 1e-3);
    const auto lay = slab_layout(p, 4);
    std::vector<int> all;
    for (int r = 0; r < 4; ++r) {
        const auto o = owned_mz(p, lay, r);
        all.insert(all.end(), o.begin(), o.end());
    }
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<int>{-4, -3, -2, -1, 0, 1, 2, 3});
    CHECK(owned_mz(p, lay, 0) == std::vector<int>{0, 1, 2, 3});
    CHECK(owned_mz(p, lay, 3) == std::vector<int>{-4, -3, -2, -1});
}

namespace {

struct DdCase {
    int N;
    double eps;
    int P;
};

// Serial and distributed transforms of the same data; returns worst relative deviation.
std::pair<double, double> dd_vs_serial(const DdCase& tc, const std::vector<Vec3>& pts, bool real) {
    const double L = 4 * kPi;
    const auto plan = make_plan(tc.N, L, tc.eps);
    const auto lay = slab_layout(plan, tc.P);
    const auto c = testutil::random_complex(pts.size(), 31);
    auto modes = FourierField::zeros(tc.N, L);
    modes.coeffs = testutil::random_complex(modes.size(), 37);
    std::vector<double> qr(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        qr[i] = c[i].real();
    }
    const auto serial1 = real ? type1_real(plan, pts, qr) : type1(plan, pts, c);
    const auto serial2 = type2(plan, modes, pts);

    auto r = comm::spawn_spmd(tc.P, [&](comm::RankContext& ctx) {
        std::vector<Vec3> lp;
        std::vector<cplx> lc;
        std::vector<double> lq;
        std::vector<std::size_t> idx;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (lay.owner_of_plane(owner_plane(plan, pts[j][2])) == ctx.world_rank) {
                lp.push_back(pts[j]);
                lc.push_back(c[j]);
                lq.push_back(qr[j]);
                idx.push_back(j);
            }
        }
        auto part = real ? dd_type1_real(ctx.world, lay, plan, lp, lq) : dd_type1(ctx.world, lay, plan, lp, lc);
        auto owned = FourierField::zeros_subset(tc.N, L, owned_mz(plan, lay, ctx.world_rank));
        for (std::size_t i = 0; i < owned.size(); ++i) {
            const auto m = owned.mode(i);
            owned.coeffs[i] = modes.coeffs[mode_index(tc.N, m[0], m[1], m[2])];
        }
        auto vals = dd_type2(ctx.world, lay, plan, owned, lp);
        return std::tuple{std::move(part), std::move(vals), std::move(idx)};
    });
    std::vector<FourierField> parts;
    std::vector<cplx> gathered(pts.size());
    for (auto& [part, vals, idx] : r.results) {
        parts.push_back(part);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            gathered[idx[i]] = vals[i];
        }
    }
    const auto full = assemble(parts);
    return {testutil::max_rel(full.coeffs, serial1.coeffs), testutil::max_rel(gathered, serial2)};
}

}  // namespace

TEST_CASE("distributed NUFFT matches serial for random particles") {
    const auto pts = testutil::random_points(1000, 4 * kPi, 77);
    for (int P : {2, 4}) {
        for (bool real : {false, true}) {
            const auto [e1, e2] = dd_vs_serial({8, 1e-7, P}, pts, real);
            CAPTURE(P);
            CHECK(e1 <= 1e-12);
            CHECK(e2 <= 1e-12);
        }
    }
}

TEST_CASE("distributed NUFFT handles particles on slab boundary planes") {
    const double L = 4 * kPi;
    const auto plan = make_plan(8, L, 1e-7);
    const auto lay = slab_layout(plan, 4);
    std::vector<Vec3> pts;
    for (int r = 0; r < 4; ++r) {
        const double zb = lay.begin(r) * plan.spacing();
        pts.push_back({0.3 * r, 1.1, zb});
        pts.push_back({2.0, 0.1 * r, std::nextafter(zb, -1.0) < 0 ? std::nextafter(L, 0.0) : std::nextafter(zb, -1.0)});
    }
    pts.push_back({1.0, 1.0, 0.0});
    const auto [e1, e2] = dd_vs_serial({8, 1e-7, 4}, pts, false);
    CHECK(e1 <= 1e-12);
    CHECK(e2 <= 1e-12);
}

TEST_CASE("distributed NUFFT on one rank is the serial transform") {
    const double L = 1.0;
    const auto plan = make_plan(8, L, 1e-7);
    const auto pts = testutil::random_points(50, L, 5);
    const auto c = testutil::random_complex(50, 6);
    const auto serial = type1(plan, pts, c);
    auto modes = FourierField::zeros(8, L);
    modes.coeffs = testutil::random_complex(modes.size(), 7);
    const auto serial2 = type2(plan, modes, pts);
    auto r = comm::spawn_spmd(1, [&](comm::RankContext& ctx) {
        const auto lay = slab_layout(plan, 1);
        return std::pair{dd_type1(ctx.world, lay, plan, pts, c), dd_type2(ctx.world, lay, plan, modes, pts)};
    });
    CHECK(r.results[0].first.coeffs == serial.coeffs);
    CHECK(r.results[0].second == serial2);
}

TEST_CASE("distributed type 2 of a constant field") {
    const double L = 2.0;
    const auto plan = make_plan(8, L, 1e-7);
    const auto lay = slab_layout(plan, 4);
    const auto pts = testutil::random_points(200, L, 12);
    auto r = comm::spawn_spmd(4, [&](comm::RankContext& ctx) {
        std::vector<Vec3> lp;
        for (const auto& x : pts) {
            if (lay.owner_of_plane(owner_plane(plan, x[2])) == ctx.world_rank) {
                lp.push_back(x);
            }
        }
        auto owned = FourierField::zeros_subset(8, L, owned_mz(plan, lay, ctx.world_rank));
        const long i = owned.find(0, 0, 0);
        if (i >= 0) {
            owned.coeffs[static_cast<std::size_t>(i)] = 3.0;
        }
        double worst = 0.0;
        for (const auto& v : dd_type2(ctx.world, lay, plan, owned, lp)) {
            worst = std::max(worst, std::abs(v - cplx(3.0)));
        }
        return worst;
    });
    for (double w : r.results) {
        CHECK(w < 3e-6);
    }
}

TEST_CASE("distributed type 1 rejects points outside the slab") {
    const auto plan = make_plan(8, 1.0, 1e-3);
    const auto lay = slab_layout(plan, 2);
    CHECK_THROWS_AS(comm::spawn_spmd(2,
                                     [&](comm::RankContext& ctx) {
                                         const std::vector<Vec3> p{{0.5, 0.5, ctx.world_rank == 0 ? 0.9 : 0.1}};
                                         const std::vector<cplx> s{cplx(1)};
                                         return dd_type1(ctx.world, lay, plan, p, s).size();
                                     }),
                    comm::SpmdError);
}

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "oracles.hpp"
#include "pifsim/config.hpp"
#include "pifsim/strategies.hpp"

using namespace pifsim;

namespace {

// Tolerances and budgets.
constexpr double kNufftFactor = 10.0;          // error <= 10 eps
constexpr double kDdTol = 1e-12;               // distributed vs serial NUFFT
constexpr double kStrategyTol = 1e-6;          // pairwise field-energy traces
constexpr double kExactTol = 1e-12;            // parareal exactness
constexpr int kMaxParrealIters = 4;            // convergence count
constexpr double kGammaRelTol = 0.10;          // damping rate
constexpr double kMomentumTol = 1e-6;          // times the thermal momentum scale
constexpr double kPenningDriftTol = 1e-3;      // relative total-energy drift
constexpr double kBudget[10] = {0, 30, 60, 300, 120, 120, 900, 600, 600, 60};

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// --- 1 ---------------------------------------------------------------------

void nufft_accuracy(Outcome& o) {
    double worst_ratio = 0.0;
    for (int N : {8, 16}) {
        for (double eps : {1e-3, 1e-7, 1e-12}) {
            const double L = 2.0 * kPi;
            const auto plan = nufft::make_plan(N, L, eps);
            const auto pts = testutil::random_points(1000, L, 11 + static_cast<unsigned>(N));
            const auto c = testutil::random_complex(1000, 17);
            const auto f1 = nufft::type1(plan, pts, c);
            const auto r1 = nufft::direct_type1(N, L, pts, c);
            auto modes = FourierField::zeros(N, L);
            modes.coeffs = testutil::random_complex(modes.size(), 19);
            const auto f2 = nufft::type2(plan, modes, pts);
            const auto r2 = nufft::direct_type2(modes, pts);
            const double e1 = testutil::max_rel(f1.coeffs, r1.coeffs);
            const double e2 = testutil::max_rel(f2, r2);
            o.require(e1 <= kNufftFactor * eps, "type1 N=" + std::to_string(N) + " eps=" + fmt(eps) + " err=" + fmt(e1));
            o.require(e2 <= kNufftFactor * eps, "type2 N=" + std::to_string(N) + " eps=" + fmt(eps) + " err=" + fmt(e2));
            worst_ratio = std::max({worst_ratio, e1 / eps, e2 / eps});
        }
    }
    o.detail << "worst error " << fmt(worst_ratio) << " x eps (limit " << kNufftFactor << ")";
}

// --- 2 ---------------------------------------------------------------------

void dd_equivalence(Outcome& o) {
    double worst = 0.0;
    for (double eps : {1e-7, 1e-12}) {
        for (int P : {2, 4}) {
            const int N = 16;
            const double L = 4.0 * kPi;
            const auto plan = nufft::make_plan(N, L, eps);
            const auto lay = nufft::slab_layout(plan, P);
            auto pts = testutil::random_points(1000, L, 23);
            for (int r = 0; r < P; ++r) {
                const double zb = lay.begin(r) * plan.spacing();
                pts.push_back({0.5 * r, 1.0, zb});
                pts.push_back({1.5, 0.25 * r, zb > 0.0 ? std::nextafter(zb, 0.0) : std::nextafter(L, 0.0)});
                pts.push_back({2.5, 2.5, std::nextafter(zb, L)});
            }
            pts.push_back({0.0, 0.0, 0.0});
            const auto c = testutil::random_complex(pts.size(), 29);
            auto modes = FourierField::zeros(N, L);
            modes.coeffs = testutil::random_complex(modes.size(), 31);
            const auto s1 = nufft::type1(plan, pts, c);
            const auto s2 = nufft::type2(plan, modes, pts);
            auto res = comm::spawn_spmd(P, [&](comm::RankContext& ctx) {
                std::vector<Vec3> lp;
                std::vector<cplx> lc;
                std::vector<std::size_t> idx;
                for (std::size_t j = 0; j < pts.size(); ++j) {
                    if (lay.owner_of_plane(nufft::owner_plane(plan, pts[j][2])) == ctx.world_rank) {
                        lp.push_back(pts[j]);
                        lc.push_back(c[j]);
                        idx.push_back(j);
                    }
                }
                auto part = nufft::dd_type1(ctx.world, lay, plan, lp, lc);
                auto owned = FourierField::zeros_subset(N, L, nufft::owned_mz(plan, lay, ctx.world_rank));
                for (std::size_t i = 0; i < owned.size(); ++i) {
                    const auto m = owned.mode(i);
                    owned.coeffs[i] = modes.coeffs[mode_index(N, m[0], m[1], m[2])];
                }
                auto vals = nufft::dd_type2(ctx.world, lay, plan, owned, lp);
                return std::tuple{std::move(part), std::move(vals), std::move(idx)};
            });
            std::vector<FourierField> parts;
            std::vector<cplx> gathered(pts.size());
            for (auto& [part, vals, idx] : res.results) {
                parts.push_back(part);
                for (std::size_t i = 0; i < idx.size(); ++i) gathered[idx[i]] = vals[i];
            }
            const double e1 = testutil::max_rel(assemble(parts).coeffs, s1.coeffs);
            const double e2 = testutil::max_rel(gathered, s2);
            o.require(e1 <= kDdTol, "dd_type1 P=" + std::to_string(P) + " err=" + fmt(e1));
            o.require(e2 <= kDdTol, "dd_type2 P=" + std::to_string(P) + " err=" + fmt(e2));
            worst = std::max({worst, e1, e2});
        }
    }
    o.detail << "worst relative deviation " << fmt(worst) << " (limit " << fmt(kDdTol) << ")";
}

// --- 3 and 7 -----------------------------------------------------------------

struct NamedRun {
    std::string name;
    SimulationResult result;
};

RunRequest desk_request(bench::Benchmark b, Strategy s, int Ps, int Pt) {
    RunRequest r;
    r.sim.bench = b == bench::Benchmark::Landau ? bench::BenchmarkSpec::landau(16, 10)
                                                : bench::BenchmarkSpec::penning(16, 10);
    r.sim.dt = 0.05;
    r.sim.steps = 100;
    r.sim.eps = 1e-7;
    r.strategy = s;
    r.ranks_space = Ps;
    r.ranks_time = Pt;
    r.parareal.P_t = Pt;
    r.parareal.tol = 1e-8;
    r.parareal.coarse.kind = CoarseConfig::Kind::Pif;
    r.parareal.coarse.eps = 1e-3;
    r.parareal.coarse.dt = 0.05;
    r.parareal.blocks = 1;
    return r;
}

const std::map<bench::Benchmark, std::vector<NamedRun>>& strategy_runs() {
    static std::map<bench::Benchmark, std::vector<NamedRun>> runs;
    if (!runs.empty()) return runs;
    for (auto b : {bench::Benchmark::Landau, bench::Benchmark::Penning}) {
        auto& v = runs[b];
        v.push_back({"serial", simulate(desk_request(b, Strategy::Serial, 1, 1))});
        for (int P : {2, 4}) v.push_back({"pd" + std::to_string(P), simulate(desk_request(b, Strategy::ParticleDecomposition, P, 1))});
        for (int P : {2, 4}) v.push_back({"dd" + std::to_string(P), simulate(desk_request(b, Strategy::DomainDecomposition, P, 1))});
        v.push_back({"st2x2", simulate(desk_request(b, Strategy::SpaceTime, 2, 2))});
    }
    return runs;
}

void strategy_equivalence(Outcome& o) {
    for (const auto& [b, runs] : strategy_runs()) {
        double worst = 0.0;
        std::string pair;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            for (std::size_t j = i + 1; j < runs.size(); ++j) {
                const auto& a = runs[i].result;
                const auto& c = runs[j].result;
                if (a.records.size() != c.records.size()) {
                    o.require(false, runs[i].name + " vs " + runs[j].name + " record count");
                    continue;
                }
                double w = rel(a.initial.field_energy, c.initial.field_energy);
                for (std::size_t k = 0; k < a.records.size(); ++k) {
                    w = std::max(w, rel(a.records[k].field_energy, c.records[k].field_energy));
                }
                if (w > worst) {
                    worst = w;
                    pair = runs[i].name + "/" + runs[j].name;
                }
            }
        }
        o.require(worst <= kStrategyTol, bench::to_string(b) + " " + pair);
        o.detail << bench::to_string(b) << " worst " << fmt(worst) << " (" << pair << ", st iterations "
                 << runs.back().result.iterations_per_block[0] << "); ";
    }
    o.detail << "limit " << fmt(kStrategyTol);
}

// --- 4 ---------------------------------------------------------------------

double state_deviation(const ParticleEnsemble& a, const ParticleEnsemble& ref, double L) {
    std::map<std::uint64_t, std::size_t> pos;
    for (std::size_t j = 0; j < ref.size(); ++j) pos[ref.ids[j]] = j;
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const std::size_t r = pos.at(a.ids[j]);
        for (std::size_t d = 0; d < 3; ++d) {
            num = std::max({num, std::abs(minimum_image(a.x[j][d] - ref.x[r][d], L)), std::abs(a.v[j][d] - ref.v[r][d])});
            den = std::max({den, std::abs(ref.x[r][d]), std::abs(ref.v[r][d])});
        }
    }
    return num / den;
}

void parareal_exactness(Outcome& o) {
    const int Pt = 4;
    const long S = 10;
    RunRequest req;
    req.sim.bench = bench::BenchmarkSpec::landau(16, 10);
    req.sim.dt = 0.05;
    req.sim.steps = Pt * S;
    req.strategy = Strategy::SpaceTime;
    req.ranks_time = Pt;
    req.parareal.P_t = Pt;
    req.parareal.coarse = {CoarseConfig::Kind::Pif, 1e-3, 0, 0.05};
    req.parareal.tol = 1e-300;  // iterate until exact
    req.parareal.max_iters = Pt;
    req.parareal.record_states = true;
    const auto st = simulate(req);

    auto serial_req = req;
    serial_req.strategy = Strategy::Serial;
    serial_req.ranks_time = 1;
    serial_req.sim.snapshot_every = S;
    const auto serial = simulate(serial_req);
    std::map<long, const ParticleEnsemble*> snap;
    for (const auto& [step, p] : serial.ranks[0].snapshots) snap[step] = &p;

    const double L = req.sim.bench.L;
    double worst = 0.0;
    int checked = 0;
    for (int k = 1; k <= Pt; ++k) {
        for (const auto& r : st.ranks) {
            const int n = r.time_rank + 1;  // slab end index
            if (n > k) continue;
            const auto& blk = r.blocks.at(0);
            const std::size_t it = static_cast<std::size_t>(std::min(k, blk.iterations)) - 1;
            const double e = state_deviation(blk.end_states.at(it), *snap.at(n * S), L);
            o.require(e <= kExactTol, "k=" + std::to_string(k) + " n=" + std::to_string(n) + " dev=" + fmt(e));
            worst = std::max(worst, e);
            ++checked;
        }
    }
    o.detail << checked << " slab states checked for k=1.." << Pt << ", worst relative deviation " << fmt(worst)
             << " (limit " << fmt(kExactTol) << ")";
}

// --- 5 ---------------------------------------------------------------------

void parareal_convergence(Outcome& o) {
    // Eight time slabs, so the finite-termination property alone would need
    // eight iterations; four or fewer means the residual test converged.
    RunRequest req;
    req.sim.bench = bench::BenchmarkSpec::landau(16, 10);
    req.sim.dt = 0.003125;
    req.sim.steps = 256;
    req.sim.eps = 1e-7;
    req.strategy = Strategy::SpaceTime;
    req.ranks_time = 8;
    req.parareal.P_t = 8;
    req.parareal.tol = 1e-8;
    req.parareal.coarse = {CoarseConfig::Kind::Pif, 1e-3, 0, 0.05};
    const auto st = simulate(req);
    const int iters = st.iterations_per_block.at(0);
    const auto& hist = st.residuals_per_block.at(0);
    o.require(iters <= kMaxParrealIters, "iterations " + std::to_string(iters));
    o.require(!hist.empty() && hist.back() <= req.parareal.tol, "final residual above tolerance");
    bool monotone = true;
    for (std::size_t k = 1; k < hist.size(); ++k) monotone = monotone && hist[k] <= hist[k - 1];
    o.require(monotone, "residual increased");
    o.detail << "P_t=8, " << iters << " iterations (limit " << kMaxParrealIters << "), residuals";
    for (double r : hist) o.detail << ' ' << fmt(r);
}

// --- 6 ---------------------------------------------------------------------

void landau_damping(Outcome& o) {
    RunRequest req;
    req.sim.bench = bench::BenchmarkSpec::landau(32, 10);
    req.sim.dt = 0.05;
    req.sim.steps = 400;
    req.sim.eps = 1e-7;
    const auto res = simulate(req);
    const double k = req.sim.bench.k;
    const auto root = oracle::landau_root(k, {1.4, -0.1});
    const double gamma_ref = -root.imag();

    std::vector<double> t{res.initial.t}, e{res.initial.fundamental_energy};
    for (const auto& r : res.records) {
        t.push_back(r.t);
        e.push_back(r.fundamental_energy);
    }
    // Peaks below ten times the thermal fluctuation level of the six
    // fundamental modes are excluded. With lambda_D = 1 the shielded level is
    // (L^3 / 2) * 6 / (N_p (1 + k^2)).
    const double L3 = std::pow(req.sim.bench.L, 3);
    const double noise = 0.5 * L3 * 6.0 / (static_cast<double>(req.sim.bench.num_particles()) * (1.0 + k * k));
    DampingFitOptions opts;
    opts.min_value = 10.0 * noise;
    try {
        const auto fit = fit_damping_rate(t, e, opts);
        const double r = std::abs(fit.gamma - gamma_ref) / gamma_ref;
        o.require(r <= kGammaRelTol, "gamma " + fmt(fit.gamma));
        o.detail << "gamma " << fmt(fit.gamma) << " vs oracle " << fmt(gamma_ref) << " (omega_r " << fmt(root.real())
                 << "), relative error " << fmt(r) << " from " << fit.peak_times.size() << " peaks (limit "
                 << kGammaRelTol << ")";
    } catch (const std::exception& ex) {
        o.require(false, ex.what());
    }
}

// --- 7 ---------------------------------------------------------------------

void conservation(Outcome& o) {
    // Charge and momentum over all strategy runs of criterion 3.
    double worst_p = 0.0;
    bool charge_ok = true;
    for (const auto& [b, runs] : strategy_runs()) {
        for (const auto& run : runs) {
            const auto& r = run.result;
            for (const auto& rec : r.records) {
                charge_ok = charge_ok && rec.total_charge == r.initial.total_charge;
            }
            if (b != bench::Benchmark::Landau) continue;
            // thermal momentum scale: total mass times v_th = 1
            const double scale = std::abs(bench::BenchmarkSpec::landau(16, 10).Q);
            for (const auto& rec : r.records) {
                const Vec3 d = rec.momentum - r.initial.momentum;
                worst_p = std::max(worst_p, std::sqrt(dot(d, d)) / scale);
            }
        }
    }
    o.require(charge_ok, "total charge changed");
    o.require(worst_p <= kMomentumTol, "momentum drift " + fmt(worst_p));

    RunRequest req;
    req.sim.bench = bench::BenchmarkSpec::penning(16, 10);
    req.sim.dt = 0.003125;
    req.sim.steps = 768;
    req.sim.eps = 1e-7;
    const auto pen = simulate(req);
    double drift = 0.0;
    for (const auto& rec : pen.records) {
        drift = std::max(drift, rel(rec.total_energy, pen.initial.total_energy));
        charge_ok = charge_ok && rec.total_charge == pen.initial.total_charge;
    }
    o.require(drift <= kPenningDriftTol, "penning energy drift " + fmt(drift));
    o.require(charge_ok, "penning charge changed");
    o.detail << "charge bit-exact: " << (charge_ok ? "yes" : "no") << "; Landau momentum drift " << fmt(worst_p)
             << " (limit " << fmt(kMomentumTol) << "); Penning energy drift " << fmt(drift) << " (limit "
             << fmt(kPenningDriftTol) << ")";
}

// --- 8 ---------------------------------------------------------------------

void table_conformance(Outcome& o) {
    auto logged = [](Strategy s, int Ps, int Pt) {
        RunRequest r;
        r.sim.bench = bench::BenchmarkSpec::landau(8, 2);
        r.sim.dt = 0.05;
        r.sim.steps = 8;
        r.strategy = s;
        r.ranks_space = Ps;
        r.ranks_time = Pt;
        r.parareal.P_t = Pt;
        r.parareal.coarse.dt = 0.05;
        r.spmd.log_calls = true;
        return simulate(r).call_log;
    };
    auto kinds = [](const std::vector<comm::CallRecord>& log) {
        std::set<std::string> k;
        for (const auto& c : log) k.insert(c.primitive + "@" + c.comm);
        return k;
    };
    auto show = [](const std::set<std::string>& s) {
        std::string out;
        for (const auto& x : s) out += (out.empty() ? "" : ",") + x;
        return out;
    };
    const auto pd = kinds(logged(Strategy::ParticleDecomposition, 4, 1));
    const auto dd = kinds(logged(Strategy::DomainDecomposition, 4, 1));
    const auto st = kinds(logged(Strategy::SpaceTime, 2, 2));
    o.require(pd == std::set<std::string>{"allreduce_sum@world"}, "pd uses " + show(pd));
    o.require(dd == std::set<std::string>{"alltoall@world", "recv@world", "send@world"}, "dd uses " + show(dd));
    o.require(st == std::set<std::string>{"allreduce_sum@space", "recv@time", "send@time"}, "st uses " + show(st));
    o.detail << "pd {" << show(pd) << "} dd {" << show(dd) << "} st {" << show(st) << "}";
}

// --- 9 ---------------------------------------------------------------------

void parameter_fidelity(Outcome& o) {
    const auto landau = cli::make_config({});
    const auto pen = cli::make_config({{"benchmark", "penning"}});
    const auto lreq = cli::to_request(landau);
    const auto preq = cli::to_request(pen);
    const double L = 4.0 * kPi;
    o.require(landau.dt == 0.003125 && lreq.sim.dt == 0.003125, "dt");
    o.require(landau.eps_fine == 1e-7 && lreq.sim.eps == 1e-7, "eps");
    o.require(landau.tol_parareal == 1e-8 && lreq.parareal.tol == 1e-8, "parareal tol");
    o.require(landau.modes == 256 && landau.ppm == 10, "modes / ppm");
    o.require(lreq.sim.bench.L == L && lreq.sim.bench.Q == -L * L * L, "Landau L, Q");
    o.require(lreq.sim.bench.alpha == 0.05 && lreq.sim.bench.k == 0.5, "Landau alpha, k");
    o.require(preq.sim.bench.L == 25.0 && preq.sim.bench.Q == -1562.5, "Penning L, Q");
    o.require(lreq.parareal.coarse.kind == CoarseConfig::Kind::Pif && lreq.parareal.coarse.eps == 1e-3 &&
                  lreq.parareal.coarse.dt == 0.05,
              "Landau coarse pif(1e-3, 0.05)");
    o.require(preq.parareal.coarse.kind == CoarseConfig::Kind::Pic && preq.parareal.blocks == 16 &&
                  preq.parareal.coarse.dt == preq.sim.dt,
              "Penning coarse pic, 16 blocks, dt_coarse = dt");

    static const char* const kSnapshot = R"({
  "benchmark": "landau",
  "strategy": "serial",
  "modes": 256,
  "ppm": 10,
  "dt": 0.003125,
  "steps": 768,
  "eps_fine": 1e-07,
  "ranks_space": 1,
  "ranks_time": 1,
  "coarse": "pif",
  "eps_coarse": 0.001,
  "dt_coarse": 0.05,
  "nc_coarse": 256,
  "blocks": 1,
  "tol_parareal": 1e-08,
  "max_iters": 50,
  "seed": 42,
  "diag_every": 1,
  "shape": "delta",
  "out_dir": "pifsim_out",
  "log_comm": false,
  "overwrite": false,
  "watchdog_ms": 60000
})";
    o.require(cli::to_json(landau) == kSnapshot, "default configuration snapshot differs");
    o.require(cli::config_from_json(cli::to_json(pen)) == pen, "config round trip");
    o.detail << "defaults match the reference parameter set and the pinned snapshot";
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"NUFFT accuracy", nufft_accuracy},
        {"distributed NUFFT equivalence", dd_equivalence},
        {"strategy equivalence", strategy_equivalence},
        {"parareal exactness", parareal_exactness},
        {"parareal convergence count", parareal_convergence},
        {"Landau damping rate", landau_damping},
        {"conservation", conservation},
        {"communication patterns", table_conformance},
        {"parameter fidelity", parameter_fidelity},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[i].second(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.require(secs <= kBudget[id], "runtime budget " + fmt(kBudget[id]) + " s");
        std::cout << "criterion " << id << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL") << " - "
                  << o.detail.str() << " [" << fmt(secs) << " s]" << std::endl;
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}

#include "pifsim/strategies.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>

namespace pifsim {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Serial: return "serial";
        case Strategy::DomainDecomposition: return "dd";
        case Strategy::ParticleDecomposition: return "pd";
        case Strategy::SpaceTime: return "st";
    }
    return "unknown";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "serial") return Strategy::Serial;
    if (s == "dd") return Strategy::DomainDecomposition;
    if (s == "pd") return Strategy::ParticleDecomposition;
    if (s == "st") return Strategy::SpaceTime;
    throw InvalidArgument("unknown strategy '" + s + "' (expected serial, dd, pd or st)");
}

namespace {

using SampleHook = std::function<void(long, const ParticleEnsemble&, const FieldSample&)>;
using PushHook = std::function<void(ParticleEnsemble&)>;

// Initial field solve, then `steps` times: push, hook, solve. The solve after
// the last push is skipped unless `final_solve`.
void propagate(ParticleEnsemble& p, FieldSolver& solver, const ExternalFields& ext, double dt, double L, long steps,
               TimerSet* timers, bool final_solve, const PushHook& after_push, const SampleHook& on_sample) {
    FieldSample field = solver.solve(p, timers);
    if (on_sample) {
        on_sample(0, p, field);
    }
    for (long s = 1; s <= steps; ++s) {
        {
            TimedScope t(timers, TimerCategory::ParticleUpdate);
            boris_push(p, field.E, ext, dt, L);
        }
        if (after_push) {
            after_push(p);
        }
        if (s < steps || final_solve) {
            field = solver.solve(p, timers);
            if (on_sample) {
                on_sample(s, p, field);
            }
        }
    }
}

void check_same_ids(const ParticleEnsemble& a, const ParticleEnsemble& b, const char* what) {
    if (a.ids != b.ids) {
        throw InvalidArgument(std::string(what) + ": particle ids differ");
    }
}

bool record_step(const SimConfig& cfg, long step) { return step % cfg.diag_every == 0; }

RankOutput run_replicated(const SimConfig& cfg, comm::Communicator* space, int world_rank) {
    const int P = space != nullptr ? space->size() : 1;
    const int me = space != nullptr ? space->rank() : 0;
    RankOutput out;
    out.world_rank = world_rank;
    out.space_rank = me;
    out.space_size = P;
    TimerSet timers;
    const auto [b, e] = bench::block_range(cfg.bench.num_particles(), P, me);
    ParticleEnsemble local = bench::sample_range(cfg.bench, b, e);
    const auto plan = nufft::make_plan(cfg.bench.N, cfg.bench.L, cfg.eps);
    PifSolver solver(plan, cfg.shape, space);
    const auto ext = cfg.bench.externals();
    propagate(local, solver, ext, cfg.dt, cfg.bench.L, cfg.steps, &timers, true, {},
              [&](long s, const ParticleEnsemble& p, const FieldSample& f) {
                  if (record_step(cfg, s)) {
                      out.records.push_back(local_diagnostics(p, ext, f, me == 0, s, s * cfg.dt));
                  }
                  if (cfg.snapshot_every > 0 && s % cfg.snapshot_every == 0) {
                      out.snapshots.emplace_back(s, p);
                  }
              });
    timers.finalize();
    out.timers = RankTimers::from(world_rank, timers);
    out.final_particles = std::move(local);
    return out;
}

void send_state(comm::Communicator& time, int dest, const ParticleEnsemble& p, std::optional<bool> flag,
                TimerSet* timers) {
    TimedScope t(timers, TimerCategory::TimeComm);
    time.send(dest, comm::Payload::from_particles(p.to_batch()));
    if (flag) {
        time.send(dest, comm::Payload::from_scalar(*flag ? 1.0 : 0.0));
    }
}

ParticleEnsemble recv_state(comm::Communicator& time, int src, bool* flag, TimerSet* timers) {
    TimedScope t(timers, TimerCategory::TimeComm);
    auto p = ParticleEnsemble::from_batch(time.recv(src).to_particles());
    if (flag != nullptr) {
        *flag = time.recv(src).to_scalar() != 0.0;
    }
    return p;
}

}  // namespace

// ---------------------------------------------------------------------------

void migrate_particles(ParticleEnsemble& p, const nufft::Plan& plan, const fft::SlabLayout& layout,
                       comm::Communicator& comm) {
    const int P = comm.size();
    if (P == 1) {
        return;
    }
    const int me = comm.rank();
    const auto topo = comm::SlabTopology::periodic(me, P);
    auto owner = [&](const Vec3& x) { return layout.owner_of_plane(nufft::owner_plane(plan, x[2])); };
    const int rounds = std::max(1, P / 2);
    for (int round = 0; round < rounds; ++round) {
        std::vector<std::size_t> keep, left, right;
        for (std::size_t j = 0; j < p.size(); ++j) {
            const int o = owner(p.x[j]);
            if (o == me) {
                keep.push_back(j);
                continue;
            }
            const int d = ((o - me) % P + P) % P;
            (d <= P / 2 ? right : left).push_back(j);
        }
        comm.send(topo.left, comm::Payload::from_particles(p.select(left).to_batch()));
        comm.send(topo.right, comm::Payload::from_particles(p.select(right).to_batch()));
        ParticleEnsemble next = p.select(keep);
        next.append(ParticleEnsemble::from_batch(comm.recv(topo.right).to_particles()));
        next.append(ParticleEnsemble::from_batch(comm.recv(topo.left).to_particles()));
        p = std::move(next);
    }
    for (const auto& x : p.x) {
        if (owner(x) != me) {
            throw Error("migrate_particles: particle at z=" + std::to_string(x[2]) + " still not on its owner rank");
        }
    }
}

ParticleEnsemble parareal_correction(const ParticleEnsemble& F, const ParticleEnsemble& G_prev,
                                     const ParticleEnsemble& G_new, double L) {
    F.validate();
    G_prev.validate();
    G_new.validate();
    check_same_ids(F, G_prev, "parareal_correction");
    check_same_ids(F, G_new, "parareal_correction");
    ParticleEnsemble U = F;
    for (std::size_t j = 0; j < U.size(); ++j) {
        for (std::size_t d = 0; d < 3; ++d) {
            const double dx = minimum_image(G_new.x[j][d] - G_prev.x[j][d], L);
            U.x[j][d] = wrap_periodic(F.x[j][d] + dx, L);
            U.v[j][d] = F.v[j][d] + (G_new.v[j][d] - G_prev.v[j][d]);
        }
    }
    return U;
}

double convergence_norm(const ParticleEnsemble& U_new, const ParticleEnsemble& U_old, double L,
                        comm::Communicator* space) {
    U_new.validate();
    U_old.validate();
    check_same_ids(U_new, U_old, "convergence_norm");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t j = 0; j < U_new.size(); ++j) {
        for (std::size_t d = 0; d < 3; ++d) {
            const double dx = minimum_image(U_new.x[j][d] - U_old.x[j][d], L);
            const double dv = U_new.v[j][d] - U_old.v[j][d];
            num += dx * dx + dv * dv;
            den += U_new.x[j][d] * U_new.x[j][d] + U_new.v[j][d] * U_new.v[j][d];
        }
    }
    if (space != nullptr && space->size() > 1) {
        const std::vector<cplx> v{cplx(num, den)};
        const auto s = space->allreduce_sum(v);
        num = s[0].real();
        den = s[0].imag();
    }
    if (den == 0.0) {
        return num == 0.0 ? 0.0 : std::sqrt(num);
    }
    return std::sqrt(num / den);
}

RankOutput run_serial(const SimConfig& cfg) { return run_replicated(cfg, nullptr, 0); }

RankOutput run_particle_decomposition(const SimConfig& cfg, comm::RankContext& ctx) {
    return run_replicated(cfg, &ctx.space, ctx.world_rank);
}

RankOutput run_domain_decomposition(const SimConfig& cfg, comm::RankContext& ctx) {
    auto& world = ctx.space.valid() ? ctx.space : ctx.world;
    const int P = world.size();
    const int me = world.rank();
    ctx.slab = comm::SlabTopology::periodic(me, P);
    RankOutput out;
    out.world_rank = ctx.world_rank;
    out.space_rank = me;
    out.space_size = P;
    TimerSet timers;
    const auto plan = nufft::make_plan(cfg.bench.N, cfg.bench.L, cfg.eps);
    DdPifSolver solver(plan, cfg.shape, world);
    const auto& layout = solver.layout();
    ParticleEnsemble local = bench::sample_filtered(cfg.bench, [&](const Vec3& x) {
        return layout.owner_of_plane(nufft::owner_plane(plan, x[2])) == me;
    });
    const auto ext = cfg.bench.externals();
    propagate(
        local, solver, ext, cfg.dt, cfg.bench.L, cfg.steps, &timers, true,
        [&](ParticleEnsemble& p) {
            migrate_particles(p, plan, layout, world);
            out.particle_counts.push_back(p.size());
        },
        [&](long s, const ParticleEnsemble& p, const FieldSample& f) {
            if (record_step(cfg, s)) {
                out.records.push_back(local_diagnostics(p, ext, f, f.energy_replicated ? me == 0 : true, s,
                                                        s * cfg.dt));
            }
        });
    timers.finalize();
    out.timers = RankTimers::from(ctx.world_rank, timers);
    out.final_particles = std::move(local);
    return out;
}

RankOutput run_parareal(const SimConfig& cfg, const ParrealConfig& pr, comm::RankContext& ctx) {
    comm::Communicator& space = ctx.space;
    comm::Communicator& time = ctx.time;
    const int Pt = time.size();
    const int r = time.rank();
    const int s = space.rank();
    if (Pt != pr.P_t) {
        throw InvalidArgument("run_parareal: time communicator size differs from P_t");
    }
    const long S = cfg.steps / (static_cast<long>(pr.blocks) * Pt);
    const double slab_T = static_cast<double>(S) * cfg.dt;
    const long coarse_steps = std::lround(slab_T / pr.coarse.dt);
    if (S * static_cast<long>(pr.blocks) * Pt != cfg.steps || coarse_steps < 1 ||
        std::abs(coarse_steps * pr.coarse.dt - slab_T) > 1e-9 * slab_T) {
        throw InvalidArgument("run_parareal: steps must split evenly into blocks, slabs and coarse steps");
    }

    RankOutput out;
    out.world_rank = ctx.world_rank;
    out.space_rank = s;
    out.time_rank = r;
    out.space_size = space.size();
    TimerSet timers;
    const double L = cfg.bench.L;
    const auto ext = cfg.bench.externals();
    const auto plan = nufft::make_plan(cfg.bench.N, L, cfg.eps);
    PifSolver fine(plan, cfg.shape, &space);
    std::unique_ptr<FieldSolver> coarse;
    if (pr.coarse.kind == CoarseConfig::Kind::Pif) {
        coarse = std::make_unique<PifSolver>(nufft::make_plan(cfg.bench.N, L, pr.coarse.eps), cfg.shape, &space);
    } else {
        coarse = std::make_unique<PicSolver>(pr.coarse.Nc > 0 ? pr.coarse.Nc : cfg.bench.N, L, &space);
    }

    auto run_fine = [&](const ParticleEnsemble& start, int block, std::vector<StepRecord>& recs) {
        TimedScope t(&timers, TimerCategory::FinePropagator);
        recs.clear();
        const long step0 = (static_cast<long>(block) * Pt + r) * S;
        ParticleEnsemble p = start;
        propagate(p, fine, ext, cfg.dt, L, S, &timers, true, {},
                  [&](long i, const ParticleEnsemble& q, const FieldSample& f) {
                      const long g = step0 + i;
                      if ((i > 0 || g == 0) && record_step(cfg, g)) {
                          recs.push_back(local_diagnostics(q, ext, f, s == 0, g, g * cfg.dt));
                      }
                  });
        return p;
    };
    auto run_coarse = [&](const ParticleEnsemble& start) {
        TimedScope t(&timers, TimerCategory::CoarsePropagator);
        ParticleEnsemble p = start;
        propagate(p, *coarse, ext, pr.coarse.dt, L, coarse_steps, &timers, false, {}, {});
        return p;
    };

    const auto [id0, id1] = bench::block_range(cfg.bench.num_particles(), space.size(), s);
    ParticleEnsemble carry = r == 0 ? bench::sample_range(cfg.bench, id0, id1) : ParticleEnsemble{};

    for (int b = 0; b < pr.blocks; ++b) {
        BlockReport report;
        ParticleEnsemble start;
        if (r == 0) {
            if (b > 0 && Pt > 1) {
                start = recv_state(time, Pt - 1, nullptr, &timers);
            } else {
                start = std::move(carry);
            }
        } else {
            start = recv_state(time, r - 1, nullptr, &timers);
        }
        ParticleEnsemble G_prev = run_coarse(start);
        if (r < Pt - 1) {
            send_state(time, r + 1, G_prev, std::nullopt, &timers);
        }
        ParticleEnsemble U_end = G_prev;
        bool pred_done = r == 0;
        bool start_final = pred_done;
        bool start_changed = true;
        ParticleEnsemble F;
        std::vector<StepRecord> recs;
        bool done = false;
        for (int k = 1; k <= pr.max_iters; ++k) {
            if (start_changed) {
                F = run_fine(start, b, recs);
                start_changed = false;
            }
            const bool F_from_final = start_final;
            bool received = false;
            if (!pred_done) {
                bool flag = false;
                start = recv_state(time, r - 1, &flag, &timers);
                pred_done = flag;
                start_final = flag;
                start_changed = true;
                received = true;
            }
            ParticleEnsemble G_new = received ? run_coarse(start) : G_prev;
            ParticleEnsemble U_new = parareal_correction(F, G_prev, G_new, L);
            const double res = convergence_norm(U_new, U_end, L, &space);
            U_end = std::move(U_new);
            G_prev = std::move(G_new);
            done = pred_done && (res <= pr.tol || F_from_final);
            report.residuals.push_back(res);
            report.iterations = k;
            if (pr.record_states) {
                report.end_states.push_back(U_end);
            }
            if (r < Pt - 1) {
                send_state(time, r + 1, U_end, done, &timers);
            }
            if (done) {
                break;
            }
        }
        if (!done) {
            throw ParrealNonConvergence("parareal block " + std::to_string(b) + " on time rank " + std::to_string(r) +
                                            " did not converge in " + std::to_string(pr.max_iters) + " iterations",
                                        report.residuals);
        }
        out.records.insert(out.records.end(), recs.begin(), recs.end());
        out.blocks.push_back(std::move(report));
        if (b + 1 < pr.blocks) {
            if (Pt == 1) {
                carry = U_end;
            } else if (r == Pt - 1) {
                send_state(time, 0, U_end, std::nullopt, &timers);
            }
        }
        if (b + 1 == pr.blocks) {
            out.final_particles = std::move(U_end);
        }
    }
    timers.finalize();
    out.timers = RankTimers::from(ctx.world_rank, timers);
    return out;
}

// ---------------------------------------------------------------------------

void validate(const RunRequest& req) {
    const auto& c = req.sim;
    c.bench.validate();
    if (!(c.dt > 0.0)) throw InvalidArgument("dt must be positive");
    if (c.steps < 1) throw InvalidArgument("steps must be >= 1");
    if (!(c.eps >= 1e-16 && c.eps <= 1e-1)) throw InvalidArgument("eps must lie in [1e-16, 1e-1]");
    if (c.diag_every < 1) throw InvalidArgument("diag_every must be >= 1");
    if (req.ranks_space < 1 || req.ranks_time < 1) throw InvalidArgument("rank counts must be >= 1");
    switch (req.strategy) {
        case Strategy::Serial:
            if (req.ranks_space != 1 || req.ranks_time != 1) {
                throw InvalidArgument("serial strategy runs on exactly one rank");
            }
            break;
        case Strategy::ParticleDecomposition:
        case Strategy::DomainDecomposition:
            if (req.ranks_time != 1) {
                throw InvalidArgument(to_string(req.strategy) + " requires ranks_time = 1");
            }
            break;
        case Strategy::SpaceTime: {
            const auto& pr = req.parareal;
            if (req.ranks_time < 2) throw InvalidArgument("st requires ranks_time >= 2");
            if (pr.P_t != req.ranks_time) throw InvalidArgument("parareal P_t must equal ranks_time");
            if (pr.blocks < 1) throw InvalidArgument("blocks must be >= 1");
            if (pr.max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
            if (!(pr.tol > 0.0)) throw InvalidArgument("parareal tolerance must be positive");
            if (c.steps % (static_cast<long>(pr.blocks) * pr.P_t) != 0) {
                throw InvalidArgument("steps must be divisible by blocks * ranks_time");
            }
            if (!(pr.coarse.dt > 0.0)) throw InvalidArgument("dt_coarse must be positive");
            const double ratio = pr.coarse.dt / c.dt;
            if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || std::round(ratio) < 1.0) {
                throw InvalidArgument("dt_coarse must be an integer multiple of dt");
            }
            const long S = c.steps / (static_cast<long>(pr.blocks) * pr.P_t);
            const long m = std::lround(ratio);
            if (S % m != 0) {
                throw InvalidArgument("slab length (" + std::to_string(S) + " steps) must be a multiple of dt_coarse/dt");
            }
            if (pr.coarse.kind == CoarseConfig::Kind::Pif && !(pr.coarse.eps >= 1e-16 && pr.coarse.eps <= 1e-1)) {
                throw InvalidArgument("eps_coarse must lie in [1e-16, 1e-1]");
            }
            if (pr.coarse.kind == CoarseConfig::Kind::Pic && pr.coarse.Nc != 0 &&
                (pr.coarse.Nc < 2 || pr.coarse.Nc % 2 != 0)) {
                throw InvalidArgument("coarse grid N_c must be even");
            }
            break;
        }
    }
    if (req.strategy == Strategy::DomainDecomposition) {
        const auto plan = nufft::make_plan(c.bench.N, c.bench.L, c.eps);
        (void)nufft::slab_layout(plan, req.ranks_space);
    }
}

SimulationResult simulate(const RunRequest& req) {
    validate(req);
    const auto t0 = std::chrono::steady_clock::now();
    const int nranks = req.ranks_space * req.ranks_time;
    auto program = [&](comm::RankContext& ctx) -> RankOutput {
        switch (req.strategy) {
            case Strategy::Serial: return run_serial(req.sim);
            case Strategy::ParticleDecomposition: return run_particle_decomposition(req.sim, ctx);
            case Strategy::DomainDecomposition: return run_domain_decomposition(req.sim, ctx);
            case Strategy::SpaceTime:
                comm::make_space_time(ctx, req.ranks_space, req.ranks_time);
                return run_parareal(req.sim, req.parareal, ctx);
        }
        throw InvalidArgument("unknown strategy");
    };
    auto spmd = comm::spawn_spmd(nranks, program, req.spmd);

    SimulationResult res;
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.call_log = std::move(spmd.log);
    res.ranks = std::move(spmd.results);

    std::map<long, std::vector<StepRecord>> by_step;
    for (const auto& r : res.ranks) {
        for (const auto& rec : r.records) {
            by_step[rec.step].push_back(rec);
        }
        res.timers.push_back(r.timers);
    }
    const double q = req.sim.bench.charge_per_particle();
    const std::uint64_t expected = req.sim.bench.num_particles();
    for (const auto& [step, parts] : by_step) {
        auto rec = combine_records(parts, q);
        if (req.strategy == Strategy::SpaceTime) {
            // Every space rank of the owning time rank contributes once.
            if (parts.size() != static_cast<std::size_t>(req.ranks_space)) {
                throw Error("simulate: incomplete records for step " + std::to_string(step));
            }
        }
        if (rec.particle_count != expected) {
            throw Error("simulate: global particle count " + std::to_string(rec.particle_count) + " at step " +
                        std::to_string(step) + " differs from " + std::to_string(expected));
        }
        if (step == 0) {
            res.initial = rec;
        } else {
            res.records.push_back(rec);
        }
    }

    if (req.strategy == Strategy::DomainDecomposition) {
        const std::size_t nsteps = res.ranks.empty() ? 0 : res.ranks[0].particle_counts.size();
        for (std::size_t i = 0; i < nsteps; ++i) {
            std::size_t lo = SIZE_MAX, hi = 0;
            for (const auto& r : res.ranks) {
                lo = std::min(lo, r.particle_counts[i]);
                hi = std::max(hi, r.particle_counts[i]);
            }
            res.max_count_imbalance = std::max(res.max_count_imbalance,
                                               static_cast<double>(hi) / static_cast<double>(std::max<std::size_t>(lo, 1)));
        }
    }

    if (req.strategy == Strategy::SpaceTime) {
        for (int b = 0; b < req.parareal.blocks; ++b) {
            int iters = 0;
            std::vector<double> hist;
            for (const auto& r : res.ranks) {
                const auto& br = r.blocks[static_cast<std::size_t>(b)];
                iters = std::max(iters, br.iterations);
                if (hist.size() < br.residuals.size()) {
                    hist.resize(br.residuals.size(), 0.0);
                }
                for (std::size_t k = 0; k < br.residuals.size(); ++k) {
                    hist[k] = std::max(hist[k], br.residuals[k]);
                }
            }
            res.iterations_per_block.push_back(iters);
            res.residuals_per_block.push_back(std::move(hist));
        }
    }
    return res;
}

}  // namespace pifsim

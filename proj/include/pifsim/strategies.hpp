#pragma once

// Serial, particle-decomposition, domain-decomposition and space-time
// (parareal) drivers over the SPMD communicator.

#include <optional>
#include <string>
#include <vector>

#include "pifsim/bench.hpp"
#include "pifsim/comm.hpp"
#include "pifsim/diag.hpp"
#include "pifsim/pif.hpp"

namespace pifsim {

enum class Strategy { Serial, DomainDecomposition, ParticleDecomposition, SpaceTime };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct SimConfig {
    bench::BenchmarkSpec bench = bench::BenchmarkSpec::landau(16, 10);
    double dt = 0.003125;
    long steps = 768;
    double eps = 1e-7;
    Shape shape = Shape::Delta;
    int diag_every = 1;
    /// Keep the particle state every this many steps (0: never). Serial and pd only.
    long snapshot_every = 0;
};

struct CoarseConfig {
    enum class Kind { Pif, Pic };
    Kind kind = Kind::Pif;
    double eps = 1e-3;    // pif
    int Nc = 0;           // pic grid per dimension, 0 means N
    double dt = 0.05;
};

struct ParrealConfig {
    int P_t = 2;
    double tol = 1e-8;
    int max_iters = 50;
    CoarseConfig coarse;
    int blocks = 1;
    /// Keep each rank's slab-end state after every iteration.
    bool record_states = false;
};

/// Parareal did not reach the tolerance within max_iters.
class ParrealNonConvergence : public Error {
  public:
    ParrealNonConvergence(const std::string& what, std::vector<double> history)
        : Error(what), history_(std::move(history)) {}
    const std::vector<double>& history() const { return history_; }

  private:
    std::vector<double> history_;
};

struct BlockReport {
    int iterations = 0;
    std::vector<double> residuals;  // per iteration on this rank
    std::vector<ParticleEnsemble> end_states;  // per iteration, if recorded
};

/// Everything one rank produces.
struct RankOutput {
    int world_rank = 0;
    int space_rank = 0;
    int time_rank = 0;
    int space_size = 1;
    std::vector<StepRecord> records;  // partial, ascending step
    RankTimers timers;
    std::vector<std::size_t> particle_counts;  // local count after each step (dd)
    std::vector<BlockReport> blocks;           // parareal
    std::vector<std::pair<long, ParticleEnsemble>> snapshots;
    ParticleEnsemble final_particles;
};

// --- building blocks -------------------------------------------------------

/// Moves every particle to the rank owning its z slab. Uses nearest-neighbour
/// exchanges only, forwarding over several rounds when a particle is more than
/// one slab away.
void migrate_particles(ParticleEnsemble& p, const nufft::Plan& plan, const fft::SlabLayout& layout,
                       comm::Communicator& comm);

/// U = F + (G_new - G_prev) per particle; positions use minimum-image
/// differences and are wrapped into [0, L).
ParticleEnsemble parareal_correction(const ParticleEnsemble& F, const ParticleEnsemble& G_prev,
                                     const ParticleEnsemble& G_new, double L);

/// Relative l2 change between two iterates, reduced over `space` if given.
double convergence_norm(const ParticleEnsemble& U_new, const ParticleEnsemble& U_old, double L,
                        comm::Communicator* space = nullptr);

// --- rank programs ---------------------------------------------------------

RankOutput run_serial(const SimConfig& cfg);
RankOutput run_particle_decomposition(const SimConfig& cfg, comm::RankContext& ctx);
RankOutput run_domain_decomposition(const SimConfig& cfg, comm::RankContext& ctx);
/// Expects ctx.space / ctx.time to be set up (see comm::make_space_time).
RankOutput run_parareal(const SimConfig& cfg, const ParrealConfig& pr, comm::RankContext& ctx);

// --- driver ----------------------------------------------------------------

struct RunRequest {
    SimConfig sim;
    Strategy strategy = Strategy::Serial;
    int ranks_space = 1;
    int ranks_time = 1;
    ParrealConfig parareal;
    comm::SpmdOptions spmd;
};

struct SimulationResult {
    StepRecord initial;
    std::vector<StepRecord> records;  // every diag_every steps, step >= 1
    std::vector<RankTimers> timers;
    std::vector<int> iterations_per_block;
    std::vector<std::vector<double>> residuals_per_block;  // max over active ranks per iteration
    double max_count_imbalance = 1.0;  // max over steps of max/min local counts (dd)
    std::vector<comm::CallRecord> call_log;
    std::vector<RankOutput> ranks;
    double wall_seconds = 0.0;
};

/// Validates the request; throws InvalidArgument on bad combinations.
void validate(const RunRequest& req);

SimulationResult simulate(const RunRequest& req);

}  // namespace pifsim

#pragma once

// In-process SPMD message passing.
//
// Every rank is a worker thread inside one process. Ranks talk only through
// Communicator handles: FIFO mailboxes per ordered rank pair for point-to-point
// traffic, and fixed-order collectives (allreduce, alltoall) built on private
// mailboxes of the same kind. Blocking receives are supervised by a watchdog
// that aborts the job when every live rank is blocked.

#include <chrono>
#include <cstddef>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <type_traits>
#include <string>
#include <vector>

#include "pifsim/types.hpp"

namespace pifsim::comm {

/// Particle attributes in transit. All arrays have the same length.
struct ParticleBatch {
    std::vector<Vec3> x;
    std::vector<Vec3> v;
    std::vector<double> q;
    std::vector<double> m;
    std::vector<std::uint64_t> ids;

    std::size_t size() const { return ids.size(); }
    bool consistent() const;
};

/// Tagged byte sequence moved between ranks.
class Payload {
  public:
    enum class Kind : std::uint8_t { Complex = 1, Particles = 2, Scalar = 3 };

    static Payload from_complex(std::span<const cplx> values);
    static Payload from_particles(const ParticleBatch& batch);
    static Payload from_scalar(double value);
    static Payload from_bytes(std::vector<std::byte> bytes);

    Kind kind() const;
    std::vector<cplx> to_complex() const;
    ParticleBatch to_particles() const;
    double to_scalar() const;

    std::size_t size_bytes() const { return bytes_.size(); }
    const std::vector<std::byte>& bytes() const { return bytes_; }

  private:
    explicit Payload(std::vector<std::byte> bytes) : bytes_(std::move(bytes)) {}
    std::vector<std::byte> bytes_;
};

/// One line of the optional call log.
struct CallRecord {
    int world_rank = 0;
    std::uint64_t seq = 0;
    std::string primitive;  // allreduce_sum | send | recv | alltoall
    std::string comm;       // communicator label
    int peer = -1;          // rank within `comm`, -1 for collectives
    std::size_t bytes = 0;
};

std::string call_log_csv(std::span<const CallRecord> log);

/// A rank failed; names the failing rank. The original exception is nested.
class SpmdError : public Error {
  public:
    SpmdError(int rank, const std::string& what) : Error(what), rank_(rank) {}
    int rank() const { return rank_; }

  private:
    int rank_;
};

/// All live ranks were blocked for longer than the watchdog timeout.
class DeadlockError : public Error {
  public:
    using Error::Error;
};

/// Raised on ranks that were still running when another rank failed.
class AbortedError : public Error {
  public:
    using Error::Error;
};

namespace detail {
class World;
struct Group;
}  // namespace detail

class Communicator {
  public:
    Communicator() = default;

    int rank() const { return rank_; }
    int size() const;
    int world_rank() const;
    const std::string& name() const { return name_; }
    bool valid() const { return static_cast<bool>(group_); }

    /// Element-wise sum over all ranks, combined along a fixed binary tree.
    std::vector<cplx> allreduce_sum(std::span<const cplx> values);

    void send(int dest, Payload payload);
    Payload recv(int src);

    /// Block j goes to rank j; result[i] is the block rank i addressed to us.
    /// If `expected_sizes` is given, result[i].size() must equal it.
    std::vector<std::vector<cplx>> alltoall(std::vector<std::vector<cplx>> blocks,
                                            std::span<const std::size_t> expected_sizes = {});

    /// Collective. Ranks with equal color share the result, ordered by (key, rank).
    Communicator split(int color, int key, std::string name = {});

  private:
    friend class detail::World;
    Communicator(std::shared_ptr<detail::World> world, std::shared_ptr<const detail::Group> group,
                 int rank, std::string name)
        : world_(std::move(world)), group_(std::move(group)), rank_(rank), name_(std::move(name)) {}

    void log(const char* primitive, int peer, std::size_t bytes);
    void sys_send(int dest, Payload payload);
    Payload sys_recv(int src);

    std::shared_ptr<detail::World> world_;
    std::shared_ptr<const detail::Group> group_;
    int rank_ = 0;
    std::string name_;
};

struct SlabTopology {
    int slab = 0;
    int count = 1;
    int left = 0;
    int right = 0;

    static SlabTopology periodic(int slab, int count) {
        return {slab, count, (slab + count - 1) % count, (slab + 1) % count};
    }
};

struct RankContext {
    int world_size = 1;
    int world_rank = 0;
    Communicator world;
    Communicator space;
    Communicator time;
    std::optional<SlabTopology> slab;
};

/// Splits the world into P_s x P_t with world_rank = time_index * P_s + space_index.
void make_space_time(RankContext& ctx, int space_ranks, int time_ranks);

struct SpmdOptions {
    std::chrono::milliseconds watchdog{60000};
    bool log_calls = false;
};

namespace detail {
/// Runs `program` on `num_ranks` workers; rethrows the first failure as SpmdError.
void run_workers(int num_ranks, const std::function<void(RankContext&)>& program,
                 const SpmdOptions& options, std::vector<CallRecord>* log);
}  // namespace detail

template <class R>
struct SpmdResult {
    std::vector<R> results;
    std::vector<CallRecord> log;
};

template <class Program>
auto spawn_spmd(int num_ranks, Program&& program, const SpmdOptions& options = {})
    -> SpmdResult<std::invoke_result_t<Program&, RankContext&>> {
    using R = std::invoke_result_t<Program&, RankContext&>;
    if (num_ranks < 1) {
        throw InvalidArgument("spawn_spmd: num_ranks must be >= 1");
    }
    std::vector<std::optional<R>> slots(static_cast<std::size_t>(num_ranks));
    SpmdResult<R> out;
    detail::run_workers(
        num_ranks,
        [&](RankContext& ctx) { slots[static_cast<std::size_t>(ctx.world_rank)].emplace(program(ctx)); },
        options, &out.log);
    out.results.reserve(slots.size());
    for (auto& s : slots) {
        out.results.push_back(std::move(*s));
    }
    return out;
}

}  // namespace pifsim::comm

#include "pifsim/comm.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

namespace pifsim::comm {

// ---------------------------------------------------------------------------
// ParticleBatch / Payload

bool ParticleBatch::consistent() const {
    const std::size_t n = ids.size();
    return x.size() == n && v.size() == n && q.size() == n && m.size() == n;
}

namespace {

constexpr std::size_t kHeader = 16;  // kind byte + padding, then u64 count

template <class T>
void put(std::vector<std::byte>& out, std::size_t& pos, const T* data, std::size_t n) {
    const std::size_t bytes = n * sizeof(T);
    if (bytes != 0) {
        std::memcpy(out.data() + pos, data, bytes);
    }
    pos += bytes;
}

template <class T>
void get(const std::vector<std::byte>& in, std::size_t& pos, T* data, std::size_t n) {
    const std::size_t bytes = n * sizeof(T);
    if (bytes != 0) {
        std::memcpy(data, in.data() + pos, bytes);
    }
    pos += bytes;
}

std::vector<std::byte> with_header(Payload::Kind kind, std::uint64_t count, std::size_t body) {
    std::vector<std::byte> out(kHeader + body);
    out[0] = static_cast<std::byte>(kind);
    std::memcpy(out.data() + 8, &count, sizeof(count));
    return out;
}

std::uint64_t header_count(const std::vector<std::byte>& b) {
    std::uint64_t n = 0;
    std::memcpy(&n, b.data() + 8, sizeof(n));
    return n;
}

constexpr std::size_t kParticleBytes = 2 * sizeof(Vec3) + 2 * sizeof(double) + sizeof(std::uint64_t);

}  // namespace

Payload Payload::from_complex(std::span<const cplx> values) {
    auto out = with_header(Kind::Complex, values.size(), values.size() * sizeof(cplx));
    std::size_t pos = kHeader;
    put(out, pos, values.data(), values.size());
    return Payload(std::move(out));
}

Payload Payload::from_particles(const ParticleBatch& batch) {
    if (!batch.consistent()) {
        throw InvalidArgument("Payload: particle batch attribute lengths differ");
    }
    const std::size_t n = batch.size();
    auto out = with_header(Kind::Particles, n, n * kParticleBytes);
    std::size_t pos = kHeader;
    put(out, pos, batch.x.data(), n);
    put(out, pos, batch.v.data(), n);
    put(out, pos, batch.q.data(), n);
    put(out, pos, batch.m.data(), n);
    put(out, pos, batch.ids.data(), n);
    return Payload(std::move(out));
}

Payload Payload::from_scalar(double value) {
    auto out = with_header(Kind::Scalar, 1, sizeof(double));
    std::size_t pos = kHeader;
    put(out, pos, &value, 1);
    return Payload(std::move(out));
}

Payload Payload::from_bytes(std::vector<std::byte> bytes) {
    if (bytes.size() < kHeader) {
        throw InvalidArgument("Payload: truncated header");
    }
    const auto kind = static_cast<Kind>(bytes[0]);
    const std::uint64_t n = header_count(bytes);
    std::size_t body = 0;
    switch (kind) {
        case Kind::Complex: body = n * sizeof(cplx); break;
        case Kind::Particles: body = n * kParticleBytes; break;
        case Kind::Scalar:
            if (n != 1) {
                throw InvalidArgument("Payload: scalar with count != 1");
            }
            body = sizeof(double);
            break;
        default: throw InvalidArgument("Payload: unknown kind tag");
    }
    if (bytes.size() != kHeader + body) {
        throw InvalidArgument("Payload: length field inconsistent with byte count");
    }
    return Payload(std::move(bytes));
}

Payload::Kind Payload::kind() const { return static_cast<Kind>(bytes_.at(0)); }

std::vector<cplx> Payload::to_complex() const {
    if (kind() != Kind::Complex) {
        throw InvalidArgument("Payload: not a complex array");
    }
    std::vector<cplx> out(header_count(bytes_));
    std::size_t pos = kHeader;
    get(bytes_, pos, out.data(), out.size());
    return out;
}

ParticleBatch Payload::to_particles() const {
    if (kind() != Kind::Particles) {
        throw InvalidArgument("Payload: not a particle batch");
    }
    const std::size_t n = header_count(bytes_);
    ParticleBatch b;
    b.x.resize(n);
    b.v.resize(n);
    b.q.resize(n);
    b.m.resize(n);
    b.ids.resize(n);
    std::size_t pos = kHeader;
    get(bytes_, pos, b.x.data(), n);
    get(bytes_, pos, b.v.data(), n);
    get(bytes_, pos, b.q.data(), n);
    get(bytes_, pos, b.m.data(), n);
    get(bytes_, pos, b.ids.data(), n);
    return b;
}

double Payload::to_scalar() const {
    if (kind() != Kind::Scalar) {
        throw InvalidArgument("Payload: not a scalar");
    }
    double v = 0.0;
    std::size_t pos = kHeader;
    get(bytes_, pos, &v, 1);
    return v;
}

std::string call_log_csv(std::span<const CallRecord> log) {
    std::ostringstream os;
    os << "rank,primitive,comm,peer,bytes\n";
    for (const auto& r : log) {
        os << r.world_rank << ',' << r.primitive << ',' << r.comm << ',' << r.peer << ',' << r.bytes
           << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// World

namespace detail {

struct Group {
    std::uint64_t id = 0;
    std::vector<int> world_ranks;
};

enum class Channel : int { User = 0, System = 1 };

struct MailboxKey {
    std::uint64_t group;
    int channel;
    int src;
    int dst;
    auto operator<=>(const MailboxKey&) const = default;
};

class World : public std::enable_shared_from_this<World> {
  public:
    using Clock = std::chrono::steady_clock;

    World(int num_ranks, SpmdOptions options)
        : options_(options),
          states_(static_cast<std::size_t>(num_ranks), State::Running),
          waiting_(static_cast<std::size_t>(num_ranks)),
          seq_(static_cast<std::size_t>(num_ranks), 0) {}

    std::shared_ptr<const Group> make_group(std::vector<int> world_ranks) {
        std::lock_guard lk(mu_);
        auto g = std::make_shared<Group>();
        g->id = next_group_++;
        g->world_ranks = std::move(world_ranks);
        groups_[g->id] = g;
        return g;
    }

    std::shared_ptr<const Group> group(std::uint64_t id) {
        std::lock_guard lk(mu_);
        return groups_.at(id);
    }

    Communicator make_comm(std::shared_ptr<const Group> g, int rank, std::string name) {
        return Communicator(shared_from_this(), std::move(g), rank, std::move(name));
    }

    void post(const MailboxKey& key, std::vector<std::byte> bytes) {
        {
            std::lock_guard lk(mu_);
            boxes_[key].push_back(std::move(bytes));
            blocked_since_.reset();
        }
        cv_.notify_all();
    }

    std::vector<std::byte> take(const MailboxKey& key, int world_rank) {
        std::unique_lock lk(mu_);
        auto& box = boxes_[key];
        const auto me = static_cast<std::size_t>(world_rank);
        const auto slice = std::clamp(options_.watchdog / 4, std::chrono::milliseconds(1),
                                      std::chrono::milliseconds(50));
        while (box.empty()) {
            if (aborted_) {
                states_[me] = State::Running;
                if (deadlock_) {
                    throw DeadlockError(abort_reason_);
                }
                throw AbortedError("aborted: " + abort_reason_);
            }
            states_[me] = State::Blocked;
            waiting_[me] = key;
            if (all_live_blocked()) {
                const auto now = Clock::now();
                if (!blocked_since_) {
                    blocked_since_ = now;
                } else if (now - *blocked_since_ >= options_.watchdog) {
                    declare_deadlock();
                    continue;
                }
            } else {
                blocked_since_.reset();
            }
            cv_.wait_for(lk, slice);
        }
        states_[me] = State::Running;
        blocked_since_.reset();
        auto out = std::move(box.front());
        box.pop_front();
        return out;
    }

    void finish(int world_rank) {
        {
            std::lock_guard lk(mu_);
            states_[static_cast<std::size_t>(world_rank)] = State::Finished;
        }
        cv_.notify_all();
    }

    void fail(int world_rank, const std::string& what, bool is_abort) {
        {
            std::lock_guard lk(mu_);
            if (!aborted_) {
                aborted_ = true;
                abort_reason_ = "rank " + std::to_string(world_rank) + " failed: " + what;
            }
            if (!is_abort && first_failure_ < 0) {
                first_failure_ = world_rank;
            }
        }
        cv_.notify_all();
    }

    int first_failure() const {
        std::lock_guard lk(mu_);
        return first_failure_;
    }

    void log(int world_rank, const char* primitive, const std::string& comm, int peer,
             std::size_t bytes) {
        if (!options_.log_calls) {
            return;
        }
        std::lock_guard lk(mu_);
        log_.push_back({world_rank, seq_[static_cast<std::size_t>(world_rank)]++, primitive, comm,
                        peer, bytes});
    }

    std::vector<CallRecord> take_log() {
        std::lock_guard lk(mu_);
        auto out = std::move(log_);
        std::stable_sort(out.begin(), out.end(), [](const CallRecord& a, const CallRecord& b) {
            return std::tie(a.world_rank, a.seq) < std::tie(b.world_rank, b.seq);
        });
        return out;
    }

  private:
    enum class State { Running, Blocked, Finished };

    bool all_live_blocked() const {
        bool any_live = false;
        for (std::size_t r = 0; r < states_.size(); ++r) {
            if (states_[r] == State::Finished) {
                continue;
            }
            any_live = true;
            if (states_[r] != State::Blocked) {
                return false;
            }
            auto it = boxes_.find(waiting_[r]);
            if (it != boxes_.end() && !it->second.empty()) {
                return false;
            }
        }
        return any_live;
    }

    void declare_deadlock() {
        std::ostringstream os;
        os << "deadlock watchdog: all live ranks blocked for " << options_.watchdog.count()
           << " ms; blocked ranks:";
        for (std::size_t r = 0; r < states_.size(); ++r) {
            if (states_[r] == State::Blocked) {
                const auto& k = waiting_[r];
                os << " [rank " << r << " waiting on " << (k.channel == 0 ? "recv" : "collective")
                   << " from group-rank " << k.src << " in group " << k.group << "]";
            }
        }
        aborted_ = true;
        deadlock_ = true;
        abort_reason_ = os.str();
        cv_.notify_all();
    }

    SpmdOptions options_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::map<MailboxKey, std::deque<std::vector<std::byte>>> boxes_;
    std::map<std::uint64_t, std::shared_ptr<const Group>> groups_;
    std::uint64_t next_group_ = 1;
    std::vector<State> states_;
    std::vector<MailboxKey> waiting_;
    std::optional<Clock::time_point> blocked_since_;
    bool aborted_ = false;
    bool deadlock_ = false;
    std::string abort_reason_;
    int first_failure_ = -1;
    std::vector<std::uint64_t> seq_;
    std::vector<CallRecord> log_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Communicator

int Communicator::size() const { return static_cast<int>(group_->world_ranks.size()); }

int Communicator::world_rank() const { return group_->world_ranks[static_cast<std::size_t>(rank_)]; }

void Communicator::log(const char* primitive, int peer, std::size_t bytes) {
    world_->log(world_rank(), primitive, name_, peer, bytes);
}

void Communicator::sys_send(int dest, Payload payload) {
    world_->post({group_->id, static_cast<int>(detail::Channel::System), rank_, dest},
                 payload.bytes());
}

Payload Communicator::sys_recv(int src) {
    auto bytes =
        world_->take({group_->id, static_cast<int>(detail::Channel::System), src, rank_}, world_rank());
    return Payload::from_bytes(std::move(bytes));
}

void Communicator::send(int dest, Payload payload) {
    if (dest < 0 || dest >= size()) {
        throw InvalidArgument("send: destination rank " + std::to_string(dest) + " out of range");
    }
    log("send", dest, payload.size_bytes());
    world_->post({group_->id, static_cast<int>(detail::Channel::User), rank_, dest}, payload.bytes());
}

Payload Communicator::recv(int src) {
    if (src < 0 || src >= size()) {
        throw InvalidArgument("recv: source rank " + std::to_string(src) + " out of range");
    }
    auto bytes =
        world_->take({group_->id, static_cast<int>(detail::Channel::User), src, rank_}, world_rank());
    auto p = Payload::from_bytes(std::move(bytes));
    log("recv", src, p.size_bytes());
    return p;
}

std::vector<cplx> Communicator::allreduce_sum(std::span<const cplx> values) {
    log("allreduce_sum", -1, values.size() * sizeof(cplx));
    std::vector<cplx> acc(values.begin(), values.end());
    const int p = size();
    if (p == 1) {
        return acc;
    }
    // Binomial reduce to rank 0: at each level the lower rank adds the upper partner.
    int level = 1;
    for (; level < p; level <<= 1) {
        if (rank_ % (2 * level) == 0) {
            const int partner = rank_ + level;
            if (partner < p) {
                auto other = sys_recv(partner).to_complex();
                if (other.size() != acc.size()) {
                    throw InvalidArgument("allreduce_sum: length mismatch (" +
                                          std::to_string(acc.size()) + " vs " +
                                          std::to_string(other.size()) + " from rank " +
                                          std::to_string(partner) + ")");
                }
                for (std::size_t i = 0; i < acc.size(); ++i) {
                    acc[i] += other[i];
                }
            }
        } else {
            sys_send(rank_ - level, Payload::from_complex(acc));
            break;
        }
    }
    // Broadcast back down the same tree.
    if (rank_ != 0) {
        acc = sys_recv(rank_ - level).to_complex();
    }
    for (int l = level >> 1; l >= 1; l >>= 1) {
        if (rank_ % (2 * l) == 0 && rank_ + l < p) {
            sys_send(rank_ + l, Payload::from_complex(acc));
        }
    }
    return acc;
}

std::vector<std::vector<cplx>> Communicator::alltoall(std::vector<std::vector<cplx>> blocks,
                                                      std::span<const std::size_t> expected_sizes) {
    const int p = size();
    if (static_cast<int>(blocks.size()) != p) {
        throw InvalidArgument("alltoall: need exactly one block per rank");
    }
    if (!expected_sizes.empty() && static_cast<int>(expected_sizes.size()) != p) {
        throw InvalidArgument("alltoall: expected_sizes must have one entry per rank");
    }
    std::size_t bytes = 0;
    for (const auto& b : blocks) {
        bytes += b.size() * sizeof(cplx);
    }
    log("alltoall", -1, bytes);
    std::vector<std::vector<cplx>> out(static_cast<std::size_t>(p));
    for (int j = 1; j < p; ++j) {
        const int dest = (rank_ + j) % p;
        sys_send(dest, Payload::from_complex(blocks[static_cast<std::size_t>(dest)]));
    }
    out[static_cast<std::size_t>(rank_)] = std::move(blocks[static_cast<std::size_t>(rank_)]);
    for (int j = 1; j < p; ++j) {
        const int src = (rank_ - j + p) % p;
        out[static_cast<std::size_t>(src)] = sys_recv(src).to_complex();
    }
    if (!expected_sizes.empty()) {
        for (int i = 0; i < p; ++i) {
            const auto got = out[static_cast<std::size_t>(i)].size();
            const auto want = expected_sizes[static_cast<std::size_t>(i)];
            if (got != want) {
                throw InvalidArgument("alltoall: inconsistent block sizes: rank " +
                                      std::to_string(rank_) + " expected " + std::to_string(want) +
                                      " values from rank " + std::to_string(i) + ", got " +
                                      std::to_string(got));
            }
        }
    }
    return out;
}

Communicator Communicator::split(int color, int key, std::string name) {
    const int p = size();
    // Gather (color, key) at rank 0, which assigns groups and replies.
    if (rank_ != 0) {
        const cplx ck(color, key);
        sys_send(0, Payload::from_complex(std::span<const cplx>(&ck, 1)));
        auto reply = sys_recv(0).to_complex();
        const auto gid = static_cast<std::uint64_t>(reply.at(0).real());
        const int new_rank = static_cast<int>(reply.at(0).imag());
        return world_->make_comm(world_->group(gid), new_rank, std::move(name));
    }
    std::vector<std::tuple<int, int, int>> entries;  // color, key, parent rank
    entries.emplace_back(color, key, 0);
    for (int r = 1; r < p; ++r) {
        auto v = sys_recv(r).to_complex();
        entries.emplace_back(static_cast<int>(v.at(0).real()), static_cast<int>(v.at(0).imag()), r);
    }
    std::sort(entries.begin(), entries.end());
    std::map<int, std::pair<std::uint64_t, int>> assigned;  // parent rank -> (gid, new rank)
    for (std::size_t i = 0; i < entries.size();) {
        std::size_t j = i;
        std::vector<int> members;
        while (j < entries.size() && std::get<0>(entries[j]) == std::get<0>(entries[i])) {
            members.push_back(std::get<2>(entries[j]));
            ++j;
        }
        std::vector<int> world_ranks;
        for (int m : members) {
            world_ranks.push_back(group_->world_ranks[static_cast<std::size_t>(m)]);
        }
        auto g = world_->make_group(std::move(world_ranks));
        for (std::size_t n = 0; n < members.size(); ++n) {
            assigned[members[n]] = {g->id, static_cast<int>(n)};
        }
        i = j;
    }
    for (int r = 1; r < p; ++r) {
        const auto [gid, nr] = assigned.at(r);
        const cplx reply(static_cast<double>(gid), nr);
        sys_send(r, Payload::from_complex(std::span<const cplx>(&reply, 1)));
    }
    const auto [gid, nr] = assigned.at(0);
    return world_->make_comm(world_->group(gid), nr, std::move(name));
}

void make_space_time(RankContext& ctx, int space_ranks, int time_ranks) {
    if (space_ranks < 1 || time_ranks < 1 || space_ranks * time_ranks != ctx.world_size) {
        throw InvalidArgument("make_space_time: P_s x P_t must equal the world size");
    }
    const int time_index = ctx.world_rank / space_ranks;
    const int space_index = ctx.world_rank % space_ranks;
    ctx.space = ctx.world.split(time_index, space_index, "space");
    ctx.time = ctx.world.split(space_index, time_index, "time");
}

namespace detail {

void run_workers(int num_ranks, const std::function<void(RankContext&)>& program,
                 const SpmdOptions& options, std::vector<CallRecord>* log) {
    auto world = std::make_shared<World>(num_ranks, options);
    std::vector<int> all(static_cast<std::size_t>(num_ranks));
    for (int r = 0; r < num_ranks; ++r) {
        all[static_cast<std::size_t>(r)] = r;
    }
    auto world_group = world->make_group(all);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(num_ranks));

    auto body = [&](int r) {
        try {
            RankContext ctx;
            ctx.world_size = num_ranks;
            ctx.world_rank = r;
            ctx.world = world->make_comm(world_group, r, "world");
            ctx.space = ctx.world;
            program(ctx);
        } catch (const AbortedError& e) {
            errors[static_cast<std::size_t>(r)] = std::current_exception();
            world->fail(r, e.what(), true);
        } catch (const DeadlockError& e) {
            errors[static_cast<std::size_t>(r)] = std::current_exception();
            world->fail(r, e.what(), false);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(r)] = std::current_exception();
            world->fail(r, e.what(), false);
        } catch (...) {
            errors[static_cast<std::size_t>(r)] = std::current_exception();
            world->fail(r, "unknown exception", false);
        }
        world->finish(r);
    };

    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(num_ranks));
    for (int r = 0; r < num_ranks; ++r) {
        threads.emplace_back(body, r);
    }
    for (auto& t : threads) {
        t.join();
    }
    if (log != nullptr) {
        *log = world->take_log();
    }
    int root = world->first_failure();
    if (root < 0) {
        for (int r = 0; r < num_ranks; ++r) {
            if (errors[static_cast<std::size_t>(r)]) {
                root = r;
                break;
            }
        }
    }
    if (root >= 0) {
        try {
            std::rethrow_exception(errors[static_cast<std::size_t>(root)]);
        } catch (const std::exception& e) {
            std::throw_with_nested(SpmdError(root, "rank " + std::to_string(root) + " failed: " + e.what()));
        } catch (...) {
            std::throw_with_nested(SpmdError(root, "rank " + std::to_string(root) + " failed"));
        }
    }
}

}  // namespace detail

}  // namespace pifsim::comm

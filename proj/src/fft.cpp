#include "pifsim/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace pifsim::fft {

namespace {

// FFTW planning is not thread-safe; execution of an existing plan is.
struct PlanKey {
    int kind;  // 0: xy planes, 1: z lines
    int n;
    int howmany;
    int sign;
    auto operator<=>(const PlanKey&) const = default;
};

std::mutex& plan_mutex() {
    static std::mutex mu;
    return mu;
}

fftw_plan get_plan(const PlanKey& key) {
    static std::map<PlanKey, fftw_plan> cache;
    std::lock_guard lk(plan_mutex());
    auto it = cache.find(key);
    if (it != cache.end()) {
        return it->second;
    }
    const int n = key.n;
    const std::size_t total = static_cast<std::size_t>(n) * n * static_cast<std::size_t>(key.howmany);
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * std::max<std::size_t>(total, 1)));
    fftw_plan plan = nullptr;
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    if (key.kind == 0) {
        // 2D transforms over (y, x) of each z plane.
        fftw_iodim dims[2] = {{n, n, n}, {n, 1, 1}};
        fftw_iodim many[1] = {{key.howmany, n * n, n * n}};
        plan = fftw_plan_guru_dft(2, dims, 1, many, buf, buf, key.sign, flags);
    } else {
        // 1D transforms along z in a [y][z][x] array.
        fftw_iodim dims[1] = {{n, n, n}};
        fftw_iodim many[2] = {{key.howmany, n * n, n * n}, {n, 1, 1}};
        plan = fftw_plan_guru_dft(1, dims, 2, many, buf, buf, key.sign, flags);
    }
    fftw_free(buf);
    if (plan == nullptr) {
        throw Error("fft: FFTW planning failed");
    }
    cache.emplace(key, plan);
    return plan;
}

void run(const PlanKey& key, std::vector<cplx>& data) {
    if (key.howmany == 0) {
        return;
    }
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(get_plan(key), p, p);
}

// [z][y][x] slab -> per-destination blocks of y rows.
std::vector<std::vector<cplx>> pack_by_y(const SlabLayout& lay, int rank, const std::vector<cplx>& a) {
    const int n = lay.n;
    const int dz = lay.counts[static_cast<std::size_t>(rank)];
    std::vector<std::vector<cplx>> blocks(static_cast<std::size_t>(lay.parts()));
    for (int s = 0; s < lay.parts(); ++s) {
        const int y0 = lay.begin(s);
        const int cy = lay.counts[static_cast<std::size_t>(s)];
        auto& b = blocks[static_cast<std::size_t>(s)];
        b.resize(static_cast<std::size_t>(dz) * cy * n);
        std::size_t o = 0;
        for (int zl = 0; zl < dz; ++zl) {
            const cplx* row = a.data() + (static_cast<std::size_t>(zl) * n + y0) * n;
            for (std::size_t i = 0; i < static_cast<std::size_t>(cy) * n; ++i) {
                b[o++] = row[i];
            }
        }
    }
    return blocks;
}

// Blocks from every source z slab -> [y_local][z][x].
void unpack_to_yzx(const SlabLayout& lay, int rank, const std::vector<std::vector<cplx>>& blocks,
                   std::vector<cplx>& t) {
    const int n = lay.n;
    const int cy = lay.counts[static_cast<std::size_t>(rank)];
    t.assign(static_cast<std::size_t>(cy) * n * n, cplx{});
    for (int s = 0; s < lay.parts(); ++s) {
        const int z0 = lay.begin(s);
        const int cz = lay.counts[static_cast<std::size_t>(s)];
        const auto& b = blocks[static_cast<std::size_t>(s)];
        std::size_t o = 0;
        for (int zl = 0; zl < cz; ++zl) {
            for (int yl = 0; yl < cy; ++yl) {
                cplx* dst = t.data() + (static_cast<std::size_t>(yl) * n + (z0 + zl)) * n;
                for (int x = 0; x < n; ++x) {
                    dst[x] = b[o++];
                }
            }
        }
    }
}

// [y_local][z][x] -> per-destination blocks of z planes.
std::vector<std::vector<cplx>> pack_by_z(const SlabLayout& lay, int rank, const std::vector<cplx>& t) {
    const int n = lay.n;
    const int cy = lay.counts[static_cast<std::size_t>(rank)];
    std::vector<std::vector<cplx>> blocks(static_cast<std::size_t>(lay.parts()));
    for (int s = 0; s < lay.parts(); ++s) {
        const int z0 = lay.begin(s);
        const int cz = lay.counts[static_cast<std::size_t>(s)];
        auto& b = blocks[static_cast<std::size_t>(s)];
        b.resize(static_cast<std::size_t>(cz) * cy * n);
        std::size_t o = 0;
        for (int zl = 0; zl < cz; ++zl) {
            for (int yl = 0; yl < cy; ++yl) {
                const cplx* src = t.data() + (static_cast<std::size_t>(yl) * n + (z0 + zl)) * n;
                for (int x = 0; x < n; ++x) {
                    b[o++] = src[x];
                }
            }
        }
    }
    return blocks;
}

// Blocks from every source y range -> [z_local][y][x].
void unpack_to_zyx(const SlabLayout& lay, int rank, const std::vector<std::vector<cplx>>& blocks,
                   std::vector<cplx>& a) {
    const int n = lay.n;
    const int dz = lay.counts[static_cast<std::size_t>(rank)];
    a.assign(static_cast<std::size_t>(dz) * n * n, cplx{});
    for (int s = 0; s < lay.parts(); ++s) {
        const int y0 = lay.begin(s);
        const int cy = lay.counts[static_cast<std::size_t>(s)];
        const auto& b = blocks[static_cast<std::size_t>(s)];
        std::size_t o = 0;
        for (int zl = 0; zl < dz; ++zl) {
            cplx* row = a.data() + (static_cast<std::size_t>(zl) * n + y0) * n;
            for (std::size_t i = 0; i < static_cast<std::size_t>(cy) * n; ++i) {
                row[i] = b[o++];
            }
        }
    }
}

std::vector<std::size_t> expected_sizes(const SlabLayout& lay, int rank, bool to_yzx) {
    const int n = lay.n;
    std::vector<std::size_t> out(static_cast<std::size_t>(lay.parts()));
    for (int s = 0; s < lay.parts(); ++s) {
        const auto mine = static_cast<std::size_t>(lay.counts[static_cast<std::size_t>(rank)]);
        const auto theirs = static_cast<std::size_t>(lay.counts[static_cast<std::size_t>(s)]);
        out[static_cast<std::size_t>(s)] = (to_yzx ? theirs * mine : mine * theirs) * n;
    }
    return out;
}

// Shared by the serial and distributed paths so that one slab reproduces the
// serial transform bit for bit.
void transform(comm::Communicator* comm, const SlabLayout& lay, std::vector<cplx>& local, Direction dir,
               TimerSet* timers) {
    const int n = lay.n;
    const int rank = comm != nullptr ? comm->rank() : 0;
    const int dz = lay.counts[static_cast<std::size_t>(rank)];
    if (local.size() != static_cast<std::size_t>(dz) * n * n) {
        throw InvalidArgument("fft: local slab size does not match layout");
    }
    const int sign = dir == Direction::Forward ? FFTW_FORWARD : FFTW_BACKWARD;

    run({0, n, dz, sign}, local);

    auto exchange = [&](std::vector<std::vector<cplx>> blocks, bool to_yzx) {
        if (comm == nullptr) {
            return blocks;
        }
        TimedScope t(timers, TimerCategory::FftAlltoall);
        const auto sizes = expected_sizes(lay, rank, to_yzx);
        return comm->alltoall(std::move(blocks), sizes);
    };

    std::vector<cplx> t;
    unpack_to_yzx(lay, rank, exchange(pack_by_y(lay, rank, local), true), t);
    run({1, n, lay.counts[static_cast<std::size_t>(rank)], sign}, t);
    unpack_to_zyx(lay, rank, exchange(pack_by_z(lay, rank, t), false), local);

    if (dir == Direction::Inverse) {
        const double s = 1.0 / (static_cast<double>(n) * n * n);
        for (auto& v : local) {
            v *= s;
        }
    }
}

}  // namespace

SlabLayout SlabLayout::balanced(int n, int parts, int halo) {
    if (n < 1 || parts < 1) {
        throw InvalidArgument("SlabLayout: n and parts must be positive");
    }
    SlabLayout lay;
    lay.n = n;
    lay.halo = halo;
    int off = 0;
    for (int r = 0; r < parts; ++r) {
        const int c = n / parts + (r < n % parts ? 1 : 0);
        lay.counts.push_back(c);
        lay.offsets.push_back(off);
        off += c;
    }
    lay.validate();
    return lay;
}

int SlabLayout::owner_of_plane(int z) const {
    if (z < 0 || z >= n) {
        throw InvalidArgument("SlabLayout: plane index out of range");
    }
    for (int r = 0; r < parts(); ++r) {
        if (z < end(r)) {
            return r;
        }
    }
    return parts() - 1;
}

void SlabLayout::validate() const {
    if (counts.empty() || counts.size() != offsets.size()) {
        throw InvalidArgument("SlabLayout: counts/offsets malformed");
    }
    int expect = 0;
    for (std::size_t r = 0; r < counts.size(); ++r) {
        if (offsets[r] != expect || counts[r] < 1) {
            throw InvalidArgument("SlabLayout: slabs do not partition the grid");
        }
        if (counts[r] < halo) {
            throw InvalidArgument("SlabLayout: slab " + std::to_string(r) + " has depth " +
                                  std::to_string(counts[r]) + " < halo " + std::to_string(halo) +
                                  "; use fewer ranks or more modes");
        }
        expect += counts[r];
    }
    if (expect != n) {
        throw InvalidArgument("SlabLayout: slabs do not cover the grid");
    }
}

void fft3d(std::vector<cplx>& grid, int n, Direction dir) {
    const auto lay = SlabLayout::balanced(n, 1, 0);
    transform(nullptr, lay, grid, dir, nullptr);
}

void distributed_fft(comm::Communicator& comm, const SlabLayout& layout, std::vector<cplx>& local,
                     Direction dir, TimerSet* timers) {
    layout.validate();
    if (layout.parts() != comm.size()) {
        throw InvalidArgument("distributed_fft: layout has " + std::to_string(layout.parts()) +
                              " slabs but communicator has " + std::to_string(comm.size()) + " ranks");
    }
    transform(&comm, layout, local, dir, timers);
}

}  // namespace pifsim::fft

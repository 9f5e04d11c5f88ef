#pragma once

// 3D complex FFTs on cubic grids stored [z][y][x] (x fastest), serial and
// slab-distributed along z.

#include <vector>

#include "pifsim/comm.hpp"
#include "pifsim/timers.hpp"
#include "pifsim/types.hpp"

namespace pifsim::fft {

enum class Direction {
    Forward,   // sum f * exp(-i k x)
    Inverse,   // sum F * exp(+i k x) / n^3
    Backward,  // sum F * exp(+i k x), unnormalized
};

/// Partition of the z planes of an n^3 grid into contiguous slabs.
struct SlabLayout {
    int n = 0;
    int halo = 0;
    std::vector<int> counts;
    std::vector<int> offsets;

    /// Balanced partition: the first n % parts slabs get one extra plane.
    static SlabLayout balanced(int n, int parts, int halo);

    int parts() const { return static_cast<int>(counts.size()); }
    int begin(int r) const { return offsets[static_cast<std::size_t>(r)]; }
    int end(int r) const { return begin(r) + counts[static_cast<std::size_t>(r)]; }
    int owner_of_plane(int z) const;
    /// Throws InvalidArgument when extents do not partition [0, n) or a slab is thinner than the halo.
    void validate() const;
};

/// In-place serial 3D transform of an n^3 grid.
void fft3d(std::vector<cplx>& grid, int n, Direction dir);

/// In-place slab-distributed 3D transform. `local` holds planes
/// [begin(rank), end(rank)) on entry and on exit. Collective over `comm`.
void distributed_fft(comm::Communicator& comm, const SlabLayout& layout, std::vector<cplx>& local,
                     Direction dir, TimerSet* timers = nullptr);

}  // namespace pifsim::fft

#include "doctest.h"
#include "helpers.hpp"
#include "pifsim/fft.hpp"

using namespace pifsim;
using namespace pifsim::fft;

namespace {

// Naive O(n^6) reference on tiny grids, [z][y][x] storage.
std::vector<cplx> naive_dft(const std::vector<cplx>& a, int n, int sign) {
    std::vector<cplx> out(a.size());
    for (int kz = 0; kz < n; ++kz)
        for (int ky = 0; ky < n; ++ky)
            for (int kx = 0; kx < n; ++kx) {
                cplx s{};
                for (int z = 0; z < n; ++z)
                    for (int y = 0; y < n; ++y)
                        for (int x = 0; x < n; ++x) {
                            const double ph = sign * 2.0 * kPi * (kx * x + ky * y + kz * z) / n;
                            s += a[static_cast<std::size_t>((z * n + y) * n + x)] * std::polar(1.0, ph);
                        }
                out[static_cast<std::size_t>((kz * n + ky) * n + kx)] = s;
            }
    return out;
}

}  // namespace

TEST_CASE("serial 3D FFT matches a naive DFT") {
    const int n = 6;
    const auto a = testutil::random_complex(n * n * n, 3);
    auto f = a;
    fft3d(f, n, Direction::Forward);
    CHECK(testutil::max_rel(f, naive_dft(a, n, -1)) < 1e-13);
    auto b = a;
    fft3d(b, n, Direction::Backward);
    CHECK(testutil::max_rel(b, naive_dft(a, n, +1)) < 1e-13);
    fft3d(f, n, Direction::Inverse);
    CHECK(testutil::max_rel(f, a) < 1e-14);
}

TEST_CASE("delta at the origin has a constant spectrum") {
    const int n = 8;
    std::vector<cplx> g(n * n * n, cplx{});
    g[0] = 1.0;
    fft3d(g, n, Direction::Forward);
    for (const auto& v : g) {
        CHECK(std::abs(v - cplx(1.0)) < 1e-15);
    }
}

TEST_CASE("slab layout partitions the grid") {
    const auto lay = SlabLayout::balanced(10, 4, 2);
    CHECK(lay.counts == std::vector<int>{3, 3, 2, 2});
    CHECK(lay.offsets == std::vector<int>{0, 3, 6, 8});
    CHECK(lay.owner_of_plane(0) == 0);
    CHECK(lay.owner_of_plane(5) == 1);
    CHECK(lay.owner_of_plane(9) == 3);
    CHECK_THROWS_AS(SlabLayout::balanced(8, 4, 3), InvalidArgument);
}

TEST_CASE("distributed FFT on one rank equals the serial transform bit for bit") {
    const int n = 8;
    const auto a = testutil::random_complex(n * n * n, 5);
    auto serial = a;
    fft3d(serial, n, Direction::Forward);
    auto r = comm::spawn_spmd(1, [&](comm::RankContext& c) {
        auto local = a;
        distributed_fft(c.world, SlabLayout::balanced(n, 1, 0), local, Direction::Forward);
        return local;
    });
    CHECK(r.results[0] == serial);
}

TEST_CASE("distributed FFT matches serial and round-trips") {
    for (int p : {2, 3, 4}) {
        const int n = 12;
        const auto a = testutil::random_complex(static_cast<std::size_t>(n * n * n), 7 + p);
        auto serial = a;
        fft3d(serial, n, Direction::Forward);
        const auto lay = SlabLayout::balanced(n, p, 1);
        auto r = comm::spawn_spmd(p, [&](comm::RankContext& c) {
            const int me = c.world_rank;
            const auto off = static_cast<std::ptrdiff_t>(lay.begin(me) * n * n);
            const auto end = static_cast<std::ptrdiff_t>(lay.end(me) * n * n);
            std::vector<cplx> local(a.begin() + off, a.begin() + end);
            distributed_fft(c.world, lay, local, Direction::Forward);
            std::vector<cplx> spec = local;
            distributed_fft(c.world, lay, local, Direction::Inverse);
            std::vector<cplx> orig(a.begin() + off, a.begin() + end);
            return std::pair{testutil::max_rel(spec, std::vector<cplx>(serial.begin() + off, serial.begin() + end)),
                             testutil::max_rel(local, orig)};
        });
        for (const auto& [fwd, rt] : r.results) {
            CHECK(fwd < 1e-13);
            CHECK(rt < 1e-13);
        }
    }
}

TEST_CASE("distributed FFT rejects inconsistent layouts") {
    CHECK_THROWS_AS(comm::spawn_spmd(2,
                                     [](comm::RankContext& c) {
                                         std::vector<cplx> local(4 * 8 * 8);
                                         distributed_fft(c.world, SlabLayout::balanced(8, 4, 0), local,
                                                         Direction::Forward);
                                         return 0;
                                     }),
                    comm::SpmdError);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "pifsim/types.hpp"

namespace testutil {

using pifsim::cplx;
using pifsim::Vec3;

inline std::vector<Vec3> random_points(std::size_t m, double L, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, L);
    std::vector<Vec3> p(m);
    for (auto& x : p) {
        x = {u(rng), u(rng), u(rng)};
    }
    return p;
}

inline std::vector<cplx> random_complex(std::size_t m, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<cplx> v(m);
    for (auto& c : v) {
        c = {u(rng), u(rng)};
    }
    return v;
}

inline std::vector<double> random_real(std::size_t m, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(m);
    for (auto& c : v) {
        c = u(rng);
    }
    return v;
}

/// max |a - b| / max |b|
template <class A, class B>
double max_rel(const A& a, const B& b) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        num = std::max(num, static_cast<double>(std::abs(a[i] - b[i])));
        den = std::max(den, static_cast<double>(std::abs(b[i])));
    }
    return den > 0.0 ? num / den : num;
}

}  // namespace testutil

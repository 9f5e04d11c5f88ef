#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace pifsim {

using cplx = std::complex<double>;
using Vec3 = std::array<double, 3>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments or violated preconditions.
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

/// Wraps x into [0, L). Values already inside the interval are returned unchanged.
inline double wrap_periodic(double x, double L) {
    if (x >= 0.0 && x < L) {
        return x;
    }
    double r = x - L * std::floor(x / L);
    if (r >= L) {
        r -= L;
    }
    if (r < 0.0) {
        r = 0.0;
    }
    return r;
}

/// Minimum-image difference a - b on a periodic interval of length L.
inline double minimum_image(double d, double L) {
    return d - L * std::nearbyint(d / L);
}

}  // namespace pifsim

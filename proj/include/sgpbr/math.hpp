#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <numbers>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace sgpbr {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInvPi = std::numbers::inv_pi;

/// Base of all errors thrown by the library. The CLI maps `InputError` to
/// exit code 2 and `NumericalError` to exit code 3.
class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
  using Error::Error;
};

class NumericalError : public Error {
  using Error::Error;
};

/// A direction or point configuration that the operation cannot handle
/// (antipodal half vector, back-facing shading point, medial-axis normal).
class DegenerateError : public Error {
  using Error::Error;
};

// Scalar helpers. Library templates call these unqualified so that the
// overloads for ad::Var are found by argument-dependent lookup.
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double abs(double x) { return std::abs(x); }
inline double pow(double x, double e) { return std::pow(x, e); }
inline double smax(double a, double b) { return a > b ? a : b; }
inline double smin(double a, double b) { return a < b ? a : b; }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double value_of(double x) { return x; }

inline double logit(double p) {
  p = std::clamp(p, 1e-15, 1.0 - 1e-15);
  return std::log(p / (1.0 - p));
}

inline double inverse_softplus(double y) {
  if (y > 30.0) return y;
  return std::log(std::expm1(std::max(y, 1e-300)));
}

template <class T>
struct Vec3 {
  T x{}, y{}, z{};

  constexpr Vec3() = default;
  constexpr Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}
  template <class U>
    requires(!std::same_as<U, T> && std::convertible_to<U, T>)
  constexpr explicit Vec3(const Vec3<U>& o) : x(T(o.x)), y(T(o.y)), z(T(o.z)) {}

  constexpr T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr const T& operator[](int i) const {
    return i == 0 ? x : (i == 1 ? y : z);
  }

  Vec3& operator+=(const Vec3& o) {
    x = x + o.x;
    y = y + o.y;
    z = z + o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x = x - o.x;
    y = y - o.y;
    z = z - o.z;
    return *this;
  }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// RGB triples share the vector type; products are componentwise (`cmul`).
template <class T>
using Rgb = Vec3<T>;

using Vec3d = Vec3<double>;
using Rgbd = Rgb<double>;

template <class T>
Vec3<T> operator+(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.x + b.x, a.y + b.y, a.z + b.z};
}
template <class T>
Vec3<T> operator-(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}
template <class T>
Vec3<T> operator-(const Vec3<T>& a) {
  return {-a.x, -a.y, -a.z};
}
template <class T, class S>
  requires(std::is_arithmetic_v<S> || std::same_as<S, T>)
Vec3<T> operator*(const Vec3<T>& a, const S& s) {
  return {a.x * s, a.y * s, a.z * s};
}
template <class T, class S>
  requires(std::is_arithmetic_v<S> || std::same_as<S, T>)
Vec3<T> operator*(const S& s, const Vec3<T>& a) {
  return {a.x * s, a.y * s, a.z * s};
}
template <class T, class S>
  requires(std::is_arithmetic_v<S> || std::same_as<S, T>)
Vec3<T> operator/(const Vec3<T>& a, const S& s) {
  return {a.x / s, a.y / s, a.z / s};
}

template <class T>
T dot(const Vec3<T>& a, const Vec3<T>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <class T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
          a.x * b.y - a.y * b.x};
}
template <class T>
T length(const Vec3<T>& a) {
  return sqrt(dot(a, a));
}
template <class T>
Vec3<T> normalize(const Vec3<T>& a) {
  return a / length(a);
}
template <class T>
Vec3<T> cmul(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.x * b.x, a.y * b.y, a.z * b.z};
}
template <class T>
Vec3<T> cexp(const Vec3<T>& a) {
  return {exp(a.x), exp(a.y), exp(a.z)};
}
template <class T>
Vec3<T> cmax(const Vec3<T>& a, double floor) {
  return {smax(a.x, floor), smax(a.y, floor), smax(a.z, floor)};
}
inline Vec3d cabs(const Vec3d& a) {
  return {std::abs(a.x), std::abs(a.y), std::abs(a.z)};
}
inline double max_component(const Vec3d& a) {
  return std::max({a.x, a.y, a.z});
}
inline double min_component(const Vec3d& a) {
  return std::min({a.x, a.y, a.z});
}
template <class T>
T pow5(const T& x) {
  const T x2 = x * x;
  return x2 * x2 * x;
}

template <class T>
Vec3<T> splat(const T& v) {
  return {v, v, v};
}

template <class T>
Vec3d value_of(const Vec3<T>& v) {
  return {value_of(v.x), value_of(v.y), value_of(v.z)};
}

inline bool is_finite(const Vec3d& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

inline bool is_unit(const Vec3d& v, double tol = 1e-6) {
  return std::abs(length(v) - 1.0) <= tol;
}

/// Reflection of `wo` about `n`: 2(wo.n)n - wo.
template <class T>
Vec3<T> reflect(const Vec3<T>& wo, const Vec3<T>& n) {
  return n * (dot(wo, n) * 2.0) - wo;
}

/// Orthonormal basis (t, b) completing `n` (Duff et al. branchless frame).
inline void tangent_frame(const Vec3d& n, Vec3d& t, Vec3d& b) {
  const double sign = std::copysign(1.0, n.z);
  const double a = -1.0 / (sign + n.z);
  const double c = n.x * n.y * a;
  t = {1.0 + sign * n.x * n.x * a, sign * c, -sign * n.x};
  b = {c, sign + n.y * n.y * a, -n.y};
}

inline Vec3d spherical_direction(double theta, double phi) {
  const double s = std::sin(theta);
  return {s * std::cos(phi), s * std::sin(phi), std::cos(theta)};
}

/// Uniform direction on the sphere from two uniforms in [0,1).
inline Vec3d uniform_sphere(double u1, double u2) {
  const double z = 1.0 - 2.0 * u1;
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * kPi * u2;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

/// Uniform direction on the +z hemisphere.
inline Vec3d uniform_hemisphere(double u1, double u2) {
  const double z = u1;
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * kPi * u2;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

/// Deterministic spherical Fibonacci lattice of `n` directions.
inline Vec3d fibonacci_direction(int i, int n) {
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  const double z = 1.0 - (2.0 * i + 1.0) / n;
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = golden * i;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

inline std::string to_string(const Vec3d& v) {
  return "(" + std::to_string(v.x) + ", " + std::to_string(v.y) + ", " +
         std::to_string(v.z) + ")";
}

}  // namespace sgpbr

#pragma once

// Spherical Gaussians: G(v; p, lambda, mu) = mu * exp(lambda * (v.p - 1)).
//
// All operations are templated on the scalar type so the same code drives
// plain rendering (double) and gradient recording (ad::Var).

#include <cmath>
#include <span>
#include <vector>

#include "sgpbr/autodiff.hpp"
#include "sgpbr/math.hpp"

namespace sgpbr {

template <class T>
struct SphericalGaussian {
  Vec3<T> axis{T(0.0), T(0.0), T(1.0)};
  T sharpness = T(1.0);
  Rgb<T> amplitude{T(0.0), T(0.0), T(0.0)};
};

using SgLobe = SphericalGaussian<double>;
using SgMixture = std::vector<SgLobe>;

/// Sharpness assigned to the product of two (nearly) antipodal lobes of equal
/// sharpness, where the combined axis is undefined.
inline constexpr double kDegenerateSharpness = 1e-6;
inline constexpr double kDegenerateAxisNorm = 1e-8;

/// Constants of the cosine lobe: w.n ~= G(w; n, kCosineSharpness,
/// kCosineAmplitude) - kCosineOffset.
inline constexpr double kCosineSharpness = 0.0315;
inline constexpr double kCosineAmplitude = 32.7080;
inline constexpr double kCosineOffset = 31.7003;

inline bool is_valid(const SgLobe& g, double tol = 1e-6) {
  return is_unit(g.axis, tol) && g.sharpness > 0.0 && g.amplitude.x >= 0.0 &&
         g.amplitude.y >= 0.0 && g.amplitude.z >= 0.0 &&
         std::isfinite(g.sharpness) && is_finite(g.amplitude);
}

template <class T>
Rgb<T> eval_sg(const SphericalGaussian<T>& g, const Vec3<T>& v) {
  const T w = exp(g.sharpness * (dot(v, g.axis) - 1.0));
  return g.amplitude * w;
}

inline Rgbd eval_mixture(const SgMixture& lobes, const Vec3d& v) {
  Rgbd sum{};
  for (const SgLobe& g : lobes) sum += eval_sg(g, v);
  return sum;
}

/// Product of two lobes, itself a lobe. When lambda1*p1 + lambda2*p2 nearly
/// cancels the result is a near-constant lobe with kDegenerateSharpness and
/// the axis of `a`.
template <class T>
SphericalGaussian<T> sg_product(const SphericalGaussian<T>& a,
                                const SphericalGaussian<T>& b) {
  const Vec3<T> u = a.axis * a.sharpness + b.axis * b.sharpness;
  const T norm = length(u);
  SphericalGaussian<T> out;
  if (value_of(norm) < kDegenerateAxisNorm) {
    out.axis = a.axis;
    out.sharpness = T(kDegenerateSharpness);
  } else {
    out.axis = u / norm;
    out.sharpness = norm;
  }
  const T scale = exp(norm - a.sharpness - b.sharpness);
  out.amplitude = cmul(a.amplitude, b.amplitude) * scale;
  return out;
}

namespace detail {

/// (1 - exp(-2 lambda)) / lambda, stable for small lambda.
inline double sphere_mass(double lambda) {
  if (lambda < 1e-4) return 2.0 - 2.0 * lambda + (4.0 / 3.0) * lambda * lambda;
  return -std::expm1(-2.0 * lambda) / lambda;
}

inline double sphere_mass_derivative(double lambda) {
  if (lambda < 1e-4) return -2.0 + (8.0 / 3.0) * lambda;
  const double e = std::exp(-2.0 * lambda);
  return (2.0 * e * lambda + std::expm1(-2.0 * lambda)) / (lambda * lambda);
}

inline double sphere_mass_t(double lambda) { return sphere_mass(lambda); }
inline ad::Var sphere_mass_t(const ad::Var& lambda) {
  return ad::unary(lambda, sphere_mass(lambda.v),
                   sphere_mass_derivative(lambda.v));
}

}  // namespace detail

/// Integral over the full sphere: 2 pi mu / lambda * (1 - exp(-2 lambda)).
template <class T>
Rgb<T> sg_integral(const SphericalGaussian<T>& g) {
  const T mass = detail::sphere_mass_t(g.sharpness) * (2.0 * kPi);
  return g.amplitude * mass;
}

template <class T>
Rgb<T> sg_inner_product(const SphericalGaussian<T>& a,
                        const SphericalGaussian<T>& b) {
  return sg_integral(sg_product(a, b));
}

template <class T>
struct CosineLobe {
  SphericalGaussian<T> lobe;
  double offset = kCosineOffset;
};

/// The clamped-free cosine w.n expressed as a lobe minus a constant.
template <class T>
CosineLobe<T> cosine_sg(const Vec3<T>& n) {
  CosineLobe<T> c;
  c.lobe.axis = n;
  c.lobe.sharpness = T(kCosineSharpness);
  c.lobe.amplitude = splat(T(kCosineAmplitude));
  c.offset = kCosineOffset;
  return c;
}

inline double eval_cosine_sg(const Vec3d& n, const Vec3d& w) {
  const CosineLobe<double> c = cosine_sg(n);
  return eval_sg(c.lobe, w).x - c.offset;
}

namespace detail {

/// exp(nu - c) * (1 - exp(-2 nu)) / nu and its derivative in nu.
inline void damped_mass(double nu, double c, double& f, double& df) {
  const double e = std::exp(nu - c);
  f = e * sphere_mass(nu);
  df = e * (sphere_mass(nu) + sphere_mass_derivative(nu));
}

struct ResponseParts {
  double value = 0.0;
  double d_lambda = 0.0;
  double d_sigma = 0.0;
  Vec3d d_axis{};
};

inline ResponseParts cosine_response_parts(const Vec3d& p, double lambda, double sigma,
                                           const Vec3d& s, const Vec3d& n) {
  const Vec3d u1 = p * lambda + s * sigma;
  const Vec3d u2 = u1 + n * kCosineSharpness;
  const double nu1 = length(u1);
  const double nu2 = length(u2);
  double f1, df1, f2, df2;
  damped_mass(nu1, lambda + sigma, f1, df1);
  damped_mass(nu2, lambda + sigma + kCosineSharpness, f2, df2);
  const double a = 2.0 * kPi * kCosineAmplitude;
  const double b = 2.0 * kPi * kCosineOffset;
  // |u| is not differentiable at u = 0; its subgradient 0 is used there.
  const Vec3d g1 = nu1 > 1e-12 ? u1 / nu1 : Vec3d{};
  const Vec3d g2 = nu2 > 1e-12 ? u2 / nu2 : Vec3d{};
  ResponseParts r;
  r.value = a * f2 - b * f1;
  r.d_lambda = a * (df2 * dot(g2, p) - f2) - b * (df1 * dot(g1, p) - f1);
  r.d_sigma = a * (df2 * dot(g2, s) - f2) - b * (df1 * dot(g1, s) - f1);
  r.d_axis = (g2 * (a * df2) - g1 * (b * df1)) * lambda;
  return r;
}

}  // namespace detail

/// <G_p G_s, C> - c0 * int G_p G_s for unit-amplitude lobes G_p (axis p,
/// sharpness lambda) and G_s (constant axis s, sharpness sigma) and the
/// cosine lobe C about n with offset c0. With sigma = 0 this is the clamped
/// free cosine integral of G_p alone. Recorded as a single tape node.
inline double cosine_response(const Vec3d& p, double lambda, double sigma, const Vec3d& s,
                              const Vec3d& n) {
  return detail::cosine_response_parts(p, lambda, sigma, s, n).value;
}

inline ad::Var cosine_response(const Vec3<ad::Var>& p, const ad::Var& lambda,
                               const ad::Var& sigma, const Vec3d& s, const Vec3d& n) {
  const detail::ResponseParts r =
      detail::cosine_response_parts(value_of(p), lambda.v, sigma.v, s, n);
  const ad::Var in[5] = {p.x, p.y, p.z, lambda, sigma};
  const double d[5] = {r.d_axis.x, r.d_axis.y, r.d_axis.z, r.d_lambda, r.d_sigma};
  std::size_t live = 0;
  for (const ad::Var& v : in) live += v.is_constant() ? 0 : 1;
  if (live == 0) return ad::Var(r.value);
  std::span<std::int32_t> parents;
  std::span<double> partials;
  const std::int32_t id = ad::active_tape().push_node_uninitialized(live, parents, partials);
  std::size_t k = 0;
  for (int i = 0; i < 5; ++i) {
    if (in[i].is_constant()) continue;
    parents[k] = in[i].id;
    partials[k++] = d[i];
  }
  return {r.value, id};
}

inline Rgbd mixture_integral(const SgMixture& lobes) {
  Rgbd total{};
  for (const SgLobe& g : lobes) total += sg_integral(g);
  return total;
}

}  // namespace sgpbr

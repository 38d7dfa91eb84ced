#pragma once

// Simplified Disney BRDF: f_r = k_d a / pi + D F G / (4 (wo.n)(wi.n)).
//
// The SG shading path evaluates F, G and k_d once at the mirror direction
// wi = 2(wo.n)n - wo and represents D as a lobe warped into the incident
// domain. eval_brdf is the pointwise version used by the Monte-Carlo
// reference renderer.

#include <algorithm>
#include <cmath>

#include "sgpbr/math.hpp"
#include "sgpbr/sg.hpp"

namespace sgpbr {

/// Roughness below this is clamped before building the NDF lobe; 2/r^4 would
/// otherwise exceed 3.2e5.
inline constexpr double kRoughnessFloor = 0.05;
/// Minimum wo.n for the specular lobe; below it the point counts as
/// back-facing because the warped sharpness divides by 4|wo.n|.
inline constexpr double kMinCosView = 1e-4;

template <class T>
struct MaterialSample {
  Rgb<T> albedo{T(0.5), T(0.5), T(0.5)};
  T roughness = T(0.5);
  T metallic = T(0.0);
  T specular = T(0.5);
};

using Material = MaterialSample<double>;

inline Material clamped(Material m) {
  auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
  m.albedo = {c(m.albedo.x), c(m.albedo.y), c(m.albedo.z)};
  m.roughness = c(m.roughness);
  m.metallic = c(m.metallic);
  m.specular = c(m.specular);
  return m;
}

inline bool is_valid(const Material& m) {
  auto in = [](double v) { return v >= 0.0 && v <= 1.0; };
  return in(m.albedo.x) && in(m.albedo.y) && in(m.albedo.z) &&
         in(m.roughness) && in(m.metallic) && in(m.specular);
}

template <class T>
Material value_of(const MaterialSample<T>& m) {
  return {value_of(m.albedo), value_of(m.roughness), value_of(m.metallic),
          value_of(m.specular)};
}

template <class T>
Vec3<T> half_vector(const Vec3<T>& wo, const Vec3<T>& wi) {
  const Vec3<T> s = wo + wi;
  if (length(value_of(s)) < 1e-12) {
    throw DegenerateError("half_vector: wi = -wo has no half vector");
  }
  return normalize(s);
}

/// k_d = (1 - m) k_d^i k_d^o with wi taken as the mirror of wo.
template <class T>
T diffuse_coefficient(const Vec3<T>& wo, const Vec3<T>& n, const T& roughness,
                      const T& metallic) {
  const T cos_o = dot(wo, n);
  if (value_of(cos_o) <= 0.0) {
    throw DegenerateError("diffuse_coefficient: back-facing view direction");
  }
  const Vec3<T> wi = reflect(wo, n);
  const Vec3<T> h = half_vector(wi, wo);
  const T cos_ih = dot(wi, h);
  const T fd90 = cos_ih * cos_ih * roughness * 2.0 + 0.5;
  const T cos_i = dot(wi, n);
  const T kd_i = (fd90 - 1.0) * pow5(smax(1.0 - cos_i, 0.0)) + 1.0;
  const T kd_o = (fd90 - 1.0) * pow5(smax(1.0 - cos_o, 0.0)) + 1.0;
  return (1.0 - metallic) * kd_i * kd_o;
}

/// Schlick Fresnel with C_s = (1 - m) s + m a.
template <class T>
Rgb<T> fresnel_f0(const Vec3<T>& wi, const Vec3<T>& h,
                  const MaterialSample<T>& mat) {
  const T dielectric = (1.0 - mat.metallic) * mat.specular;
  const Rgb<T> cs = splat(dielectric) + mat.albedo * mat.metallic;
  const T grazing = pow5(smax(1.0 - dot(wi, h), 0.0));
  return cs + (splat(T(1.0)) - cs) * grazing;
}

/// Smith product with the Schlick remap k = (r + 1)^2 / 8.
template <class T>
T geometry_g0(const Vec3<T>& wo, const Vec3<T>& wi, const Vec3<T>& n,
              const T& roughness) {
  const T cos_o = dot(wo, n);
  const T cos_i = dot(wi, n);
  if (value_of(cos_o) <= 0.0 || value_of(cos_i) <= 0.0) {
    throw DegenerateError("geometry_g0: back-facing direction");
  }
  const T k = (roughness + 1.0) * (roughness + 1.0) / 8.0;
  const T gi = cos_i / (cos_i * (1.0 - k) + k);
  const T go = cos_o / (cos_o * (1.0 - k) + k);
  return gi * go;
}

template <class T>
struct WarpedLobe {
  SphericalGaussian<T> lobe;
  bool roughness_clamped = false;
};

/// NDF lobe: axis p^w = 2(wo.n)n - wo, sharpness 2/r^4, amplitude 1/(pi r^4).
template <class T>
WarpedLobe<T> ndf_warp(const Vec3<T>& wo, const Vec3<T>& n, const T& roughness) {
  if (value_of(dot(wo, n)) <= 0.0) {
    throw DegenerateError("ndf_warp: back-facing view direction");
  }
  WarpedLobe<T> out;
  T r = roughness;
  if (value_of(r) < kRoughnessFloor) {
    r = T(kRoughnessFloor);
    out.roughness_clamped = true;
  }
  const T r2 = r * r;
  const T r4 = r2 * r2;
  out.lobe.axis = reflect(wo, n);
  out.lobe.sharpness = 2.0 / r4;
  out.lobe.amplitude = splat(1.0 / (r4 * kPi));
  return out;
}

/// Specular lobe in the incident domain: axis p^w, sharpness
/// lambda^w / (4 |wo.n|), amplitude F0 G0 mu^w with F0 and G0 evaluated at
/// the mirror direction.
template <class T>
WarpedLobe<T> specular_lobe(const Vec3<T>& wo, const Vec3<T>& n,
                            const MaterialSample<T>& mat) {
  const T cos_o = dot(wo, n);
  if (value_of(cos_o) < kMinCosView) {
    throw DegenerateError("specular_lobe: back-facing or grazing view");
  }
  WarpedLobe<T> out = ndf_warp(wo, n, mat.roughness);
  const Vec3<T> wi = out.lobe.axis;
  const Vec3<T> h = half_vector(wo, wi);
  const Rgb<T> f0 = fresnel_f0(wi, h, mat);
  const T g0 = geometry_g0(wo, wi, n, mat.roughness);
  out.lobe.sharpness = out.lobe.sharpness / (abs(cos_o) * 4.0);
  out.lobe.amplitude = cmul(f0, out.lobe.amplitude) * g0;
  return out;
}

/// Pointwise NDF used by eval_brdf: the half-vector-domain lobe about n with
/// the same sharpness and amplitude as ndf_warp.
inline double ndf_pointwise(const Vec3d& h, const Vec3d& n, double roughness) {
  const WarpedLobe<double> w = ndf_warp(n, n, roughness);
  return eval_sg(w.lobe, h).x;
}

inline Rgbd eval_brdf(const Vec3d& wo, const Vec3d& wi, const Vec3d& n,
                      const Material& mat) {
  const double cos_o = dot(wo, n);
  const double cos_i = dot(wi, n);
  if (cos_o <= 0.0 || cos_i <= 0.0) {
    throw DegenerateError("eval_brdf: back-facing direction");
  }
  const double kd = diffuse_coefficient(wo, n, mat.roughness, mat.metallic);
  const Vec3d h = half_vector(wo, wi);
  const double d = ndf_pointwise(h, n, mat.roughness);
  const Rgbd f = fresnel_f0(wi, h, mat);
  const double g = geometry_g0(wo, wi, n, mat.roughness);
  const Rgbd diffuse = mat.albedo * (kd * kInvPi);
  const Rgbd specular = f * (d * g / (4.0 * cos_o * cos_i));
  return diffuse + specular;
}

}  // namespace sgpbr

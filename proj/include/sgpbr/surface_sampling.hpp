#pragma once

// Ray / zero-level-set intersection by mixed implicit and explicit sampling.
//
//   1. Stratified samples t_i along the ray, SDF values f_i.
//   2. z-buffer bracketing: the first adjacent pair whose sign product is -1
//      while entering the surface gives (x_p, x_n).
//   3. d uniform points between x_p and x_n are weighted by
//      softmax(-|f| / tau + beta * max(0, -grad f . view)); the hit is the
//      point where the (mid-point) CDF of these weights reaches p = 0.5.
//      The subdivision is nested `levels` times, each level re-bracketing
//      among the previous level's points.
//
// The implicit alternative is a normalized weighted sum of all samples with
// NeuS-style alpha-composited weights.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "sgpbr/camera.hpp"
#include "sgpbr/math.hpp"
#include "sgpbr/rng.hpp"
#include "sgpbr/sdf.hpp"

namespace sgpbr {

struct RaySampleSet {
  std::vector<double> depths;
  std::vector<Vec3d> points;
  std::vector<double> sdf;
  std::vector<double> weights;

  std::size_t size() const { return depths.size(); }
};

enum class HitMethod { kWeightedSum, kExplicitInterp };
enum class IntersectMode { kWeightedSum, kExplicit };
enum class QuantileMode { kDeterministic, kStochastic };

struct Bracket {
  std::size_t index = 0;  // x_p = sample[index], x_n = sample[index + 1]
  Vec3d outside{};        // x_p, f >= 0
  Vec3d inside{};         // x_n, f <= 0
  double t_outside = 0.0;
  double t_inside = 0.0;
  double f_outside = 0.0;
  double f_inside = 0.0;

  double length() const { return t_inside - t_outside; }
};

struct SurfaceHit {
  Vec3d point{};
  double depth = 0.0;
  double residual = 0.0;
  Bracket bracket;
  HitMethod method = HitMethod::kExplicitInterp;
};

/// Clips `ray` to the bounding sphere grown by 5%. Returns false when the ray
/// misses it.
inline bool clip_to_bounds(Ray& ray, const BoundingSphere& bounds) {
  const double radius = bounds.radius * 1.05;
  const Vec3d oc = ray.origin - bounds.center;
  const double b = dot(oc, ray.direction);
  const double c = dot(oc, oc) - radius * radius;
  const double disc = b * b - c;
  if (disc <= 0.0) return false;
  const double s = std::sqrt(disc);
  const double t0 = -b - s;
  const double t1 = -b + s;
  if (t1 <= 0.0) return false;
  ray.near = std::max(t0, 1e-6);
  ray.far = t1;
  return ray.far > ray.near;
}

/// n samples, one per stratum of [near, far]. Without an rng each sample sits
/// at its stratum midpoint.
inline RaySampleSet stratified_ray_samples(const Ray& ray, int n,
                                           Rng* jitter = nullptr) {
  if (n < 2) throw InputError("stratified_ray_samples: need n >= 2");
  if (!(ray.far > ray.near)) throw InputError("stratified_ray_samples: empty ray");
  RaySampleSet s;
  s.depths.resize(static_cast<std::size_t>(n));
  s.points.resize(static_cast<std::size_t>(n));
  const double span = ray.far - ray.near;
  for (int i = 0; i < n; ++i) {
    const double u = jitter ? jitter->uniform() : 0.5;
    const double t = ray.near + (i + u) * span / n;
    s.depths[static_cast<std::size_t>(i)] = t;
    s.points[static_cast<std::size_t>(i)] = ray.at(t);
  }
  return s;
}

inline void evaluate_sdf(const SdfField& field, RaySampleSet& samples) {
  samples.sdf.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples.sdf[i] = sdf_eval(field, samples.points[i]);
  }
}

/// NeuS-style weights: alpha_i = max((Phi(f_i) - Phi(f_{i+1})) / Phi(f_i), 0)
/// with Phi the logistic CDF of sharpness `inv_std`, composited front to back.
inline void neus_weights(RaySampleSet& samples, double inv_std) {
  const std::size_t n = samples.size();
  samples.weights.assign(n, 0.0);
  double transmittance = 1.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double phi0 = sigmoid(inv_std * samples.sdf[i]);
    const double phi1 = sigmoid(inv_std * samples.sdf[i + 1]);
    const double alpha =
        phi0 > 0.0 ? std::clamp((phi0 - phi1) / phi0, 0.0, 1.0) : 0.0;
    samples.weights[i] = transmittance * alpha;
    transmittance *= 1.0 - alpha;
  }
}

/// x_s = sum_i w_i x_i / sum_i w_i. Returns nullopt when all weights vanish.
inline std::optional<SurfaceHit> weighted_sum_intersection(
    const RaySampleSet& samples) {
  double total = 0.0;
  for (double w : samples.weights) total += w;
  if (!(total > 0.0)) return std::nullopt;
  SurfaceHit hit;
  hit.method = HitMethod::kWeightedSum;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double w = samples.weights[i] / total;
    hit.point += samples.points[i] * w;
    hit.depth += samples.depths[i] * w;
  }
  return hit;
}

/// Interior (f <= 0) counts as negative so a sample exactly on the surface
/// closes an entering bracket.
inline int inside_sign(double f) { return f > 0.0 ? 1 : -1; }

/// First adjacent pair, in depth order, entering the surface.
inline std::optional<Bracket> bracket_crossing(const RaySampleSet& samples) {
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const int a = inside_sign(samples.sdf[i - 1]);
    const int b = inside_sign(samples.sdf[i]);
    if (a * b != -1 || a < 0) continue;  // no crossing, or exiting
    Bracket br;
    br.index = i - 1;
    br.outside = samples.points[i - 1];
    br.inside = samples.points[i];
    br.t_outside = samples.depths[i - 1];
    br.t_inside = samples.depths[i];
    br.f_outside = samples.sdf[i - 1];
    br.f_inside = samples.sdf[i];
    return br;
  }
  return std::nullopt;
}

/// Position where the CDF of `weights` reaches `q`. Weight k is centred on
/// positions[k] (cumulative value sum_{i<k} w_i + w_k / 2) and the CDF is
/// linear in between.
inline double cdf_quantile(std::span<const double> positions,
                           std::span<const double> weights, double q) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) {
    return 0.5 * (positions.front() + positions.back());
  }
  double before = 0.0;
  double prev_cdf = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double w = weights[k] / total;
    const double cdf = before + 0.5 * w;
    if (cdf >= q) {
      if (k == 0) return positions[0];
      const double span = cdf - prev_cdf;
      const double f = span > 0.0 ? (q - prev_cdf) / span : 0.0;
      return positions[k - 1] + f * (positions[k] - positions[k - 1]);
    }
    prev_cdf = cdf;
    before += w;
  }
  return positions.back();
}

struct SubdivisionOptions {
  int d = 8;
  int levels = 3;
  double beta = 0.1;
  double quantile = 0.5;
  QuantileMode mode = QuantileMode::kDeterministic;
  Rng* rng = nullptr;  // required for kStochastic
};

/// Softmax weights of points between the bracket ends.
inline std::vector<double> subdivision_weights(const SdfField& field,
                                               std::span<const Vec3d> points,
                                               std::span<const double> sdf,
                                               const Vec3d& view_dir,
                                               double tau, double beta) {
  std::vector<double> score(points.size());
  double best = -1e300;
  for (std::size_t k = 0; k < points.size(); ++k) {
    double facing = 0.0;
    if (beta != 0.0) {
      const Vec3d g = sdf_gradient(field, points[k]);
      const double len = length(g);
      if (len > 0.0) facing = std::max(0.0, -dot(g, view_dir) / len);
    }
    score[k] = -std::abs(sdf[k]) / tau + beta * facing;
    best = std::max(best, score[k]);
  }
  double total = 0.0;
  for (double& s : score) {
    s = std::exp(s - best);
    total += s;
  }
  for (double& s : score) s /= total;
  return score;
}

inline SurfaceHit subdivide_and_interpolate(const SdfField& field,
                                            const Bracket& bracket,
                                            const Vec3d& view_dir,
                                            const SubdivisionOptions& opt = {}) {
  if (opt.d < 2) throw InputError("subdivide_and_interpolate: need d >= 2");
  if (opt.levels < 1) throw InputError("subdivide_and_interpolate: need levels >= 1");
  if (opt.mode == QuantileMode::kStochastic && opt.rng == nullptr) {
    throw InputError("subdivide_and_interpolate: stochastic mode needs an rng");
  }
  const auto d = static_cast<std::size_t>(opt.d);
  const Vec3d dir = normalize(bracket.inside - bracket.outside);
  const Vec3d origin = bracket.outside - dir * bracket.t_outside;

  double t0 = bracket.t_outside;
  double t1 = bracket.t_inside;
  std::vector<double> ts(d), fs(d);
  std::vector<Vec3d> xs(d);
  double t_hit = t0;
  for (int level = 0; level < opt.levels; ++level) {
    for (std::size_t k = 0; k < d; ++k) {
      ts[k] = t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(d - 1);
      xs[k] = origin + dir * ts[k];
      fs[k] = sdf_eval(field, xs[k]);
    }
    // Keep the bracket ends exact.
    fs[0] = level == 0 ? bracket.f_outside : fs[0];
    fs[d - 1] = level == 0 ? bracket.f_inside : fs[d - 1];
    const double tau = (t1 - t0) / static_cast<double>(d);
    const bool last = level + 1 == opt.levels;
    if (!last) {
      std::size_t k = 1;
      while (k < d && !(inside_sign(fs[k - 1]) > 0 && inside_sign(fs[k]) < 0)) ++k;
      if (k < d) {
        t0 = ts[k - 1];
        t1 = ts[k];
        continue;
      }
    }
    const std::vector<double> w =
        subdivision_weights(field, xs, fs, view_dir, tau, opt.beta);
    const double q =
        opt.mode == QuantileMode::kStochastic ? opt.rng->uniform() : opt.quantile;
    t_hit = cdf_quantile(ts, w, q);
    break;
  }
  SurfaceHit hit;
  hit.method = HitMethod::kExplicitInterp;
  hit.bracket = bracket;
  hit.depth = t_hit;
  hit.point = origin + dir * t_hit;
  hit.residual = std::abs(sdf_eval(field, hit.point));
  return hit;
}

struct IntersectConfig {
  int n_samples = 64;
  int d = 8;
  int levels = 3;
  IntersectMode mode = IntersectMode::kExplicit;
  QuantileMode quantile_mode = QuantileMode::kDeterministic;
  double beta = 0.1;
  /// NeuS sharpness for the weighted-sum path, in units of 1/sample spacing.
  double neus_sharpness = 1.0;
  /// Used when the field has no finite bounding sphere.
  double fallback_bound_radius = 1.0;
};

/// Samples the ray inside the field's bounds, brackets the first entering
/// crossing and refines it. Returns nullopt when the ray misses.
inline std::optional<SurfaceHit> intersect_surface(const SdfField& field,
                                                   Ray ray,
                                                   const IntersectConfig& cfg,
                                                   Rng* rng = nullptr) {
  const BoundingSphere bounds = bounding_sphere(field).value_or(
      BoundingSphere{Vec3d{}, cfg.fallback_bound_radius});
  if (!clip_to_bounds(ray, bounds)) return std::nullopt;
  // Start one stratum early so the first sample lies outside the bounds.
  ray.near = std::max(ray.near - (ray.far - ray.near) / (cfg.n_samples - 1), 1e-6);
  RaySampleSet samples = stratified_ray_samples(
      ray, cfg.n_samples,
      cfg.quantile_mode == QuantileMode::kStochastic ? rng : nullptr);
  evaluate_sdf(field, samples);
  const std::optional<Bracket> bracket = bracket_crossing(samples);
  if (!bracket) return std::nullopt;
  if (cfg.mode == IntersectMode::kWeightedSum) {
    const double spacing = (ray.far - ray.near) / cfg.n_samples;
    neus_weights(samples, cfg.neus_sharpness / spacing);
    std::optional<SurfaceHit> hit = weighted_sum_intersection(samples);
    if (!hit) return std::nullopt;
    hit->bracket = *bracket;
    hit->residual = std::abs(sdf_eval(field, hit->point));
    return hit;
  }
  SubdivisionOptions opt;
  opt.d = cfg.d;
  opt.levels = cfg.levels;
  opt.beta = cfg.beta;
  opt.mode = cfg.quantile_mode;
  opt.rng = rng;
  return subdivide_and_interpolate(field, *bracket, ray.direction, opt);
}

}  // namespace sgpbr

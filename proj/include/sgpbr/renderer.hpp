#pragma once

// Forward renderer: closed-form SG shading per hit, six-domain AOV output,
// and a Monte-Carlo reference renderer used as an oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sgpbr/brdf.hpp"
#include "sgpbr/camera.hpp"
#include "sgpbr/fields.hpp"
#include "sgpbr/image.hpp"
#include "sgpbr/parallel.hpp"
#include "sgpbr/rng.hpp"
#include "sgpbr/sdf.hpp"
#include "sgpbr/sg.hpp"
#include "sgpbr/surface_sampling.hpp"

namespace sgpbr {

struct Scene {
  SdfField geometry;
  /// Indexed by the material id carried by geometry primitives.
  std::vector<ParameterField> materials;
  SgMixture light;
  Rgbd background{};
};

inline void validate(const Scene& s) {
  if (s.geometry.empty()) throw InputError("scene has no geometry");
  if (s.materials.empty()) throw InputError("scene has no materials");
  if (s.light.empty()) throw InputError("scene light needs at least one lobe");
  for (const SgLobe& g : s.light) {
    if (!is_valid(g)) throw InputError("scene light has an invalid lobe");
  }
}

namespace detail {

inline double lobe_sum(std::span<const double> w, std::span<const double> x) {
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += w[i] * x[i];
  return total;
}

inline ad::Var lobe_sum(std::span<const ad::Var> w, std::span<const ad::Var> x) {
  return ad::affine(w, x, ad::Var(0.0));
}

}  // namespace detail

/// Closed-form shading of one point under an SG light.
///
///   diffuse  = k_d a / pi * sum_j [<L_j, C> - c0 * int L_j]
///   specular = sum_j [<L_j * S, C> - c0 * int (L_j * S)]
///
/// with C the cosine lobe about n, c0 its offset and S the specular lobe
/// scaled by 1 / (4 (wo.n)(wi.n)) at the mirror direction. The sum is clamped
/// at zero; `clamped` reports whether the clamp was active. When wo.n is
/// below kMinCosView only the diffuse term is evaluated.
template <class T>
Rgb<T> shade_point(const Vec3d& n, const Vec3d& wo, const MaterialSample<T>& mat,
                   std::span<const SphericalGaussian<T>> light,
                   bool* clamped = nullptr) {
  const double cos_o = dot(wo, n);
  if (!(cos_o > 0.0)) throw DegenerateError("shade_point: back-facing view direction");
  const std::size_t m = light.size();
  std::vector<T> amp[3], response(m);
  for (auto& a : amp) a.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    for (int c = 0; c < 3; ++c) amp[c][j] = light[j].amplitude[c];
    response[j] = cosine_response(light[j].axis, light[j].sharpness, T(0.0), n, n);
  }
  const T kd = diffuse_coefficient(Vec3<T>(wo), Vec3<T>(n), mat.roughness, mat.metallic);
  Rgb<T> color;
  for (int c = 0; c < 3; ++c) {
    color[c] = mat.albedo[c] * detail::lobe_sum(amp[c], response) * (kd * kInvPi);
  }

  if (cos_o >= kMinCosView) {
    const WarpedLobe<T> spec = specular_lobe(Vec3<T>(wo), Vec3<T>(n), mat);
    const Vec3d axis = value_of(spec.lobe.axis);
    for (std::size_t j = 0; j < m; ++j) {
      response[j] =
          cosine_response(light[j].axis, light[j].sharpness, spec.lobe.sharpness, axis, n);
    }
    // The mirror direction has wi.n = wo.n.
    const double scale = 1.0 / (4.0 * cos_o * cos_o);
    for (int c = 0; c < 3; ++c) {
      color[c] += spec.lobe.amplitude[c] * scale * detail::lobe_sum(amp[c], response);
    }
  }
  bool any = false;
  for (int c = 0; c < 3; ++c) {
    if (value_of(color[c]) < 0.0) {
      color[c] = T(0.0);
      any = true;
    }
  }
  if (clamped != nullptr) *clamped = any;
  return color;
}

inline Rgbd shade_point(const Vec3d& n, const Vec3d& wo, const Material& mat,
                        const SgMixture& light, bool* clamped = nullptr) {
  return shade_point<double>(n, wo, mat, std::span<const SgLobe>(light), clamped);
}

/// Normal used for shading when the geometric normal faces away from the
/// viewer (silhouette hits): tilted until wo.n = 1e-3.
inline Vec3d shading_normal(const Vec3d& n, const Vec3d& wo) {
  const double c = dot(wo, n);
  if (c > 0.0) return n;
  return normalize(n - wo * (c - 1e-3));
}

struct RenderConfig {
  int spp = 1;
  int n_samples = 64;
  int d = 8;
  int levels = 3;
  IntersectMode mode = IntersectMode::kExplicit;
  std::uint64_t seed = 0;

  IntersectConfig intersect() const {
    IntersectConfig c;
    c.n_samples = n_samples;
    c.d = d;
    c.levels = levels;
    c.mode = mode;
    return c;
  }

  friend bool operator==(const RenderConfig&, const RenderConfig&) = default;
};

inline void validate(const RenderConfig& c) {
  if (c.spp < 1) throw InputError("render: spp must be >= 1");
  if (c.n_samples < 8) throw InputError("render: ray sample count must be >= 8");
  if (c.d < 2) throw InputError("render: subdivision count must be >= 2");
  if (c.levels < 1) throw InputError("render: refinement levels must be >= 1");
}

/// The six image domains plus coverage.
struct AovFrame {
  ImageBuffer color, normal, depth, albedo, roughness, metallic, mask;
  std::size_t clamped_pixels = 0;

  AovFrame() = default;
  AovFrame(int w, int h)
      : color(w, h, 3), normal(w, h, 3), depth(w, h, 1), albedo(w, h, 3),
        roughness(w, h, 1), metallic(w, h, 1), mask(w, h, 1) {}

  int width() const { return color.width; }
  int height() const { return color.height; }
};

/// Ray-sample hit of one pixel sample, with everything shading needs.
struct PrimaryHit {
  Vec3d point{};
  Vec3d normal{};
  Vec3d wo{};
  double depth = 0.0;
  int material = 0;
};

/// Distance along the ray is reported as depth; the hit normal is the SDF
/// normal. Returns nullopt on a miss or a vanishing gradient.
inline std::optional<PrimaryHit> trace_primary(const Scene& scene, const Ray& ray,
                                               const IntersectConfig& cfg) {
  const std::optional<SurfaceHit> hit = intersect_surface(scene.geometry, ray, cfg);
  if (!hit) return std::nullopt;
  PrimaryHit p;
  p.point = hit->point;
  p.depth = hit->depth;
  p.wo = -ray.direction;
  try {
    p.normal = sdf_normal(scene.geometry, hit->point);
  } catch (const DegenerateError&) {
    return std::nullopt;
  }
  p.material = sdf_material_id(scene.geometry, hit->point);
  if (p.material < 0 || static_cast<std::size_t>(p.material) >= scene.materials.size()) {
    throw InputError("geometry references undefined material " +
                     std::to_string(p.material));
  }
  return p;
}

inline PixelJitter pixel_jitter(std::uint64_t seed, std::size_t pixel, int sample,
                                int spp) {
  if (spp == 1) return {};
  Rng rng(stream_seed(seed, {0x6a6974ULL, pixel, static_cast<std::uint64_t>(sample)}));
  return {rng.uniform() - 0.5, rng.uniform() - 0.5};
}

/// Renders all AOVs. A pixel is covered when any of its samples hits; color
/// averages all samples (misses contribute the background), material, depth
/// and normal channels average the hitting samples and the normal is
/// renormalised.
inline AovFrame render(const Scene& scene, const Camera& camera,
                       const RenderConfig& cfg) {
  validate(scene);
  validate(camera);
  validate(cfg);
  AovFrame frame(camera.width, camera.height);
  const IntersectConfig icfg = cfg.intersect();
  const std::size_t n_pixels = frame.color.pixel_count();
  std::vector<char> clamped(n_pixels, 0);
  parallel_for(static_cast<std::size_t>(camera.height), [&](std::size_t row) {
    for (int i = 0; i < camera.width; ++i) {
      const std::size_t pix = row * static_cast<std::size_t>(camera.width) + i;
      Rgbd color{}, normal{}, albedo{};
      double depth = 0.0, rough = 0.0, metal = 0.0;
      int hits = 0;
      for (int s = 0; s < cfg.spp; ++s) {
        const Ray ray = generate_ray(camera, i, static_cast<int>(row),
                                     pixel_jitter(cfg.seed, pix, s, cfg.spp));
        const std::optional<PrimaryHit> hit = trace_primary(scene, ray, icfg);
        if (!hit) {
          color += scene.background;
          continue;
        }
        ++hits;
        const Material mat =
            field_eval(scene.materials[static_cast<std::size_t>(hit->material)], hit->point);
        bool was_clamped = false;
        color += shade_point(shading_normal(hit->normal, hit->wo), hit->wo, mat,
                             scene.light, &was_clamped);
        clamped[pix] |= was_clamped ? 1 : 0;
        normal += hit->normal;
        albedo += mat.albedo;
        depth += hit->depth;
        rough += mat.roughness;
        metal += mat.metallic;
      }
      frame.color.set_rgb(pix, color / static_cast<double>(cfg.spp));
      if (hits == 0) continue;
      const double inv = 1.0 / hits;
      const double nlen = length(normal);
      frame.normal.set_rgb(pix, nlen > 1e-12 ? normal / nlen : Vec3d{});
      frame.albedo.set_rgb(pix, albedo * inv);
      frame.depth.data[pix] = depth * inv;
      frame.roughness.data[pix] = rough * inv;
      frame.metallic.data[pix] = metal * inv;
      frame.mask.data[pix] = 1.0;
    }
  });
  for (char c : clamped) frame.clamped_pixels += c ? 1 : 0;
  return frame;
}

/// Per-pixel uniform-hemisphere Monte-Carlo estimate of the rendering
/// equation with the pointwise BRDF and the SG light, sharing the primary
/// intersection with `render` (pixel centres). Pixels whose view direction
/// is back-facing to the hit normal are left black.
inline ImageBuffer render_reference_mc(const Scene& scene, const Camera& camera,
                                       int n_samples, std::uint64_t seed,
                                       const RenderConfig& cfg = {}) {
  validate(scene);
  validate(camera);
  if (n_samples < 1000) throw InputError("render_reference_mc: need >= 1000 samples");
  ImageBuffer out(camera.width, camera.height, 3);
  const IntersectConfig icfg = cfg.intersect();
  parallel_for(static_cast<std::size_t>(camera.height), [&](std::size_t row) {
    for (int i = 0; i < camera.width; ++i) {
      const std::size_t pix = row * static_cast<std::size_t>(camera.width) + i;
      const Ray ray = generate_ray(camera, i, static_cast<int>(row));
      const std::optional<PrimaryHit> hit = trace_primary(scene, ray, icfg);
      if (!hit) {
        out.set_rgb(pix, scene.background);
        continue;
      }
      if (!(dot(hit->wo, hit->normal) > 0.0)) continue;
      const Material mat =
          field_eval(scene.materials[static_cast<std::size_t>(hit->material)], hit->point);
      Vec3d t, b;
      tangent_frame(hit->normal, t, b);
      Rng rng(stream_seed(seed, {0x6d63ULL, pix}));
      Rgbd sum{};
      for (int k = 0; k < n_samples; ++k) {
        const Vec3d local = uniform_hemisphere(rng.uniform(), rng.uniform());
        const Vec3d wi = t * local.x + b * local.y + hit->normal * local.z;
        if (!(local.z > 0.0)) continue;
        const Rgbd f = eval_brdf(hit->wo, wi, hit->normal, mat);
        sum += cmul(f, eval_mixture(scene.light, wi)) * local.z;
      }
      out.set_rgb(pix, sum * (2.0 * kPi / n_samples));
    }
  });
  return out;
}

/// Pixels whose view direction makes a cosine below this with the hit
/// normal count as grazing in SG-vs-reference comparisons.
inline constexpr double kGrazingCos = 0.1;

struct ShadingErrorStats {
  std::size_t count = 0;
  double mean_relative = 0.0;
  double max_relative = 0.0;
};

struct ShadingComparison {
  ShadingErrorStats non_grazing, grazing, all;
};

/// Per-pixel relative error |sg - ref|_1 / |ref|_1 over covered pixels,
/// split by kGrazingCos. Pixels with a reference below 1e-6 are skipped.
inline ShadingComparison compare_shading(const AovFrame& sg, const ImageBuffer& reference,
                                         const Camera& camera) {
  if (!sg.color.same_shape(reference)) throw InputError("compare_shading: shapes differ");
  ShadingComparison out;
  const auto add = [](ShadingErrorStats& s, double e) {
    ++s.count;
    s.mean_relative += e;
    s.max_relative = std::max(s.max_relative, e);
  };
  for (int j = 0; j < camera.height; ++j) {
    for (int i = 0; i < camera.width; ++i) {
      const std::size_t p = static_cast<std::size_t>(j) * camera.width + i;
      if (!(sg.mask.data[p] > 0.5)) continue;
      const Vec3d ref = reference.rgb(p);
      const double denom = std::abs(ref.x) + std::abs(ref.y) + std::abs(ref.z);
      if (!(denom > 1e-6)) continue;
      const Vec3d d = sg.color.rgb(p) - ref;
      const double e = (std::abs(d.x) + std::abs(d.y) + std::abs(d.z)) / denom;
      const double cos_view = dot(-generate_ray(camera, i, j).direction, sg.normal.rgb(p));
      add(cos_view >= kGrazingCos ? out.non_grazing : out.grazing, e);
      add(out.all, e);
    }
  }
  for (ShadingErrorStats* s : {&out.non_grazing, &out.grazing, &out.all}) {
    if (s->count > 0) s->mean_relative /= static_cast<double>(s->count);
  }
  return out;
}

}  // namespace sgpbr

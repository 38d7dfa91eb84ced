#pragma once

// Multi-view fitting of SG lighting and material fields over fixed geometry.
//
// The primary hit of every target pixel is computed once (geometry does not
// change). Each step shades a seeded batch of masked pixels on reverse-mode
// tapes, one tape per chunk of rays, sums the chunk gradients in chunk order
// and applies an Adam update. Light axes are reprojected to the unit sphere
// after every step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sgpbr/autodiff.hpp"
#include "sgpbr/camera.hpp"
#include "sgpbr/fields.hpp"
#include "sgpbr/image.hpp"
#include "sgpbr/metrics.hpp"
#include "sgpbr/parallel.hpp"
#include "sgpbr/renderer.hpp"
#include "sgpbr/rng.hpp"
#include "sgpbr/sg.hpp"

namespace sgpbr {

/// Lobes on a spherical Fibonacci lattice with equal sharpness and equal
/// amplitudes scaled so the summed integrals equal `total_energy`.
inline SgMixture init_light(int n_lobes, const Rgbd& total_energy,
                            double sharpness = 10.0) {
  if (n_lobes < 1) throw InputError("init_light: need at least one lobe");
  if (!(sharpness > 0.0)) throw InputError("init_light: sharpness must be positive");
  if (min_component(total_energy) < 0.0) {
    throw InputError("init_light: energy must be non-negative");
  }
  SgMixture lobes;
  const double per_lobe = sg_integral(SgLobe{{0.0, 0.0, 1.0}, sharpness, {1.0, 1.0, 1.0}}).x;
  for (int i = 0; i < n_lobes; ++i) {
    lobes.push_back(SgLobe{fibonacci_direction(i, n_lobes), sharpness,
                           total_energy / (per_lobe * n_lobes)});
  }
  return lobes;
}

struct ViewTarget {
  Camera camera;
  ImageBuffer color;
  ImageBuffer mask;
  std::optional<ImageBuffer> albedo, roughness, metallic;
};

struct LossWeights {
  double color = 1.0;
  double albedo = 1.0;
  double roughness = 1.0;
  double metallic = 1.0;
};

struct FitUnknowns {
  bool light = true;
  bool materials = true;
};

struct FitProblem {
  SdfField geometry;
  /// Initial material fields, indexed by geometry material id.
  std::vector<ParameterField> materials;
  /// Initial light.
  SgMixture light;
  std::vector<ViewTarget> views;
  FitUnknowns unknowns;
  /// When set, the light is rescaled in the forward pass so its total
  /// integral stays equal to this value (resolves the albedo/light scale).
  std::optional<Rgbd> fixed_energy;
  LossWeights weights;
  RenderConfig render;
};

inline void validate(const FitProblem& p) {
  if (p.geometry.empty()) throw InputError("fit: no geometry");
  if (p.materials.empty()) throw InputError("fit: no material fields");
  if (p.light.empty()) throw InputError("fit: no light lobes");
  if (p.views.empty()) throw InputError("fit: need at least one view");
  for (const ViewTarget& v : p.views) {
    validate(v.camera);
    const auto check = [&](const ImageBuffer& img, int channels, const char* what) {
      if (img.width != v.camera.width || img.height != v.camera.height ||
          img.channels != channels) {
        throw InputError(std::string("fit: target ") + what + " does not match its camera");
      }
    };
    check(v.color, 3, "color");
    check(v.mask, 1, "mask");
    for (double m : v.mask.data) {
      if (m != 0.0 && m != 1.0) throw InputError("fit: masks must be binary");
    }
    if (v.albedo) check(*v.albedo, 3, "albedo");
    if (v.roughness) check(*v.roughness, 1, "roughness");
    if (v.metallic) check(*v.metallic, 1, "metallic");
  }
}

struct FitOptions {
  int iterations = 2000;
  double lr = 5e-3;
  std::uint64_t seed = 0;
  int rays_per_step = 4096;
  int history_every = 50;
  int chunk_rays = 512;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct LossRecord {
  int step = 0;
  double loss = 0.0;
};

struct FitResult {
  SgMixture light;
  std::vector<ParameterField> materials;
  ParameterStore params;
  std::vector<LossRecord> history;
  std::vector<double> view_psnr;
  int steps = 0;
};

struct ImageLoss {
  double value = 0.0;
  bool empty_mask = false;
};

/// Masked mean squared error of color (mean over pixels and channels) plus
/// weighted masked MSE of every supervised material channel.
inline ImageLoss image_loss(const AovFrame& rendered, const ViewTarget& target,
                            const LossWeights& w = {}) {
  if (!rendered.color.same_shape(target.color)) {
    throw InputError("image_loss: rendered and target shapes differ");
  }
  std::size_t count = 0;
  double color = 0.0, albedo = 0.0, rough = 0.0, metal = 0.0;
  for (std::size_t p = 0; p < target.mask.pixel_count(); ++p) {
    if (!(target.mask.data[p] > 0.5)) continue;
    ++count;
    const Vec3d dc = rendered.color.rgb(p) - target.color.rgb(p);
    color += dot(dc, dc) / 3.0;
    if (target.albedo) {
      const Vec3d da = rendered.albedo.rgb(p) - target.albedo->rgb(p);
      albedo += dot(da, da) / 3.0;
    }
    if (target.roughness) {
      const double d = rendered.roughness.data[p] - target.roughness->data[p];
      rough += d * d;
    }
    if (target.metallic) {
      const double d = rendered.metallic.data[p] - target.metallic->data[p];
      metal += d * d;
    }
  }
  if (count == 0) return {0.0, true};
  const double inv = 1.0 / static_cast<double>(count);
  return {(w.color * color + w.albedo * albedo + w.roughness * rough + w.metallic * metal) * inv,
          false};
}

namespace detail {

struct FitPixel {
  std::uint32_t view = 0;
  std::uint32_t pixel = 0;
  PrimaryHit hit;
  Vec3d shading_n{};
};

struct FitBlocks {
  std::size_t axis = 0, sharpness = 0, amplitude = 0;
  std::vector<std::size_t> materials;
};

/// Squared-error terms of one pixel, recorded on the active tape.
inline ad::Var pixel_loss(const FitProblem& prob, const FitPixel& px,
                          std::span<const SphericalGaussian<ad::Var>> light,
                          const std::vector<std::span<const ad::Var>>& material_params) {
  const ViewTarget& view = prob.views[px.view];
  const auto mid = static_cast<std::size_t>(px.hit.material);
  const MaterialSample<ad::Var> mat =
      field_eval<ad::Var>(prob.materials[mid], material_params[mid], px.hit.point);
  const Rgb<ad::Var> color = shade_point<ad::Var>(px.shading_n, px.hit.wo, mat, light);
  std::vector<ad::Var> terms;
  const Vec3d tc = view.color.rgb(px.pixel);
  for (int c = 0; c < 3; ++c) {
    const ad::Var d = color[c] - tc[c];
    terms.push_back(d * d * (prob.weights.color / 3.0));
  }
  if (view.albedo) {
    const Vec3d ta = view.albedo->rgb(px.pixel);
    for (int c = 0; c < 3; ++c) {
      const ad::Var d = mat.albedo[c] - ta[c];
      terms.push_back(d * d * (prob.weights.albedo / 3.0));
    }
  }
  if (view.roughness) {
    const ad::Var d = mat.roughness - view.roughness->data[px.pixel];
    terms.push_back(d * d * prob.weights.roughness);
  }
  if (view.metallic) {
    const ad::Var d = mat.metallic - view.metallic->data[px.pixel];
    terms.push_back(d * d * prob.weights.metallic);
  }
  return ad::sum(terms);
}

}  // namespace detail

/// Adam state for one flat parameter vector.
struct AdamState {
  std::vector<double> m, v;
  int step = 0;
};

/// Renders `view` with the current parameters of a fit.
inline AovFrame render_fit_view(const FitProblem& prob, const SgMixture& light,
                                const std::vector<ParameterField>& materials,
                                const Camera& camera) {
  Scene scene{prob.geometry, materials, light, {}};
  return render(scene, camera, prob.render);
}

inline FitResult fit(const FitProblem& prob, const FitOptions& opt = {}) {
  validate(prob);
  if (opt.iterations < 0) throw InputError("fit: iterations must be >= 0");
  if (opt.rays_per_step < 1 || opt.chunk_rays < 1) {
    throw InputError("fit: ray batch sizes must be positive");
  }
  const Rgbd* energy = prob.fixed_energy && prob.unknowns.light ? &*prob.fixed_energy : nullptr;

  // Cached primary hits of all masked target pixels.
  std::vector<detail::FitPixel> pixels;
  const IntersectConfig icfg = prob.render.intersect();
  for (std::size_t v = 0; v < prob.views.size(); ++v) {
    const ViewTarget& view = prob.views[v];
    const int w = view.camera.width;
    for (int y = 0; y < view.camera.height; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        if (!(view.mask.data[p] > 0.5)) continue;
        const Scene probe{prob.geometry, prob.materials, prob.light, {}};
        const auto hit = trace_primary(probe, generate_ray(view.camera, x, y), icfg);
        if (!hit) continue;
        pixels.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(p), *hit,
                          shading_normal(hit->normal, hit->wo)});
      }
    }
  }
  if (pixels.empty()) throw InputError("fit: no masked pixel hits the geometry");

  FitResult result;
  ParameterStore& store = result.params;
  add_light_blocks(store, prob.light);
  add_material_blocks(store, prob.materials);
  detail::FitBlocks blocks;
  blocks.axis = store.index(kLightAxisBlock);
  blocks.sharpness = store.index(kLightSharpnessBlock);
  blocks.amplitude = store.index(kLightAmplitudeBlock);
  for (std::size_t i = 0; i < prob.materials.size(); ++i) {
    blocks.materials.push_back(store.index(material_block_name(i)));
  }
  std::vector<bool> trainable(store.size(), false);
  for (std::size_t b : {blocks.axis, blocks.sharpness, blocks.amplitude}) {
    trainable[b] = prob.unknowns.light;
  }
  for (std::size_t b : blocks.materials) trainable[b] = prob.unknowns.materials;

  std::vector<AdamState> adam(store.size());
  for (std::size_t b = 0; b < store.size(); ++b) {
    adam[b].m.assign(store.block(b).values.size(), 0.0);
    adam[b].v.assign(store.block(b).values.size(), 0.0);
  }

  auto current_materials = [&] {
    std::vector<ParameterField> m = prob.materials;
    read_materials(store, m);
    return m;
  };
  auto full_loss = [&] {
    const SgMixture light = read_light(store, energy);
    const std::vector<ParameterField> mats = current_materials();
    double total = 0.0;
    for (const detail::FitPixel& px : pixels) {
      const ViewTarget& view = prob.views[px.view];
      const Material mat = field_eval(mats[static_cast<std::size_t>(px.hit.material)], px.hit.point);
      const Rgbd c = shade_point(px.shading_n, px.hit.wo, mat, light);
      const Vec3d dc = c - view.color.rgb(px.pixel);
      double l = prob.weights.color * dot(dc, dc) / 3.0;
      if (view.albedo) {
        const Vec3d da = mat.albedo - view.albedo->rgb(px.pixel);
        l += prob.weights.albedo * dot(da, da) / 3.0;
      }
      if (view.roughness) {
        const double d = mat.roughness - view.roughness->data[px.pixel];
        l += prob.weights.roughness * d * d;
      }
      if (view.metallic) {
        const double d = mat.metallic - view.metallic->data[px.pixel];
        l += prob.weights.metallic * d * d;
      }
      total += l;
    }
    return total / static_cast<double>(pixels.size());
  };
  auto snapshot = [&](int step) {
    std::ostringstream s;
    s << "fit diverged at step " << step << "; light lobes:";
    for (const SgLobe& g : read_light(store)) {
      s << " [axis " << to_string(g.axis) << " sharpness " << g.sharpness << " amplitude "
        << to_string(g.amplitude) << "]";
    }
    return s.str();
  };

  const std::size_t n_rays = static_cast<std::size_t>(opt.rays_per_step);
  const std::size_t chunk = static_cast<std::size_t>(opt.chunk_rays);
  const std::size_t n_chunks = (n_rays + chunk - 1) / chunk;
  std::vector<std::size_t> batch(n_rays);
  // Tapes and adjoint buffers persist across steps to keep their storage.
  std::vector<ad::Tape> tapes(n_chunks);
  std::vector<std::vector<double>> adjoint_buf(n_chunks);

  for (int step = 0; step < opt.iterations; ++step) {
    if (step % opt.history_every == 0) {
      const double l = full_loss();
      if (!std::isfinite(l)) throw NumericalError(snapshot(step));
      result.history.push_back({step, l});
    }
    Rng rng(stream_seed(opt.seed, {0x62617463ULL, static_cast<std::uint64_t>(step)}));
    for (std::size_t& b : batch) b = static_cast<std::size_t>(rng.below(pixels.size()));

    // Per-chunk gradients, reduced in chunk order.
    std::vector<std::vector<std::vector<double>>> chunk_grads(n_chunks);
    parallel_for(n_chunks, [&](std::size_t c) {
      ad::Tape& tape = tapes[c];
      tape.clear();
      ad::TapeScope scope(tape);
      Bindings leaves;
      leaves.blocks.resize(store.size());
      for (std::size_t b = 0; b < store.size(); ++b) {
        const auto& values = store.block(b).values;
        leaves.blocks[b].reserve(values.size());
        for (double v : values) {
          leaves.blocks[b].push_back(trainable[b] ? tape.leaf(v) : ad::Var(v));
        }
      }
      const std::vector<SphericalGaussian<ad::Var>> light = light_from_raw<ad::Var>(
          leaves[blocks.axis], leaves[blocks.sharpness], leaves[blocks.amplitude], energy);
      std::vector<std::span<const ad::Var>> mat_params;
      for (std::size_t b : blocks.materials) mat_params.push_back(leaves[b]);
      std::vector<ad::Var> losses;
      const std::size_t end = std::min(n_rays, (c + 1) * chunk);
      for (std::size_t r = c * chunk; r < end; ++r) {
        losses.push_back(detail::pixel_loss(prob, pixels[batch[r]], light, mat_params));
      }
      const ad::Var loss = ad::sum(losses);
      std::vector<std::vector<double>>& grads = chunk_grads[c];
      grads.resize(store.size());
      if (loss.is_constant()) return;
      std::vector<double>& adj = adjoint_buf[c];
      tape.adjoints(loss, adj);
      for (std::size_t b = 0; b < store.size(); ++b) {
        if (!trainable[b]) continue;
        grads[b].resize(leaves.blocks[b].size());
        for (std::size_t k = 0; k < leaves.blocks[b].size(); ++k) {
          grads[b][k] = adj[static_cast<std::size_t>(leaves.blocks[b][k].id)];
        }
      }
    });
    store.zero_grad();
    for (const auto& grads : chunk_grads) {
      for (std::size_t b = 0; b < store.size(); ++b) {
        for (std::size_t k = 0; k < grads[b].size(); ++k) {
          store.block(b).grad[k] += grads[b][k] / static_cast<double>(n_rays);
        }
      }
    }

    for (std::size_t b = 0; b < store.size(); ++b) {
      if (!trainable[b]) continue;
      ParameterBlock& blk = store.block(b);
      AdamState& st = adam[b];
      ++st.step;
      const double c1 = 1.0 - std::pow(opt.beta1, st.step);
      const double c2 = 1.0 - std::pow(opt.beta2, st.step);
      for (std::size_t k = 0; k < blk.values.size(); ++k) {
        const double g = blk.grad[k];
        if (!std::isfinite(g)) throw NumericalError(snapshot(step));
        st.m[k] = opt.beta1 * st.m[k] + (1.0 - opt.beta1) * g;
        st.v[k] = opt.beta2 * st.v[k] + (1.0 - opt.beta2) * g * g;
        blk.values[k] -= opt.lr * (st.m[k] / c1) / (std::sqrt(st.v[k] / c2) + opt.adam_eps);
      }
    }
    if (prob.unknowns.light) reproject_light_axes(store);
    result.steps = step + 1;
  }
  const double final_loss = full_loss();
  if (!std::isfinite(final_loss)) throw NumericalError(snapshot(result.steps));
  result.history.push_back({result.steps, final_loss});

  result.light = read_light(store, energy);
  if (energy != nullptr) {
    // Store the rescaled amplitudes so the blocks alone reproduce the light.
    std::vector<double>& amp = store.block(blocks.amplitude).values;
    for (std::size_t j = 0; j < result.light.size(); ++j) {
      for (int c = 0; c < 3; ++c) amp[3 * j + c] = inverse_softplus(result.light[j].amplitude[c]);
    }
  }
  result.materials = current_materials();
  for (const ViewTarget& view : prob.views) {
    const AovFrame f = render_fit_view(prob, result.light, result.materials, view.camera);
    bool any = false;
    for (double m : view.mask.data) any = any || m > 0.5;
    result.view_psnr.push_back(any ? psnr(f.color, view.color, &view.mask)
                                   : std::numeric_limits<double>::quiet_NaN());
  }
  return result;
}

/// Renders fixed geometry and materials under a different light.
inline AovFrame relight(const SdfField& geometry, const std::vector<ParameterField>& materials,
                        const SgMixture& new_light, const Camera& camera,
                        const RenderConfig& cfg, const Rgbd& background = {}) {
  Scene scene{geometry, materials, new_light, background};
  return render(scene, camera, cfg);
}

}  // namespace sgpbr

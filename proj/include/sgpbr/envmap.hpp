#pragma once

// Fitting an SG mixture to a latitude-longitude environment map.
//
// Pixel (x, y) of a W x H map looks along
//   theta = pi (y + 0.5) / H,  phi = 2 pi (x + 0.5) / W,
//   d = (sin theta cos phi, sin theta sin phi, cos theta)
// and covers the solid angle sin(theta) (pi / H) (2 pi / W). The fit
// minimises the solid-angle-weighted squared RGB error: lobe axes start at
// the brightest local maxima (greedy, with angular suppression), all lobes
// are refined jointly by Levenberg-Marquardt, and the weakest lobe is moved
// to the largest residual while that keeps lowering the error.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "sgpbr/image.hpp"
#include "sgpbr/math.hpp"
#include "sgpbr/sg.hpp"

namespace sgpbr {

inline Vec3d envmap_direction(int x, int y, int width, int height) {
  const double theta = kPi * (y + 0.5) / height;
  const double phi = 2.0 * kPi * (x + 0.5) / width;
  return spherical_direction(theta, phi);
}

inline double envmap_solid_angle(int y, int width, int height) {
  const double theta = kPi * (y + 0.5) / height;
  return std::sin(theta) * (kPi / height) * (2.0 * kPi / width);
}

/// Samples the mixture at every pixel direction.
inline ImageBuffer render_envmap(const SgMixture& lobes, int width, int height) {
  ImageBuffer img(width, height, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      img.set_rgb(static_cast<std::size_t>(y) * width + x,
                  eval_mixture(lobes, envmap_direction(x, y, width, height)));
    }
  }
  return img;
}

/// sqrt(sum_p omega_p |a_p - b_p|^2).
inline double envmap_l2(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw InputError("envmap_l2: shapes differ");
  double sum = 0.0;
  for (int y = 0; y < a.height; ++y) {
    const double w = envmap_solid_angle(y, a.width, a.height);
    for (int x = 0; x < a.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * a.width + x;
      const Vec3d d = a.rgb(p) - b.rgb(p);
      sum += w * dot(d, d);
    }
  }
  return std::sqrt(sum);
}

/// Radiance integral of the map, per channel.
inline Rgbd envmap_energy(const ImageBuffer& img) {
  Rgbd e{};
  for (int y = 0; y < img.height; ++y) {
    const double w = envmap_solid_angle(y, img.width, img.height);
    for (int x = 0; x < img.width; ++x) e += img.rgb(static_cast<std::size_t>(y) * img.width + x) * w;
  }
  return e;
}

struct EnvmapFitOptions {
  int max_iterations = 200;
  double tolerance = 1e-12;
  int relocation_attempts = 16;
};

struct EnvmapFit {
  SgMixture lobes;
  double residual_l2 = 0.0;
  int iterations = 0;
};

namespace detail {

inline double luminance(const Vec3d& c) { return 0.2126 * c.x + 0.7152 * c.y + 0.0722 * c.z; }

/// Solid-angle-weighted least squares of an SG mixture against a map,
/// minimised by Levenberg-Marquardt. Parameters per lobe: raw axis (3,
/// normalised in the model), log sharpness, amplitude rgb (kept >= 0).
class EnvmapProblem {
 public:
  static constexpr int kPer = 7;

  EnvmapProblem(const ImageBuffer& target) : target_(target) {
    const int w = target.width, h = target.height;
    dirs_.resize(target.pixel_count());
    sqrt_w_.resize(target.pixel_count());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        dirs_[p] = envmap_direction(x, y, w, h);
        sqrt_w_[p] = std::sqrt(envmap_solid_angle(y, w, h));
      }
    }
  }

  const ImageBuffer& target() const { return target_; }
  ImageBuffer& target() { return target_; }
  const Vec3d& direction(std::size_t p) const { return dirs_[p]; }

  static Eigen::VectorXd pack(const SgMixture& lobes) {
    Eigen::VectorXd q(kPer * static_cast<Eigen::Index>(lobes.size()));
    for (std::size_t j = 0; j < lobes.size(); ++j) {
      const SgLobe& g = lobes[j];
      q.segment<kPer>(kPer * static_cast<Eigen::Index>(j)) << g.axis.x, g.axis.y, g.axis.z,
          std::log(g.sharpness), g.amplitude.x, g.amplitude.y, g.amplitude.z;
    }
    return q;
  }

  static SgMixture unpack(const Eigen::VectorXd& q) {
    SgMixture lobes(static_cast<std::size_t>(q.size() / kPer));
    for (std::size_t j = 0; j < lobes.size(); ++j) {
      const auto s = q.segment<kPer>(kPer * static_cast<Eigen::Index>(j));
      lobes[j] = SgLobe{normalize(Vec3d{s[0], s[1], s[2]}), std::exp(s[3]),
                        Rgbd{s[4], s[5], s[6]}};
    }
    return lobes;
  }

  double residuals(const Eigen::VectorXd& q, Eigen::VectorXd& r) const {
    const SgMixture lobes = unpack(q);
    r.resize(static_cast<Eigen::Index>(3 * dirs_.size()));
    for (std::size_t p = 0; p < dirs_.size(); ++p) {
      const Vec3d d = eval_mixture(lobes, dirs_[p]) - target_.rgb(p);
      for (int c = 0; c < 3; ++c) r[static_cast<Eigen::Index>(3 * p + c)] = sqrt_w_[p] * d[c];
    }
    return r.squaredNorm();
  }

  /// Returns the final cost and the number of iterations used.
  std::pair<double, int> refine(Eigen::VectorXd& params, const EnvmapFitOptions& opt) const {
    const auto n_params = params.size();
    const auto n_lobes = n_params / kPer;
    Eigen::VectorXd r;
    double cost = residuals(params, r);
    Eigen::MatrixXd jac(r.size(), n_params);
    double damping = -1.0;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
      jac.setZero();
      for (Eigen::Index j = 0; j < n_lobes; ++j) {
        const auto s = params.segment<kPer>(kPer * j);
        const Vec3d raw{s[0], s[1], s[2]};
        const double len = length(raw);
        const Vec3d a = raw / len;
        const double lambda = std::exp(s[3]);
        const Eigen::Index col = kPer * j;
        for (std::size_t p = 0; p < dirs_.size(); ++p) {
          const double cd = dot(dirs_[p], a);
          const double e = std::exp(lambda * (cd - 1.0)) * sqrt_w_[p];
          if (e < 1e-300) continue;
          // d(d.a_hat)/d(raw) = (d - (d.a_hat) a_hat) / |raw|
          const Vec3d dproj = (dirs_[p] - a * cd) / len;
          for (int c = 0; c < 3; ++c) {
            const auto row = static_cast<Eigen::Index>(3 * p + c);
            const double mu = s[4 + c];
            jac(row, col + 0) = mu * e * lambda * dproj.x;
            jac(row, col + 1) = mu * e * lambda * dproj.y;
            jac(row, col + 2) = mu * e * lambda * dproj.z;
            jac(row, col + 3) = mu * e * lambda * (cd - 1.0);
            jac(row, col + 4 + c) = e;
          }
        }
      }
      const Eigen::MatrixXd jtj = jac.transpose() * jac;
      const Eigen::VectorXd jtr = jac.transpose() * r;
      if (damping < 0.0) damping = 1e-3;
      bool improved = false;
      for (int attempt = 0; attempt < 30; ++attempt) {
        Eigen::MatrixXd a = jtj;
        for (Eigen::Index k = 0; k < n_params; ++k) {
          a(k, k) += damping * std::max(jtj(k, k), 1e-12);
        }
        const Eigen::VectorXd step = a.ldlt().solve(-jtr);
        Eigen::VectorXd trial = params + step;
        for (Eigen::Index j = 0; j < n_lobes; ++j) {
          auto s = trial.segment<kPer>(kPer * j);
          const double len = s.head<3>().norm();
          if (len > 0.0) s.head<3>() /= len;
          s[3] = std::clamp(s[3], std::log(1e-3), std::log(1e5));
          for (int c = 0; c < 3; ++c) s[4 + c] = std::max(s[4 + c], 0.0);
        }
        Eigen::VectorXd trial_r;
        const double trial_cost = residuals(trial, trial_r);
        if (std::isfinite(trial_cost) && trial_cost < cost) {
          const double rel = (cost - trial_cost) / std::max(cost, 1e-300);
          params = trial;
          r = trial_r;
          cost = trial_cost;
          damping = std::max(damping / 3.0, 1e-12);
          improved = rel > opt.tolerance;
          break;
        }
        damping *= 4.0;
      }
      if (!improved) break;
    }
    return {cost, it};
  }

 private:
  ImageBuffer target_;
  std::vector<Vec3d> dirs_;
  std::vector<double> sqrt_w_;
};

}  // namespace detail

/// Lobes are placed one at a time on the brightest remaining residual pixel
/// (directions closer than the suppression angle to an earlier lobe are
/// skipped), each fitted alone to the residual, then all are refined jointly.
inline EnvmapFit fit_envmap_to_sg(const ImageBuffer& img, int n_lobes,
                                  const EnvmapFitOptions& opt = {}) {
  if (n_lobes < 1) throw InputError("fit_envmap_to_sg: need at least one lobe");
  if (img.channels != 3) throw InputError("fit_envmap_to_sg: envmap must be RGB");
  for (double v : img.data) {
    if (std::isnan(v)) throw InputError("fit_envmap_to_sg: NaN pixel");
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InputError("fit_envmap_to_sg: radiance must be finite and non-negative");
    }
  }
  EnvmapFit fit;
  if (max_component(envmap_energy(img)) <= 0.0) {
    for (int i = 0; i < n_lobes; ++i) {
      fit.lobes.push_back(SgLobe{fibonacci_direction(i, n_lobes), 1.0, Rgbd{}});
    }
    return fit;
  }

  const double cos_suppress = 1.0 - 2.0 / n_lobes;
  const double init_sharpness = std::max(0.5, 0.5 * n_lobes);
  detail::EnvmapProblem residual(img);
  SgMixture lobes;
  for (int j = 0; j < n_lobes; ++j) {
    const ImageBuffer& res = residual.target();
    std::size_t best = res.pixel_count();
    double best_lum = 0.0;
    for (std::size_t p = 0; p < res.pixel_count(); ++p) {
      const double l = detail::luminance(cmax(res.rgb(p), 0.0));
      if (l <= best_lum) continue;
      bool near = false;
      for (const SgLobe& g : lobes) near = near || dot(g.axis, residual.direction(p)) > cos_suppress;
      if (near) continue;
      best_lum = l;
      best = p;
    }
    if (best == res.pixel_count()) {
      lobes.push_back(SgLobe{fibonacci_direction(j, n_lobes), init_sharpness, Rgbd{}});
      continue;
    }
    Eigen::VectorXd q = detail::EnvmapProblem::pack(
        {SgLobe{residual.direction(best), init_sharpness, cmax(res.rgb(best), 0.0)}});
    residual.refine(q, opt);
    const SgLobe g = detail::EnvmapProblem::unpack(q)[0];
    lobes.push_back(g);
    ImageBuffer& target = residual.target();
    for (std::size_t p = 0; p < target.pixel_count(); ++p) {
      target.set_rgb(p, target.rgb(p) - eval_sg(g, residual.direction(p)));
    }
  }

  const detail::EnvmapProblem problem(img);
  Eigen::VectorXd params = detail::EnvmapProblem::pack(lobes);
  auto [cost, iterations] = problem.refine(params, opt);

  // Escape local minima: move the weakest lobe onto the brightest residual
  // pixel and refit while that lowers the cost.
  for (int attempt = 0; attempt < opt.relocation_attempts; ++attempt) {
    SgMixture current = detail::EnvmapProblem::unpack(params);
    std::size_t weakest = 0;
    double weakest_energy = 1e300;
    for (std::size_t j = 0; j < current.size(); ++j) {
      const double e = detail::luminance(sg_integral(current[j]));
      if (e < weakest_energy) {
        weakest_energy = e;
        weakest = j;
      }
    }
    std::size_t best = img.pixel_count();
    double best_lum = 0.0;
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
      const Vec3d d = problem.direction(p);
      const double l = detail::luminance(img.rgb(p) - eval_mixture(current, d) +
                                         eval_sg(current[weakest], d));
      if (l > best_lum) {
        best_lum = l;
        best = p;
      }
    }
    if (best == img.pixel_count()) break;
    const Vec3d d = problem.direction(best);
    current[weakest] = SgLobe{d, init_sharpness,
                              cmax(img.rgb(best) - eval_mixture(current, d) +
                                       eval_sg(current[weakest], d),
                                   0.0)};
    Eigen::VectorXd trial = detail::EnvmapProblem::pack(current);
    const auto [trial_cost, trial_iterations] = problem.refine(trial, opt);
    iterations += trial_iterations;
    if (!(trial_cost < cost * (1.0 - 1e-6))) break;
    params = trial;
    cost = trial_cost;
  }
  fit.lobes = detail::EnvmapProblem::unpack(params);
  fit.residual_l2 = std::sqrt(cost);
  fit.iterations = iterations;
  return fit;
}

}  // namespace sgpbr

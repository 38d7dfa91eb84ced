#pragma once

// Signed distance fields: analytic primitives, CSG combinations, trilinear
// grids and a positional-encoded MLP. Fields are immutable after
// construction and cheap to copy (nodes are shared).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sgpbr/math.hpp"
#include "sgpbr/mlp.hpp"

namespace sgpbr {

class SdfField;

namespace sdf {

struct Sphere {
  Vec3d center{};
  double radius = 1.0;
};

struct Box {
  Vec3d center{};
  Vec3d half_extents{0.5, 0.5, 0.5};
};

/// Torus about the z axis through `center`.
struct Torus {
  Vec3d center{};
  double major_radius = 0.7;
  double minor_radius = 0.25;
};

/// Half-space dot(normal, x) - offset <= 0.
struct Plane {
  Vec3d normal{0.0, 0.0, 1.0};
  double offset = 0.0;
};

enum class CsgOp { kUnion, kIntersection, kSubtraction };

struct Csg {
  CsgOp op = CsgOp::kUnion;
  std::vector<SdfField> children;
};

/// Samples on a res^3 lattice starting at `origin`; values[i + res*(j + res*k)]
/// is the distance at origin + cell * (i, j, k).
struct Grid {
  Vec3d origin{};
  double cell = 1.0;
  int resolution = 2;
  std::vector<double> values;
};

struct Neural {
  int pe_order = 10;
  Mlp mlp;
  /// Bounding sphere radius about the origin used for ray bounds.
  double bound_radius = 1.0;
};

}  // namespace sdf

struct BoundingSphere {
  Vec3d center{};
  double radius = 0.0;
};

class SdfField {
 public:
  using Variant = std::variant<sdf::Sphere, sdf::Box, sdf::Torus, sdf::Plane,
                               sdf::Csg, sdf::Grid, sdf::Neural>;

  SdfField() = default;

  template <class V>
    requires std::is_constructible_v<Variant, V>
  SdfField(V node, int material_id = 0)  // NOLINT: implicit from node types
      : node_(std::make_shared<const Variant>(std::move(node))),
        material_id_(material_id) {}

  bool empty() const { return node_ == nullptr; }
  const Variant& node() const { return *node_; }
  int material_id() const { return material_id_; }

  template <class V>
  const V* as() const {
    return node_ ? std::get_if<V>(node_.get()) : nullptr;
  }

 private:
  std::shared_ptr<const Variant> node_;
  int material_id_ = 0;
};

inline SdfField make_union(std::vector<SdfField> children) {
  return SdfField(sdf::Csg{sdf::CsgOp::kUnion, std::move(children)});
}
inline SdfField make_intersection(std::vector<SdfField> children) {
  return SdfField(sdf::Csg{sdf::CsgOp::kIntersection, std::move(children)});
}
inline SdfField make_subtraction(SdfField a, SdfField b) {
  return SdfField(sdf::Csg{sdf::CsgOp::kSubtraction, {std::move(a), std::move(b)}});
}

namespace sdf {

inline double eval_box(const Box& b, const Vec3d& x) {
  const Vec3d p = x - b.center;
  const Vec3d q{std::abs(p.x) - b.half_extents.x,
                std::abs(p.y) - b.half_extents.y,
                std::abs(p.z) - b.half_extents.z};
  const Vec3d outside{std::max(q.x, 0.0), std::max(q.y, 0.0),
                      std::max(q.z, 0.0)};
  return length(outside) + std::min(max_component(q), 0.0);
}

inline double eval_torus(const Torus& t, const Vec3d& x) {
  const Vec3d p = x - t.center;
  const double ring = std::sqrt(p.x * p.x + p.y * p.y) - t.major_radius;
  return std::sqrt(ring * ring + p.z * p.z) - t.minor_radius;
}

inline double grid_at(const Grid& g, int i, int j, int k) {
  const int n = g.resolution;
  return g.values[static_cast<std::size_t>(i + n * (j + n * k))];
}

inline double eval_grid(const Grid& g, const Vec3d& x) {
  const double extent = g.cell * (g.resolution - 1);
  const Vec3d upper = g.origin + splat(extent);
  const Vec3d c{std::clamp(x.x, g.origin.x, upper.x),
                std::clamp(x.y, g.origin.y, upper.y),
                std::clamp(x.z, g.origin.z, upper.z)};
  const Vec3d u = (c - g.origin) / g.cell;
  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    i0[a] = std::clamp(static_cast<int>(std::floor(u[a])), 0, g.resolution - 2);
    f[a] = u[a] - i0[a];
  }
  double v = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    const int di = corner & 1, dj = (corner >> 1) & 1, dk = (corner >> 2) & 1;
    const double w = (di ? f[0] : 1.0 - f[0]) * (dj ? f[1] : 1.0 - f[1]) *
                     (dk ? f[2] : 1.0 - f[2]);
    v += w * grid_at(g, i0[0] + di, i0[1] + dj, i0[2] + dk);
  }
  // Outside the lattice the clamped value is a bound; add the gap.
  return v + length(x - c);
}

inline double eval_neural(const Neural& n, const Vec3d& x) {
  const std::vector<double> features = positional_encoding(x, n.pe_order);
  return n.mlp.forward(features)[0];
}

}  // namespace sdf

/// Signed distance at x: negative inside, zero on the surface.
inline double sdf_eval(const SdfField& field, const Vec3d& x) {
  return std::visit(
      [&](const auto& node) -> double {
        using N = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<N, sdf::Sphere>) {
          return length(x - node.center) - node.radius;
        } else if constexpr (std::is_same_v<N, sdf::Box>) {
          return sdf::eval_box(node, x);
        } else if constexpr (std::is_same_v<N, sdf::Torus>) {
          return sdf::eval_torus(node, x);
        } else if constexpr (std::is_same_v<N, sdf::Plane>) {
          return dot(node.normal, x) - node.offset;
        } else if constexpr (std::is_same_v<N, sdf::Csg>) {
          if (node.children.empty()) return 1e30;
          if (node.op == sdf::CsgOp::kSubtraction) {
            return std::max(sdf_eval(node.children[0], x),
                            -sdf_eval(node.children[1], x));
          }
          double d = sdf_eval(node.children[0], x);
          for (std::size_t i = 1; i < node.children.size(); ++i) {
            const double di = sdf_eval(node.children[i], x);
            d = node.op == sdf::CsgOp::kUnion ? std::min(d, di) : std::max(d, di);
          }
          return d;
        } else if constexpr (std::is_same_v<N, sdf::Grid>) {
          return sdf::eval_grid(node, x);
        } else {
          return sdf::eval_neural(node, x);
        }
      },
      field.node());
}

/// Material id of the primitive that determines the distance at x.
inline int sdf_material_id(const SdfField& field, const Vec3d& x) {
  if (const auto* csg = field.as<sdf::Csg>()) {
    if (csg->children.empty()) return field.material_id();
    if (csg->op == sdf::CsgOp::kSubtraction) {
      return sdf_material_id(csg->children[0], x);
    }
    std::size_t best = 0;
    double bd = sdf_eval(csg->children[0], x);
    for (std::size_t i = 1; i < csg->children.size(); ++i) {
      const double d = sdf_eval(csg->children[i], x);
      if (csg->op == sdf::CsgOp::kUnion ? d < bd : d > bd) {
        bd = d;
        best = i;
      }
    }
    return sdf_material_id(csg->children[best], x);
  }
  return field.material_id();
}

inline std::optional<BoundingSphere> merge(const std::optional<BoundingSphere>& a,
                                           const std::optional<BoundingSphere>& b) {
  if (!a || !b) return std::nullopt;
  const Vec3d d = b->center - a->center;
  const double dist = length(d);
  if (dist + b->radius <= a->radius) return a;
  if (dist + a->radius <= b->radius) return b;
  const double r = 0.5 * (dist + a->radius + b->radius);
  const Vec3d c = dist > 0.0 ? a->center + d * ((r - a->radius) / dist) : a->center;
  return BoundingSphere{c, r};
}

/// Sphere containing the zero set, or nullopt for unbounded fields (planes).
inline std::optional<BoundingSphere> bounding_sphere(const SdfField& field) {
  return std::visit(
      [](const auto& node) -> std::optional<BoundingSphere> {
        using N = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<N, sdf::Sphere>) {
          return BoundingSphere{node.center, node.radius};
        } else if constexpr (std::is_same_v<N, sdf::Box>) {
          return BoundingSphere{node.center, length(node.half_extents)};
        } else if constexpr (std::is_same_v<N, sdf::Torus>) {
          return BoundingSphere{node.center,
                                node.major_radius + node.minor_radius};
        } else if constexpr (std::is_same_v<N, sdf::Plane>) {
          return std::nullopt;
        } else if constexpr (std::is_same_v<N, sdf::Csg>) {
          if (node.children.empty()) return std::nullopt;
          if (node.op == sdf::CsgOp::kSubtraction) {
            return bounding_sphere(node.children[0]);
          }
          if (node.op == sdf::CsgOp::kIntersection) {
            std::optional<BoundingSphere> best;
            for (const SdfField& c : node.children) {
              auto b = bounding_sphere(c);
              if (b && (!best || b->radius < best->radius)) best = b;
            }
            return best;
          }
          std::optional<BoundingSphere> acc = bounding_sphere(node.children[0]);
          for (std::size_t i = 1; i < node.children.size(); ++i) {
            acc = merge(acc, bounding_sphere(node.children[i]));
          }
          return acc;
        } else if constexpr (std::is_same_v<N, sdf::Grid>) {
          const double half = 0.5 * node.cell * (node.resolution - 1);
          return BoundingSphere{node.origin + splat(half), half * std::sqrt(3.0)};
        } else {
          return BoundingSphere{Vec3d{}, node.bound_radius};
        }
      },
      field.node());
}

/// Length scale used for finite-difference steps on sampled fields.
inline double scene_scale(const SdfField& field) {
  const auto b = bounding_sphere(field);
  return b && b->radius > 0.0 ? b->radius : 1.0;
}

inline bool has_sampled_component(const SdfField& field) {
  if (field.as<sdf::Grid>() || field.as<sdf::Neural>()) return true;
  if (const auto* csg = field.as<sdf::Csg>()) {
    for (const SdfField& c : csg->children) {
      if (has_sampled_component(c)) return true;
    }
  }
  return false;
}

inline Vec3d central_difference_gradient(const SdfField& field, const Vec3d& x,
                                         double step) {
  Vec3d g;
  for (int a = 0; a < 3; ++a) {
    Vec3d xp = x, xm = x;
    xp[a] += step;
    xm[a] -= step;
    g[a] = (sdf_eval(field, xp) - sdf_eval(field, xm)) / (2.0 * step);
  }
  return g;
}

/// Gradient of the field: analytic for primitives and CSG over primitives,
/// central differences (step 1e-4 x scene scale) for grid and neural nodes.
inline Vec3d sdf_gradient(const SdfField& field, const Vec3d& x) {
  return std::visit(
      [&](const auto& node) -> Vec3d {
        using N = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<N, sdf::Sphere>) {
          const Vec3d d = x - node.center;
          const double len = length(d);
          return len > 0.0 ? d / len : Vec3d{};
        } else if constexpr (std::is_same_v<N, sdf::Box>) {
          const Vec3d p = x - node.center;
          const Vec3d q{std::abs(p.x) - node.half_extents.x,
                        std::abs(p.y) - node.half_extents.y,
                        std::abs(p.z) - node.half_extents.z};
          const Vec3d sign{std::copysign(1.0, p.x), std::copysign(1.0, p.y),
                           std::copysign(1.0, p.z)};
          const Vec3d outside{std::max(q.x, 0.0), std::max(q.y, 0.0),
                              std::max(q.z, 0.0)};
          const double len = length(outside);
          if (len > 0.0) return cmul(outside / len, sign);
          int axis = 0;
          if (q.y > q[axis]) axis = 1;
          if (q.z > q[axis]) axis = 2;
          Vec3d g{};
          g[axis] = sign[axis];
          return g;
        } else if constexpr (std::is_same_v<N, sdf::Torus>) {
          const Vec3d p = x - node.center;
          const double rho = std::sqrt(p.x * p.x + p.y * p.y);
          const double ring = rho - node.major_radius;
          const double len = std::sqrt(ring * ring + p.z * p.z);
          if (len == 0.0 || rho == 0.0) return Vec3d{};
          return Vec3d{ring / len * p.x / rho, ring / len * p.y / rho, p.z / len};
        } else if constexpr (std::is_same_v<N, sdf::Plane>) {
          return node.normal;
        } else if constexpr (std::is_same_v<N, sdf::Csg>) {
          if (node.children.empty()) return Vec3d{};
          if (node.op == sdf::CsgOp::kSubtraction) {
            const double da = sdf_eval(node.children[0], x);
            const double db = sdf_eval(node.children[1], x);
            return da >= -db ? sdf_gradient(node.children[0], x)
                             : -sdf_gradient(node.children[1], x);
          }
          std::size_t best = 0;
          double bd = sdf_eval(node.children[0], x);
          for (std::size_t i = 1; i < node.children.size(); ++i) {
            const double d = sdf_eval(node.children[i], x);
            if (node.op == sdf::CsgOp::kUnion ? d < bd : d > bd) {
              bd = d;
              best = i;
            }
          }
          return sdf_gradient(node.children[best], x);
        } else {
          return central_difference_gradient(field, x, 1e-4 * scene_scale(field));
        }
      },
      field.node());
}

/// Unit normal grad f / |grad f|. Throws DegenerateError where the gradient
/// vanishes (medial-axis points).
inline Vec3d sdf_normal(const SdfField& field, const Vec3d& x) {
  const Vec3d g = sdf_gradient(field, x);
  const double len = length(g);
  if (!(len > 1e-8)) {
    throw DegenerateError("sdf_normal: vanishing gradient at " + to_string(x));
  }
  return g / len;
}

/// Samples `field` on a res^3 lattice covering [lower, lower + cell*(res-1)].
inline SdfField make_grid_sdf(const SdfField& source, const Vec3d& lower,
                              double cell, int resolution, int material_id = 0) {
  if (resolution < 2) throw InputError("grid resolution must be >= 2");
  sdf::Grid g;
  g.origin = lower;
  g.cell = cell;
  g.resolution = resolution;
  g.values.resize(static_cast<std::size_t>(resolution) * resolution * resolution);
  for (int k = 0; k < resolution; ++k) {
    for (int j = 0; j < resolution; ++j) {
      for (int i = 0; i < resolution; ++i) {
        const Vec3d p = lower + Vec3d{i * cell, j * cell, k * cell};
        g.values[static_cast<std::size_t>(i + resolution * (j + resolution * k))] =
            sdf_eval(source, p);
      }
    }
  }
  return SdfField(std::move(g), material_id);
}

/// The neural SDF architecture: 8 softplus layers of width 128 with the input
/// re-injected at the 4th layer, initialised near a sphere of `radius`.
inline SdfField make_neural_sdf(double radius, std::uint64_t seed,
                                int pe_order = 10, int width = 128,
                                int layers = 8, int material_id = 0) {
  MlpSpec spec;
  spec.input_dim = encoded_size(pe_order);
  spec.width = width;
  spec.hidden_layers = layers;
  spec.output_dim = 1;
  spec.skip_layer = layers / 2;
  spec.softplus_beta = 100.0;
  sdf::Neural n;
  n.pe_order = pe_order;
  n.mlp = Mlp(spec);
  n.mlp.init_sphere(radius, seed);
  n.bound_radius = radius * 1.5;
  return SdfField(std::move(n), material_id);
}

}  // namespace sgpbr

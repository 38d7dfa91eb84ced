#pragma once

// Differentiable parameter containers.
//
// A ParameterField maps a point to a MaterialSample. Every variant stores
// logits and squashes them with a sigmoid, so all of them share one
// optimizer contract. Parameters are grouped into named blocks in a
// ParameterStore; `bind` turns a store into tape leaves and `backward`
// accumulates the adjoints of a loss into the store's gradient buffers.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sgpbr/autodiff.hpp"
#include "sgpbr/brdf.hpp"
#include "sgpbr/math.hpp"
#include "sgpbr/mlp.hpp"
#include "sgpbr/rng.hpp"
#include "sgpbr/sg.hpp"

namespace sgpbr {

/// Channel order of every material parameterisation.
inline constexpr int kMaterialChannels = 6;  // albedo rgb, roughness, metallic, specular

inline std::array<double, kMaterialChannels> material_channels(const Material& m) {
  return {m.albedo.x, m.albedo.y, m.albedo.z, m.roughness, m.metallic, m.specular};
}

template <class T>
MaterialSample<T> material_from_channels(std::span<const T> c) {
  MaterialSample<T> m;
  m.albedo = {c[0], c[1], c[2]};
  m.roughness = c[3];
  m.metallic = c[4];
  m.specular = c[5];
  return m;
}

namespace field {

struct Constant {
  std::array<double, kMaterialChannels> logits{};
};

/// res^3 lattice of logits, channel-minor:
/// logits[(i + res * (j + res * k)) * 6 + c].
struct Grid {
  Vec3d origin{};
  double cell = 1.0;
  int resolution = 2;
  std::vector<double> logits;
};

struct Neural {
  int pe_order = 10;
  Mlp mlp;
};

}  // namespace field

class ParameterField {
 public:
  using Variant = std::variant<field::Constant, field::Grid, field::Neural>;

  ParameterField() : node_(field::Constant{}) {}
  template <class V>
    requires std::is_constructible_v<Variant, V>
  ParameterField(V node) : node_(std::move(node)) {}  // NOLINT

  const Variant& node() const { return node_; }
  Variant& node() { return node_; }

  template <class V>
  const V* as() const {
    return std::get_if<V>(&node_);
  }

  /// Flat view of the field's trainable values.
  std::span<const double> parameters() const {
    return std::visit(
        [](const auto& n) -> std::span<const double> {
          using N = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<N, field::Constant>) {
            return n.logits;
          } else if constexpr (std::is_same_v<N, field::Grid>) {
            return n.logits;
          } else {
            return n.mlp.params();
          }
        },
        node_);
  }

  std::span<double> parameters() {
    return std::visit(
        [](auto& n) -> std::span<double> {
          using N = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<N, field::Constant>) {
            return n.logits;
          } else if constexpr (std::is_same_v<N, field::Grid>) {
            return n.logits;
          } else {
            return n.mlp.params();
          }
        },
        node_);
  }

  void set_parameters(std::span<const double> values) {
    std::span<double> dst = parameters();
    if (values.size() != dst.size()) {
      throw InputError("ParameterField: parameter count mismatch");
    }
    std::copy(values.begin(), values.end(), dst.begin());
  }

 private:
  Variant node_;
};

inline ParameterField make_constant_field(const Material& m) {
  field::Constant c;
  const auto ch = material_channels(m);
  for (int i = 0; i < kMaterialChannels; ++i) c.logits[i] = logit(ch[i]);
  return c;
}

/// Grid field covering [origin, origin + cell * (res - 1)]^3 initialised to `m`.
inline ParameterField make_grid_field(const Vec3d& origin, double cell,
                                      int resolution, const Material& m) {
  if (resolution < 2) throw InputError("material grid resolution must be >= 2");
  if (!(cell > 0.0)) throw InputError("material grid cell must be positive");
  field::Grid g;
  g.origin = origin;
  g.cell = cell;
  g.resolution = resolution;
  const auto ch = material_channels(m);
  const std::size_t n = static_cast<std::size_t>(resolution) * resolution * resolution;
  g.logits.resize(n * kMaterialChannels);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < kMaterialChannels; ++c) {
      g.logits[i * kMaterialChannels + static_cast<std::size_t>(c)] = logit(ch[c]);
    }
  }
  return g;
}

/// Positional encoding, `layers` softplus layers of `width`, six sigmoid
/// outputs.
inline ParameterField make_neural_field(std::uint64_t seed, int pe_order = 10,
                                        int width = 128, int layers = 4) {
  MlpSpec spec;
  spec.input_dim = encoded_size(pe_order);
  spec.width = width;
  spec.hidden_layers = layers;
  spec.output_dim = kMaterialChannels;
  spec.output = OutputActivation::kSigmoid;
  field::Neural n;
  n.pe_order = pe_order;
  n.mlp = Mlp(spec);
  n.mlp.init_default(seed);
  return n;
}

namespace detail {

struct TrilinearStencil {
  std::array<std::size_t, 8> cell{};
  std::array<double, 8> weight{};
};

inline TrilinearStencil trilinear_stencil(const field::Grid& g, const Vec3d& x) {
  const int res = g.resolution;
  TrilinearStencil s;
  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double extent = g.cell * (res - 1);
    const double u = (std::clamp(x[a], g.origin[a], g.origin[a] + extent) - g.origin[a]) / g.cell;
    i0[a] = std::clamp(static_cast<int>(std::floor(u)), 0, res - 2);
    f[a] = std::clamp(u - i0[a], 0.0, 1.0);
  }
  for (int corner = 0; corner < 8; ++corner) {
    const int di = corner & 1, dj = (corner >> 1) & 1, dk = (corner >> 2) & 1;
    s.weight[static_cast<std::size_t>(corner)] =
        (di ? f[0] : 1.0 - f[0]) * (dj ? f[1] : 1.0 - f[1]) * (dk ? f[2] : 1.0 - f[2]);
    s.cell[static_cast<std::size_t>(corner)] = static_cast<std::size_t>(
        (i0[0] + di) + res * ((i0[1] + dj) + res * (i0[2] + dk)));
  }
  return s;
}

}  // namespace detail

/// Material at x given the field structure and an explicit parameter vector
/// (the field's own values, or tape leaves bound to them).
template <class T>
MaterialSample<T> field_eval(const ParameterField& f, std::span<const T> params,
                             const Vec3d& x) {
  std::array<T, kMaterialChannels> ch;
  if (f.as<field::Constant>()) {
    for (int c = 0; c < kMaterialChannels; ++c) ch[c] = sigmoid(params[c]);
  } else if (const auto* g = f.as<field::Grid>()) {
    const detail::TrilinearStencil s = detail::trilinear_stencil(*g, x);
    for (int c = 0; c < kMaterialChannels; ++c) {
      std::array<T, 8> corner;
      for (std::size_t k = 0; k < 8; ++k) {
        corner[k] = params[s.cell[k] * kMaterialChannels + static_cast<std::size_t>(c)];
      }
      T logit_value;
      if constexpr (std::is_same_v<T, ad::Var>) {
        logit_value = ad::weighted_sum(s.weight, corner);
      } else {
        logit_value = 0.0;
        for (std::size_t k = 0; k < 8; ++k) logit_value += s.weight[k] * corner[k];
      }
      ch[c] = sigmoid(logit_value);
    }
  } else {
    const auto& n = std::get<field::Neural>(f.node());
    const std::vector<double> enc = positional_encoding(x, n.pe_order);
    std::vector<T> input(enc.begin(), enc.end());
    const std::vector<T> out = n.mlp.forward<T>(params, input);
    for (int c = 0; c < kMaterialChannels; ++c) ch[c] = out[static_cast<std::size_t>(c)];
  }
  return material_from_channels<T>(ch);
}

inline Material field_eval(const ParameterField& f, const Vec3d& x) {
  return field_eval<double>(f, f.parameters(), x);
}

struct ParameterBlock {
  std::string name;
  std::vector<double> values;
  std::vector<double> grad;
};

class ParameterStore {
 public:
  std::size_t add(std::string name, std::vector<double> values) {
    if (find(name) != npos) throw InputError("duplicate parameter block " + name);
    ParameterBlock b;
    b.name = std::move(name);
    b.grad.assign(values.size(), 0.0);
    b.values = std::move(values);
    blocks_.push_back(std::move(b));
    return blocks_.size() - 1;
  }

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  std::size_t find(std::string_view name) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (blocks_[i].name == name) return i;
    }
    return npos;
  }
  std::size_t index(std::string_view name) const {
    const std::size_t i = find(name);
    if (i == npos) throw InputError("unknown parameter block " + std::string(name));
    return i;
  }
  bool contains(std::string_view name) const { return find(name) != npos; }

  std::size_t size() const { return blocks_.size(); }
  ParameterBlock& block(std::size_t i) { return blocks_.at(i); }
  const ParameterBlock& block(std::size_t i) const { return blocks_.at(i); }
  ParameterBlock& block(std::string_view name) { return blocks_[index(name)]; }
  const ParameterBlock& block(std::string_view name) const {
    return blocks_[index(name)];
  }
  const std::vector<ParameterBlock>& blocks() const { return blocks_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.values.size();
    return n;
  }

  void zero_grad() {
    for (auto& b : blocks_) std::fill(b.grad.begin(), b.grad.end(), 0.0);
  }

  friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
    if (a.blocks_.size() != b.blocks_.size()) return false;
    for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
      if (a.blocks_[i].name != b.blocks_[i].name ||
          a.blocks_[i].values != b.blocks_[i].values) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<ParameterBlock> blocks_;
};

/// Tape leaves for every value of every block, in block order.
struct Bindings {
  std::vector<std::vector<ad::Var>> blocks;

  std::span<const ad::Var> operator[](std::size_t i) const { return blocks.at(i); }
};

inline Bindings bind(const ParameterStore& store, ad::Tape& tape) {
  Bindings b;
  b.blocks.resize(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& values = store.block(i).values;
    b.blocks[i].reserve(values.size());
    for (double v : values) b.blocks[i].push_back(tape.leaf(v));
  }
  return b;
}

/// Adds d(loss)/d(parameter) to every block's gradient buffer. Returns false
/// when the loss does not depend on any bound parameter (gradients are then
/// left unchanged, i.e. zero contributions).
inline bool backward(const ad::Tape& tape, const ad::Var& loss,
                     ParameterStore& store, const Bindings& bindings,
                     double scale = 1.0) {
  if (loss.is_constant()) return false;
  const std::vector<double> adj = tape.adjoints(loss);
  bool connected = false;
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& grad = store.block(i).grad;
    const auto& leaves = bindings.blocks[i];
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      const auto id = static_cast<std::size_t>(leaves[k].id);
      if (id > static_cast<std::size_t>(loss.id)) continue;
      const double a = adj[id];
      if (a != 0.0) connected = true;
      grad[k] += scale * a;
    }
  }
  return connected;
}

// Light lobes as parameter blocks: raw axes (normalised in the forward pass),
// log sharpness and softplus-space amplitudes.
inline constexpr std::string_view kLightAxisBlock = "light.axis";
inline constexpr std::string_view kLightSharpnessBlock = "light.log_sharpness";
inline constexpr std::string_view kLightAmplitudeBlock = "light.amplitude";

inline void add_light_blocks(ParameterStore& store, const SgMixture& lobes) {
  std::vector<double> axis, sharp, amp;
  for (const SgLobe& g : lobes) {
    if (!is_valid(g)) throw InputError("add_light_blocks: invalid lobe");
    for (int a = 0; a < 3; ++a) axis.push_back(g.axis[a]);
    sharp.push_back(std::log(g.sharpness));
    for (int a = 0; a < 3; ++a) amp.push_back(inverse_softplus(g.amplitude[a]));
  }
  store.add(std::string(kLightAxisBlock), std::move(axis));
  store.add(std::string(kLightSharpnessBlock), std::move(sharp));
  store.add(std::string(kLightAmplitudeBlock), std::move(amp));
}

/// Lobes from the raw light blocks. With `fixed_energy`, amplitudes are
/// rescaled per channel so the summed lobe integrals equal it.
template <class T>
std::vector<SphericalGaussian<T>> light_from_raw(std::span<const T> axis,
                                                 std::span<const T> log_sharpness,
                                                 std::span<const T> amplitude,
                                                 const Rgbd* fixed_energy = nullptr) {
  const std::size_t n = log_sharpness.size();
  std::vector<SphericalGaussian<T>> lobes(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Vec3<T> raw{axis[3 * j], axis[3 * j + 1], axis[3 * j + 2]};
    lobes[j].axis = normalize(raw);
    lobes[j].sharpness = exp(log_sharpness[j]);
    lobes[j].amplitude = {softplus(amplitude[3 * j]), softplus(amplitude[3 * j + 1]),
                          softplus(amplitude[3 * j + 2])};
  }
  if (fixed_energy != nullptr) {
    Rgb<T> total{T(0.0), T(0.0), T(0.0)};
    for (const auto& g : lobes) total += sg_integral(g);
    for (int c = 0; c < 3; ++c) {
      const double target = (*fixed_energy)[c];
      const T scale = value_of(total[c]) > 0.0 ? T(target) / total[c] : T(0.0);
      for (auto& g : lobes) g.amplitude[c] = g.amplitude[c] * scale;
    }
  }
  return lobes;
}

inline SgMixture read_light(const ParameterStore& store,
                            const Rgbd* fixed_energy = nullptr) {
  return light_from_raw<double>(store.block(kLightAxisBlock).values,
                                store.block(kLightSharpnessBlock).values,
                                store.block(kLightAmplitudeBlock).values,
                                fixed_energy);
}

/// Puts every raw light axis back on the unit sphere.
inline void reproject_light_axes(ParameterStore& store) {
  auto& axis = store.block(kLightAxisBlock).values;
  for (std::size_t j = 0; j + 2 < axis.size(); j += 3) {
    Vec3d a{axis[j], axis[j + 1], axis[j + 2]};
    const double len = length(a);
    if (!(len > 0.0)) throw NumericalError("light axis collapsed to zero");
    a = a / len;
    axis[j] = a.x;
    axis[j + 1] = a.y;
    axis[j + 2] = a.z;
  }
}

inline std::string material_block_name(std::size_t id) {
  return "material." + std::to_string(id);
}

inline void add_material_blocks(ParameterStore& store,
                                const std::vector<ParameterField>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto p = fields[i].parameters();
    store.add(material_block_name(i), std::vector<double>(p.begin(), p.end()));
  }
}

/// Copies material block values back into `fields`.
inline void read_materials(const ParameterStore& store,
                           std::vector<ParameterField>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const std::size_t b = store.find(material_block_name(i));
    if (b != ParameterStore::npos) fields[i].set_parameters(store.block(b).values);
  }
}

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst_block;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Records `loss` on a fresh tape over leaves bound to `store`.
using LossBuilder = std::function<ad::Var(const Bindings&)>;

inline double evaluate_loss(const ParameterStore& store, const LossBuilder& loss) {
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const Bindings b = bind(store, tape);
  return loss(b).v;
}

/// Compares reverse-mode gradients with central differences on up to
/// `per_block` randomly chosen parameters of every block. The relative error
/// uses the denominator max(|analytic|, |numeric|, 1e-6).
inline FdReport finite_difference_check(ParameterStore store, const LossBuilder& loss,
                                        double eps = 1e-4, std::uint64_t seed = 0,
                                        std::size_t per_block = 64) {
  store.zero_grad();
  double baseline = 0.0;
  {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    const Bindings b = bind(store, tape);
    const ad::Var l = loss(b);
    baseline = l.v;
    backward(tape, l, store, b);
  }
  if (evaluate_loss(store, loss) != baseline) {
    throw InputError("finite_difference_check: loss evaluator is not deterministic");
  }
  FdReport report;
  Rng rng(stream_seed(seed, {0x666463ULL}));
  for (std::size_t bi = 0; bi < store.size(); ++bi) {
    ParameterBlock& blk = store.block(bi);
    const std::size_t n = blk.values.size();
    std::vector<std::size_t> picks(n);
    for (std::size_t i = 0; i < n; ++i) picks[i] = i;
    if (n > per_block) {
      for (std::size_t i = 0; i < per_block; ++i) {
        std::swap(picks[i], picks[i + rng.below(n - i)]);
      }
      picks.resize(per_block);
    }
    for (std::size_t k : picks) {
      const double saved = blk.values[k];
      blk.values[k] = saved + eps;
      const double lp = evaluate_loss(store, loss);
      blk.values[k] = saved - eps;
      const double lm = evaluate_loss(store, loss);
      blk.values[k] = saved;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double analytic = blk.grad[k];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = std::max(rel, report.max_rel_error);
        if (rel >= report.max_rel_error) {
          report.worst_block = blk.name;
          report.worst_index = k;
          report.worst_analytic = analytic;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace sgpbr

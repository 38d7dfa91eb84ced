#pragma once

// Small fully connected networks shared by the neural SDF and the neural
// material field. Parameters live in one flat vector so they can be bound to
// tape leaves as a single block.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include "sgpbr/autodiff.hpp"
#include "sgpbr/math.hpp"

namespace sgpbr {

/// Softplus with sharpness beta, log(1 + exp(beta x)) / beta.
inline double softplus_beta(double x, double beta) {
  return softplus(beta * x) / beta;
}
inline ad::Var softplus_beta(const ad::Var& x, double beta) {
  return ad::unary(x, softplus(beta * x.v) / beta, sigmoid(beta * x.v));
}

/// Positional encoding [x, sin(2^k pi x), cos(2^k pi x)] for k < order,
/// grouped per frequency (6 * order + 3 values).
template <class T>
std::vector<T> positional_encoding(const Vec3<T>& x, int order) {
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(6 * order + 3));
  out.push_back(x.x);
  out.push_back(x.y);
  out.push_back(x.z);
  double freq = kPi;
  for (int k = 0; k < order; ++k) {
    for (int a = 0; a < 3; ++a) out.push_back(sin(x[a] * freq));
    for (int a = 0; a < 3; ++a) out.push_back(cos(x[a] * freq));
    freq *= 2.0;
  }
  return out;
}

inline int encoded_size(int order) { return 6 * order + 3; }

enum class OutputActivation { kIdentity, kSigmoid };

struct MlpSpec {
  int input_dim = 3;
  int width = 128;
  int hidden_layers = 4;
  int output_dim = 1;
  /// Index of the hidden layer whose input is concatenated with the network
  /// input (scaled by 1/sqrt(2)); -1 disables the skip connection.
  int skip_layer = -1;
  double softplus_beta = 100.0;
  OutputActivation output = OutputActivation::kIdentity;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

class Mlp {
 public:
  struct Layer {
    int in = 0;
    int out = 0;
    std::size_t weight_offset = 0;  // out x in, row-major
    std::size_t bias_offset = 0;
  };

  Mlp() = default;
  explicit Mlp(const MlpSpec& spec) : spec_(spec) {
    std::size_t offset = 0;
    int in = spec.input_dim;
    for (int l = 0; l <= spec.hidden_layers; ++l) {
      Layer layer;
      layer.in = in + (l == spec.skip_layer ? spec.input_dim : 0);
      layer.out = l == spec.hidden_layers ? spec.output_dim : spec.width;
      layer.weight_offset = offset;
      offset += static_cast<std::size_t>(layer.in) * layer.out;
      layer.bias_offset = offset;
      offset += static_cast<std::size_t>(layer.out);
      layers_.push_back(layer);
      in = layer.out;
    }
    params_.assign(offset, 0.0);
  }

  const MlpSpec& spec() const { return spec_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  /// Gaussian weights with std 1/sqrt(fan_in) and zero biases.
  void init_default(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const Layer& layer : layers_) {
      std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(layer.in));
      for (int i = 0; i < layer.in * layer.out; ++i) {
        params_[layer.weight_offset + static_cast<std::size_t>(i)] = dist(rng);
      }
      for (int o = 0; o < layer.out; ++o) {
        params_[layer.bias_offset + static_cast<std::size_t>(o)] = 0.0;
      }
    }
  }

  /// Geometric initialisation: the network starts close to the signed
  /// distance of a sphere of `radius` about the origin. Only the raw xyz
  /// inputs (the first three features) receive non-zero first-layer weights.
  void init_sphere(double radius, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int last = static_cast<int>(layers_.size()) - 1;
    for (int l = 0; l <= last; ++l) {
      const Layer& layer = layers_[static_cast<std::size_t>(l)];
      double* w = &params_[layer.weight_offset];
      double* b = &params_[layer.bias_offset];
      if (l == last) {
        std::normal_distribution<double> dist(
            std::sqrt(kPi) / std::sqrt(layer.in), 1e-4);
        for (int i = 0; i < layer.in * layer.out; ++i) w[i] = dist(rng);
        for (int o = 0; o < layer.out; ++o) b[o] = -radius;
        continue;
      }
      std::normal_distribution<double> dist(0.0,
                                            std::sqrt(2.0) / std::sqrt(layer.out));
      for (int o = 0; o < layer.out; ++o) {
        for (int i = 0; i < layer.in; ++i) {
          double v = dist(rng);
          const int input_begin =
              l == 0 ? 0 : (l == spec_.skip_layer ? layer.in - spec_.input_dim : -1);
          if (input_begin >= 0 && i >= input_begin + 3) v = 0.0;
          w[o * layer.in + i] = v;
        }
        b[o] = 0.0;
      }
    }
  }

  /// Forward pass with explicit parameters, so callers can pass tape leaves.
  template <class T>
  std::vector<T> forward(std::span<const T> params,
                         std::span<const T> input) const {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    std::vector<T> h(input.begin(), input.end());
    std::vector<T> next;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& layer = layers_[l];
      if (static_cast<int>(l) == spec_.skip_layer) {
        for (T& v : h) v = v * inv_sqrt2;
        for (const T& v : input) h.push_back(v * inv_sqrt2);
      }
      next.assign(static_cast<std::size_t>(layer.out), T(0.0));
      const bool last = l + 1 == layers_.size();
      for (int o = 0; o < layer.out; ++o) {
        const std::size_t row =
            layer.weight_offset + static_cast<std::size_t>(o) * layer.in;
        T pre = neuron(params.subspan(row, static_cast<std::size_t>(layer.in)),
                       std::span<const T>(h),
                       params[layer.bias_offset + static_cast<std::size_t>(o)]);
        if (!last) {
          pre = softplus_beta(pre, spec_.softplus_beta);
        } else if (spec_.output == OutputActivation::kSigmoid) {
          pre = sigmoid(pre);
        }
        next[static_cast<std::size_t>(o)] = pre;
      }
      h.swap(next);
    }
    return h;
  }

  std::vector<double> forward(std::span<const double> input) const {
    return forward<double>(std::span<const double>(params_), input);
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.spec_ == b.spec_ && a.params_ == b.params_;
  }

 private:
  template <class T>
  static T neuron(std::span<const T> w, std::span<const T> x, const T& bias) {
    if constexpr (std::is_same_v<T, ad::Var>) {
      return ad::affine(w, x, bias);
    } else {
      double acc = bias;
      for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * x[i];
      return acc;
    }
  }

  MlpSpec spec_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

}  // namespace sgpbr

#pragma once

// Reverse-mode automatic differentiation over a recorded scalar tape.
//
// A `Var` is a value plus the index of the tape node that produced it; an
// index of -1 marks a constant that never enters the tape. Operations on
// Vars append one node to the thread's active tape holding the indices of
// the non-constant operands and the local partial derivatives. Nodes may
// have any number of parents, so dot products and MLP neurons cost a single
// node each.
//
// Usage:
//
//   ad::Tape tape;
//   ad::TapeScope scope(tape);
//   ad::Var x = tape.leaf(2.0);
//   ad::Var y = x * x + 3.0 * x;
//   std::vector<double> adj = tape.adjoints(y);   // adj[x.id] == 7
//
// Tapes are single-threaded; independent tapes may be recorded concurrently
// on different threads.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sgpbr/math.hpp"

namespace sgpbr::ad {

class Tape;

namespace detail {
inline thread_local Tape* active_tape = nullptr;
}

struct Var {
  double v = 0.0;
  std::int32_t id = -1;

  Var() = default;
  Var(double value) : v(value) {}  // NOLINT: implicit constants are the point
  Var(double value, std::int32_t node) : v(value), id(node) {}

  double value() const { return v; }
  bool is_constant() const { return id < 0; }
};

class Tape {
 public:
  Tape() { edge_begin_.push_back(0); }

  Var leaf(double value) { return {value, push_node({}, {})}; }

  std::int32_t push_node(std::span<const std::int32_t> parents,
                         std::span<const double> partials) {
    assert(parents.size() == partials.size());
    parent_.insert(parent_.end(), parents.begin(), parents.end());
    partial_.insert(partial_.end(), partials.begin(), partials.end());
    edge_begin_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return static_cast<std::int32_t>(edge_begin_.size() - 2);
  }

  /// Appends a node whose edges are written by the caller through the
  /// returned spans. Avoids a temporary buffer for wide nodes.
  std::int32_t push_node_uninitialized(std::size_t n_edges,
                                       std::span<std::int32_t>& parents,
                                       std::span<double>& partials) {
    const std::size_t begin = parent_.size();
    parent_.resize(begin + n_edges);
    partial_.resize(begin + n_edges);
    parents = std::span<std::int32_t>(parent_).subspan(begin, n_edges);
    partials = std::span<double>(partial_).subspan(begin, n_edges);
    edge_begin_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return static_cast<std::int32_t>(edge_begin_.size() - 2);
  }

  std::size_t size() const { return edge_begin_.size() - 1; }
  std::size_t edge_count() const { return parent_.size(); }

  /// Adjoints d(output)/d(node) for every node recorded up to `output`.
  std::vector<double> adjoints(const Var& output) const {
    std::vector<double> adj;
    adjoints(output, adj);
    return adj;
  }

  /// As above, writing into `adj` so its storage can be reused.
  void adjoints(const Var& output, std::vector<double>& adj) const {
    adj.assign(size(), 0.0);
    if (output.is_constant()) return;
    adj[static_cast<std::size_t>(output.id)] = 1.0;
    for (std::int32_t i = output.id; i >= 0; --i) {
      const double a = adj[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      const std::uint32_t end = edge_begin_[static_cast<std::size_t>(i) + 1];
      for (std::uint32_t e = edge_begin_[static_cast<std::size_t>(i)]; e < end;
           ++e) {
        adj[static_cast<std::size_t>(parent_[e])] += a * partial_[e];
      }
    }
  }

  void clear() {
    edge_begin_.assign(1, 0);
    parent_.clear();
    partial_.clear();
  }

  void reserve(std::size_t nodes, std::size_t edges) {
    edge_begin_.reserve(nodes + 1);
    parent_.reserve(edges);
    partial_.reserve(edges);
  }

 private:
  std::vector<std::uint32_t> edge_begin_;
  std::vector<std::int32_t> parent_;
  std::vector<double> partial_;
};

/// Makes `tape` the active tape of the calling thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(detail::active_tape) {
    detail::active_tape = &tape;
  }
  ~TapeScope() { detail::active_tape = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

inline Tape& active_tape() {
  if (detail::active_tape == nullptr) {
    throw std::logic_error("ad: no active tape on this thread");
  }
  return *detail::active_tape;
}

inline Var unary(const Var& a, double value, double da) {
  if (a.is_constant()) return Var(value);
  const std::int32_t p[1] = {a.id};
  const double d[1] = {da};
  return {value, active_tape().push_node(p, d)};
}

inline Var binary(const Var& a, const Var& b, double value, double da,
                  double db) {
  if (a.is_constant()) return unary(b, value, db);
  if (b.is_constant()) return unary(a, value, da);
  const std::int32_t p[2] = {a.id, b.id};
  const double d[2] = {da, db};
  return {value, active_tape().push_node(p, d)};
}

inline double value_of(const Var& a) { return a.v; }

inline Var operator+(const Var& a, const Var& b) {
  return binary(a, b, a.v + b.v, 1.0, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return binary(a, b, a.v - b.v, 1.0, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return binary(a, b, a.v * b.v, b.v, a.v);
}
inline Var operator/(const Var& a, const Var& b) {
  const double inv = 1.0 / b.v;
  return binary(a, b, a.v * inv, inv, -a.v * inv * inv);
}
inline Var operator-(const Var& a) { return unary(a, -a.v, -1.0); }

inline Var operator+(const Var& a, double b) { return unary(a, a.v + b, 1.0); }
inline Var operator+(double a, const Var& b) { return unary(b, a + b.v, 1.0); }
inline Var operator-(const Var& a, double b) { return unary(a, a.v - b, 1.0); }
inline Var operator-(double a, const Var& b) { return unary(b, a - b.v, -1.0); }
inline Var operator*(const Var& a, double b) { return unary(a, a.v * b, b); }
inline Var operator*(double a, const Var& b) { return unary(b, a * b.v, a); }
inline Var operator/(const Var& a, double b) {
  return unary(a, a.v / b, 1.0 / b);
}
inline Var operator/(double a, const Var& b) {
  return unary(b, a / b.v, -a / (b.v * b.v));
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

// Comparisons act on values; they select branches, never record.
inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }

inline Var exp(const Var& a) {
  const double e = std::exp(a.v);
  return unary(a, e, e);
}
inline Var log(const Var& a) { return unary(a, std::log(a.v), 1.0 / a.v); }
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.v);
  return unary(a, s, s > 0.0 ? 0.5 / s : 0.0);
}
inline Var sin(const Var& a) { return unary(a, std::sin(a.v), std::cos(a.v)); }
inline Var cos(const Var& a) {
  return unary(a, std::cos(a.v), -std::sin(a.v));
}
inline Var abs(const Var& a) {
  return unary(a, std::abs(a.v), a.v >= 0.0 ? 1.0 : -1.0);
}
inline Var pow(const Var& a, double e) {
  const double p = std::pow(a.v, e);
  return unary(a, p, a.v == 0.0 ? (e == 1.0 ? 1.0 : 0.0)
                                 : e * std::pow(a.v, e - 1.0));
}
inline Var smax(const Var& a, const Var& b) { return a.v >= b.v ? a : b; }
inline Var smin(const Var& a, const Var& b) { return a.v <= b.v ? a : b; }
inline Var smax(const Var& a, double b) { return a.v >= b ? a : Var(b); }
inline Var smin(const Var& a, double b) { return a.v <= b ? a : Var(b); }
inline Var sigmoid(const Var& a) {
  const double s = 1.0 / (1.0 + std::exp(-a.v));
  return unary(a, s, s * (1.0 - s));
}
inline Var softplus(const Var& a) {
  const double y = a.v > 30.0 ? a.v : std::log1p(std::exp(a.v));
  const double d = 1.0 / (1.0 + std::exp(-a.v));
  return unary(a, y, d);
}

/// Sum of `terms` as one node.
inline Var sum(std::span<const Var> terms) {
  double value = 0.0;
  std::size_t live = 0;
  for (const Var& t : terms) {
    value += t.v;
    live += t.is_constant() ? 0 : 1;
  }
  if (live == 0) return Var(value);
  std::span<std::int32_t> p;
  std::span<double> d;
  const std::int32_t id = active_tape().push_node_uninitialized(live, p, d);
  std::size_t k = 0;
  for (const Var& t : terms) {
    if (t.is_constant()) continue;
    p[k] = t.id;
    d[k] = 1.0;
    ++k;
  }
  return {value, id};
}

/// bias + sum_i w[i] * x[i] as one node (an MLP neuron pre-activation).
inline Var affine(std::span<const Var> w, std::span<const Var> x,
                  const Var& bias) {
  assert(w.size() == x.size());
  double value = bias.v;
  std::size_t live = bias.is_constant() ? 0 : 1;
  for (std::size_t i = 0; i < w.size(); ++i) {
    value += w[i].v * x[i].v;
    live += (w[i].is_constant() ? 0 : 1) + (x[i].is_constant() ? 0 : 1);
  }
  if (live == 0) return Var(value);
  std::span<std::int32_t> p;
  std::span<double> d;
  const std::int32_t id = active_tape().push_node_uninitialized(live, p, d);
  std::size_t k = 0;
  if (!bias.is_constant()) {
    p[k] = bias.id;
    d[k++] = 1.0;
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!w[i].is_constant()) {
      p[k] = w[i].id;
      d[k++] = x[i].v;
    }
    if (!x[i].is_constant()) {
      p[k] = x[i].id;
      d[k++] = w[i].v;
    }
  }
  return {value, id};
}

/// Weighted sum sum_i c[i] * x[i] with constant coefficients, one node.
inline Var weighted_sum(std::span<const double> c, std::span<const Var> x) {
  assert(c.size() == x.size());
  double value = 0.0;
  std::size_t live = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    value += c[i] * x[i].v;
    live += x[i].is_constant() ? 0 : 1;
  }
  if (live == 0) return Var(value);
  std::span<std::int32_t> p;
  std::span<double> d;
  const std::int32_t id = active_tape().push_node_uninitialized(live, p, d);
  std::size_t k = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].is_constant()) continue;
    p[k] = x[i].id;
    d[k++] = c[i];
  }
  return {value, id};
}

}  // namespace sgpbr::ad

namespace sgpbr {
using ad::value_of;
}

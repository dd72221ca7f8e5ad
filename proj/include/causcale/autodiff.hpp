// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Reverse-mode differentiation over dense Tensors.
//
// Every op takes Vars and returns a Var. When at least one input lives on a
// Tape and requires a gradient, the result is appended to that tape together
// with a closure that pushes its gradient into its parents. Otherwise the op
// runs in inference mode: no parents are retained and intermediates are freed
// as soon as the caller drops them.
//
// Creation order on the tape is a topological order, so backward() is a single
// reverse sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "causcale/counters.hpp"
#include "causcale/tensor.hpp"

namespace causcale::ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

inline ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return ConstMatMap(t.ptr() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MatMap(t.ptr() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Tape;

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  Tensor& grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
  }
  void accumulate(const Tensor& g) {
    if (grad.empty()) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Var {
 public:
  Var() = default;
  Var(std::shared_ptr<Node> node, Tape* tape) : node_(std::move(node)), tape_(tape) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t rank() const { return node_->value.rank(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  Tape* tape() const { return tape_; }
  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  /// Gradient after Tape::backward. Zeros if nothing flowed into this node.
  Tensor grad() const {
    if (node_->grad.empty()) return Tensor(node_->value.shape());
    return node_->grad;
  }

 private:
  std::shared_ptr<Node> node_;
  Tape* tape_ = nullptr;
};

/// A value that never receives a gradient and is not recorded.
inline Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node), nullptr);
}

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    nodes_.push_back(node);
    return Var(std::move(node), this);
  }

  Var record(Tensor value, std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->parents = std::move(parents);
    node->backward = std::move(fn);
    node->requires_grad = true;
    nodes_.push_back(node);
    return Var(std::move(node), this);
  }

  void backward(const Var& loss) {
    if (backward_done_) throw TapeError("backward() called twice without reset()");
    if (!loss.defined() || loss.tape() != this) throw TapeError("loss is not recorded on this tape");
    if (loss.value().size() != 1) {
      throw TapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    auto it = std::find(nodes_.rbegin(), nodes_.rend(), loss.node_ptr());
    if (it == nodes_.rend()) throw TapeError("loss node missing from tape (broken tape)");
    loss.node().grad_buffer().fill(1.0);
    for (; it != nodes_.rend(); ++it) {
      Node& n = **it;
      if (n.backward && !n.grad.empty()) n.backward(n);
    }
    backward_done_ = true;
  }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool backward_done() const noexcept { return backward_done_; }

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
  bool backward_done_ = false;
};

namespace detail {

inline void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
}

/// Records `value` on the tape of the first gradient-carrying input, or returns
/// an inference-mode Var when none of the inputs need gradients.
inline Var make_op(const char* name, Tensor value, std::initializer_list<Var> inputs,
                   std::function<void(Node&)> fn) {
  require_finite(value, name);
  Tape* tape = nullptr;
  for (const Var& v : inputs) {
    if (v.defined() && v.requires_grad() && v.tape()) {
      tape = v.tape();
      break;
    }
  }
  if (!tape) return constant(std::move(value));
  std::vector<std::shared_ptr<Node>> parents;
  parents.reserve(inputs.size());
  for (const Var& v : inputs) parents.push_back(v.node_ptr());
  return tape->record(std::move(value), std::move(parents), std::move(fn));
}

inline bool wants_grad(const Node& self, std::size_t i) {
  return self.parents[i] && self.parents[i]->requires_grad;
}

struct AxisSplit {
  std::size_t outer, extent, inner;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " invalid for shape " + shape_str(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

inline void count_projection(std::uint64_t flops) {
  if (auto* c = counters()) c->add_projection(flops);
}
inline void count_normalization(std::uint64_t flops) {
  if (auto* c = counters()) c->add_normalization(flops);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out = a.value();
  out += b.value();
  return detail::make_op("add", std::move(out), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (detail::wants_grad(self, i)) self.parents[i]->accumulate(self.grad);
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("sub: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return detail::make_op("sub", std::move(out), {a, b}, [](Node& self) {
    if (detail::wants_grad(self, 0)) self.parents[0]->accumulate(self.grad);
    if (detail::wants_grad(self, 1)) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return detail::make_op("mul", std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (detail::wants_grad(self, 0)) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (detail::wants_grad(self, 1)) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

inline Var scale(const Var& a, double c) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= c;
  return detail::make_op("scale", std::move(out), {a}, [c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * self.grad[i];
  });
}

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return detail::make_op("sum", Tensor::scalar(s), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const double up = self.grad[0];
    for (double& v : g.data()) v += up;
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// tanh-approximated GELU.
inline Var gelu(const Var& x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  Tensor out = x.value();
  for (double& v : out.data()) {
    const double u = k * (v + c * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  return detail::make_op("gelu", std::move(out), {x}, [](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double u = k * (v + c * v * v * v);
      const double t = std::tanh(u);
      const double du = k * (1.0 + 3.0 * c * v * v);
      g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
  });
}

inline Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return detail::make_op("relu", std::move(out), {x}, [](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

/// Inverted dropout. p == 0 returns the input unchanged.
inline Var dropout(const Var& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  Tensor mask(x.shape());
  for (double& m : mask.data()) m = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return mul(x, constant(std::move(mask)));
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return detail::make_op("reshape", std::move(out), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

/// Swaps the last two axes.
inline Var transpose(const Var& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(s));
  const std::size_t rows = s[s.size() - 2], cols = s.back();
  const std::size_t batch = a.value().size() / (rows * cols);
  Shape os = s;
  std::swap(os[os.size() - 2], os[os.size() - 1]);
  Tensor out(os);
  for (std::size_t b = 0; b < batch; ++b) {
    as_matrix(out, cols, rows, b * rows * cols) = as_matrix(a.value(), rows, cols, b * rows * cols).transpose();
  }
  return detail::make_op("transpose", std::move(out), {a}, [rows, cols, batch](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t b = 0; b < batch; ++b) {
      as_matrix(g, rows, cols, b * rows * cols) += as_matrix(self.grad, cols, rows, b * rows * cols).transpose();
    }
  });
}

/// Swaps the first two axes: [A, B, rest...] -> [B, A, rest...].
inline Var swap_leading(const Var& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw DimensionError("swap_leading needs rank >= 2, got " + shape_str(s));
  const std::size_t na = s[0], nb = s[1];
  const std::size_t inner = a.value().size() / (na * nb);
  Shape os = s;
  std::swap(os[0], os[1]);
  Tensor out(os);
  const double* src = a.value().ptr();
  double* dst = out.ptr();
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      std::copy_n(src + (i * nb + j) * inner, inner, dst + (j * na + i) * inner);
    }
  }
  return detail::make_op("swap_leading", std::move(out), {a}, [na, nb, inner](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < na; ++i) {
      for (std::size_t j = 0; j < nb; ++j) {
        const double* up = self.grad.ptr() + (j * na + i) * inner;
        double* dn = g.ptr() + (i * nb + j) * inner;
        for (std::size_t t = 0; t < inner; ++t) dn[t] += up[t];
      }
    }
  });
}

/// Concatenates along the last axis. Leading extents must agree.
inline Var concat_last(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || sa.empty() || !std::equal(sa.begin(), sa.end() - 1, sb.begin())) {
    throw DimensionError("concat_last: " + shape_str(sa) + " vs " + shape_str(sb));
  }
  const std::size_t p = sa.back(), q = sb.back();
  const std::size_t rows = a.value().size() / p;
  Shape os = sa;
  os.back() = p + q;
  Tensor out(os);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.value().ptr() + r * p, p, out.ptr() + r * (p + q));
    std::copy_n(b.value().ptr() + r * q, q, out.ptr() + r * (p + q) + p);
  }
  return detail::make_op("concat_last", std::move(out), {a, b}, [p, q, rows](Node& self) {
    if (detail::wants_grad(self, 0)) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < p; ++t) g[r * p + t] += self.grad[r * (p + q) + t];
    }
    if (detail::wants_grad(self, 1)) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < q; ++t) g[r * q + t] += self.grad[r * (p + q) + p + t];
    }
  });
}

/// From a square embedding h [n, n, d], gathers [h(i,j), h(j,i)] for every i < j
/// in row-major pair order. Result is [n(n-1)/2, 2d].
inline Var pair_features(const Var& h) {
  const Shape& s = h.shape();
  if (s.size() != 3 || s[0] != s[1]) throw DimensionError("pair_features needs [n, n, d], got " + shape_str(s));
  const std::size_t n = s[0], d = s[2];
  if (n < 2) throw DimensionError("pair_features needs n >= 2");
  const std::size_t pairs = n * (n - 1) / 2;
  Tensor out(Shape{pairs, 2 * d});
  std::size_t p = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++p) {
      std::copy_n(h.value().ptr() + (i * n + j) * d, d, out.ptr() + p * 2 * d);
      std::copy_n(h.value().ptr() + (j * n + i) * d, d, out.ptr() + p * 2 * d + d);
    }
  }
  return detail::make_op("pair_features", std::move(out), {h}, [n, d](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j, ++p) {
        const double* up = self.grad.ptr() + p * 2 * d;
        double* gij = g.ptr() + (i * n + j) * d;
        double* gji = g.ptr() + (j * n + i) * d;
        for (std::size_t t = 0; t < d; ++t) {
          gij[t] += up[t];
          gji[t] += up[d + t];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// Matrix product over the trailing two axes. Leading batch axes must match
/// exactly, or one operand must be a plain matrix that is broadcast.
inline Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto mismatch = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) throw mismatch();
  const std::size_t M = sa[sa.size() - 2], K = sa.back();
  const std::size_t K2 = sb[sb.size() - 2], N = sb.back();
  if (K != K2) throw mismatch();
  const Shape ba(sa.begin(), sa.end() - 2);
  const Shape bb(sb.begin(), sb.end() - 2);
  if (!ba.empty() && !bb.empty() && ba != bb) throw mismatch();
  const Shape& batch_shape = ba.empty() ? bb : ba;
  const std::size_t batch = shape_numel(batch_shape);
  const bool a_batched = !ba.empty();
  const bool b_batched = !bb.empty();

  Shape os = batch_shape;
  os.push_back(M);
  os.push_back(N);
  Tensor out(os);
  if (a_batched && !b_batched) {
    as_matrix(out, batch * M, N).noalias() = as_matrix(a.value(), batch * M, K) * as_matrix(b.value(), K, N);
  } else {
    for (std::size_t t = 0; t < batch; ++t) {
      as_matrix(out, M, N, t * M * N).noalias() =
          as_matrix(a.value(), M, K, a_batched ? t * M * K : 0) * as_matrix(b.value(), K, N, b_batched ? t * K * N : 0);
    }
  }
  detail::count_projection(2ULL * batch * M * N * K);

  return detail::make_op("matmul", std::move(out), {a, b}, [=](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (a_batched && !b_batched) {
      if (detail::wants_grad(self, 0)) {
        as_matrix(self.parents[0]->grad_buffer(), batch * M, K).noalias() +=
            as_matrix(self.grad, batch * M, N) * as_matrix(bv, K, N).transpose();
      }
      if (detail::wants_grad(self, 1)) {
        as_matrix(self.parents[1]->grad_buffer(), K, N).noalias() +=
            as_matrix(av, batch * M, K).transpose() * as_matrix(self.grad, batch * M, N);
      }
      return;
    }
    for (std::size_t t = 0; t < batch; ++t) {
      const std::size_t ao = a_batched ? t * M * K : 0;
      const std::size_t bo = b_batched ? t * K * N : 0;
      if (detail::wants_grad(self, 0)) {
        as_matrix(self.parents[0]->grad_buffer(), M, K, ao).noalias() +=
            as_matrix(self.grad, M, N, t * M * N) * as_matrix(bv, K, N, bo).transpose();
      }
      if (detail::wants_grad(self, 1)) {
        as_matrix(self.parents[1]->grad_buffer(), K, N, bo).noalias() +=
            as_matrix(av, M, K, ao).transpose() * as_matrix(self.grad, M, N, t * M * N);
      }
    }
  });
}

/// x[..., in] * W[in, out] + bias[out]. `bias` may be undefined.
inline Var linear(const Var& x, const Var& weight, const Var& bias = Var()) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.empty() || sw.size() != 2 || sx.back() != sw[0]) {
    throw DimensionError("linear: input " + shape_str(sx) + " vs weight " + shape_str(sw));
  }
  const std::size_t in = sw[0], outd = sw[1];
  const bool has_bias = bias.defined();
  if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != outd)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " vs weight " + shape_str(sw));
  }
  const std::size_t rows = x.value().size() / in;
  Shape os = sx;
  os.back() = outd;
  Tensor out(os);
  auto y = as_matrix(out, rows, outd);
  y.noalias() = as_matrix(x.value(), rows, in) * as_matrix(weight.value(), in, outd);
  if (has_bias) y.rowwise() += ConstVecMap(bias.value().ptr(), static_cast<Eigen::Index>(outd)).transpose();
  detail::count_projection(2ULL * rows * in * outd);

  auto fn = [rows, in, outd, has_bias](Node& self) {
    const auto dy = as_matrix(self.grad, rows, outd);
    if (detail::wants_grad(self, 0)) {
      as_matrix(self.parents[0]->grad_buffer(), rows, in).noalias() +=
          dy * as_matrix(self.parents[1]->value, in, outd).transpose();
    }
    if (detail::wants_grad(self, 1)) {
      as_matrix(self.parents[1]->grad_buffer(), in, outd).noalias() +=
          as_matrix(self.parents[0]->value, rows, in).transpose() * dy;
    }
    if (has_bias && detail::wants_grad(self, 2)) {
      as_matrix(self.parents[2]->grad_buffer(), 1, outd) += dy.colwise().sum();
    }
  };
  if (has_bias) return detail::make_op("linear", std::move(out), {x, weight, bias}, std::move(fn));
  return detail::make_op("linear", std::move(out), {x, weight}, std::move(fn));
}

// ---------------------------------------------------------------------------
// Normalization and pooling

/// Numerically stabilized softmax along `axis`.
inline Var softmax(const Var& x, std::size_t axis) {
  const auto sp = detail::split_axis(x.shape(), axis);
  Tensor out(x.shape());
  const double* in = x.value().ptr();
  double* o = out.ptr();
  for (std::size_t a = 0; a < sp.outer; ++a) {
    for (std::size_t c = 0; c < sp.inner; ++c) {
      const std::size_t base = a * sp.extent * sp.inner + c;
      double mx = in[base];
      for (std::size_t e = 1; e < sp.extent; ++e) mx = std::max(mx, in[base + e * sp.inner]);
      double z = 0.0;
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const double v = std::exp(in[base + e * sp.inner] - mx);
        o[base + e * sp.inner] = v;
        z += v;
      }
      for (std::size_t e = 0; e < sp.extent; ++e) o[base + e * sp.inner] /= z;
    }
  }
  detail::count_normalization(5ULL * x.value().size());
  return detail::make_op("softmax", std::move(out), {x}, [sp](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const double* y = self.value.ptr();
    const double* dy = self.grad.ptr();
    for (std::size_t a = 0; a < sp.outer; ++a) {
      for (std::size_t c = 0; c < sp.inner; ++c) {
        const std::size_t base = a * sp.extent * sp.inner + c;
        double dot = 0.0;
        for (std::size_t e = 0; e < sp.extent; ++e) dot += y[base + e * sp.inner] * dy[base + e * sp.inner];
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t i = base + e * sp.inner;
          g[i] += y[i] * (dy[i] - dot);
        }
      }
    }
  });
}

constexpr double kLayerNormEps = 1e-5;

/// Standardizes each slice along `axis` (epsilon 1e-5 on the variance), then
/// applies gain and bias, both of shape [extent].
inline Var layernorm(const Var& x, const Var& gain, const Var& bias, std::size_t axis) {
  const auto sp = detail::split_axis(x.shape(), axis);
  if (gain.shape() != Shape{sp.extent} || bias.shape() != Shape{sp.extent}) {
    throw DimensionError("layernorm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                         " vs input " + shape_str(x.shape()));
  }
  const std::size_t slices = sp.outer * sp.inner;
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.value().size());
  auto inv_std = std::make_shared<std::vector<double>>(slices);
  const double* in = x.value().ptr();
  const double* gv = gain.value().ptr();
  const double* bv = bias.value().ptr();
  const double n = static_cast<double>(sp.extent);
  for (std::size_t a = 0; a < sp.outer; ++a) {
    for (std::size_t c = 0; c < sp.inner; ++c) {
      const std::size_t base = a * sp.extent * sp.inner + c;
      double mu = 0.0;
      for (std::size_t e = 0; e < sp.extent; ++e) mu += in[base + e * sp.inner];
      mu /= n;
      double var = 0.0;
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const double dv = in[base + e * sp.inner] - mu;
        var += dv * dv;
      }
      var /= n;
      const double is = 1.0 / std::sqrt(var + kLayerNormEps);
      (*inv_std)[a * sp.inner + c] = is;
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const std::size_t i = base + e * sp.inner;
        const double xh = (in[i] - mu) * is;
        (*xhat)[i] = xh;
        out[i] = xh * gv[e] + bv[e];
      }
    }
  }
  detail::count_normalization(8ULL * x.value().size());
  return detail::make_op("layernorm", std::move(out), {x, gain, bias}, [sp, xhat, inv_std, n](Node& self) {
    const double* dy = self.grad.ptr();
    const double* gv = self.parents[1]->value.ptr();
    const bool gx = detail::wants_grad(self, 0);
    const bool gg = detail::wants_grad(self, 1);
    const bool gb = detail::wants_grad(self, 2);
    double* dx = gx ? self.parents[0]->grad_buffer().ptr() : nullptr;
    double* dgain = gg ? self.parents[1]->grad_buffer().ptr() : nullptr;
    double* dbias = gb ? self.parents[2]->grad_buffer().ptr() : nullptr;
    for (std::size_t a = 0; a < sp.outer; ++a) {
      for (std::size_t c = 0; c < sp.inner; ++c) {
        const std::size_t base = a * sp.extent * sp.inner + c;
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t i = base + e * sp.inner;
          const double d = dy[i] * gv[e];
          mean_d += d;
          mean_dx += d * (*xhat)[i];
          if (gg) dgain[e] += dy[i] * (*xhat)[i];
          if (gb) dbias[e] += dy[i];
        }
        if (!gx) continue;
        mean_d /= n;
        mean_dx /= n;
        const double is = (*inv_std)[a * sp.inner + c];
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t i = base + e * sp.inner;
          dx[i] += is * (dy[i] * gv[e] - mean_d - (*xhat)[i] * mean_dx);
        }
      }
    }
  });
}

/// Chunked mean along `axis`: groups of `chunk` consecutive entries are
/// averaged; the trailing extent % chunk entries are discarded. chunk == 0 means
/// the whole axis (result extent 1).
inline Var mean_pool(const Var& x, std::size_t axis, std::size_t chunk = 0) {
  const auto sp = detail::split_axis(x.shape(), axis);
  if (chunk == 0) chunk = sp.extent;
  if (chunk > sp.extent) {
    throw DimensionError("mean_pool: chunk " + std::to_string(chunk) + " exceeds extent of " + shape_str(x.shape()));
  }
  const std::size_t groups = sp.extent / chunk;
  Shape os = x.shape();
  os[axis] = groups;
  Tensor out(os);
  const double inv = 1.0 / static_cast<double>(chunk);
  const double* in = x.value().ptr();
  for (std::size_t a = 0; a < sp.outer; ++a) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      double* o = out.ptr() + (a * groups + gi) * sp.inner;
      for (std::size_t e = gi * chunk; e < (gi + 1) * chunk; ++e) {
        const double* src = in + (a * sp.extent + e) * sp.inner;
        for (std::size_t c = 0; c < sp.inner; ++c) o[c] += src[c];
      }
      for (std::size_t c = 0; c < sp.inner; ++c) o[c] *= inv;
    }
  }
  return detail::make_op("mean_pool", std::move(out), {x}, [sp, groups, chunk, inv](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t a = 0; a < sp.outer; ++a) {
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const double* up = self.grad.ptr() + (a * groups + gi) * sp.inner;
        for (std::size_t e = gi * chunk; e < (gi + 1) * chunk; ++e) {
          double* dn = g.ptr() + (a * sp.extent + e) * sp.inner;
          for (std::size_t c = 0; c < sp.inner; ++c) dn[c] += inv * up[c];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Losses

/// Weighted mean over rows of the categorical cross-entropy between
/// softmax(logits[row]) and targets[row]. Empty `weights` means all ones.
inline Var softmax_cross_entropy(const Var& logits, std::span<const int> targets, std::span<const double> weights = {}) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != targets.size() || (!weights.empty() && weights.size() != targets.size())) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_str(s) + " vs " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = s[0], k = s[1];
  auto probs = std::make_shared<std::vector<double>>(rows * k);
  auto w = std::make_shared<std::vector<double>>(rows, 1.0);
  if (!weights.empty()) std::copy(weights.begin(), weights.end(), w->begin());
  auto tgt = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  double wsum = 0.0, loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= k) throw std::out_of_range("target class out of range");
    const double* z = logits.value().ptr() + r * k;
    const double mx = *std::max_element(z, z + k);
    double se = 0.0;
    for (std::size_t c = 0; c < k; ++c) se += std::exp(z[c] - mx);
    const double lse = mx + std::log(se);
    for (std::size_t c = 0; c < k; ++c) (*probs)[r * k + c] = std::exp(z[c] - lse);
    loss += (*w)[r] * (lse - z[t]);
    wsum += (*w)[r];
  }
  if (wsum <= 0.0) throw std::invalid_argument("softmax_cross_entropy: weights sum to zero");
  loss /= wsum;
  return detail::make_op("softmax_cross_entropy", Tensor::scalar(loss), {logits},
                         [probs, w, tgt, wsum, rows, k](Node& self) {
                           auto& g = self.parents[0]->grad_buffer();
                           const double up = self.grad[0] / wsum;
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < k; ++c) {
                               const double onehot = static_cast<int>(c) == (*tgt)[r] ? 1.0 : 0.0;
                               g[r * k + c] += up * (*w)[r] * ((*probs)[r * k + c] - onehot);
                             }
                           }
                         });
}

}  // namespace causcale::ad

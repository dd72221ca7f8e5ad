// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Two-stream causal-discovery network.
//
// Data stream h_D [m_b, n, d] and graph stream h_G [n, n, d] advance through B
// data-graph blocks. Each block runs
//   data layer   : sample-axis attention, node-axis attention, FFN
//   data2graph   : own axial layer, two pooled FFN branches u, v, omega = u v^T
//   graph layer  : concat(h_G, omega) -> linear -> row/column attention, FFN
// and after every k-th block (except the last) the data stream is mean-pooled
// in chunks of r along the sample axis. The final graph embedding feeds a
// pairwise head producing logits over {no edge, i->j, j->i} for each i < j.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "causcale/attention.hpp"
#include "causcale/autodiff.hpp"
#include "causcale/bundle.hpp"
#include "causcale/rng.hpp"
#include "causcale/serialize.hpp"
#include "causcale/simulator.hpp"

namespace causcale {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class AttentionScale {
  tied_length,  // 1 / sqrt(R * d_head)
  head_dim,     // 1 / sqrt(d_head)
};

enum class AttentionKind { tied, vanilla };

struct ModelConfig {
  std::size_t blocks = 10;        // B
  std::size_t reduce_every = 2;   // k
  std::size_t reduce_factor = 2;  // r
  std::size_t dim = 128;          // d
  std::size_t heads = 16;         // H
  std::size_t ffn_mult = 4;
  AttentionScale scale = AttentionScale::tied_length;
  AttentionKind attention = AttentionKind::tied;
  double dropout = 0.0;
  bool use_message = true;  // false zeroes omega before it enters the graph stream

  std::size_t head_dim() const { return dim / heads; }

  void validate() const {
    if (blocks < 1) throw ConfigError("B must be >= 1");
    if (reduce_every < 1) throw ConfigError("k must be >= 1");
    if (reduce_factor < 1) throw ConfigError("r must be >= 1");
    if (heads < 1 || dim < 1 || dim % heads != 0) {
      throw ConfigError("d = " + std::to_string(dim) + " must be divisible by H = " + std::to_string(heads));
    }
    if (ffn_mult < 1) throw ConfigError("ffn_mult must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  }

  /// Full-size configuration: B=10, d=128, H=16, k=2, r=2.
  static ModelConfig reference() { return ModelConfig{}; }

  /// The scaled-down configuration used for CPU training runs.
  static ModelConfig desk() {
    ModelConfig c;
    c.blocks = 4;
    c.dim = 32;
    c.heads = 4;
    return c;
  }

  bool reduces_after(std::size_t b) const { return (b + 1) % reduce_every == 0 && b + 1 < blocks; }
};

inline constexpr int kCheckpointVersion = 1;

inline std::map<std::string, std::string> to_key_values(const ModelConfig& c) {
  std::map<std::string, std::string> kv;
  kv["B"] = std::to_string(c.blocks);
  kv["k"] = std::to_string(c.reduce_every);
  kv["r"] = std::to_string(c.reduce_factor);
  kv["d"] = std::to_string(c.dim);
  kv["H"] = std::to_string(c.heads);
  kv["ffn_mult"] = std::to_string(c.ffn_mult);
  kv["attention_scale"] = c.scale == AttentionScale::tied_length ? "tied_length" : "head_dim";
  kv["attention"] = c.attention == AttentionKind::tied ? "tied" : "vanilla";
  std::ostringstream dp;
  dp << std::setprecision(17) << c.dropout;
  kv["dropout"] = dp.str();
  kv["use_message"] = c.use_message ? "1" : "0";
  return kv;
}

/// Reads model keys from a flat key/value map; unknown keys are ignored so the
/// same file can carry training settings.
inline ModelConfig model_config_from(const std::map<std::string, std::string>& kv, ModelConfig base = {}) {
  auto size_of = [&](const char* key, std::size_t& dst) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(it->second, &pos);
      if (pos != it->second.size() || v < 0) throw std::invalid_argument(it->second);
      dst = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string("config key '") + key + "' expects a non-negative integer, got '" + it->second + "'");
    }
  };
  size_of("B", base.blocks);
  size_of("k", base.reduce_every);
  size_of("r", base.reduce_factor);
  size_of("d", base.dim);
  size_of("H", base.heads);
  size_of("ffn_mult", base.ffn_mult);
  if (auto it = kv.find("attention_scale"); it != kv.end()) {
    if (it->second == "tied_length") {
      base.scale = AttentionScale::tied_length;
    } else if (it->second == "head_dim") {
      base.scale = AttentionScale::head_dim;
    } else {
      throw ConfigError("attention_scale must be tied_length or head_dim");
    }
  }
  if (auto it = kv.find("attention"); it != kv.end()) {
    if (it->second == "tied") {
      base.attention = AttentionKind::tied;
    } else if (it->second == "vanilla") {
      base.attention = AttentionKind::vanilla;
    } else {
      throw ConfigError("attention must be tied or vanilla");
    }
  }
  if (auto it = kv.find("dropout"); it != kv.end()) base.dropout = std::stod(it->second);
  if (auto it = kv.find("use_message"); it != kv.end()) base.use_message = it->second != "0";
  base.validate();
  return base;
}

/// Data-stream length entering each block, plus the length after the last one.
inline std::vector<std::size_t> data_length_schedule(const ModelConfig& c, std::size_t m) {
  std::vector<std::size_t> lengths{m};
  std::size_t cur = m;
  for (std::size_t b = 0; b < c.blocks; ++b) {
    if (c.reduces_after(b) && c.reduce_factor > 1 && cur >= c.reduce_factor) cur /= c.reduce_factor;
    lengths.push_back(cur);
  }
  return lengths;
}

// ---------------------------------------------------------------------------
// Parameters

struct ParamSpec {
  enum class Init { weight, zeros, ones };
  std::string name;
  Shape shape;
  Init init;
};

class ParameterSet {
 public:
  void add(std::string name, Tensor value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter " + name);
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
  }

  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("missing parameter " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& operator[](std::size_t i) { return values_[i]; }
  const Tensor& operator[](std::size_t i) const { return values_[i]; }
  Tensor& operator[](const std::string& n) { return values_[index(n)]; }
  const Tensor& operator[](const std::string& n) const { return values_[index(n)]; }

  std::size_t element_count() const {
    std::size_t t = 0;
    for (const auto& v : values_) t += v.size();
    return t;
  }

  std::vector<NamedTensor> named() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < values_.size(); ++i) out.push_back({names_[i], values_[i]});
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline void attention_specs(std::vector<ParamSpec>& out, const std::string& p, std::size_t d) {
  using I = ParamSpec::Init;
  out.push_back({p + ".ln.g", {d}, I::ones});
  out.push_back({p + ".ln.b", {d}, I::zeros});
  out.push_back({p + ".wq", {d, d}, I::weight});
  out.push_back({p + ".wk", {d, d}, I::weight});
  out.push_back({p + ".wv", {d, d}, I::weight});
  out.push_back({p + ".wo", {d, d}, I::weight});
  out.push_back({p + ".bo", {d}, I::zeros});
}

inline void ffn_specs(std::vector<ParamSpec>& out, const std::string& p, std::size_t d, std::size_t hidden) {
  using I = ParamSpec::Init;
  out.push_back({p + ".ln.g", {d}, I::ones});
  out.push_back({p + ".ln.b", {d}, I::zeros});
  out.push_back({p + ".w1", {d, hidden}, I::weight});
  out.push_back({p + ".b1", {hidden}, I::zeros});
  out.push_back({p + ".w2", {hidden, d}, I::weight});
  out.push_back({p + ".b2", {d}, I::zeros});
}

inline void axial_specs(std::vector<ParamSpec>& out, const std::string& p, const ModelConfig& c) {
  attention_specs(out, p + ".attn0", c.dim);
  attention_specs(out, p + ".attn1", c.dim);
  ffn_specs(out, p + ".ffn", c.dim, c.dim * c.ffn_mult);
}

inline void pooling_ffn_specs(std::vector<ParamSpec>& out, const std::string& p, std::size_t d) {
  using I = ParamSpec::Init;
  out.push_back({p + ".w1", {d, d}, I::weight});
  out.push_back({p + ".b1", {d}, I::zeros});
  out.push_back({p + ".w2", {d, d}, I::weight});
  out.push_back({p + ".b2", {d}, I::zeros});
}

inline std::string block_prefix(std::size_t b) { return "block" + std::to_string(b); }

}  // namespace detail

/// Every learnable tensor, in serialization order.
inline std::vector<ParamSpec> parameter_specs(const ModelConfig& c) {
  using I = ParamSpec::Init;
  c.validate();
  const std::size_t d = c.dim;
  std::vector<ParamSpec> s;
  s.push_back({"enc.data.w", {2, d}, I::weight});
  s.push_back({"enc.data.b", {d}, I::zeros});
  s.push_back({"enc.graph.w", {1, d}, I::weight});
  s.push_back({"enc.graph.b", {d}, I::zeros});
  for (std::size_t b = 0; b < c.blocks; ++b) {
    const auto p = detail::block_prefix(b);
    detail::axial_specs(s, p + ".data", c);
    detail::axial_specs(s, p + ".d2g.axial", c);
    detail::pooling_ffn_specs(s, p + ".d2g.u", d);
    detail::pooling_ffn_specs(s, p + ".d2g.v", d);
    s.push_back({p + ".graph.in.w", {d + 1, d}, I::weight});
    s.push_back({p + ".graph.in.b", {d}, I::zeros});
    detail::axial_specs(s, p + ".graph.axial", c);
  }
  s.push_back({"head.ln.g", {d}, I::ones});
  s.push_back({"head.ln.b", {d}, I::zeros});
  s.push_back({"head.w1", {2 * d, 2 * d}, I::weight});
  s.push_back({"head.b1", {2 * d}, I::zeros});
  s.push_back({"head.w2", {2 * d, 3}, I::weight});
  s.push_back({"head.b2", {3}, I::zeros});
  return s;
}

inline constexpr double kInitStd = 0.02;

/// Projections: normal(0, 0.02) truncated at two standard deviations.
/// Biases zero, layernorm gains one.
inline ParameterSet init_parameters(const ModelConfig& c, std::uint64_t seed) {
  Rng rng = make_rng(seed, 10);
  std::normal_distribution<double> normal(0.0, kInitStd);
  ParameterSet ps;
  for (const auto& spec : parameter_specs(c)) {
    Tensor t(spec.shape);
    switch (spec.init) {
      case ParamSpec::Init::weight:
        for (double& v : t.data()) {
          do {
            v = normal(rng);
          } while (std::abs(v) > 2.0 * kInitStd);
        }
        break;
      case ParamSpec::Init::ones: t.fill(1.0); break;
      case ParamSpec::Init::zeros: break;
    }
    ps.add(spec.name, std::move(t));
  }
  return ps;
}

/// Throws ConfigError unless `ps` has exactly the tensors `c` expects.
inline void check_parameters(const ModelConfig& c, const ParameterSet& ps) {
  const auto specs = parameter_specs(c);
  if (specs.size() != ps.size()) {
    throw ConfigError("config expects " + std::to_string(specs.size()) + " parameter tensors, weights have " +
                      std::to_string(ps.size()));
  }
  for (const auto& spec : specs) {
    if (!ps.contains(spec.name)) throw ConfigError("weights lack parameter " + spec.name);
    if (ps[spec.name].shape() != spec.shape) {
      throw ConfigError("parameter " + spec.name + " has shape " + shape_str(ps[spec.name].shape()) +
                        ", config expects " + shape_str(spec.shape));
    }
  }
}

/// Parameters as Vars for one forward pass: leaves on `tape` when training,
/// constants for inference.
class Binding {
 public:
  Binding(const ParameterSet& ps, ad::Tape* tape) : params_(&ps) {
    vars_.reserve(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) vars_.push_back(tape ? tape->leaf(ps[i]) : ad::constant(ps[i]));
  }

  const Var& operator()(const std::string& name) const { return vars_[params_->index(name)]; }
  const Var& operator[](std::size_t i) const { return vars_[i]; }
  std::size_t size() const noexcept { return vars_.size(); }

 private:
  const ParameterSet* params_;
  std::vector<Var> vars_;
};

// ---------------------------------------------------------------------------
// Layers

struct ForwardTrace {
  std::vector<std::size_t> block_lengths;   // data-stream length entering each block
  std::vector<std::size_t> reduced_lengths;  // length after each reduction that fired
  std::size_t discarded_samples = 0;
  std::size_t skipped_reductions = 0;
};

struct LayerContext {
  const Binding& p;
  const ModelConfig& cfg;
  Rng* dropout_rng = nullptr;
};

namespace detail {

inline Var maybe_dropout(const LayerContext& ctx, const Var& x) {
  if (ctx.cfg.dropout <= 0.0 || !ctx.dropout_rng) return x;
  return ad::dropout(x, ctx.cfg.dropout, *ctx.dropout_rng);
}

inline void warn_once(const std::string& msg) {
  static bool warned = false;
  if (!warned) {
    std::clog << "causcale: warning: " << msg << '\n';
    warned = true;
  }
}

}  // namespace detail

/// Pre-layernorm multi-head attention along axis 1 of x[R, C, d], tied across
/// axis 0 (or per slice when the config selects vanilla attention), with a
/// residual connection.
inline Var attention_sublayer(const LayerContext& ctx, const Var& x, const std::string& prefix, AttentionAxis axis) {
  const auto& p = ctx.p;
  const std::size_t R = x.dim(0);
  const std::size_t dh = ctx.cfg.head_dim();
  const Var y = ad::layernorm(x, p(prefix + ".ln.g"), p(prefix + ".ln.b"), 2);
  const Var q = ad::linear(y, p(prefix + ".wq"));
  const Var k = ad::linear(y, p(prefix + ".wk"));
  const Var v = ad::linear(y, p(prefix + ".wv"));
  Var o;
  if (ctx.cfg.attention == AttentionKind::tied) {
    const double denom = ctx.cfg.scale == AttentionScale::tied_length ? static_cast<double>(R * dh)
                                                                        : static_cast<double>(dh);
    o = tied_attention_core(q, k, v, ctx.cfg.heads, 1.0 / std::sqrt(denom), axis);
  } else {
    o = vanilla_attention_core(q, k, v, ctx.cfg.heads, 1.0 / std::sqrt(static_cast<double>(dh)), axis);
  }
  o = ad::linear(o, p(prefix + ".wo"), p(prefix + ".bo"));
  return ad::add(x, detail::maybe_dropout(ctx, o));
}

inline Var ffn_sublayer(const LayerContext& ctx, const Var& x, const std::string& prefix) {
  const auto& p = ctx.p;
  const Var y = ad::layernorm(x, p(prefix + ".ln.g"), p(prefix + ".ln.b"), x.rank() - 1);
  const Var h = ad::gelu(ad::linear(y, p(prefix + ".w1"), p(prefix + ".b1")));
  const Var o = ad::linear(h, p(prefix + ".w2"), p(prefix + ".b2"));
  return ad::add(x, detail::maybe_dropout(ctx, o));
}

/// Attention over axis 0 of x[A, B, d] (tied across axis 1).
inline Var attend_axis0(const LayerContext& ctx, const Var& x, const std::string& prefix, AttentionAxis axis) {
  return ad::swap_leading(attention_sublayer(ctx, ad::swap_leading(x), prefix, axis));
}

/// Data stream: sample-axis attention, node-axis attention, FFN.
inline Var data_axial_layer(const LayerContext& ctx, const Var& h, const std::string& prefix) {
  Var x = attend_axis0(ctx, h, prefix + ".attn0", AttentionAxis::sample);
  x = attention_sublayer(ctx, x, prefix + ".attn1", AttentionAxis::node);
  return ffn_sublayer(ctx, x, prefix + ".ffn");
}

/// Graph stream [n, n, d]: row-axis attention (over the second node index),
/// column-axis attention (over the first), FFN.
inline Var graph_axial_layer(const LayerContext& ctx, const Var& h, const std::string& prefix) {
  Var x = attention_sublayer(ctx, h, prefix + ".attn0", AttentionAxis::graph);
  x = attend_axis0(ctx, x, prefix + ".attn1", AttentionAxis::graph);
  return ffn_sublayer(ctx, x, prefix + ".ffn");
}

inline Var data_layer(const LayerContext& ctx, const Var& h_data, std::size_t block) {
  return data_axial_layer(ctx, h_data, detail::block_prefix(block) + ".data");
}

namespace detail {
inline Var pooling_ffn(const LayerContext& ctx, const Var& pooled, const std::string& prefix) {
  const auto& p = ctx.p;
  const Var h = ad::gelu(ad::linear(pooled, p(prefix + ".w1"), p(prefix + ".b1")));
  return ad::linear(h, p(prefix + ".w2"), p(prefix + ".b2"));
}
}  // namespace detail

/// omega = u v^T [n, n], where u and v are separate pooled-FFN summaries of an
/// axial-attention pass over h_data.
inline Var data2graph(const LayerContext& ctx, const Var& h_data, std::size_t block) {
  const auto prefix = detail::block_prefix(block) + ".d2g";
  const Var h = data_axial_layer(ctx, h_data, prefix + ".axial");
  const std::size_t n = h.dim(1), d = h.dim(2);
  const Var pooled = ad::reshape(ad::mean_pool(h, 0), {n, d});
  const Var u = detail::pooling_ffn(ctx, pooled, prefix + ".u");
  const Var v = detail::pooling_ffn(ctx, pooled, prefix + ".v");
  return ad::matmul(u, ad::transpose(v));
}

inline Var graph_layer(const LayerContext& ctx, const Var& h_graph, const Var& omega, std::size_t block) {
  const auto prefix = detail::block_prefix(block) + ".graph";
  const std::size_t n = h_graph.dim(0);
  if (omega.shape() != Shape{n, n}) {
    throw DimensionError("graph_layer: omega " + shape_str(omega.shape()) + " vs graph stream " +
                         shape_str(h_graph.shape()));
  }
  const Var message = ctx.cfg.use_message ? ad::reshape(omega, {n, n, 1}) : ad::constant(Tensor(Shape{n, n, 1}));
  const Var joined = ad::concat_last(h_graph, message);
  const Var projected = ad::add(h_graph, ad::linear(joined, ctx.p(prefix + ".in.w"), ctx.p(prefix + ".in.b")));
  return graph_axial_layer(ctx, projected, prefix + ".axial");
}

/// Chunked mean over the sample axis. Trailing m % r samples are dropped;
/// when m < r the input passes through unchanged.
inline Var reduction_unit(const Var& h_data, std::size_t r, ForwardTrace* trace = nullptr) {
  const std::size_t m = h_data.dim(0);
  if (r <= 1) return h_data;
  if (m < r) {
    detail::warn_once("reduction skipped: data-stream length " + std::to_string(m) + " < r = " + std::to_string(r));
    if (trace) ++trace->skipped_reductions;
    return h_data;
  }
  Var out = ad::mean_pool(h_data, 0, r);
  if (trace) {
    trace->reduced_lengths.push_back(out.dim(0));
    trace->discarded_samples += m % r;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inputs

/// Network inputs: data [m, n, 2] (value, intervention bit) and the clipped
/// prior [n, n, 1].
struct ModelInput {
  Tensor data;
  Tensor prior;

  std::size_t m() const { return data.dim(0); }
  std::size_t n() const { return data.dim(1); }
};

inline constexpr double kPriorClip = 10.0;

inline ModelInput make_input(const Dataset& ds, const GraphPrior& prior) {
  if (!ds.standardized) throw std::invalid_argument("model input must be standardized");
  if (prior.n != ds.n || prior.rho.size() != ds.n * ds.n) {
    throw DimensionError("prior is " + std::to_string(prior.n) + "x" + std::to_string(prior.n) + " but dataset has " +
                         std::to_string(ds.n) + " variables");
  }
  ModelInput in{Tensor(Shape{ds.m, ds.n, 2}), Tensor(Shape{ds.n, ds.n, 1})};
  for (std::size_t i = 0; i < ds.m * ds.n; ++i) {
    in.data[2 * i] = ds.values[i];
    in.data[2 * i + 1] = ds.mask[i] ? 1.0 : 0.0;
  }
  for (std::size_t i = 0; i < ds.n * ds.n; ++i) in.prior[i] = std::clamp(prior.rho[i], -kPriorClip, kPriorClip);
  return in;
}

struct Encoded {
  Var data;   // [m, n, d]
  Var graph;  // [n, n, d]
};

inline Encoded encode_inputs(const LayerContext& ctx, const ModelInput& in) {
  if (in.data.rank() != 3 || in.data.dim(2) != 2 || in.prior.rank() != 3 || in.prior.dim(0) != in.n() ||
      in.prior.dim(1) != in.n() || in.prior.dim(2) != 1) {
    throw DimensionError("encode_inputs: data " + shape_str(in.data.shape()) + " vs prior " +
                         shape_str(in.prior.shape()));
  }
  return {ad::linear(ad::constant(in.data), ctx.p("enc.data.w"), ctx.p("enc.data.b")),
          ad::linear(ad::constant(in.prior), ctx.p("enc.graph.w"), ctx.p("enc.graph.b"))};
}

// ---------------------------------------------------------------------------
// Head and prediction

inline std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

/// Row of pair (i, j), i < j, in the head's row-major pair order.
inline std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n) {
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

/// Final layernorm, then a two-layer FFN on [h(i,j), h(j,i)] for every i < j.
inline Var predict_head(const LayerContext& ctx, const Var& h_graph) {
  const auto& p = ctx.p;
  const Var y = ad::layernorm(h_graph, p("head.ln.g"), p("head.ln.b"), 2);
  const Var feats = ad::pair_features(y);
  const Var h = ad::gelu(ad::linear(feats, p("head.w1"), p("head.b1")));
  return ad::linear(h, p("head.w2"), p("head.b2"));
}

struct PredictedGraph {
  std::size_t n = 0;
  Tensor pair_logits;  // [P, 3] over {none, i->j, j->i}
  Tensor pair_probs;   // [P, 3]
  Tensor g_hat;        // [n, n], g_hat(i, j) = P(i -> j), zero diagonal

  static PredictedGraph from_logits(std::size_t n, Tensor logits) {
    if (logits.shape() != Shape{pair_count(n), 3}) {
      throw DimensionError("pair logits " + shape_str(logits.shape()) + " do not match n = " + std::to_string(n));
    }
    PredictedGraph g;
    g.n = n;
    g.pair_probs = Tensor(logits.shape());
    g.g_hat = Tensor(Shape{n, n});
    for (std::size_t p = 0; p < pair_count(n); ++p) {
      const double* z = logits.ptr() + 3 * p;
      const double mx = std::max({z[0], z[1], z[2]});
      double e[3], s = 0.0;
      for (int c = 0; c < 3; ++c) s += e[c] = std::exp(z[c] - mx);
      for (int c = 0; c < 3; ++c) g.pair_probs[3 * p + c] = e[c] / s;
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const std::size_t p = pair_index(i, j, n);
        g.g_hat.at(i, j) = g.pair_probs[3 * p + 1];
        g.g_hat.at(j, i) = g.pair_probs[3 * p + 2];
      }
    }
    g.pair_logits = std::move(logits);
    return g;
  }

  /// Edge i -> j iff P(i -> j) > threshold. Since P(i->j) + P(j->i) <= 1, any
  /// threshold >= 0.5 yields no 2-cycles.
  CausalGraph decode(double threshold = 0.5) const {
    CausalGraph g(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j && g_hat.at(i, j) > threshold) g.set_edge(i, j);
    return g;
  }

  std::vector<double> scores() const { return {g_hat.data().begin(), g_hat.data().end()}; }
};

/// Differentiable forward pass returning pair logits [n(n-1)/2, 3].
inline Var forward_logits(const LayerContext& ctx, const ModelInput& in, ForwardTrace* trace = nullptr) {
  const ModelConfig& cfg = ctx.cfg;
  if (in.n() < 2) throw DimensionError("need at least 2 variables");
  PerfCounters* pc = counters();
  Encoded enc = encode_inputs(ctx, in);
  Var h_data = enc.data;
  Var h_graph = enc.graph;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    if (pc) pc->enter_block(static_cast<int>(b), h_data.dim(0));
    if (trace) trace->block_lengths.push_back(h_data.dim(0));
    h_data = data_layer(ctx, h_data, b);
    const Var omega = data2graph(ctx, h_data, b);
    h_graph = graph_layer(ctx, h_graph, omega, b);
    if (cfg.reduces_after(b)) h_data = reduction_unit(h_data, cfg.reduce_factor, trace);
    if (pc) pc->leave_block();
  }
  return predict_head(ctx, h_graph);
}

/// Inference: no tape, intermediates released as the pass proceeds.
inline PredictedGraph predict(const ModelConfig& cfg, const ParameterSet& params, const ModelInput& in,
                              ForwardTrace* trace = nullptr) {
  const Binding binding(params, nullptr);
  const LayerContext ctx{binding, cfg, nullptr};
  Var logits = forward_logits(ctx, in, trace);
  return PredictedGraph::from_logits(in.n(), logits.value());
}

inline PredictedGraph predict(const ModelConfig& cfg, const ParameterSet& params, const Dataset& ds,
                              const GraphPrior& prior, ForwardTrace* trace = nullptr) {
  check_parameters(cfg, params);
  return predict(cfg, params, make_input(ds, prior), trace);
}

// ---------------------------------------------------------------------------
// Checkpoints: config.txt + weights.bin + weights.manifest

inline void save_checkpoint(const std::filesystem::path& dir, const ModelConfig& cfg, const ParameterSet& params) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "config.txt", std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + (dir / "config.txt").string());
    os << "# causcale model checkpoint\n";
    os << "version = " << kCheckpointVersion << '\n';
    for (const auto& [k, v] : to_key_values(cfg)) os << k << " = " << v << '\n';
  }
  const auto named = params.named();
  write_tensors(dir / "weights.bin", named, DType::f32);
  write_manifest(dir / "weights.manifest", named);
}

struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
};

inline ModelConfig read_model_config(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  return model_config_from(io::parse_key_values(is, file.string()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "config.txt");
  if (!is) throw std::runtime_error("cannot open " + (dir / "config.txt").string());
  const auto kv = io::parse_key_values(is, (dir / "config.txt").string());
  if (auto it = kv.find("version"); it == kv.end() || it->second != std::to_string(kCheckpointVersion)) {
    throw CorruptionError("checkpoint config has missing or unsupported version");
  }
  Checkpoint ck{model_config_from(kv), {}};
  for (auto& t : read_tensors_checked(dir / "weights.bin", dir / "weights.manifest")) {
    ck.params.add(std::move(t.name), std::move(t.value));
  }
  check_parameters(ck.config, ck.params);
  return ck;
}

}  // namespace causcale

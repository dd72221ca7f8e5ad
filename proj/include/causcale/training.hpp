// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "causcale/metrics.hpp"
#include "causcale/model.hpp"

namespace causcale {

class InvalidTargetError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Three-state class per pair i < j: 0 none, 1 i -> j, 2 j -> i.
inline std::vector<int> pair_targets(const CausalGraph& truth) {
  std::vector<int> t;
  t.reserve(pair_count(truth.n));
  for (std::size_t i = 0; i < truth.n; ++i) {
    for (std::size_t j = i + 1; j < truth.n; ++j) {
      const bool fwd = truth.edge(i, j), bwd = truth.edge(j, i);
      if (fwd && bwd) {
        throw InvalidTargetError("target graph has a 2-cycle between " + std::to_string(i) + " and " +
                                 std::to_string(j));
      }
      t.push_back(fwd ? 1 : (bwd ? 2 : 0));
    }
  }
  return t;
}

/// Mean cross-entropy over pairs. positive_weight > 1 up-weights pairs whose
/// true state is an edge.
inline ad::Var pair_loss(const ad::Var& logits, const std::vector<int>& targets, double positive_weight = 1.0) {
  if (positive_weight == 1.0) return ad::softmax_cross_entropy(logits, targets);
  std::vector<double> w(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) w[i] = targets[i] == 0 ? 1.0 : positive_weight;
  return ad::softmax_cross_entropy(logits, targets, w);
}

inline ad::Var pair_loss(const ad::Var& logits, const CausalGraph& truth, double positive_weight = 1.0) {
  if (logits.shape() != Shape{pair_count(truth.n), 3}) {
    throw DimensionError("pair_loss: logits " + shape_str(logits.shape()) + " vs n = " + std::to_string(truth.n));
  }
  return pair_loss(logits, pair_targets(truth), positive_weight);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// Bias-corrected Adam update in place. A non-finite gradient aborts before any
/// parameter is touched.
inline void adam_step(ParameterSet& params, const std::vector<Tensor>& grads, AdamState& st, double lr) {
  if (grads.size() != params.size()) throw DimensionError("adam_step: gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape()) {
      throw DimensionError("adam_step: gradient of " + params.name(i) + " has shape " + shape_str(grads[i].shape()));
    }
    if (!grads[i].all_finite()) throw NumericError("non-finite gradient for parameter " + params.name(i));
  }
  if (st.m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.m.emplace_back(params[i].shape());
      st.v.emplace_back(params[i].shape());
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    Tensor& m = st.m[i];
    Tensor& v = st.v[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = st.beta1 * m[k] + (1.0 - st.beta1) * g[k];
      v[k] = st.beta2 * v[k] + (1.0 - st.beta2) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + st.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Corpus

struct TrainingExample {
  ModelInput input;
  CausalGraph truth;
  std::vector<int> targets;
  std::size_t true_edges = 0;
};

/// Standardizes (if needed), computes the prior and the pair targets.
inline TrainingExample make_example(const Dataset& data, const CausalGraph& truth) {
  const Dataset ds = data.standardized ? data : standardize(data);
  const GraphPrior prior = compute_prior(ds);
  return {make_input(ds, prior), truth, pair_targets(truth), truth.edge_count()};
}

inline TrainingExample make_example(const DatasetBundle& b) { return make_example(b.data, b.graph); }

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 8;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  std::size_t eval_every = 100;
  std::filesystem::path checkpoint_dir;  // empty: keep the best weights in memory only
  double positive_weight = 1.0;
};

inline TrainConfig train_config_from(const std::map<std::string, std::string>& kv, TrainConfig base = {}) {
  if (auto it = kv.find("lr"); it != kv.end()) base.lr = std::stod(it->second);
  if (auto it = kv.find("batch_size"); it != kv.end()) base.batch_size = std::stoul(it->second);
  if (auto it = kv.find("steps"); it != kv.end()) base.steps = std::stoul(it->second);
  if (auto it = kv.find("seed"); it != kv.end()) base.seed = std::stoull(it->second);
  if (auto it = kv.find("eval_every"); it != kv.end()) base.eval_every = std::stoul(it->second);
  if (auto it = kv.find("positive_weight"); it != kv.end()) base.positive_weight = std::stod(it->second);
  if (!(base.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (base.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  return base;
}

struct LogRow {
  std::size_t step = 0;
  double loss = 0.0;
  std::optional<double> val_map;
  std::optional<double> val_auc;
  double wallclock_s = 0.0;
};

struct ValidationScore {
  double map = 0.0;
  double auc = 0.0;
  std::size_t graphs = 0;
};

inline ValidationScore validate(const ModelConfig& cfg, const ParameterSet& params,
                                const std::vector<TrainingExample>& val) {
  ValidationScore s;
  std::size_t map_n = 0, auc_n = 0;
  for (const auto& ex : val) {
    const PredictedGraph pred = predict(cfg, params, ex.input);
    const auto scores = pred.scores();
    if (auto ap = average_precision(scores, ex.truth.adj, ex.truth.n)) {
      s.map += *ap;
      ++map_n;
    }
    if (auto auc = roc_auc(scores, ex.truth.adj, ex.truth.n)) {
      s.auc += *auc;
      ++auc_n;
    }
  }
  s.map = map_n ? s.map / static_cast<double>(map_n) : 0.0;
  s.auc = auc_n ? s.auc / static_cast<double>(auc_n) : 0.0;
  s.graphs = val.size();
  return s;
}

/// Forward + backward over a batch; gradients are averaged. Returns the mean loss.
inline double accumulate_batch_gradients(const ModelConfig& cfg, const ParameterSet& params,
                                         const std::vector<const TrainingExample*>& batch, double positive_weight,
                                         Rng& dropout_rng, std::vector<Tensor>& grads) {
  grads.clear();
  for (std::size_t i = 0; i < params.size(); ++i) grads.emplace_back(params[i].shape());
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const TrainingExample* ex : batch) {
    ad::Tape tape;
    const Binding binding(params, &tape);
    const LayerContext ctx{binding, cfg, &dropout_rng};
    const ad::Var logits = forward_logits(ctx, ex->input);
    const ad::Var loss = ad::scale(pair_loss(logits, ex->targets, positive_weight), inv);
    tape.backward(loss);
    total += loss.value().item();
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!binding[i].node().grad.empty()) grads[i] += binding[i].node().grad;
    }
  }
  return total;
}

struct TrainResult {
  ParameterSet best_params;
  std::optional<ValidationScore> best_val;
  std::size_t best_step = 0;
  std::vector<LogRow> log;
};

/// Mini-batches are drawn from one node count at a time (no padding): a group
/// is chosen with probability proportional to its size, then batch_size
/// examples are drawn from it with replacement.
inline TrainResult train(const std::vector<TrainingExample>& corpus, const std::vector<TrainingExample>& val,
                         const ModelConfig& cfg, const TrainConfig& tc, ParameterSet params,
                         const std::function<void(const LogRow&)>& on_log = {}) {
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  check_parameters(cfg, params);
  std::map<std::size_t, std::vector<const TrainingExample*>> groups;
  for (const auto& ex : corpus) groups[ex.truth.n].push_back(&ex);
  std::vector<std::vector<const TrainingExample*>> group_list;
  std::vector<double> group_weight;
  for (auto& [n, members] : groups) {
    group_list.push_back(members);
    group_weight.push_back(static_cast<double>(members.size()));
  }
  Rng rng = make_rng(tc.seed, 30);
  Rng dropout_rng = make_rng(tc.seed, 31);
  std::discrete_distribution<std::size_t> pick_group(group_weight.begin(), group_weight.end());

  TrainResult result;
  result.best_params = params;
  AdamState adam;
  std::vector<Tensor> grads;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  auto evaluate_now = [&](LogRow& row) {
    if (val.empty()) return;
    const ValidationScore s = validate(cfg, params, val);
    row.val_map = s.map;
    row.val_auc = s.auc;
    if (!result.best_val || s.map > result.best_val->map) {
      result.best_val = s;
      result.best_params = params;
      result.best_step = row.step;
      if (!tc.checkpoint_dir.empty()) save_checkpoint(tc.checkpoint_dir, cfg, params);
    }
  };

  for (std::size_t step = 0; step < tc.steps; ++step) {
    const auto& group = group_list[pick_group(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, group.size() - 1);
    std::vector<const TrainingExample*> batch;
    for (std::size_t b = 0; b < tc.batch_size; ++b) batch.push_back(group[pick(rng)]);

    LogRow row;
    row.step = step;
    row.loss = accumulate_batch_gradients(cfg, params, batch, tc.positive_weight, dropout_rng, grads);
    adam_step(params, grads, adam, tc.lr);
    const bool last = step + 1 == tc.steps;
    if (tc.eval_every > 0 && ((step + 1) % tc.eval_every == 0 || last)) evaluate_now(row);
    row.wallclock_s = elapsed();
    result.log.push_back(row);
    if (on_log) on_log(row);
  }
  if (val.empty()) {
    result.best_params = params;
    result.best_step = tc.steps ? tc.steps - 1 : 0;
    if (!tc.checkpoint_dir.empty()) save_checkpoint(tc.checkpoint_dir, cfg, params);
  }
  return result;
}

inline void write_metric_log(const std::filesystem::path& path, const std::vector<LogRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "step,loss,val_mAP,val_AUC,wallclock_s\n";
  os << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.step << ',' << r.loss << ',';
    if (r.val_map) os << *r.val_map;
    os << ',';
    if (r.val_auc) os << *r.val_auc;
    os << ',' << r.wallclock_s << '\n';
  }
}

}  // namespace causcale

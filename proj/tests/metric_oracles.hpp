// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Reference implementations used to cross-check the metrics module. They are
// deliberately written along different routes than the production code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <set>
#include <vector>

#include "causcale/metrics.hpp"
#include "causcale/rng.hpp"

namespace causcale::oracle {

/// State of unordered pair (i, j), i < j: bit 0 = i -> j, bit 1 = j -> i.
inline std::vector<int> pair_states(const std::vector<std::uint8_t>& adj, std::size_t n) {
  std::vector<int> s;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s.push_back(adj[i * n + j] | (adj[j * n + i] << 1));
  return s;
}

inline std::size_t encode(const std::vector<int>& s) {
  std::size_t code = 0;
  for (std::size_t k = s.size(); k-- > 0;) code = code * 4 + static_cast<std::size_t>(s[k]);
  return code;
}

/// Edit distance where one move rewrites the state of one unordered pair, by
/// breadth-first search over all 4^P graphs from `truth`. Returns distances
/// indexed by encoded state.
inline std::vector<int> shd_by_search(const std::vector<std::uint8_t>& truth, std::size_t n) {
  const std::size_t P = n * (n - 1) / 2;
  std::size_t total = 1;
  for (std::size_t k = 0; k < P; ++k) total *= 4;
  std::vector<int> dist(total, -1);
  const std::size_t start = encode(pair_states(truth, n));
  std::queue<std::size_t> q;
  dist[start] = 0;
  q.push(start);
  while (!q.empty()) {
    const std::size_t cur = q.front();
    q.pop();
    std::size_t stride = 1;
    for (std::size_t k = 0; k < P; ++k, stride *= 4) {
      const std::size_t digit = (cur / stride) % 4;
      for (std::size_t nd = 0; nd < 4; ++nd) {
        if (nd == digit) continue;
        const std::size_t next = cur - digit * stride + nd * stride;
        if (dist[next] < 0) {
          dist[next] = dist[cur] + 1;
          q.push(next);
        }
      }
    }
  }
  return dist;
}

struct Labeled {
  std::vector<double> scores;
  std::vector<int> labels;
};

inline Labeled labeled(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth, std::size_t n) {
  Labeled l;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        l.scores.push_back(scores[i * n + j]);
        l.labels.push_back(truth[i * n + j]);
      }
  return l;
}

/// Precision-recall staircase over distinct thresholds: sum of
/// (R_t - R_prev) * P_t. Agrees with ranked AP when scores are distinct.
inline std::optional<double> ap_staircase(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth,
                                          std::size_t n) {
  const Labeled l = labeled(scores, truth, n);
  const double pos = static_cast<double>(std::count(l.labels.begin(), l.labels.end(), 1));
  if (pos == 0) return std::nullopt;
  std::set<double, std::greater<>> thresholds(l.scores.begin(), l.scores.end());
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, pp = 0.0;
    for (std::size_t k = 0; k < l.scores.size(); ++k) {
      if (l.scores[k] >= t) {
        pp += 1.0;
        tp += l.labels[k];
      }
    }
    const double recall = tp / pos;
    ap += (recall - prev_recall) * (tp / pp);
    prev_recall = recall;
  }
  return ap;
}

/// Trapezoid area under the ROC curve traced over distinct thresholds.
inline std::optional<double> auc_trapezoid(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth,
                                           std::size_t n) {
  const Labeled l = labeled(scores, truth, n);
  const double pos = static_cast<double>(std::count(l.labels.begin(), l.labels.end(), 1));
  const double neg = static_cast<double>(l.labels.size()) - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  std::set<double, std::greater<>> thresholds(l.scores.begin(), l.scores.end());
  double area = 0.0, px = 0.0, py = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t k = 0; k < l.scores.size(); ++k) {
      if (l.scores[k] >= t) (l.labels[k] ? tp : fp) += 1.0;
    }
    const double x = fp / neg, y = tp / pos;
    area += (x - px) * (y + py) / 2.0;
    px = x;
    py = y;
  }
  return area;
}

/// Orientation accuracy by walking unordered pairs.
inline std::optional<double> oa_pairs(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth,
                                      std::size_t n) {
  double right = 0.0, total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double fwd = scores[i * n + j], bwd = scores[j * n + i];
      const double credit_fwd = fwd > bwd ? 1.0 : (fwd < bwd ? 0.0 : 0.5);
      if (truth[i * n + j]) right += credit_fwd, total += 1.0;
      if (truth[j * n + i]) right += 1.0 - credit_fwd, total += 1.0;
    }
  if (total == 0) return std::nullopt;
  return right / total;
}

struct Agreement {
  std::size_t cases = 0;
  std::size_t shd_mismatches = 0;
  double ap_error = 0.0;
  double auc_error = 0.0;
  double oa_error = 0.0;
  bool undefined_mismatch = false;

  bool ok(double tol) const {
    return shd_mismatches == 0 && !undefined_mismatch && ap_error < tol && auc_error < tol && oa_error < tol;
  }
};

inline void compare(Agreement& a, const std::optional<double>& got, const std::optional<double>& want, double& err) {
  if (got.has_value() != want.has_value()) {
    a.undefined_mismatch = true;
    return;
  }
  if (got) err = std::max(err, std::abs(*got - *want));
}

inline std::vector<std::uint8_t> graph_from_code(std::size_t code, std::size_t n) {
  std::vector<std::uint8_t> adj(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t digit = code % 4;
      code /= 4;
      adj[i * n + j] = digit & 1;
      adj[j * n + i] = (digit >> 1) & 1;
    }
  return adj;
}

/// Score matrices for one truth: distinct continuous scores (for AP) and
/// scores quantized to a few levels so ties occur (for AUC and OA).
inline void check_case(Agreement& a, const std::vector<std::uint8_t>& truth, std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> distinct(n * n, 0.0), tied(n * n, 0.0);
  for (std::size_t k = 0; k < n * n; ++k) {
    distinct[k] = u(rng);
    tied[k] = std::floor(u(rng) * 4.0) / 4.0;
  }
  for (std::size_t i = 0; i < n; ++i) distinct[i * n + i] = tied[i * n + i] = 0.0;
  compare(a, average_precision(distinct, truth, n), ap_staircase(distinct, truth, n), a.ap_error);
  compare(a, roc_auc(tied, truth, n), auc_trapezoid(tied, truth, n), a.auc_error);
  compare(a, roc_auc(distinct, truth, n), auc_trapezoid(distinct, truth, n), a.auc_error);
  compare(a, orientation_accuracy(tied, truth, n), oa_pairs(tied, truth, n), a.oa_error);
  ++a.cases;
}

/// Every graph on n <= 4 nodes (all four states per pair) against the
/// oracles, SHD against breadth-first search from each truth, plus random n = 8
/// instances.
inline Agreement exhaustive_agreement(std::size_t random_cases = 100, std::uint64_t seed = 0) {
  Agreement a;
  Rng rng = make_rng(seed, 77);
  for (std::size_t n = 2; n <= 4; ++n) {
    const std::size_t P = n * (n - 1) / 2;
    std::size_t total = 1;
    for (std::size_t k = 0; k < P; ++k) total *= 4;
    for (std::size_t tc = 0; tc < total; ++tc) {
      const auto truth = graph_from_code(tc, n);
      check_case(a, truth, n, rng);
      const auto dist = shd_by_search(truth, n);
      for (std::size_t pc = 0; pc < total; ++pc) {
        const auto pred = graph_from_code(pc, n);
        if (shd(pred, truth, n) != static_cast<std::size_t>(dist[encode(pair_states(pred, n))])) ++a.shd_mismatches;
      }
    }
  }
  std::bernoulli_distribution coin(0.2);
  for (std::size_t c = 0; c < random_cases; ++c) {
    const std::size_t n = 8;
    std::vector<std::uint8_t> truth(n * n, 0), pred(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) {
          truth[i * n + j] = coin(rng);
          pred[i * n + j] = coin(rng);
        }
    check_case(a, truth, n, rng);
    // direct pair comparison for SHD at this size
    std::size_t want = 0;
    const auto ps = pair_states(pred, n), ts = pair_states(truth, n);
    for (std::size_t k = 0; k < ps.size(); ++k) want += ps[k] != ts[k];
    if (shd(pred, truth, n) != want) ++a.shd_mismatches;
  }
  return a;
}

}  // namespace causcale::oracle

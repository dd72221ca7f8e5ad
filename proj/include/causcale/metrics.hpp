// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Structure-learning metrics over n x n score / adjacency matrices (row-major,
// entry (i, j) scores the edge i -> j) and the CORR / INVCOV reference baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "causcale/rng.hpp"
#include "causcale/simulator.hpp"

namespace causcale {

class MetricInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void check_binary(std::span<const std::uint8_t> adj, std::size_t n, const char* what) {
  if (adj.size() != n * n) throw MetricInputError(std::string(what) + ": expected n*n entries");
  for (std::size_t i = 0; i < n * n; ++i) {
    if (adj[i] > 1) throw MetricInputError(std::string(what) + ": adjacency entries must be 0 or 1");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (adj[i * n + i]) throw MetricInputError(std::string(what) + ": nonzero diagonal");
  }
}

inline void check_scores(std::span<const double> scores, std::size_t n) {
  if (scores.size() != n * n) throw MetricInputError("scores: expected n*n entries");
  for (double s : scores) {
    if (!std::isfinite(s)) throw MetricInputError("scores must be finite");
  }
}

}  // namespace detail

/// Structural Hamming distance. Per unordered pair: 0 when the two graphs agree,
/// otherwise 1 (a missing, extra or reversed edge each cost one).
inline std::size_t shd(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, std::size_t n) {
  detail::check_binary(pred, n, "shd prediction");
  detail::check_binary(truth, n, "shd truth");
  std::size_t d = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same = pred[i * n + j] == truth[i * n + j] && pred[j * n + i] == truth[j * n + i];
      if (!same) ++d;
    }
  }
  return d;
}

inline std::size_t shd(const CausalGraph& pred, const CausalGraph& truth) {
  if (pred.n != truth.n) throw MetricInputError("shd: graphs differ in size");
  return shd(pred.adj, truth.adj, pred.n);
}

/// Off-diagonal (score, label) candidates in row-major order.
struct Candidates {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::size_t positives = 0;
};

inline Candidates off_diagonal(std::span<const double> scores, std::span<const std::uint8_t> truth, std::size_t n) {
  detail::check_scores(scores, n);
  detail::check_binary(truth, n, "truth");
  Candidates c;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      c.scores.push_back(scores[i * n + j]);
      c.labels.push_back(truth[i * n + j]);
      c.positives += truth[i * n + j];
    }
  }
  return c;
}

inline constexpr std::uint64_t kTieShuffleSeed = 0x5eedULL;

/// Descending-score ranking; ties are broken by a fixed-seed shuffle followed by
/// a stable sort.
inline std::vector<std::size_t> rank_descending(std::span<const double> scores, std::uint64_t seed = kTieShuffleSeed) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 20);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

/// Average precision over the n(n-1) directed candidates. Undefined without positives.
inline std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> truth,
                                               std::size_t n, std::uint64_t tie_seed = kTieShuffleSeed) {
  const Candidates c = off_diagonal(scores, truth, n);
  if (c.positives == 0) return std::nullopt;
  const auto order = rank_descending(c.scores, tie_seed);
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (c.labels[order[k]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(c.positives);
}

/// ROC area via the Mann-Whitney statistic with midranks for ties. Undefined
/// unless both classes are present.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> truth, std::size_t n) {
  const Candidates c = off_diagonal(scores, truth, n);
  const std::size_t total = c.scores.size();
  const std::size_t pos = c.positives, neg = total - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c.scores[a] < c.scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t k = 0; k < total;) {
    std::size_t e = k;
    while (e < total && c.scores[order[e]] == c.scores[order[k]]) ++e;
    const double midrank = 0.5 * static_cast<double>(k + 1 + e);  // mean of ranks k+1 .. e
    for (std::size_t t = k; t < e; ++t) {
      if (c.labels[order[t]]) rank_sum += midrank;
    }
    k = e;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

/// Fraction of true edges i -> j with score(i, j) > score(j, i); ties count 0.5.
inline std::optional<double> orientation_accuracy(std::span<const double> scores, std::span<const std::uint8_t> truth,
                                                  std::size_t n) {
  detail::check_scores(scores, n);
  detail::check_binary(truth, n, "truth");
  double correct = 0.0;
  std::size_t edges = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || !truth[i * n + j]) continue;
      ++edges;
      const double a = scores[i * n + j], b = scores[j * n + i];
      correct += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    }
  }
  if (edges == 0) return std::nullopt;
  return correct / static_cast<double>(edges);
}

/// True when the directed graph has a cycle (iterative three-colour DFS).
inline bool has_cycle(std::span<const std::uint8_t> adj, std::size_t n) {
  detail::check_binary(adj, n, "cyclicity");
  enum : std::uint8_t { white, grey, black };
  std::vector<std::uint8_t> colour(n, white);
  std::vector<std::pair<std::size_t, std::size_t>> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (colour[s] != white) continue;
    stack.push_back({s, 0});
    colour[s] = grey;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next == n) {
        colour[v] = black;
        stack.pop_back();
        continue;
      }
      const std::size_t w = next++;
      if (!adj[v * n + w]) continue;
      if (colour[w] == grey) return true;
      if (colour[w] == white) {
        colour[w] = grey;
        stack.push_back({w, 0});
      }
    }
  }
  return false;
}

inline double cyclicity(const CausalGraph& g) { return has_cycle(g.adj, g.n) ? 1.0 : 0.0; }

inline double cyclicity_fraction(std::span<const CausalGraph> graphs) {
  if (graphs.empty()) return 0.0;
  double t = 0.0;
  for (const auto& g : graphs) t += cyclicity(g);
  return t / static_cast<double>(graphs.size());
}

// ---------------------------------------------------------------------------
// Reference baselines

struct BaselineResult {
  std::size_t n = 0;
  std::vector<double> scores;  // symmetric, zero diagonal
  CausalGraph graph;           // scores above the sparsity-matched quantile
};

/// Linear-interpolated q-quantile (0 <= q <= 1) of the values.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Keeps entries strictly above the (1 - e / n^2) quantile of all n^2 scores.
inline CausalGraph threshold_by_quantile(std::span<const double> scores, std::size_t n, std::size_t true_edges) {
  const double q = 1.0 - static_cast<double>(true_edges) / static_cast<double>(n * n);
  const double thr = quantile({scores.begin(), scores.end()}, q);
  CausalGraph g(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && scores[i * n + j] > thr) g.set_edge(i, j);
  return g;
}

namespace detail {
inline BaselineResult finish_baseline(const Eigen::MatrixXd& m, std::size_t true_edges) {
  BaselineResult r;
  r.n = static_cast<std::size_t>(m.rows());
  r.scores.assign(r.n * r.n, 0.0);
  for (std::size_t i = 0; i < r.n; ++i)
    for (std::size_t j = 0; j < r.n; ++j)
      if (i != j) r.scores[i * r.n + j] = std::abs(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  r.graph = threshold_by_quantile(r.scores, r.n, true_edges);
  return r;
}
}  // namespace detail

/// |Pearson correlation| scores.
inline BaselineResult corr_baseline(const Dataset& ds, std::size_t true_edges) {
  const Eigen::MatrixXd cov = empirical_covariance(ds);
  const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  for (Eigen::Index i = 0; i < sd.size(); ++i) {
    if (!(sd(i) > 1e-12)) {
      throw DegenerateColumnError(static_cast<std::size_t>(i), "corr_baseline: variable " + std::to_string(i) + " is constant");
    }
  }
  const Eigen::MatrixXd corr = cov.cwiseQuotient(sd * sd.transpose());
  return detail::finish_baseline(corr, true_edges);
}

/// |inverse covariance| scores, sharing the ridge escalation of compute_prior.
inline BaselineResult invcov_baseline(const Dataset& ds, std::size_t true_edges) {
  const GraphPrior p = compute_prior(ds);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(p.n), static_cast<Eigen::Index>(p.n));
  for (std::size_t i = 0; i < p.n; ++i)
    for (std::size_t j = 0; j < p.n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p.at(i, j);
  return detail::finish_baseline(m, true_edges);
}

// ---------------------------------------------------------------------------
// Reports

struct MetricReport {
  std::size_t shd = 0;
  std::optional<double> map;
  std::optional<double> auc;
  std::optional<double> oa;  // absent for undirected baselines
  double cyclicity = 0.0;
  double wallclock_s = 0.0;
};

/// Scores for mAP / AUC / OA, binary graph for SHD and cyclicity.
inline MetricReport evaluate(std::span<const double> scores, const CausalGraph& decoded, const CausalGraph& truth,
                             bool directed = true) {
  MetricReport r;
  r.shd = shd(decoded, truth);
  r.map = average_precision(scores, truth.adj, truth.n);
  r.auc = roc_auc(scores, truth.adj, truth.n);
  if (directed) r.oa = orientation_accuracy(scores, truth.adj, truth.n);
  r.cyclicity = cyclicity(decoded);
  return r;
}

}  // namespace causcale

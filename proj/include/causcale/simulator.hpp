// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Synthetic structural causal models: random DAGs, mechanisms, ancestral
// sampling with perfect single-node interventions, standardization, and the
// inverse-covariance graph prior.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "causcale/rng.hpp"

namespace causcale {

class InfeasibleGraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateColumnError : public std::runtime_error {
 public:
  DegenerateColumnError(std::size_t column, const std::string& msg) : std::runtime_error(msg), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

class SingularPriorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GraphFamily { er, sf, sbm };

inline GraphFamily parse_family(const std::string& s) {
  if (s == "er" || s == "ER") return GraphFamily::er;
  if (s == "sf" || s == "SF") return GraphFamily::sf;
  if (s == "sbm" || s == "SBM") return GraphFamily::sbm;
  throw std::invalid_argument("unknown graph family '" + s + "' (expected er, sf or sbm)");
}

inline std::string to_string(GraphFamily f) {
  switch (f) {
    case GraphFamily::er: return "er";
    case GraphFamily::sf: return "sf";
    case GraphFamily::sbm: return "sbm";
  }
  return "?";
}

/// Binary adjacency over n nodes; adj(i, j) == 1 means i -> j.
struct CausalGraph {
  std::size_t n = 0;
  std::vector<std::uint8_t> adj;
  GraphFamily family = GraphFamily::er;

  CausalGraph() = default;
  explicit CausalGraph(std::size_t nodes, GraphFamily fam = GraphFamily::er)
      : n(nodes), adj(nodes * nodes, 0), family(fam) {}

  bool edge(std::size_t i, std::size_t j) const { return adj[i * n + j] != 0; }
  void set_edge(std::size_t i, std::size_t j, bool on = true) { adj[i * n + j] = on ? 1 : 0; }

  std::size_t edge_count() const {
    return static_cast<std::size_t>(std::count(adj.begin(), adj.end(), std::uint8_t{1}));
  }

  std::vector<std::size_t> parents(std::size_t j) const {
    std::vector<std::size_t> pa;
    for (std::size_t i = 0; i < n; ++i) {
      if (edge(i, j)) pa.push_back(i);
    }
    return pa;
  }

  /// Kahn's algorithm; empty when the graph has a cycle.
  std::optional<std::vector<std::size_t>> topological_order() const {
    std::vector<std::size_t> indeg(n, 0), order;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) indeg[j] += edge(i, j);
    std::vector<std::size_t> ready;
    for (std::size_t j = n; j-- > 0;) {
      if (indeg[j] == 0) ready.push_back(j);
    }
    while (!ready.empty()) {
      const std::size_t v = ready.back();
      ready.pop_back();
      order.push_back(v);
      for (std::size_t j = n; j-- > 0;) {
        if (edge(v, j) && --indeg[j] == 0) ready.push_back(j);
      }
    }
    if (order.size() != n) return std::nullopt;
    return order;
  }

  bool is_acyclic() const { return topological_order().has_value(); }
};

namespace detail {

inline void orient_by_permutation(CausalGraph& g, const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                  const std::vector<std::size_t>& perm) {
  // perm[pos] = node; edges point from the lower to the higher position.
  std::vector<std::size_t> pos(g.n);
  for (std::size_t p = 0; p < g.n; ++p) pos[perm[p]] = p;
  for (auto [a, b] : pairs) {
    if (pos[a] < pos[b]) {
      g.set_edge(a, b);
    } else {
      g.set_edge(b, a);
    }
  }
}

}  // namespace detail

/// Samples a DAG. ER and SBM hit `e` in expectation; SF hits it exactly.
inline CausalGraph sample_graph(GraphFamily family, std::size_t n, std::size_t e, std::uint64_t seed) {
  if (n < 2) throw InfeasibleGraphError("graph needs at least 2 nodes");
  const std::size_t max_edges = n * (n - 1) / 2;
  if (e > max_edges) {
    throw InfeasibleGraphError("edge count " + std::to_string(e) + " exceeds n(n-1)/2 = " + std::to_string(max_edges));
  }
  Rng rng = make_rng(seed, 1);
  CausalGraph g(n, family);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  switch (family) {
    case GraphFamily::er: {
      const double p = static_cast<double>(e) / static_cast<double>(max_edges);
      std::bernoulli_distribution coin(p);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          if (coin(rng)) pairs.emplace_back(i, j);
      break;
    }
    case GraphFamily::sf: {
      // Preferential attachment in insertion order. Node t may link to at most t
      // earlier nodes; the e edges are spread as evenly as those caps allow.
      std::vector<std::size_t> quota(n, 0);
      std::size_t remaining = e;
      while (remaining > 0) {
        for (std::size_t t = 1; t < n && remaining > 0; ++t) {
          if (quota[t] < t) {
            ++quota[t];
            --remaining;
          }
        }
      }
      std::vector<double> degree(n, 0.0);
      for (std::size_t t = 1; t < n; ++t) {
        std::vector<std::size_t> chosen;
        std::vector<double> w(t);
        for (std::size_t k = 0; k < quota[t]; ++k) {
          for (std::size_t s = 0; s < t; ++s) {
            const bool taken = std::find(chosen.begin(), chosen.end(), s) != chosen.end();
            w[s] = taken ? 0.0 : degree[s] + 1.0;
          }
          std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
          chosen.push_back(pick(rng));
        }
        for (std::size_t s : chosen) {
          pairs.emplace_back(s, t);
          degree[s] += 1.0;
          degree[t] += 1.0;
        }
      }
      break;
    }
    case GraphFamily::sbm: {
      const std::size_t blocks = std::max<std::size_t>(2, n / 10);
      std::vector<std::size_t> block(n);
      std::uniform_int_distribution<std::size_t> assign(0, blocks - 1);
      for (auto& b : block) b = assign(rng);
      std::size_t within = 0, between = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) (block[i] == block[j] ? within : between)++;
      // Within-block probability is 5x the between-block one.
      const double denom = static_cast<double>(between) + 5.0 * static_cast<double>(within);
      const double p_out = std::min(1.0, static_cast<double>(e) / denom);
      const double p_in = std::min(1.0, 5.0 * p_out);
      std::bernoulli_distribution in_coin(p_in), out_coin(p_out);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          if (block[i] == block[j] ? in_coin(rng) : out_coin(rng)) pairs.emplace_back(i, j);
      break;
    }
  }
  detail::orient_by_permutation(g, pairs, perm);
  return g;
}

// ---------------------------------------------------------------------------
// Mechanisms

enum class MechanismKind { linear, nn_additive, nn_nonadditive, sigmoid_additive, polynomial };

inline MechanismKind parse_mechanism(const std::string& s) {
  if (s == "linear") return MechanismKind::linear;
  if (s == "nn_additive" || s == "nn-add" || s == "nn_add") return MechanismKind::nn_additive;
  if (s == "nn_nonadditive" || s == "nn") return MechanismKind::nn_nonadditive;
  if (s == "sigmoid_additive" || s == "sigmoid") return MechanismKind::sigmoid_additive;
  if (s == "polynomial" || s == "poly") return MechanismKind::polynomial;
  throw std::invalid_argument("unknown mechanism '" + s + "'");
}

inline std::string to_string(MechanismKind k) {
  switch (k) {
    case MechanismKind::linear: return "linear";
    case MechanismKind::nn_additive: return "nn_additive";
    case MechanismKind::nn_nonadditive: return "nn_nonadditive";
    case MechanismKind::sigmoid_additive: return "sigmoid_additive";
    case MechanismKind::polynomial: return "polynomial";
  }
  return "?";
}

inline constexpr std::size_t kMechanismHidden = 16;
inline constexpr double kNoiseMultiplier = 0.4;

/// Parameters of one node's conditional. Layout of `weights` by kind:
///   linear, sigmoid_additive: one coefficient per parent.
///   polynomial: [bias, linear coef per parent..., quadratic coef per parent...].
///   nn kinds: W1 (hidden x inputs, row-major), b1 (hidden), w2 (hidden), b2;
///     inputs are the parents, plus the noise draw for nn_nonadditive.
struct NodeMechanism {
  std::vector<std::size_t> parents;
  std::vector<double> weights;
  double prelu_slope = 0.25;
  double sigma = 1.0;  // noise is kNoiseMultiplier * N(0, sigma^2)
};

struct Mechanism {
  MechanismKind kind = MechanismKind::linear;
  std::vector<NodeMechanism> nodes;

  double evaluate(std::size_t j, const std::vector<double>& row, double noise) const {
    const NodeMechanism& nm = nodes[j];
    const auto& w = nm.weights;
    const std::size_t p = nm.parents.size();
    switch (kind) {
      case MechanismKind::linear: {
        double v = noise;
        for (std::size_t k = 0; k < p; ++k) v += w[k] * row[nm.parents[k]];
        return v;
      }
      case MechanismKind::sigmoid_additive: {
        double v = noise;
        for (std::size_t k = 0; k < p; ++k) v += w[k] / (1.0 + std::exp(-row[nm.parents[k]]));
        return v;
      }
      case MechanismKind::polynomial: {
        double v = noise + w[0];
        for (std::size_t k = 0; k < p; ++k) {
          const double x = row[nm.parents[k]];
          v += w[1 + k] * x + w[1 + p + k] * x * x;
        }
        return v;
      }
      case MechanismKind::nn_additive:
      case MechanismKind::nn_nonadditive: {
        const bool with_noise = kind == MechanismKind::nn_nonadditive;
        const std::size_t in = p + (with_noise ? 1 : 0);
        const std::size_t h = kMechanismHidden;
        const double* w1 = w.data();
        const double* b1 = w1 + h * in;
        const double* w2 = b1 + h;
        const double b2 = w2[h];
        double out = b2;
        for (std::size_t u = 0; u < h; ++u) {
          double a = b1[u];
          for (std::size_t k = 0; k < p; ++k) a += w1[u * in + k] * row[nm.parents[k]];
          if (with_noise) a += w1[u * in + p] * noise;
          out += w2[u] * (a > 0.0 ? a : nm.prelu_slope * a);
        }
        return with_noise ? out : out + noise;
      }
    }
    return 0.0;
  }
};

/// Signed magnitude in [0.5, 1.5] for linear and sigmoid coefficients.
inline double signed_weight(Rng& rng) {
  const double mag = uniform(rng, 0.5, 1.5);
  return std::bernoulli_distribution(0.5)(rng) ? mag : -mag;
}

inline Mechanism sample_mechanism(const CausalGraph& g, MechanismKind kind, std::uint64_t seed) {
  Rng rng = make_rng(seed, 2);
  Mechanism mech;
  mech.kind = kind;
  mech.nodes.resize(g.n);
  for (std::size_t j = 0; j < g.n; ++j) {
    NodeMechanism& nm = mech.nodes[j];
    nm.parents = g.parents(j);
    nm.sigma = std::sqrt(uniform(rng, 1.0, 2.0));
    const std::size_t p = nm.parents.size();
    switch (kind) {
      case MechanismKind::linear:
      case MechanismKind::sigmoid_additive:
        for (std::size_t k = 0; k < p; ++k) nm.weights.push_back(signed_weight(rng));
        break;
      case MechanismKind::polynomial:
        nm.weights.resize(1 + 2 * p);
        for (auto& w : nm.weights) w = uniform(rng, -1.0, 1.0);
        break;
      case MechanismKind::nn_additive:
      case MechanismKind::nn_nonadditive: {
        const std::size_t in = p + (kind == MechanismKind::nn_nonadditive ? 1 : 0);
        nm.weights.resize(kMechanismHidden * in + 2 * kMechanismHidden + 1);
        for (auto& w : nm.weights) w = uniform(rng, -1.0, 1.0);
        nm.prelu_slope = uniform(rng, 0.1, 0.9);
        break;
      }
    }
  }
  return mech;
}

// ---------------------------------------------------------------------------
// Datasets

/// m samples x n variables, row-major, with the matching intervention mask.
struct Dataset {
  std::size_t m = 0, n = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
  bool standardized = false;

  Dataset() = default;
  Dataset(std::size_t rows, std::size_t cols) : m(rows), n(cols), values(rows * cols, 0.0), mask(rows * cols, 0) {}

  double& value(std::size_t r, std::size_t c) { return values[r * n + c]; }
  double value(std::size_t r, std::size_t c) const { return values[r * n + c]; }
  bool intervened(std::size_t r, std::size_t c) const { return mask[r * n + c] != 0; }

  std::size_t intervened_rows() const {
    std::size_t k = 0;
    for (std::size_t r = 0; r < m; ++r) {
      if (std::any_of(mask.begin() + r * n, mask.begin() + (r + 1) * n, [](auto b) { return b != 0; })) ++k;
    }
    return k;
  }
};

/// How the observational:interventional "1:n" split is read.
enum class InterventionRatio {
  interventional_majority,  // fraction n/(n+1), capped at 0.9
  observational_majority,   // fraction 1/(n+1)
};

inline double default_interventional_fraction(std::size_t n, InterventionRatio ratio = InterventionRatio::interventional_majority) {
  const double nn = static_cast<double>(n);
  if (ratio == InterventionRatio::observational_majority) return 1.0 / (nn + 1.0);
  return std::min(0.9, nn / (nn + 1.0));
}

/// Ancestral sampling. ceil(m * fraction) rows carry a perfect intervention on a
/// single node (targets cycle over all nodes); the intervened value is drawn from
/// Uniform(-1, 1) regardless of its parents. Rows are shuffled afterwards.
inline Dataset sample_dataset(const CausalGraph& g, const Mechanism& mech, std::size_t m, double interventional_fraction,
                              std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("sample_dataset: need at least one sample");
  if (mech.nodes.size() != g.n) {
    throw std::invalid_argument("sample_dataset: mechanism has " + std::to_string(mech.nodes.size()) +
                                " nodes, graph has " + std::to_string(g.n));
  }
  if (interventional_fraction < 0.0 || interventional_fraction > 1.0) {
    throw std::invalid_argument("interventional fraction must lie in [0, 1]");
  }
  for (std::size_t j = 0; j < g.n; ++j) {
    if (mech.nodes[j].parents != g.parents(j)) {
      throw std::invalid_argument("sample_dataset: mechanism parents disagree with graph at node " + std::to_string(j));
    }
  }
  const auto order = g.topological_order();
  if (!order) throw std::invalid_argument("sample_dataset: graph is cyclic");

  Rng rng = make_rng(seed, 3);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = g.n;
  const auto n_int = static_cast<std::size_t>(std::ceil(static_cast<double>(m) * interventional_fraction - 1e-9));

  Dataset ds(m, n);
  std::vector<double> row(n);
  for (std::size_t r = 0; r < m; ++r) {
    const bool is_int = r < n_int;
    const std::size_t target = is_int ? r % n : n;
    for (std::size_t j : *order) {
      const double noise = kNoiseMultiplier * mech.nodes[j].sigma * normal(rng);
      // Roots and intervened nodes are both Uniform(-1, 1).
      if (j == target || mech.nodes[j].parents.empty()) {
        row[j] = unif(rng);
      } else {
        row[j] = mech.evaluate(j, row, noise);
      }
    }
    std::copy(row.begin(), row.end(), ds.values.begin() + r * n);
    if (is_int) ds.mask[r * n + target] = 1;
  }

  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Dataset shuffled(m, n);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(ds.values.begin() + perm[r] * n, n, shuffled.values.begin() + r * n);
    std::copy_n(ds.mask.begin() + perm[r] * n, n, shuffled.mask.begin() + r * n);
  }
  for (double v : shuffled.values) {
    if (!std::isfinite(v)) throw std::runtime_error("sample_dataset: non-finite sample (mechanism diverged)");
  }
  return shuffled;
}

/// Column-wise (x - mean) / std with population statistics. The mask is kept.
inline Dataset standardize(const Dataset& in) {
  Dataset out = in;
  const double mm = static_cast<double>(in.m);
  for (std::size_t c = 0; c < in.n; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < in.m; ++r) mu += in.value(r, c);
    mu /= mm;
    double var = 0.0;
    for (std::size_t r = 0; r < in.m; ++r) {
      const double d = in.value(r, c) - mu;
      var += d * d;
    }
    const double sd = std::sqrt(var / mm);
    if (!(sd > 1e-12)) {
      throw DegenerateColumnError(c, "standardize: variable " + std::to_string(c) + " is constant");
    }
    for (std::size_t r = 0; r < in.m; ++r) out.value(r, c) = (in.value(r, c) - mu) / sd;
  }
  out.standardized = true;
  return out;
}

// ---------------------------------------------------------------------------
// Prior

struct GraphPrior {
  std::size_t n = 0;
  std::vector<double> rho;  // n x n, row-major
  double ridge = 0.0;

  double at(std::size_t i, std::size_t j) const { return rho[i * n + j]; }
};

inline constexpr double kEscalationRidge = 1e-3;

/// Empirical covariance with 1/m normalization.
inline Eigen::MatrixXd empirical_covariance(const Dataset& ds) {
  const auto rows = static_cast<Eigen::Index>(ds.m), cols = static_cast<Eigen::Index>(ds.n);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(ds.values.data(), rows,
                                                                                             cols);
  const Eigen::RowVectorXd mu = X.colwise().mean();
  const Eigen::MatrixXd centered = X.rowwise() - mu;
  return (centered.transpose() * centered) / static_cast<double>(ds.m);
}

namespace detail {

inline std::optional<Eigen::MatrixXd> try_invert_spd(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  if (!(llt.rcond() > 1e-12)) return std::nullopt;
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
  if (!inv.allFinite()) return std::nullopt;
  return inv;
}

}  // namespace detail

/// rho = (Cov(D) + ridge I)^-1. A zero ridge escalates to 1e-3 when the
/// covariance is numerically singular; failure beyond that is an error.
inline GraphPrior compute_prior(const Dataset& ds, double ridge = 0.0) {
  if (ds.m < 2) throw std::invalid_argument("compute_prior: need at least 2 samples");
  const Eigen::MatrixXd cov = empirical_covariance(ds);
  const auto eye = Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
  auto inv = detail::try_invert_spd(cov + ridge * eye);
  if (!inv && ridge < kEscalationRidge) {
    ridge = kEscalationRidge;
    inv = detail::try_invert_spd(cov + ridge * eye);
  }
  if (!inv) throw SingularPriorError("compute_prior: covariance is singular even with ridge " + std::to_string(ridge));
  const Eigen::MatrixXd sym = 0.5 * (*inv + inv->transpose());
  GraphPrior p;
  p.n = ds.n;
  p.ridge = ridge;
  p.rho.resize(ds.n * ds.n);
  for (std::size_t i = 0; i < ds.n; ++i)
    for (std::size_t j = 0; j < ds.n; ++j)
      p.rho[i * ds.n + j] = sym(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return p;
}

}  // namespace causcale

// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "causcale/simulator.hpp"

namespace causcale {
namespace {

Mechanism chain_mechanism(double w, double sigma) {
  Mechanism m;
  m.kind = MechanismKind::linear;
  m.nodes.resize(2);
  m.nodes[0].sigma = sigma;
  m.nodes[1].parents = {0};
  m.nodes[1].weights = {w};
  m.nodes[1].sigma = sigma;
  return m;
}

CausalGraph two_node_chain() {
  CausalGraph g(2);
  g.set_edge(0, 1);
  return g;
}

double column_mean(const Dataset& ds, std::size_t c) {
  double s = 0.0;
  for (std::size_t r = 0; r < ds.m; ++r) s += ds.value(r, c);
  return s / static_cast<double>(ds.m);
}

TEST(Graph, CompleteAndEmptyErdosRenyi) {
  const CausalGraph full = sample_graph(GraphFamily::er, 3, 3, 1);
  EXPECT_EQ(full.edge_count(), 3u);
  EXPECT_TRUE(full.is_acyclic());
  EXPECT_EQ(sample_graph(GraphFamily::er, 10, 0, 1).edge_count(), 0u);
}

TEST(Graph, ErdosRenyiMeanEdgeCount) {
  double total = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) total += static_cast<double>(sample_graph(GraphFamily::er, 20, 40, s).edge_count());
  EXPECT_NEAR(total / 1000.0, 40.0, 2.0);
}

TEST(Graph, EveryFamilyIsAcyclicWithZeroDiagonal) {
  for (auto fam : {GraphFamily::er, GraphFamily::sf, GraphFamily::sbm}) {
    for (std::uint64_t s = 0; s < 50; ++s) {
      const CausalGraph g = sample_graph(fam, 25, 50, s);
      EXPECT_TRUE(g.is_acyclic());
      for (std::size_t i = 0; i < g.n; ++i) EXPECT_FALSE(g.edge(i, i));
      const auto order = *g.topological_order();
      std::vector<std::size_t> pos(g.n);
      for (std::size_t p = 0; p < g.n; ++p) pos[order[p]] = p;
      for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j)
          if (g.edge(i, j)) EXPECT_LT(pos[i], pos[j]);
    }
  }
}

TEST(Graph, ScaleFreeHitsEdgeCountExactly) {
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(sample_graph(GraphFamily::sf, 30, 60, s).edge_count(), 60u);
}

TEST(Graph, StochasticBlockMeanEdgeCount) {
  double total = 0.0;
  for (std::uint64_t s = 0; s < 500; ++s) total += static_cast<double>(sample_graph(GraphFamily::sbm, 30, 45, s).edge_count());
  EXPECT_NEAR(total / 500.0, 45.0, 0.05 * 45.0);
}

TEST(Graph, InfeasibleRequests) {
  EXPECT_THROW(sample_graph(GraphFamily::er, 4, 7, 0), InfeasibleGraphError);
  EXPECT_THROW(sample_graph(GraphFamily::er, 1, 0, 0), InfeasibleGraphError);
  EXPECT_THROW(parse_family("lattice"), std::invalid_argument);
  EXPECT_THROW(parse_mechanism("gp"), std::invalid_argument);
}

TEST(Graph, CycleDetection) {
  CausalGraph g(3);
  g.set_edge(0, 1);
  g.set_edge(1, 2);
  EXPECT_TRUE(g.is_acyclic());
  g.set_edge(2, 0);
  EXPECT_FALSE(g.is_acyclic());
}

TEST(Mechanisms, NoiseVarianceDrawnFromOneToTwo) {
  const CausalGraph g = sample_graph(GraphFamily::er, 50, 100, 3);
  for (auto kind : {MechanismKind::linear, MechanismKind::nn_additive, MechanismKind::nn_nonadditive,
                    MechanismKind::sigmoid_additive, MechanismKind::polynomial}) {
    const Mechanism m = sample_mechanism(g, kind, 4);
    for (const auto& nm : m.nodes) {
      EXPECT_GE(nm.sigma * nm.sigma, 1.0);
      EXPECT_LE(nm.sigma * nm.sigma, 2.0);
      for (double w : nm.weights) EXPECT_TRUE(std::isfinite(w));
    }
  }
}

TEST(Mechanisms, EveryKindSamplesFiniteData) {
  const CausalGraph g = sample_graph(GraphFamily::er, 15, 30, 5);
  for (auto kind : {MechanismKind::linear, MechanismKind::nn_additive, MechanismKind::nn_nonadditive,
                    MechanismKind::sigmoid_additive, MechanismKind::polynomial}) {
    const Dataset ds = sample_dataset(g, sample_mechanism(g, kind, 6), 200, 0.5, 7);
    for (double v : ds.values) ASSERT_TRUE(std::isfinite(v)) << to_string(kind);
  }
}

TEST(Sampling, NoiselessChainPropagatesExactly) {
  const Dataset ds = sample_dataset(two_node_chain(), chain_mechanism(2.0, 0.0), 500, 0.0, 1);
  for (std::size_t r = 0; r < ds.m; ++r) EXPECT_DOUBLE_EQ(ds.value(r, 1), 2.0 * ds.value(r, 0));
}

TEST(Sampling, RootsAreUniformOnMinusOneOne) {
  const CausalGraph g(4);
  const Dataset ds = sample_dataset(g, sample_mechanism(g, MechanismKind::linear, 1), 10000, 0.0, 2);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_LT(std::abs(column_mean(ds, c)), 0.05);
    for (std::size_t r = 0; r < ds.m; ++r) {
      EXPECT_GE(ds.value(r, c), -1.0);
      EXPECT_LE(ds.value(r, c), 1.0);
    }
  }
}

TEST(Sampling, InterventionsCutParentDependence) {
  const Dataset ds = sample_dataset(two_node_chain(), chain_mechanism(1.5, 1.0), 20000, 1.0, 3);
  // rows where node 1 is intervened: regress x1 on x0
  double sxx = 0.0, sxy = 0.0, mx = 0.0, my = 0.0;
  std::size_t k = 0;
  for (std::size_t r = 0; r < ds.m; ++r) {
    if (!ds.intervened(r, 1)) continue;
    mx += ds.value(r, 0);
    my += ds.value(r, 1);
    ++k;
  }
  ASSERT_GT(k, 5000u);
  mx /= static_cast<double>(k);
  my /= static_cast<double>(k);
  for (std::size_t r = 0; r < ds.m; ++r) {
    if (!ds.intervened(r, 1)) continue;
    sxx += (ds.value(r, 0) - mx) * (ds.value(r, 0) - mx);
    sxy += (ds.value(r, 0) - mx) * (ds.value(r, 1) - my);
  }
  EXPECT_LT(std::abs(sxy / sxx), 0.05);
}

TEST(Sampling, MaskRowsMatchFraction) {
  const CausalGraph g = sample_graph(GraphFamily::er, 6, 6, 4);
  for (double f : {0.0, 0.25, 6.0 / 7.0, 1.0}) {
    const Dataset ds = sample_dataset(g, sample_mechanism(g, MechanismKind::linear, 4), 101, f, 5);
    EXPECT_EQ(ds.intervened_rows(), static_cast<std::size_t>(std::ceil(101 * f - 1e-9)));
    for (std::size_t r = 0; r < ds.m; ++r) {
      std::size_t ones = 0;
      for (std::size_t c = 0; c < ds.n; ++c) ones += ds.intervened(r, c);
      EXPECT_LE(ones, 1u);
    }
  }
}

TEST(Sampling, InterventionTargetsCoverAllNodes) {
  const CausalGraph g = sample_graph(GraphFamily::er, 5, 5, 6);
  const Dataset ds = sample_dataset(g, sample_mechanism(g, MechanismKind::linear, 6), 100, 0.5, 6);
  for (std::size_t c = 0; c < 5; ++c) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ds.m; ++r) hits += ds.intervened(r, c);
    EXPECT_EQ(hits, 10u);
  }
}

TEST(Sampling, MarkovFactorizationSlope) {
  const double w = 1.3;
  const Dataset ds = sample_dataset(two_node_chain(), chain_mechanism(w, 1.2), 100000, 0.0, 8);
  const double m0 = column_mean(ds, 0), m1 = column_mean(ds, 1);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t r = 0; r < ds.m; ++r) {
    sxx += (ds.value(r, 0) - m0) * (ds.value(r, 0) - m0);
    sxy += (ds.value(r, 0) - m0) * (ds.value(r, 1) - m1);
  }
  const double slope = sxy / sxx;
  double rss = 0.0;
  for (std::size_t r = 0; r < ds.m; ++r) {
    const double e = ds.value(r, 1) - m1 - slope * (ds.value(r, 0) - m0);
    rss += e * e;
  }
  const double se = std::sqrt(rss / static_cast<double>(ds.m - 2) / sxx);
  EXPECT_LT(std::abs(slope - w), 3.0 * se);
}

TEST(Sampling, SameSeedSameData) {
  const CausalGraph g = sample_graph(GraphFamily::sf, 8, 10, 9);
  const Mechanism m = sample_mechanism(g, MechanismKind::nn_nonadditive, 9);
  const Dataset a = sample_dataset(g, m, 50, 0.5, 9), b = sample_dataset(g, m, 50, 0.5, 9);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_THROW(sample_dataset(g, m, 0, 0.5, 9), std::invalid_argument);
}

TEST(Standardize, SimpleColumnAndIdempotence) {
  Dataset ds(2, 1);
  ds.values = {0.0, 2.0};
  const Dataset s = standardize(ds);
  EXPECT_DOUBLE_EQ(s.values[0], -1.0);
  EXPECT_DOUBLE_EQ(s.values[1], 1.0);

  const CausalGraph g = sample_graph(GraphFamily::er, 6, 8, 1);
  const Dataset raw = sample_dataset(g, sample_mechanism(g, MechanismKind::polynomial, 1), 500, 0.5, 1);
  const Dataset once = standardize(raw), twice = standardize(once);
  for (std::size_t c = 0; c < 6; ++c) {
    double mu = 0.0, var = 0.0;
    for (std::size_t r = 0; r < 500; ++r) mu += once.value(r, c) / 500.0;
    for (std::size_t r = 0; r < 500; ++r) var += std::pow(once.value(r, c) - mu, 2) / 500.0;
    EXPECT_LT(std::abs(mu), 1e-8);
    EXPECT_NEAR(std::sqrt(var), 1.0, 1e-6);
  }
  for (std::size_t i = 0; i < once.values.size(); ++i) EXPECT_NEAR(once.values[i], twice.values[i], 1e-10);
  EXPECT_EQ(once.mask, raw.mask);
}

TEST(Standardize, ConstantColumnNamesVariable) {
  Dataset ds(3, 2);
  ds.values = {1, 5, 2, 5, 3, 5};
  try {
    standardize(ds);
    FAIL();
  } catch (const DegenerateColumnError& e) {
    EXPECT_EQ(e.column(), 1u);
  }
}

TEST(Prior, IdentityCovarianceGivesIdentity) {
  Dataset ds(4, 2);
  ds.values = {1, 1, 1, -1, -1, 1, -1, -1};
  const GraphPrior p = compute_prior(ds);
  EXPECT_NEAR(p.at(0, 0), 1.0, 1e-8);
  EXPECT_NEAR(p.at(1, 1), 1.0, 1e-8);
  EXPECT_NEAR(p.at(0, 1), 0.0, 1e-8);
  EXPECT_EQ(p.ridge, 0.0);
}

TEST(Prior, DuplicatedColumnEscalatesRidge) {
  Dataset ds(50, 3);
  Rng rng = make_rng(1, 0);
  for (std::size_t r = 0; r < 50; ++r) {
    ds.value(r, 0) = uniform(rng, -1, 1);
    ds.value(r, 1) = ds.value(r, 0);
    ds.value(r, 2) = uniform(rng, -1, 1);
  }
  const GraphPrior p = compute_prior(ds);
  EXPECT_EQ(p.ridge, kEscalationRidge);
  for (double v : p.rho) EXPECT_TRUE(std::isfinite(v));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(p.at(i, j), p.at(j, i), 1e-8);
}

TEST(Prior, MatchesAnalyticInverseForLinearChain) {
  const double w = 0.8, sigma = 1.1;
  const Dataset ds = sample_dataset(two_node_chain(), chain_mechanism(w, sigma), 100000, 0.0, 11);
  const GraphPrior p = compute_prior(ds);
  const double v0 = 1.0 / 3.0, ve = 0.16 * sigma * sigma;
  const double c00 = v0, c01 = w * v0, c11 = w * w * v0 + ve;
  const double det = c00 * c11 - c01 * c01;
  const double i00 = c11 / det, i01 = -c01 / det, i11 = c00 / det;
  EXPECT_NEAR(p.at(0, 0), i00, 0.02 * std::abs(i00));
  EXPECT_NEAR(p.at(0, 1), i01, 0.02 * std::abs(i01));
  EXPECT_NEAR(p.at(1, 1), i11, 0.02 * std::abs(i11));
}

TEST(Prior, NeedsTwoSamples) {
  Dataset ds(1, 2);
  EXPECT_THROW(compute_prior(ds), std::invalid_argument);
}

}  // namespace
}  // namespace causcale

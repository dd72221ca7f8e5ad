// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero
// if any fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "attention_oracles.hpp"
#include "causcale/bundle.hpp"
#include "causcale/metrics.hpp"
#include "causcale/perf.hpp"
#include "causcale/training.hpp"
#include "metric_oracles.hpp"
#include "op_cases.hpp"
#include "test_util.hpp"

namespace causcale {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// 1
Outcome analytic_ratios() {
  const CostRatio c = analytic_cost_ratio(10, 2, 2);
  const bool ok = c.sample == Rational(26640625, 100000000) && c.node == Rational(3875, 10000);
  return {ok, "sample=" + format_percent(c.sample_ratio()) + " node=" + format_percent(c.node_ratio())};
}

// 2
Outcome measured_ratio() {
  const ModelConfig c = ModelConfig::reference();
  const MeasuredRatio m = measured_cost_ratio(c, 512, 20, 1);
  const double a = analytic_cost_ratio(c.blocks, c.reduce_every, c.reduce_factor).sample_ratio();
  const double rel = std::abs(m.sample - a) / a;
  return {rel < 0.01, "measured=" + fmt(m.sample, 10) + " analytic=" + fmt(a, 10) + " rel_err=" + fmt(rel)};
}

// 3
Outcome memory_law() {
  ModelConfig c = ModelConfig::reference();
  const std::size_t C = 20, H = c.heads;
  bool ok = true;
  std::string detail;
  for (std::size_t R : {1u, 16u, 256u}) {
    c.attention = AttentionKind::tied;
    const auto tied = measure_attention_memory(c, R, C);
    c.attention = AttentionKind::vanilla;
    const auto vanilla = measure_attention_memory(c, R, C);
    ok = ok && tied == H * C * C && vanilla == R * H * C * C;
    detail += "R=" + std::to_string(R) + ":tied=" + std::to_string(tied) + ",vanilla=" + std::to_string(vanilla) + " ";
  }
  return {ok, detail};
}

// 4
Outcome tied_equals_standard() {
  double worst = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(static_cast<std::uint64_t>(seed), 90);
    const std::size_t H = 1 + seed % 4, dh = 2 + seed % 5, C = 2 + seed % 9, d = H * dh;
    const Tensor q = testing::random_tensor({C, d}, rng), k = testing::random_tensor({C, d}, rng),
                 v = testing::random_tensor({C, d}, rng);
    const ad::Var o = tied_attention_core(ad::constant(q.reshaped({1, C, d})), ad::constant(k.reshaped({1, C, d})),
                                          ad::constant(v.reshaped({1, C, d})), H,
                                          1.0 / std::sqrt(static_cast<double>(dh)), AttentionAxis::node);
    worst = std::max(worst, max_abs_diff(o.value().reshaped({C, d}), oracle::standard_mha(q, k, v, H)));
  }
  return {worst < 1e-10, "max_abs_diff=" + fmt(worst)};
}

// 5
double model_gradient_error() {
  ModelConfig c;
  c.blocks = 2;
  c.reduce_every = 1;
  c.dim = 6;
  c.heads = 2;
  c.ffn_mult = 1;
  ParameterSet ps = init_parameters(c, 3);
  Rng rng = make_rng(3, 91);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (auto& v : ps[i].data()) v += nd(rng);
  if (ps.element_count() > 5000) throw std::logic_error("model too large for the gradient check");
  const std::size_t m = 6, n = 4;
  ModelInput in{testing::random_tensor({m, n, 2}, rng), testing::random_tensor({n, n, 1}, rng)};
  for (std::size_t i = 0; i < m * n; ++i) in.data[2 * i + 1] = (i % 3 == 0) ? 1.0 : 0.0;
  const std::vector<int> targets{0, 1, 2, 0, 1, 0};
  auto loss_of = [&](const ParameterSet& p) {
    const Binding b(p, nullptr);
    return pair_loss(forward_logits({b, c, nullptr}, in), targets).value().item();
  };
  ad::Tape tape;
  const Binding b(ps, &tape);
  tape.backward(pair_loss(forward_logits({b, c, nullptr}, in), targets));
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Tensor g = b[i].grad();
    for (std::size_t k = 0; k < ps[i].size(); ++k) {
      const double x0 = ps[i][k];
      ps[i][k] = x0 + h;
      const double up = loss_of(ps);
      ps[i][k] = x0 - h;
      const double down = loss_of(ps);
      ps[i][k] = x0;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[k]) / std::max(std::abs(fd) + std::abs(g[k]), 1e-6));
    }
  }
  return worst;
}

Outcome gradients() {
  double op_worst = 0.0;
  std::string worst_name;
  auto cases = testing::op_cases();
  cases.push_back({"tied_attention", {{2, 3, 4}, {2, 3, 4}, {2, 3, 4}}, [](auto& v) {
                     return testing::project(tied_attention_core(v[0], v[1], v[2], 2, 0.4, AttentionAxis::sample), 40);
                   }});
  cases.push_back({"vanilla_attention", {{2, 3, 4}, {2, 3, 4}, {2, 3, 4}}, [](auto& v) {
                     return testing::project(vanilla_attention_core(v[0], v[1], v[2], 2, 0.4, AttentionAxis::node), 41);
                   }});
  for (const auto& c : cases) {
    for (int seed = 0; seed < 20; ++seed) {
      Rng rng = make_rng(static_cast<std::uint64_t>(seed), 92);
      std::vector<Tensor> inputs;
      for (const auto& s : c.shapes) inputs.push_back(testing::random_tensor(s, rng));
      const double e = testing::gradient_error(c.fn, inputs);
      if (e > op_worst) op_worst = e, worst_name = c.name;
    }
  }
  const double model = model_gradient_error();
  return {op_worst < 1e-4 && model < 1e-3, "ops=" + std::to_string(cases.size()) + " op_max_rel=" + fmt(op_worst) +
                                               " (" + worst_name + ") model_max_rel=" + fmt(model)};
}

// 6
Outcome schedule() {
  const ModelConfig c = ModelConfig::reference();
  ForwardTrace trace;
  (void)predict(c, init_parameters(c, 0), random_input(1000, 3, 0), &trace);
  const std::vector<std::size_t> expect{500, 250, 125, 62};
  std::string got;
  for (auto l : trace.reduced_lengths) got += std::to_string(l) + " ";
  const bool ok = trace.reduced_lengths == expect && trace.discarded_samples == 1 &&
                  data_length_schedule(c, 1000).back() == 62;
  return {ok, "lengths=[ " + got + "] discarded=" + std::to_string(trace.discarded_samples)};
}

// 7
Outcome no_two_cycles() {
  const ModelConfig c = ModelConfig::desk();
  std::size_t cycles = 0, edges = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    ParameterSet ps = init_parameters(c, seed);
    Rng rng = make_rng(seed, 93);
    std::normal_distribution<double> nd(0.0, 0.5);
    for (std::size_t i = 0; i < ps.size(); ++i)
      for (auto& v : ps[i].data()) v += nd(rng);
    const std::size_t n = 2 + seed % 7;
    const CausalGraph g = predict(c, ps, random_input(8, n, seed)).decode(0.5);
    edges += g.edge_count();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) cycles += g.edge(i, j) && g.edge(j, i);
  }
  return {cycles == 0, "draws=1000 decoded_edges=" + std::to_string(edges) + " two_cycles=" + std::to_string(cycles)};
}

// 8
Outcome metric_oracles() {
  const oracle::Agreement a = oracle::exhaustive_agreement(100, 0);
  return {a.ok(1e-12), "cases=" + std::to_string(a.cases) + " shd_mismatches=" + std::to_string(a.shd_mismatches) +
                           " ap_err=" + fmt(a.ap_error) + " auc_err=" + fmt(a.auc_error) + " oa_err=" + fmt(a.oa_error)};
}

// 9
Outcome learning_signal() {
  constexpr std::size_t kGraphs = 200, kHeldOut = 20, kSamples = 400;
  auto bundle = [&](std::size_t i, std::uint64_t base) {
    const std::size_t n = i % 2 ? 10 : 5;
    return generate_bundle(GraphFamily::er, n, n, kSamples, MechanismKind::linear, default_interventional_fraction(n),
                           base + i);
  };
  // the last 10% of the training graphs select the checkpoint
  std::vector<TrainingExample> corpus, val, test;
  for (std::size_t i = 0; i < kGraphs; ++i) (i < kGraphs * 9 / 10 ? corpus : val).push_back(make_example(bundle(i, 1000)));
  double invcov_map = 0.0;
  for (std::size_t i = 0; i < kHeldOut; ++i) {
    const DatasetBundle b = bundle(i, 50000);
    test.push_back(make_example(b));
    const BaselineResult r = invcov_baseline(standardize(b.data), b.graph.edge_count());
    invcov_map += average_precision(r.scores, b.graph.adj, b.graph.n).value_or(0.0);
  }
  invcov_map /= kHeldOut;

  const ModelConfig cfg = ModelConfig::desk();
  TrainConfig tc;
  tc.lr = 3e-4;
  tc.batch_size = 4;
  tc.steps = 700;
  tc.eval_every = 50;
  tc.seed = 1;
  const TrainResult res = train(corpus, val, cfg, tc, init_parameters(cfg, 1));
  const ValidationScore s = validate(cfg, res.best_params, test);
  return {s.auc >= 0.85 && s.map > invcov_map, "AUC=" + fmt(s.auc) + " mAP=" + fmt(s.map) +
                                                   " invcov_mAP=" + fmt(invcov_map) +
                                                   " best_step=" + std::to_string(res.best_step)};
}

// 10
Outcome invcov_chain() {
  int good = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CausalGraph g(3);
    g.set_edge(0, 1);
    g.set_edge(1, 2);
    const Dataset ds =
        standardize(sample_dataset(g, sample_mechanism(g, MechanismKind::linear, seed), 100000, 0.0, seed));
    const BaselineResult r = invcov_baseline(ds, 2);
    const double far = r.scores[0 * 3 + 2];
    if (r.scores[0 * 3 + 1] > far && r.scores[1 * 3 + 2] > far) ++good;
  }
  return {good >= 95, "seeds_ok=" + std::to_string(good) + "/100"};
}

// 11
Outcome ablation_direction() {
  BenchCase bc;
  bc.m = 1024;
  bc.n = 50;
  bc.repeats = 5;
  bc.config = ModelConfig::reference();
  const BenchRow reduced = bench_case(bc);
  bc.config.reduce_factor = 1;
  const BenchRow flat = bench_case(bc);
  return {reduced.median_s < flat.median_s,
          "r2_median_s=" + fmt(reduced.median_s) + " r1_median_s=" + fmt(flat.median_s)};
}

}  // namespace
}  // namespace causcale

int main(int argc, char** argv) {
  using namespace causcale;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"analytic cost ratios", analytic_ratios},
      {"measured vs analytic sample-axis FLOPs", measured_ratio},
      {"tied attention memory law", memory_law},
      {"tied equals standard attention at R=1", tied_equals_standard},
      {"gradient integrity", gradients},
      {"reduction schedule", schedule},
      {"no 2-cycles after decoding", no_two_cycles},
      {"metric oracles", metric_oracles},
      {"desk-scale learning signal", learning_signal},
      {"INVCOV chain sanity", invcov_chain},
      {"reduction ablation wallclock", ablation_direction},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail << " ("
              << std::fixed << std::setprecision(1) << dt << "s)" << std::defaultfloat << std::endl;
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}

// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Cost model and measurement harness: exact analytic attention-cost ratios for
// the reduction schedule, instrumented forward passes, attention-map memory
// probes and a small wallclock benchmark.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "causcale/model.hpp"

namespace causcale {

using Rational = boost::multiprecision::cpp_rational;

struct CostRatio {
  Rational sample;  // sample-axis attention cost relative to r = 1
  Rational node;    // node-axis attention cost relative to r = 1

  double sample_ratio() const { return static_cast<double>(sample); }
  double node_ratio() const { return static_cast<double>(node); }
};

/// sample = (1/B) sum_b r^(-2 floor(b/k)), node = (1/B) sum_b r^(-floor(b/k)).
inline CostRatio analytic_cost_ratio(std::size_t B, std::size_t k, std::size_t r) {
  if (B < 1 || k < 1 || r < 1) throw ConfigError("analytic_cost_ratio: B, k, r must be >= 1");
  Rational s = 0, nd = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto e = static_cast<unsigned>(b / k);
    const boost::multiprecision::cpp_int p = boost::multiprecision::pow(boost::multiprecision::cpp_int(r), e);
    nd += Rational(1, p);
    s += Rational(1, p * p);
  }
  return {s / static_cast<long long>(B), nd / static_cast<long long>(B)};
}

inline std::string format_percent(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << 100.0 * v << '%';
  return os.str();
}

/// Random standardized-looking input of the given extents.
inline ModelInput random_input(std::size_t m, std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, 40);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.2);
  ModelInput in;
  in.data = Tensor({m, n, 2});
  for (std::size_t i = 0; i < m * n; ++i) {
    in.data[2 * i] = normal(rng);
    in.data[2 * i + 1] = coin(rng) ? 1.0 : 0.0;
  }
  in.prior = Tensor({n, n, 1});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) in.prior[i * n + j] = i == j ? 0.0 : 0.1 * normal(rng);
  return in;
}

struct FlopReport {
  PerfCounters counters;
  ForwardTrace trace;
  double wallclock_s = 0.0;
};

/// One instrumented inference forward pass.
inline FlopReport count_flops(const ModelConfig& cfg, const ParameterSet& params, const ModelInput& in) {
  FlopReport rep;
  const CounterScope scope(rep.counters);
  const auto t0 = std::chrono::steady_clock::now();
  (void)predict(cfg, params, in, &rep.trace);
  rep.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

struct MeasuredRatio {
  double sample = 0.0;
  double node = 0.0;
};

/// Instrumented attention FLOPs of `cfg` relative to the same model with r = 1.
inline MeasuredRatio measured_cost_ratio(const ModelConfig& cfg, std::size_t m, std::size_t n, std::uint64_t seed) {
  ModelConfig flat = cfg;
  flat.reduce_factor = 1;
  const ParameterSet params = init_parameters(cfg, seed);
  const ModelInput in = random_input(m, n, seed);
  const FlopReport a = count_flops(cfg, params, in);
  const FlopReport b = count_flops(flat, params, in);
  return {static_cast<double>(a.counters.total_sample_attention()) /
              static_cast<double>(b.counters.total_sample_attention()),
          static_cast<double>(a.counters.total_node_attention()) / static_cast<double>(b.counters.total_node_attention())};
}

/// Peak attention-map floats of one attention sublayer over x[R, C, d] using the
/// heads and width of `cfg`.
inline std::uint64_t measure_attention_memory(const ModelConfig& cfg, std::size_t R, std::size_t C,
                                              std::uint64_t seed = 0) {
  cfg.validate();
  ParameterSet ps;
  std::vector<ParamSpec> specs;
  detail::attention_specs(specs, "probe", cfg.dim);
  Rng rng = make_rng(seed, 41);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (auto& s : specs) {
    Tensor t(s.shape);
    if (s.init == ParamSpec::Init::weight) {
      for (auto& x : t.data()) x = normal(rng);
    } else if (s.init == ParamSpec::Init::ones) {
      t.fill(1.0);
    }
    ps.add(s.name, std::move(t));
  }
  Tensor x({R, C, cfg.dim});
  std::normal_distribution<double> unit;
  for (auto& v : x.data()) v = unit(rng);

  PerfCounters pc;
  const CounterScope scope(pc);
  const Binding binding(ps, nullptr);
  const LayerContext ctx{binding, cfg, nullptr};
  (void)attention_sublayer(ctx, ad::constant(x), "probe", AttentionAxis::node);
  return pc.peak_attention_floats;
}

// ---------------------------------------------------------------------------
// Wallclock benchmark

struct BenchCase {
  std::size_t m = 256;
  std::size_t n = 20;
  ModelConfig config = ModelConfig::reference();
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
};

struct BenchRow {
  BenchCase c;
  double median_s = 0.0;
  double min_s = 0.0;
  std::uint64_t attention_flops = 0;
  std::uint64_t peak_attention_floats = 0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// One warm-up pass, then `repeats` timed passes; reports the median.
inline BenchRow bench_case(const BenchCase& c) {
  c.config.validate();
  if (c.repeats < 1) throw ConfigError("repeats must be >= 1");
  const ParameterSet params = init_parameters(c.config, c.seed);
  const ModelInput in = random_input(c.m, c.n, c.seed);
  BenchRow row;
  row.c = c;
  (void)predict(c.config, params, in);
  std::vector<double> times;
  for (std::size_t i = 0; i < c.repeats; ++i) {
    const FlopReport rep = count_flops(c.config, params, in);
    times.push_back(rep.wallclock_s);
    row.attention_flops = rep.counters.total_sample_attention() + rep.counters.total_node_attention();
    row.peak_attention_floats = rep.counters.peak_attention_floats;
  }
  row.median_s = median(times);
  row.min_s = *std::min_element(times.begin(), times.end());
  return row;
}

/// Parses a benchmark matrix: one case per line as whitespace-separated
/// `key=value` tokens (m, n, B, k, r, d, H, attention, repeats, seed).
inline std::vector<BenchCase> parse_bench_matrix(std::istream& is, const std::string& origin) {
  std::vector<BenchCase> cases;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::map<std::string, std::string> kv;
    for (std::string tok; ls >> tok;) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + tok + "'");
      }
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    if (kv.empty()) continue;
    BenchCase c;
    try {
      if (auto it = kv.find("m"); it != kv.end()) c.m = std::stoul(it->second), kv.erase(it);
      if (auto it = kv.find("n"); it != kv.end()) c.n = std::stoul(it->second), kv.erase(it);
      if (auto it = kv.find("repeats"); it != kv.end()) c.repeats = std::stoul(it->second), kv.erase(it);
      if (auto it = kv.find("seed"); it != kv.end()) c.seed = std::stoull(it->second), kv.erase(it);
      c.config = model_config_from(kv);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const std::logic_error&) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed number");
    }
    cases.push_back(c);
  }
  return cases;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "m,n,B,k,r,d,H,attention,repeats,median_s,min_s,attention_flops,peak_attention_floats\n";
  os << std::setprecision(9);
  for (const auto& r : rows) {
    const auto& c = r.c.config;
    os << r.c.m << ',' << r.c.n << ',' << c.blocks << ',' << c.reduce_every << ',' << c.reduce_factor << ',' << c.dim
       << ',' << c.heads << ',' << (c.attention == AttentionKind::tied ? "tied" : "vanilla") << ',' << r.c.repeats << ','
       << r.median_s << ',' << r.min_s << ',' << r.attention_flops << ',' << r.peak_attention_floats << '\n';
  }
}

}  // namespace causcale

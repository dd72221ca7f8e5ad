// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Command-line front end: generate / train / infer / eval / bench / cost /
// experiment. Each subcommand writes a `run_<name>.txt` stanza (version, seed,
// full argument list) next to its outputs.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "causcale/bundle.hpp"
#include "causcale/metrics.hpp"
#include "causcale/model.hpp"
#include "causcale/perf.hpp"
#include "causcale/training.hpp"

#ifndef CAUSCALE_VERSION
#define CAUSCALE_VERSION "0.0.0"
#endif

namespace causcale {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Artifact files

/// Edge probabilities as `i,j,prob` rows covering the full n x n matrix.
inline void write_edges_csv(const fs::path& path, std::size_t n, std::span<const double> probs) {
  if (probs.size() != n * n) throw DimensionError("write_edges_csv: expected n*n probabilities");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "i,j,prob\n" << std::setprecision(17);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) os << i << ',' << j << ',' << probs[i * n + j] << '\n';
}

struct EdgeTable {
  std::size_t n = 0;
  std::vector<double> probs;
};

inline EdgeTable read_edges_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "i,j,prob") throw CorruptionError(path.string() + ": missing 'i,j,prob' header");
  std::vector<std::tuple<std::size_t, std::size_t, double>> rows;
  std::size_t n = 0, lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t i = 0, j = 0;
    double p = 0.0;
    char c1 = 0, c2 = 0;
    if (!(ls >> i >> c1 >> j >> c2 >> p) || c1 != ',' || c2 != ',') {
      throw CorruptionError(path.string() + ":" + std::to_string(lineno) + ": expected 'i,j,prob'");
    }
    n = std::max({n, i + 1, j + 1});
    rows.emplace_back(i, j, p);
  }
  if (n == 0 || rows.size() != n * n) {
    throw CorruptionError(path.string() + ": expected " + std::to_string(n * n) + " rows, found " +
                          std::to_string(rows.size()));
  }
  EdgeTable t{n, std::vector<double>(n * n, std::numeric_limits<double>::quiet_NaN())};
  for (auto [i, j, p] : rows) {
    if (!std::isnan(t.probs[i * n + j])) throw CorruptionError(path.string() + ": duplicate entry for (" +
                                                                std::to_string(i) + ", " + std::to_string(j) + ")");
    t.probs[i * n + j] = p;
  }
  return t;
}

inline std::string fmt_optional(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(10) << *v;
  return os.str();
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

/// Simple CSV reader for the files this binary writes (no quoting).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw CorruptionError("missing CSV column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw CorruptionError(path.string() + ": empty file");
  t.header = split_csv_line(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw CorruptionError(path.string() + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline const char* kReportHeader = "mAP,SHD,AUC,OA,cyclicity,time_s";

inline std::string report_row(const MetricReport& r, std::optional<double> time_s) {
  return fmt_optional(r.map) + ',' + std::to_string(r.shd) + ',' + fmt_optional(r.auc) + ',' + fmt_optional(r.oa) +
         ',' + fmt_double(r.cyclicity) + ',' + fmt_optional(time_s);
}

inline void write_run_stanza(const fs::path& dir, const std::string& command, std::uint64_t seed,
                             const std::vector<std::string>& args) {
  fs::create_directories(dir);
  std::ofstream os(dir / ("run_" + command + ".txt"), std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write run stanza in " + dir.string());
  os << "version = " << CAUSCALE_VERSION << '\n';
  os << "command = " << command << '\n';
  os << "seed = " << seed << '\n';
  os << "args =";
  for (const auto& a : args) os << ' ' << a;
  os << '\n';
}

inline fs::path parent_or_cwd(const fs::path& file) {
  return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

/// A bundle directory, or a directory whose immediate subdirectories are
/// bundles (sorted by name).
inline std::vector<fs::path> list_bundles(const fs::path& dir) {
  if (fs::exists(dir / "manifest")) return {dir};
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::runtime_error("no dataset bundles under " + dir.string());
  return out;
}

inline std::size_t thread_budget() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CAUSCALE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) n = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return n;
}

/// Runs fn(i) for i in [0, count) on up to thread_budget() threads.
template <class Fn>
void parallel_for(std::size_t count, Fn fn) {
  const std::size_t workers = std::min(count, thread_budget());
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Subcommands

struct GenerateOptions {
  std::string family = "er";
  std::size_t nodes = 20;
  std::size_t edges = 40;
  std::size_t samples = 1000;
  std::string mechanism = "linear";
  std::string ratio = "interventional";
  std::optional<double> fraction;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  fs::path out;
};

inline double resolve_fraction(const GenerateOptions& o) {
  if (o.fraction) {
    if (*o.fraction < 0.0 || *o.fraction > 1.0) throw std::invalid_argument("--fraction must lie in [0, 1]");
    return *o.fraction;
  }
  if (o.ratio == "interventional") return default_interventional_fraction(o.nodes);
  if (o.ratio == "observational") {
    return default_interventional_fraction(o.nodes, InterventionRatio::observational_majority);
  }
  throw std::invalid_argument("--ratio must be interventional or observational");
}

inline std::string bundle_name(std::size_t i) {
  std::ostringstream os;
  os << "graph_" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

/// Writes one bundle to `out`, or `count` bundles to out/graph_XXXX with seeds
/// seed, seed + 1, ...
inline std::vector<fs::path> run_generate(const GenerateOptions& o) {
  const GraphFamily family = parse_family(o.family);
  const MechanismKind kind = parse_mechanism(o.mechanism);
  const double fraction = resolve_fraction(o);
  if (o.count < 1) throw std::invalid_argument("--count must be >= 1");
  std::vector<fs::path> written;
  for (std::size_t i = 0; i < o.count; ++i) {
    const fs::path dir = o.count == 1 ? o.out : o.out / bundle_name(i);
    write_dataset(generate_bundle(family, o.nodes, o.edges, o.samples, kind, fraction, o.seed + i), dir);
    written.push_back(dir);
  }
  return written;
}

struct TrainOptions {
  fs::path data;
  std::optional<fs::path> val;
  std::optional<fs::path> config;
  std::optional<std::size_t> steps;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> eval_every;
  std::optional<double> positive_weight;
  std::uint64_t seed = 0;
  fs::path out;
};

inline std::vector<TrainingExample> load_examples(const std::vector<fs::path>& dirs) {
  std::vector<TrainingExample> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(make_example(read_dataset(d)));
  return out;
}

inline TrainResult run_train(const TrainOptions& o, std::ostream& log) {
  std::map<std::string, std::string> kv;
  if (o.config) {
    std::ifstream is(*o.config);
    if (!is) throw std::runtime_error("cannot open " + o.config->string());
    kv = io::parse_key_values(is, o.config->string());
  }
  const ModelConfig cfg = model_config_from(kv, ModelConfig::desk());
  TrainConfig tc = train_config_from(kv);
  if (o.steps) tc.steps = *o.steps;
  if (o.lr) tc.lr = *o.lr;
  if (o.batch_size) tc.batch_size = *o.batch_size;
  if (o.eval_every) tc.eval_every = *o.eval_every;
  if (o.positive_weight) tc.positive_weight = *o.positive_weight;
  tc.seed = o.seed;
  tc.checkpoint_dir = o.out;

  std::vector<fs::path> train_dirs = list_bundles(o.data), val_dirs;
  if (o.val) {
    val_dirs = list_bundles(*o.val);
  } else if (train_dirs.size() >= 2) {
    const std::size_t hold = std::max<std::size_t>(1, train_dirs.size() / 10);
    val_dirs.assign(train_dirs.end() - static_cast<std::ptrdiff_t>(hold), train_dirs.end());
    train_dirs.resize(train_dirs.size() - hold);
  }
  const auto corpus = load_examples(train_dirs);
  const auto val = load_examples(val_dirs);
  log << "training on " << corpus.size() << " graphs, validating on " << val.size() << '\n';
  auto result = train(corpus, val, cfg, tc, init_parameters(cfg, o.seed), [&](const LogRow& r) {
    if (r.val_map) {
      log << "step " << r.step << " loss " << r.loss << " val_mAP " << *r.val_map << " val_AUC " << *r.val_auc
          << '\n';
    }
  });
  fs::create_directories(o.out);
  write_metric_log(o.out / "train_log.csv", result.log);
  return result;
}

struct InferOptions {
  fs::path model;
  fs::path data;
  fs::path out;
  std::uint64_t seed = 0;
};

struct InferResult {
  PredictedGraph graph;
  double wallclock_s = 0.0;
};

inline InferResult run_infer(const InferOptions& o) {
  const Checkpoint ck = load_checkpoint(o.model);
  const DatasetBundle b = read_dataset(o.data);
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = b.data.standardized ? b.data : standardize(b.data);
  InferResult r{predict(ck.config, ck.params, ds, compute_prior(ds)), 0.0};
  r.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_edges_csv(o.out, r.graph.n, r.graph.g_hat.data());
  return r;
}

struct EvalOptions {
  fs::path pred;
  fs::path truth;
  fs::path out;
  double threshold = 0.5;
  std::optional<double> time_s;
  std::uint64_t seed = 0;
};

inline MetricReport run_eval(const EvalOptions& o) {
  const EdgeTable t = read_edges_csv(o.pred);
  const DatasetBundle b = read_dataset(o.truth);
  if (t.n != b.graph.n) {
    throw DimensionError("prediction has " + std::to_string(t.n) + " variables, truth has " +
                         std::to_string(b.graph.n));
  }
  CausalGraph decoded(t.n);
  for (std::size_t i = 0; i < t.n; ++i)
    for (std::size_t j = 0; j < t.n; ++j)
      if (i != j && t.probs[i * t.n + j] > o.threshold) decoded.set_edge(i, j);
  MetricReport r = evaluate(t.probs, decoded, b.graph);
  if (o.time_s) r.wallclock_s = *o.time_s;
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  std::ofstream os(o.out, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + o.out.string());
  os << kReportHeader << '\n' << report_row(r, o.time_s) << '\n';
  return r;
}

inline std::vector<BenchRow> run_bench(const fs::path& matrix, const fs::path& out) {
  std::ifstream is(matrix);
  if (!is) throw std::runtime_error("cannot open " + matrix.string());
  const auto cases = parse_bench_matrix(is, matrix.string());
  if (cases.empty()) throw std::invalid_argument("benchmark matrix is empty");
  std::vector<BenchRow> rows;
  for (const auto& c : cases) rows.push_back(bench_case(c));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream os(out, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + out.string());
  write_bench_csv(os, rows);
  return rows;
}

inline std::string cost_line(std::size_t B, std::size_t k, std::size_t r) {
  const CostRatio c = analytic_cost_ratio(B, k, r);
  return "sample=" + format_percent(c.sample_ratio()) + " node=" + format_percent(c.node_ratio());
}

// ---------------------------------------------------------------------------
// Experiments

/// Manifest keys: method (causcale | invcov | corr), model (checkpoint, for
/// causcale), family, nodes, edges, samples, mechanism, ratio, seeds, seed.
struct ExperimentSpec {
  std::string method = "causcale";
  std::optional<fs::path> model;
  GenerateOptions data;
  std::size_t seeds = 5;
};

inline ExperimentSpec parse_experiment(const std::map<std::string, std::string>& kv, const std::string& origin) {
  if (kv.empty()) throw std::invalid_argument(origin + ": experiment manifest is empty");
  ExperimentSpec s;
  auto get = [&](const char* k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  try {
    if (auto v = get("method")) s.method = *v;
    if (auto v = get("model")) s.model = *v;
    if (auto v = get("family")) s.data.family = *v;
    if (auto v = get("nodes")) s.data.nodes = std::stoul(*v);
    if (auto v = get("edges")) s.data.edges = std::stoul(*v);
    if (auto v = get("samples")) s.data.samples = std::stoul(*v);
    if (auto v = get("mechanism")) s.data.mechanism = *v;
    if (auto v = get("ratio")) s.data.ratio = *v;
    if (auto v = get("fraction")) s.data.fraction = std::stod(*v);
    if (auto v = get("seeds")) s.seeds = std::stoul(*v);
    if (auto v = get("seed")) s.data.seed = std::stoull(*v);
  } catch (const std::logic_error&) {
    throw std::invalid_argument(origin + ": malformed number in experiment manifest");
  }
  if (s.method != "causcale" && s.method != "invcov" && s.method != "corr") {
    throw std::invalid_argument(origin + ": method must be causcale, invcov or corr");
  }
  if (s.method == "causcale" && !s.model) throw std::invalid_argument(origin + ": method causcale needs 'model'");
  if (s.seeds < 1) throw std::invalid_argument(origin + ": seeds must be >= 1");
  (void)parse_family(s.data.family);
  (void)parse_mechanism(s.data.mechanism);
  return s;
}

struct ExperimentRow {
  std::uint64_t seed = 0;
  std::optional<MetricReport> report;
  std::string error;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  MetricReport mean;
  std::size_t succeeded = 0;
};

inline MetricReport evaluate_method(const ExperimentSpec& s, const std::optional<Checkpoint>& ck,
                                    const DatasetBundle& b) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = b.data.standardized ? b.data : standardize(b.data);
  MetricReport r;
  if (s.method == "causcale") {
    const PredictedGraph g = predict(ck->config, ck->params, ds, compute_prior(ds));
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r = evaluate(g.scores(), g.decode(), b.graph);
    r.wallclock_s = dt;
  } else {
    const std::size_t e = b.graph.edge_count();
    const BaselineResult base = s.method == "invcov" ? invcov_baseline(ds, e) : corr_baseline(ds, e);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r = evaluate(base.scores, base.graph, b.graph, false);
    r.wallclock_s = dt;
  }
  return r;
}

/// Generates `seeds` graphs, evaluates the method on each and writes
/// results.csv (one row per graph plus a mean row). A failing graph records its
/// error and the run continues.
inline ExperimentResult run_experiment(const ExperimentSpec& s, const fs::path& out) {
  std::optional<Checkpoint> ck;
  if (s.method == "causcale") ck = load_checkpoint(*s.model);
  const GraphFamily family = parse_family(s.data.family);
  const MechanismKind kind = parse_mechanism(s.data.mechanism);
  const double fraction = resolve_fraction(s.data);

  ExperimentResult res;
  res.rows.resize(s.seeds);
  parallel_for(s.seeds, [&](std::size_t i) {
    ExperimentRow& row = res.rows[i];
    row.seed = s.data.seed + i;
    try {
      const DatasetBundle b =
          generate_bundle(family, s.data.nodes, s.data.edges, s.data.samples, kind, fraction, row.seed);
      row.report = evaluate_method(s, ck, b);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });

  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
    void add(const std::optional<double>& v) {
      if (v) sum += *v, ++n;
    }
    std::optional<double> mean() const { return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt; }
  } map, auc, oa, shd, cyc, time;
  for (const auto& row : res.rows) {
    if (!row.report) continue;
    ++res.succeeded;
    map.add(row.report->map);
    auc.add(row.report->auc);
    oa.add(row.report->oa);
    shd.add(static_cast<double>(row.report->shd));
    cyc.add(row.report->cyclicity);
    time.add(row.report->wallclock_s);
  }
  res.mean.map = map.mean();
  res.mean.auc = auc.mean();
  res.mean.oa = oa.mean();
  res.mean.cyclicity = cyc.mean().value_or(0.0);
  res.mean.wallclock_s = time.mean().value_or(0.0);

  fs::create_directories(out);
  std::ofstream os(out / "results.csv", std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + (out / "results.csv").string());
  os << "graph,seed,method," << kReportHeader << ",error\n";
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const auto& row = res.rows[i];
    os << i << ',' << row.seed << ',' << s.method << ',';
    if (row.report) {
      os << report_row(*row.report, row.report->wallclock_s) << ',';
    } else {
      std::string msg = row.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      os << ",,,,,," << msg;
    }
    os << '\n';
  }
  os << "mean,," << s.method << ',' << fmt_optional(res.mean.map) << ',' << fmt_optional(shd.mean()) << ','
     << fmt_optional(res.mean.auc) << ',' << fmt_optional(res.mean.oa) << ',' << fmt_optional(cyc.mean()) << ','
     << fmt_optional(time.mean()) << ",\n";
  return res;
}

// ---------------------------------------------------------------------------
// Dispatch

/// Parses `args` (without the program name) and runs one subcommand.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"causcale: amortized causal discovery with tied axial attention", "causcale"};
  app.set_version_flag("--version", std::string(CAUSCALE_VERSION));
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Sample a graph, mechanism and dataset bundle");
  g->add_option("--family", gen.family, "Graph family: er, sf, sbm")->capture_default_str();
  g->add_option("--nodes", gen.nodes, "Number of variables")->capture_default_str();
  g->add_option("--edges", gen.edges, "Expected number of edges")->capture_default_str();
  g->add_option("--samples", gen.samples, "Number of samples")->capture_default_str();
  g->add_option("--mechanism", gen.mechanism, "linear, nn_additive, nn_nonadditive, sigmoid_additive, polynomial")
      ->capture_default_str();
  g->add_option("--ratio", gen.ratio, "interventional or observational majority")->capture_default_str();
  g->add_option("--fraction", gen.fraction, "Explicit interventional fraction in [0, 1]");
  g->add_option("--count", gen.count, "Number of bundles (written to OUT/graph_XXXX)")->capture_default_str();
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a model on dataset bundles");
  t->add_option("--data", tr.data, "Bundle directory or directory of bundles")->required();
  t->add_option("--val", tr.val, "Validation bundles (default: hold out 10% of --data)");
  t->add_option("--config", tr.config, "Model/training config (key = value)");
  t->add_option("--steps", tr.steps, "Optimizer steps");
  t->add_option("--lr", tr.lr, "Adam learning rate");
  t->add_option("--batch-size", tr.batch_size, "Graphs per step");
  t->add_option("--eval-every", tr.eval_every, "Steps between validations");
  t->add_option("--positive-weight", tr.positive_weight, "Loss weight of edge pairs");
  t->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
  t->add_option("--out", tr.out, "Checkpoint directory")->required();

  InferOptions inf;
  auto* i = app.add_subcommand("infer", "Predict edge probabilities for a bundle");
  i->add_option("--model", inf.model, "Checkpoint directory")->required();
  i->add_option("--data", inf.data, "Bundle directory")->required();
  i->add_option("--out", inf.out, "Output edges.csv")->required();
  i->add_option("--seed", inf.seed, "Random seed")->capture_default_str();

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Score predicted edges against a bundle's graph");
  e->add_option("--pred", ev.pred, "edges.csv from infer")->required();
  e->add_option("--truth", ev.truth, "Bundle directory")->required();
  e->add_option("--out", ev.out, "Output report.csv")->required();
  e->add_option("--threshold", ev.threshold, "Decoding threshold")->capture_default_str();
  e->add_option("--time", ev.time_s, "Inference wallclock to record in the time_s column");
  e->add_option("--seed", ev.seed, "Random seed")->capture_default_str();

  fs::path bench_matrix, bench_out;
  std::uint64_t bench_seed = 0;
  auto* bn = app.add_subcommand("bench", "Time forward passes over a configuration matrix");
  bn->add_option("--matrix", bench_matrix, "Matrix file, one case per line (key=value tokens)")->required();
  bn->add_option("--out", bench_out, "Output bench.csv")->required();
  bn->add_option("--seed", bench_seed, "Random seed")->capture_default_str();

  std::size_t cost_B = 10, cost_k = 2, cost_r = 2;
  std::uint64_t cost_seed = 0;
  auto* c = app.add_subcommand("cost", "Print analytic attention-cost ratios of the reduction schedule");
  c->add_option("--B", cost_B, "Number of blocks")->capture_default_str();
  c->add_option("--k", cost_k, "Blocks between reductions")->capture_default_str();
  c->add_option("--r", cost_r, "Reduction factor")->capture_default_str();
  c->add_option("--seed", cost_seed, "Random seed")->capture_default_str();

  fs::path exp_manifest, exp_out;
  std::optional<std::uint64_t> exp_seed;
  auto* x = app.add_subcommand("experiment", "Evaluate a method over several generated graphs");
  x->add_option("--manifest", exp_manifest, "Experiment manifest (key = value)")->required();
  x->add_option("--out", exp_out, "Results directory")->required();
  x->add_option("--seed", exp_seed, "Base seed (overrides the manifest)");

  if (args.empty()) {
    err << app.help();
    return 2;
  }
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& pe) {
    return app.exit(pe, out, err);
  }

  try {
    if (*g) {
      const auto dirs = run_generate(gen);
      write_run_stanza(gen.out, "generate", gen.seed, args);
      out << "wrote " << dirs.size() << " bundle(s) to " << gen.out.string() << '\n';
    } else if (*t) {
      const auto res = run_train(tr, out);
      write_run_stanza(tr.out, "train", tr.seed, args);
      out << "checkpoint written to " << tr.out.string() << " (best step " << res.best_step << ")\n";
    } else if (*i) {
      const auto res = run_infer(inf);
      write_run_stanza(parent_or_cwd(inf.out), "infer", inf.seed, args);
      out << "n = " << res.graph.n << ", wallclock_s = " << res.wallclock_s << '\n';
    } else if (*e) {
      const auto r = run_eval(ev);
      write_run_stanza(parent_or_cwd(ev.out), "eval", ev.seed, args);
      out << kReportHeader << '\n' << report_row(r, ev.time_s) << '\n';
    } else if (*bn) {
      const auto rows = run_bench(bench_matrix, bench_out);
      write_run_stanza(parent_or_cwd(bench_out), "bench", bench_seed, args);
      write_bench_csv(out, rows);
    } else if (*c) {
      out << cost_line(cost_B, cost_k, cost_r) << '\n';
    } else if (*x) {
      std::ifstream is(exp_manifest);
      if (!is) throw std::runtime_error("cannot open " + exp_manifest.string());
      ExperimentSpec spec = parse_experiment(io::parse_key_values(is, exp_manifest.string()), exp_manifest.string());
      if (exp_seed) spec.data.seed = *exp_seed;
      const auto res = run_experiment(spec, exp_out);
      write_run_stanza(exp_out, "experiment", spec.data.seed, args);
      out << res.succeeded << "/" << res.rows.size() << " graphs evaluated; mean mAP "
          << fmt_optional(res.mean.map) << '\n';
      if (res.succeeded == 0) {
        err << "error: every graph failed\n";
        return 1;
      }
    }
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace causcale

// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dataset bundle: a directory holding
//   manifest  text, `key = value` lines
//   D.bin     m*n float32 values, row-major
//   I.bin     m*n u8 intervention mask
//   adj.bin   n*n u8 adjacency
// The manifest stores CRC-32 checksums of the three payload files.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "causcale/serialize.hpp"
#include "causcale/simulator.hpp"

namespace causcale {

struct DatasetBundle {
  Dataset data;
  CausalGraph graph;
  MechanismKind mechanism = MechanismKind::linear;
  std::vector<double> noise_scales;
  std::uint64_t seed = 0;
};

namespace io {

inline std::uint32_t crc32_of(const void* data, std::size_t len) {
  return static_cast<std::uint32_t>(::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

inline std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed for " + p.string());
}

/// Parses `key = value` lines; `#` starts a comment.
inline std::map<std::string, std::string> parse_key_values(std::istream& is, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline const std::string& require_key(const std::map<std::string, std::string>& kv, const std::string& key,
                                      const std::string& origin) {
  auto it = kv.find(key);
  if (it == kv.end()) throw CorruptionError(origin + ": missing field '" + key + "'");
  return it->second;
}

}  // namespace io

inline constexpr int kBundleVersion = 1;

inline void write_dataset(const DatasetBundle& b, const std::filesystem::path& dir) {
  const Dataset& ds = b.data;
  if (b.graph.n != ds.n) throw std::invalid_argument("write_dataset: graph and dataset disagree on n");
  std::filesystem::create_directories(dir);

  std::vector<char> d_bytes(ds.values.size() * sizeof(float));
  for (std::size_t i = 0; i < ds.values.size(); ++i) {
    const auto f = static_cast<float>(ds.values[i]);
    std::memcpy(d_bytes.data() + i * sizeof(float), &f, sizeof(float));
  }
  const std::vector<char> i_bytes(ds.mask.begin(), ds.mask.end());
  const std::vector<char> a_bytes(b.graph.adj.begin(), b.graph.adj.end());
  io::write_bytes(dir / "D.bin", d_bytes);
  io::write_bytes(dir / "I.bin", i_bytes);
  io::write_bytes(dir / "adj.bin", a_bytes);

  std::ofstream os(dir / "manifest", std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write manifest in " + dir.string());
  os << "# causcale dataset bundle\n";
  os << "version = " << kBundleVersion << '\n';
  os << "n = " << ds.n << '\n';
  os << "m = " << ds.m << '\n';
  os << "family = " << to_string(b.graph.family) << '\n';
  os << "mechanism = " << to_string(b.mechanism) << '\n';
  os << "seed = " << b.seed << '\n';
  os << "standardized = " << (ds.standardized ? 1 : 0) << '\n';
  os << "edges = " << b.graph.edge_count() << '\n';
  os << "noise_scales = ";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < b.noise_scales.size(); ++i) os << (i ? "," : "") << b.noise_scales[i];
  os << '\n';
  os << "checksum.D = " << io::hex32(io::crc32_of(d_bytes.data(), d_bytes.size())) << '\n';
  os << "checksum.I = " << io::hex32(io::crc32_of(i_bytes.data(), i_bytes.size())) << '\n';
  os << "checksum.adj = " << io::hex32(io::crc32_of(a_bytes.data(), a_bytes.size())) << '\n';
  if (!os) throw std::runtime_error("manifest write failed in " + dir.string());
}

inline DatasetBundle read_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest";
  std::ifstream ms(manifest_path);
  if (!ms) throw std::runtime_error("cannot open " + manifest_path.string());
  std::map<std::string, std::string> kv;
  try {
    kv = io::parse_key_values(ms, manifest_path.string());
  } catch (const std::runtime_error& e) {
    throw CorruptionError(std::string("corrupt manifest: ") + e.what());
  }
  const auto origin = manifest_path.string();
  auto as_size = [&](const std::string& key) -> std::size_t {
    const auto& s = io::require_key(kv, key, origin);
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw CorruptionError(origin + ": field '" + key + "' is not an integer: '" + s + "'");
    }
  };
  if (as_size("version") != static_cast<std::size_t>(kBundleVersion)) {
    throw CorruptionError(origin + ": unsupported bundle version");
  }
  const std::size_t n = as_size("n"), m = as_size("m");
  if (n == 0 || m == 0) throw CorruptionError(origin + ": zero extent");

  DatasetBundle b;
  b.seed = as_size("seed");
  try {
    b.graph = CausalGraph(n, parse_family(io::require_key(kv, "family", origin)));
    b.mechanism = parse_mechanism(io::require_key(kv, "mechanism", origin));
  } catch (const std::invalid_argument& e) {
    throw CorruptionError(origin + ": " + e.what());
  }
  std::stringstream ns(io::require_key(kv, "noise_scales", origin));
  for (std::string tok; std::getline(ns, tok, ',');) {
    if (!tok.empty()) b.noise_scales.push_back(std::stod(tok));
  }

  auto load = [&](const char* file, const char* field, std::size_t expected) {
    auto bytes = io::read_file(dir / file);
    if (bytes.size() != expected) {
      throw CorruptionError(std::string(file) + ": expected " + std::to_string(expected) + " bytes, found " +
                            std::to_string(bytes.size()) + " (truncated or extent mismatch)");
    }
    const auto want = io::require_key(kv, std::string("checksum.") + field, origin);
    if (io::hex32(io::crc32_of(bytes.data(), bytes.size())) != want) {
      throw CorruptionError(std::string("checksum mismatch for field 'checksum.") + field + "' (" + file + ")");
    }
    return bytes;
  };
  const auto d_bytes = load("D.bin", "D", m * n * sizeof(float));
  const auto i_bytes = load("I.bin", "I", m * n);
  const auto a_bytes = load("adj.bin", "adj", n * n);

  b.data = Dataset(m, n);
  for (std::size_t i = 0; i < m * n; ++i) {
    float f;
    std::memcpy(&f, d_bytes.data() + i * sizeof(float), sizeof(float));
    b.data.values[i] = f;
  }
  std::copy(i_bytes.begin(), i_bytes.end(), reinterpret_cast<char*>(b.data.mask.data()));
  std::copy(a_bytes.begin(), a_bytes.end(), reinterpret_cast<char*>(b.graph.adj.data()));
  b.data.standardized = as_size("standardized") != 0;
  if (as_size("edges") != b.graph.edge_count()) throw CorruptionError(origin + ": field 'edges' disagrees with adj.bin");
  return b;
}

/// Generates graph, mechanism and samples for one seed.
inline DatasetBundle generate_bundle(GraphFamily family, std::size_t n, std::size_t e, std::size_t m,
                                     MechanismKind kind, double interventional_fraction, std::uint64_t seed) {
  DatasetBundle b;
  b.graph = sample_graph(family, n, e, seed);
  const Mechanism mech = sample_mechanism(b.graph, kind, seed);
  b.data = sample_dataset(b.graph, mech, m, interventional_fraction, seed);
  b.mechanism = kind;
  b.seed = seed;
  for (const auto& nm : mech.nodes) b.noise_scales.push_back(nm.sigma);
  return b;
}

}  // namespace causcale

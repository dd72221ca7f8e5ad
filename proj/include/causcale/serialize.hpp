// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Flat little-endian tensor files.
//
//   "CSWT" | u32 format version | u64 tensor count
//   per tensor: u64 name length | name bytes | u64 rank | u64 extents[rank]
//               | u8 dtype (0 = f32, 1 = f64) | row-major payload
//
// A sidecar text manifest lists the tensor names, one per line, in file order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "causcale/tensor.hpp"

namespace causcale {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

class CorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct NamedTensor {
  std::string name;
  Tensor value;
};

namespace io {

inline constexpr char kTensorMagic[4] = {'C', 'S', 'W', 'T'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint64_t kMaxRank = 16;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw CorruptionError("truncated file while reading " + what);
  }
  return v;
}

inline void read_exact(std::istream& is, char* dst, std::size_t n, const std::string& what) {
  if (!is.read(dst, static_cast<std::streamsize>(n))) throw CorruptionError("truncated file while reading " + what);
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace io

inline void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors,
                          DType dtype = DType::f32) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(io::kTensorMagic, 4);
  io::put(os, io::kTensorFormatVersion);
  io::put(os, static_cast<std::uint64_t>(tensors.size()));
  for (const auto& [name, value] : tensors) {
    io::put(os, static_cast<std::uint64_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::put(os, static_cast<std::uint64_t>(value.rank()));
    for (std::size_t e : value.shape()) io::put(os, static_cast<std::uint64_t>(e));
    io::put(os, static_cast<std::uint8_t>(dtype));
    if (dtype == DType::f32) {
      for (double v : value.data()) io::put(os, static_cast<float>(v));
    } else {
      os.write(reinterpret_cast<const char*>(value.ptr()), static_cast<std::streamsize>(value.size() * sizeof(double)));
    }
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

inline std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  io::read_exact(is, magic, 4, "magic");
  if (std::memcmp(magic, io::kTensorMagic, 4) != 0) throw CorruptionError(path.string() + ": bad magic");
  const auto version = io::get<std::uint32_t>(is, "version");
  if (version != io::kTensorFormatVersion) {
    throw CorruptionError(path.string() + ": unsupported format version " + std::to_string(version));
  }
  const auto count = io::get<std::uint64_t>(is, "tensor count");
  std::vector<NamedTensor> out;
  for (std::uint64_t t = 0; t < count; ++t) {
    const auto len = io::get<std::uint64_t>(is, "name length");
    if (len > 4096) throw CorruptionError("implausible tensor name length " + std::to_string(len));
    std::string name(len, '\0');
    io::read_exact(is, name.data(), len, "tensor name");
    const auto rank = io::get<std::uint64_t>(is, "rank of " + name);
    if (rank > io::kMaxRank) throw CorruptionError("implausible rank for " + name);
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& e : shape) {
      e = io::get<std::uint64_t>(is, "extent of " + name);
      if (e == 0 || e > (std::uint64_t{1} << 32)) throw CorruptionError("bad extent for " + name);
      numel *= e;
    }
    const auto tag = io::get<std::uint8_t>(is, "dtype of " + name);
    std::vector<double> data(numel);
    if (tag == static_cast<std::uint8_t>(DType::f32)) {
      std::vector<float> buf(numel);
      io::read_exact(is, reinterpret_cast<char*>(buf.data()), numel * sizeof(float), "payload of " + name);
      std::copy(buf.begin(), buf.end(), data.begin());
    } else if (tag == static_cast<std::uint8_t>(DType::f64)) {
      io::read_exact(is, reinterpret_cast<char*>(data.data()), numel * sizeof(double), "payload of " + name);
    } else {
      throw CorruptionError("unknown dtype tag " + std::to_string(tag) + " for " + name);
    }
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (is.peek() != std::char_traits<char>::eof()) throw CorruptionError(path.string() + ": trailing bytes");
  return out;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : tensors) os << t.name << '\n';
}

inline std::vector<std::string> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> names;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

/// Reads a tensor file and checks it against its manifest.
inline std::vector<NamedTensor> read_tensors_checked(const std::filesystem::path& path,
                                                     const std::filesystem::path& manifest) {
  auto tensors = read_tensors(path);
  const auto names = read_manifest(manifest);
  if (names.size() != tensors.size()) {
    throw CorruptionError("manifest lists " + std::to_string(names.size()) + " tensors, file has " +
                          std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] != tensors[i].name) {
      throw CorruptionError("manifest entry " + std::to_string(i) + " is '" + names[i] + "' but file has '" +
                            tensors[i].name + "'");
    }
  }
  return tensors;
}

}  // namespace causcale

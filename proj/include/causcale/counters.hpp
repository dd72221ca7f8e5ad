// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace causcale {

class CounterOverflow : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

enum class AttentionAxis { sample, node, graph };

/// FLOP tallies for one data-graph block. Attention-map FLOPs are the logit and
/// value-mixing products only; projections are tallied under `projection`.
struct BlockFlops {
  std::uint64_t sample_attention = 0;
  std::uint64_t node_attention = 0;
  std::uint64_t graph_attention = 0;
  std::uint64_t projection = 0;
  std::uint64_t normalization = 0;
  std::size_t data_length = 0;
};

/// Per-session instrumentation. Install with CounterScope; kernels report into
/// whichever instance is active on the calling thread.
struct PerfCounters {
  std::vector<BlockFlops> blocks;
  BlockFlops outside;  // encoders, head, anything before block 0
  int current_block = -1;
  std::uint64_t peak_attention_floats = 0;
  std::uint64_t last_attention_floats = 0;
  std::uint64_t attention_calls = 0;

  static std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
    if (b > std::numeric_limits<std::uint64_t>::max() - a) {
      throw CounterOverflow("FLOP counter overflow");
    }
    return a + b;
  }

  BlockFlops& current() {
    if (current_block < 0) return outside;
    auto idx = static_cast<std::size_t>(current_block);
    if (blocks.size() <= idx) blocks.resize(idx + 1);
    return blocks[idx];
  }

  void enter_block(int b, std::size_t data_length) {
    current_block = b;
    current().data_length = data_length;
  }
  void leave_block() { current_block = -1; }

  void add_attention(AttentionAxis axis, std::uint64_t flops) {
    auto& blk = current();
    switch (axis) {
      case AttentionAxis::sample: blk.sample_attention = checked_add(blk.sample_attention, flops); break;
      case AttentionAxis::node: blk.node_attention = checked_add(blk.node_attention, flops); break;
      case AttentionAxis::graph: blk.graph_attention = checked_add(blk.graph_attention, flops); break;
    }
  }
  void add_projection(std::uint64_t flops) {
    auto& blk = current();
    blk.projection = checked_add(blk.projection, flops);
  }
  void add_normalization(std::uint64_t flops) {
    auto& blk = current();
    blk.normalization = checked_add(blk.normalization, flops);
  }
  void record_attention_map(std::uint64_t floats) {
    last_attention_floats = floats;
    peak_attention_floats = std::max(peak_attention_floats, floats);
    ++attention_calls;
  }

  std::uint64_t total_sample_attention() const {
    std::uint64_t t = 0;
    for (const auto& b : blocks) t = checked_add(t, b.sample_attention);
    return t;
  }
  std::uint64_t total_node_attention() const {
    std::uint64_t t = 0;
    for (const auto& b : blocks) t = checked_add(t, b.node_attention);
    return t;
  }
};

namespace detail {
inline PerfCounters*& active_counters() {
  thread_local PerfCounters* active = nullptr;
  return active;
}
}  // namespace detail

inline PerfCounters* counters() { return detail::active_counters(); }

/// Installs a counter set on the current thread for the lifetime of the scope.
class CounterScope {
 public:
  explicit CounterScope(PerfCounters& c) : previous_(detail::active_counters()) {
    detail::active_counters() = &c;
  }
  ~CounterScope() { detail::active_counters() = previous_; }
  CounterScope(const CounterScope&) = delete;
  CounterScope& operator=(const CounterScope&) = delete;

 private:
  PerfCounters* previous_;
};

}  // namespace causcale

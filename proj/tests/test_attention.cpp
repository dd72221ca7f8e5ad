// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "causcale/attention.hpp"
#include "causcale/counters.hpp"
#include "attention_oracles.hpp"
#include "test_util.hpp"

namespace causcale {
namespace {

using testing::random_tensor;

using oracle::standard_mha;
using oracle::tied_reference;

Var core(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t H, double scale, bool tied = true) {
  return tied ? tied_attention_core(ad::constant(q), ad::constant(k), ad::constant(v), H, scale, AttentionAxis::node)
              : vanilla_attention_core(ad::constant(q), ad::constant(k), ad::constant(v), H, scale, AttentionAxis::node);
}

TEST(Attention, TiedMatchesTripleLoop) {
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng = make_rng(static_cast<std::uint64_t>(seed), 2);
    const Tensor q = random_tensor({2, 3, 4}, rng), k = random_tensor({2, 3, 4}, rng), v = random_tensor({2, 3, 4}, rng);
    for (std::size_t H : {1u, 2u}) {
      const Var o = core(q, k, v, H, 0.37);
      EXPECT_LT(max_abs_diff(o.value(), tied_reference(q, k, v, H, 0.37)), 1e-12);
    }
  }
}

TEST(Attention, TiedEqualsStandardWhenSingleSlice) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(static_cast<std::uint64_t>(seed), 3);
    const std::size_t H = 1 + seed % 4, dh = 1 + seed % 3, C = 2 + seed % 5, d = H * dh;
    const Tensor q = random_tensor({C, d}, rng), k = random_tensor({C, d}, rng), v = random_tensor({C, d}, rng);
    const Var o = core(q.reshaped({1, C, d}), k.reshaped({1, C, d}), v.reshaped({1, C, d}), H,
                       1.0 / std::sqrt(static_cast<double>(dh)));
    EXPECT_LT(max_abs_diff(o.value().reshaped({C, d}), standard_mha(q, k, v, H)), 1e-10) << "seed " << seed;
  }
}

TEST(Attention, VanillaEqualsStandardPerSlice) {
  Rng rng = make_rng(4, 0);
  const std::size_t R = 3, C = 4, d = 6, H = 2;
  const Tensor q = random_tensor({R, C, d}, rng), k = random_tensor({R, C, d}, rng), v = random_tensor({R, C, d}, rng);
  const Var o = core(q, k, v, H, 1.0 / std::sqrt(3.0), false);
  for (std::size_t r = 0; r < R; ++r) {
    auto slice = [&](const Tensor& t) {
      return Tensor({C, d}, std::vector<double>(t.ptr() + r * C * d, t.ptr() + (r + 1) * C * d));
    };
    EXPECT_LT(max_abs_diff(slice(o.value()), standard_mha(slice(q), slice(k), slice(v), H)), 1e-12);
  }
}

TEST(Attention, ZeroQueryGivesUniformMixing) {
  Rng rng = make_rng(5, 0);
  const std::size_t R = 2, C = 5, d = 4;
  const Tensor q({R, C, d}), k = random_tensor({R, C, d}, rng), v = random_tensor({R, C, d}, rng);
  const Var o = core(q, k, v, 2, 0.5);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t t = 0; t < d; ++t) {
        double mean = 0.0;
        for (std::size_t j = 0; j < C; ++j) mean += v.at(r, j, t) / static_cast<double>(C);
        EXPECT_NEAR(o.value().at(r, i, t), mean, 1e-12);
      }
}

TEST(Attention, EquivariantUnderAttendedAxisPermutation) {
  Rng rng = make_rng(6, 0);
  const std::size_t R = 3, C = 5, d = 4;
  const Tensor q = random_tensor({R, C, d}, rng), k = random_tensor({R, C, d}, rng), v = random_tensor({R, C, d}, rng);
  std::vector<std::size_t> perm(C);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto permute = [&](const Tensor& t) {
    Tensor p(t.shape());
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t x = 0; x < d; ++x) p.at(r, c, x) = t.at(r, perm[c], x);
    return p;
  };
  const Var o = core(q, k, v, 2, 0.3);
  const Var op = core(permute(q), permute(k), permute(v), 2, 0.3);
  EXPECT_LT(max_abs_diff(op.value(), permute(o.value())), 1e-12);
}

TEST(Attention, TiedGradientsMatchFiniteDifferences) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(static_cast<std::uint64_t>(seed), 7);
    std::vector<Tensor> in{random_tensor({2, 3, 4}, rng), random_tensor({2, 3, 4}, rng), random_tensor({2, 3, 4}, rng)};
    auto fn = [](const std::vector<Var>& v) {
      return testing::project(tied_attention_core(v[0], v[1], v[2], 2, 0.4, AttentionAxis::sample), 3);
    };
    EXPECT_LT(testing::gradient_error(fn, in), 1e-4) << "seed " << seed;
  }
}

TEST(Attention, VanillaGradientsMatchFiniteDifferences) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(static_cast<std::uint64_t>(seed), 8);
    std::vector<Tensor> in{random_tensor({2, 3, 4}, rng), random_tensor({2, 3, 4}, rng), random_tensor({2, 3, 4}, rng)};
    auto fn = [](const std::vector<Var>& v) {
      return testing::project(vanilla_attention_core(v[0], v[1], v[2], 2, 0.4, AttentionAxis::sample), 4);
    };
    EXPECT_LT(testing::gradient_error(fn, in), 1e-4) << "seed " << seed;
  }
}

TEST(Attention, MapMemoryLaw) {
  const std::size_t C = 6, d = 8, H = 4;
  for (std::size_t R : {1u, 16u, 64u}) {
    Rng rng = make_rng(R, 9);
    const Tensor q = random_tensor({R, C, d}, rng);
    PerfCounters tied, vanilla;
    {
      const CounterScope s(tied);
      core(q, q, q, H, 0.1);
    }
    {
      const CounterScope s(vanilla);
      core(q, q, q, H, 0.1, false);
    }
    EXPECT_EQ(tied.peak_attention_floats, H * C * C);
    EXPECT_EQ(vanilla.peak_attention_floats, R * H * C * C);
  }
}

TEST(Attention, RejectsIndivisibleWidth) {
  const Tensor x({1, 3, 6});
  EXPECT_THROW(core(x, x, x, 4, 1.0), DimensionError);
  EXPECT_THROW(core(x, x, Tensor({1, 2, 6}), 2, 1.0), DimensionError);
}

}  // namespace
}  // namespace causcale

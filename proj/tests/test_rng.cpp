// Copyright 2026 The ibcomm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ibcomm/rng.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace ibcomm {
namespace {

TEST(RngTest, StreamsAreReproducible) {
  Rng a = make_stream(42, Stream::kTraffic, 3);
  Rng b = make_stream(42, Stream::kTraffic, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(RngTest, StreamsAreDistinct) {
  const auto first = [](Rng r) { return r(); };
  const std::uint64_t base = first(make_stream(42, Stream::kTraffic, 0));
  EXPECT_NE(base, first(make_stream(43, Stream::kTraffic, 0)));
  EXPECT_NE(base, first(make_stream(42, Stream::kRadio, 0)));
  EXPECT_NE(base, first(make_stream(42, Stream::kTraffic, 1)));
  EXPECT_NE(base, first(make_stream(42ull | (1ull << 40), Stream::kTraffic, 0)));
}

TEST(RngTest, Uniform01Range) {
  Rng r = make_stream(1, Stream::kExplore);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = uniform01(r);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_LT(lo, 1e-4);
  EXPECT_GT(hi, 1 - 1e-4);
  EXPECT_NEAR(sum / n, 0.5, 4 * std::sqrt(1.0 / 12.0 / n));
}

TEST(RngTest, UniformIndexIsUniform) {
  Rng r = make_stream(2, Stream::kExplore);
  const std::size_t k = 7;
  std::vector<std::size_t> counts(k, 0);
  for (int i = 0; i < 100000; ++i) {
    const auto j = uniform_index(r, k);
    ASSERT_LT(j, k);
    ++counts[j];
  }
  EXPECT_GT(testing::chi_square_pvalue(counts, std::vector<double>(k, 1.0 / k)), 0.01);
}

TEST(RngTest, StandardNormalMoments) {
  Rng r = make_stream(3, Stream::kBottleneck);
  const int n = 200000;
  double s = 0.0, s2 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = standard_normal(r);
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(s4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

}  // namespace
}  // namespace ibcomm

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

#include "ibcomm/replay.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace ibcomm {
namespace {

Transition tagged(double id) {
  Transition t;
  t.reward = id;
  return t;
}

TEST(SumTreeTest, TotalsAndFind) {
  SumTree t(5);
  const std::vector<double> v{1.0, 2.0, 0.0, 3.0, 4.0};
  for (std::size_t i = 0; i < v.size(); ++i) t.set(i, v[i]);
  EXPECT_EQ(t.total(), 10.0);
  EXPECT_EQ(t.find(0.0), 0u);
  EXPECT_EQ(t.find(0.999), 0u);
  EXPECT_EQ(t.find(1.0), 1u);
  EXPECT_EQ(t.find(2.999), 1u);
  EXPECT_EQ(t.find(3.0), 3u);
  EXPECT_EQ(t.find(6.0), 4u);
  EXPECT_EQ(t.find(9.999), 4u);
  t.set(3, 0.5);
  EXPECT_EQ(t.total(), 7.5);
  EXPECT_EQ(t.get(3), 0.5);
}

TEST(ReplayTest, FirstPriorityIsOne) {
  PrioritizedReplay r(10, 0.6);
  r.store(tagged(0));
  EXPECT_EQ(r.priority(0), 1.0);
  EXPECT_EQ(r.probability(0), 1.0);
}

TEST(ReplayTest, NewEntriesUseMaxPriority) {
  PrioritizedReplay r(10, 0.6);
  r.store(tagged(0));
  r.store(tagged(1));
  const std::vector<std::size_t> idx{0};
  const std::vector<double> td{4.0};
  r.update_priorities(idx, td);
  EXPECT_EQ(r.max_priority(), 4.001);
  r.store(tagged(2));
  EXPECT_EQ(r.priority(2), 4.001);
  // Max never decreases.
  const std::vector<double> small{0.0};
  r.update_priorities(idx, small);
  EXPECT_EQ(r.priority(0), 0.001);
  EXPECT_EQ(r.max_priority(), 4.001);
}

TEST(ReplayTest, RingEvictsOldest) {
  PrioritizedReplay r(3, 0.6);
  for (int i = 0; i < 5; ++i) r.store(tagged(i));
  EXPECT_EQ(r.size(), 3u);
  EXPECT_EQ(r.at(0).reward, 3.0);
  EXPECT_EQ(r.at(1).reward, 4.0);
  EXPECT_EQ(r.at(2).reward, 2.0);
}

TEST(ReplayTest, PriorityFloorAndOffset) {
  PrioritizedReplay r(4, 0.6);
  for (int i = 0; i < 2; ++i) r.store(tagged(i));
  const std::vector<std::size_t> idx{0, 1};
  const std::vector<double> td{0.0, -2.0};
  r.update_priorities(idx, td);
  EXPECT_EQ(r.priority(0), 0.001);
  EXPECT_EQ(r.priority(1), 2.001);
}

TEST(ReplayTest, StaleIndexRejected) {
  PrioritizedReplay r(8, 0.6);
  r.store(tagged(0));
  const std::vector<std::size_t> idx{3};
  const std::vector<double> td{1.0};
  EXPECT_THROW(r.update_priorities(idx, td), std::out_of_range);
}

TEST(ReplayTest, InsufficientSamplesRejected) {
  PrioritizedReplay r(100, 0.6);
  for (int i = 0; i < 10; ++i) r.store(tagged(i));
  Rng rng = make_stream(1, Stream::kReplay);
  EXPECT_THROW(r.sample(64, 0.4, rng), std::runtime_error);
  EXPECT_NO_THROW(r.sample(10, 0.4, rng));
}

TEST(ReplayTest, EqualPrioritiesSampleUniformly) {
  PrioritizedReplay r(10, 0.6);
  for (int i = 0; i < 10; ++i) r.store(tagged(i));
  Rng rng = make_stream(2, Stream::kReplay);
  std::vector<std::size_t> counts(10, 0);
  for (int k = 0; k < 10000; ++k) {
    const ReplaySample s = r.sample(10, 0.4, rng);
    for (std::size_t i : s.indices) ++counts[i];
    for (double w : s.is_weights) ASSERT_EQ(w, 1.0);
  }
  EXPECT_GT(testing::chi_square_pvalue(counts, std::vector<double>(10, 0.1)), 0.01);
}

TEST(ReplayTest, ProportionalProbabilities) {
  PrioritizedReplay r(2, 1.0);
  r.store(tagged(0));
  r.store(tagged(1));
  const std::vector<std::size_t> idx{0, 1};
  const std::vector<double> td{3.0 - 0.001, 1.0 - 0.001};
  r.update_priorities(idx, td);
  EXPECT_NEAR(r.probability(0), 0.75, 1e-12);
  EXPECT_NEAR(r.probability(1), 0.25, 1e-12);
  // beta_is = 0 leaves every weight at 1.
  Rng rng = make_stream(3, Stream::kReplay);
  const ReplaySample s = r.sample(2, 0.0, rng);
  for (double w : s.is_weights) EXPECT_EQ(w, 1.0);
}

TEST(ReplayTest, ImportanceWeightsNormalized) {
  PrioritizedReplay r(50, 0.6);
  for (int i = 0; i < 50; ++i) r.store(tagged(i));
  std::vector<std::size_t> idx(50);
  std::vector<double> td(50);
  for (std::size_t i = 0; i < 50; ++i) {
    idx[i] = i;
    td[i] = 0.1 * static_cast<double>(i);
  }
  r.update_priorities(idx, td);
  Rng rng = make_stream(4, Stream::kReplay);
  for (int k = 0; k < 100; ++k) {
    const ReplaySample s = r.sample(16, 0.7, rng);
    double mx = 0.0;
    for (std::size_t b = 0; b < s.is_weights.size(); ++b) {
      const double w = s.is_weights[b];
      EXPECT_GT(w, 0.0);
      EXPECT_LE(w, 1.0);
      mx = std::max(mx, w);
      EXPECT_EQ(s.transitions[b], &r.at(s.indices[b]));
    }
    EXPECT_EQ(mx, 1.0);
  }
}

// Empirical sampling law matches p_i^0.6 / sum_j p_j^0.6.
TEST(ReplayTest, SamplingLawAtAlpha) {
  const std::size_t n = 8;
  PrioritizedReplay r(n, 0.6);
  for (std::size_t i = 0; i < n; ++i) r.store(tagged(static_cast<double>(i)));
  std::vector<std::size_t> idx(n);
  std::vector<double> td(n);
  std::vector<double> expect(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = i;
    td[i] = 0.5 * static_cast<double>(i + 1);
    expect[i] = std::pow(td[i] + 0.001, 0.6);
    z += expect[i];
  }
  for (double& e : expect) e /= z;
  r.update_priorities(idx, td);
  Rng rng = make_stream(5, Stream::kReplay);
  std::vector<std::size_t> counts(n, 0);
  for (int k = 0; k < 100000; ++k) ++counts[r.sample(1, 0.4, rng).indices[0]];
  EXPECT_GT(testing::chi_square_pvalue(counts, expect), 0.01);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(r.probability(i), expect[i], 1e-12);
}

}  // namespace
}  // namespace ibcomm

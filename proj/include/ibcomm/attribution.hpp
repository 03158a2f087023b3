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

// Permutation-sampling Shapley values over grouped input features.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibcomm/comm.hpp"
#include "ibcomm/nn.hpp"
#include "ibcomm/rng.hpp"
#include "ibcomm/train.hpp"

namespace ibcomm {

enum class AttributionBaseline { kMean, kZeros };

struct AttributionConfig {
  std::size_t n_permutations = 2000;
  AttributionBaseline baseline = AttributionBaseline::kMean;

  void validate() const {
    if (n_permutations < 1) throw std::invalid_argument("n_permutations must be >= 1");
  }
};

// A player is a set of input coordinates switched together.
using FeatureGroups = std::vector<std::vector<std::size_t>>;

struct ShapleyResult {
  std::vector<double> values;      // one per player
  std::vector<double> std_errors;  // Monte Carlo standard error per player
  double f_target = 0.0;
  double f_baseline = 0.0;
  // Standard error of the sum of attributions.
  double sum_std_error = 0.0;
};

// Each permutation moves players from baseline to target in random order and
// credits every player with the value change it causes.
template <typename ValueFn>
ShapleyResult shapley_sample(ValueFn&& value, std::span<const double> baseline,
                             std::span<const double> target, const FeatureGroups& groups,
                             std::size_t n_permutations, Rng& rng) {
  if (baseline.size() != target.size()) {
    throw std::invalid_argument("shapley_sample: baseline has " +
                                std::to_string(baseline.size()) + " features, target " +
                                std::to_string(target.size()));
  }
  if (n_permutations < 1) throw std::invalid_argument("n_permutations must be >= 1");
  for (const auto& g : groups) {
    for (std::size_t j : g) {
      if (j >= target.size()) {
        throw std::invalid_argument("shapley_sample: group index " + std::to_string(j) +
                                    " out of range");
      }
    }
  }
  const std::size_t m = groups.size();
  std::vector<double> x(baseline.begin(), baseline.end());
  ShapleyResult r;
  r.f_baseline = value(std::span<const double>(x));
  r.f_target = value(target);

  std::vector<double> sum(m, 0.0), sum_sq(m, 0.0);
  double tot = 0.0, tot_sq = 0.0;
  std::vector<std::size_t> order(m);
  for (std::size_t k = 0; k < n_permutations; ++k) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = m; i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    std::copy(baseline.begin(), baseline.end(), x.begin());
    double prev = r.f_baseline;
    double perm_total = 0.0;
    for (std::size_t p : order) {
      for (std::size_t j : groups[p]) x[j] = target[j];
      const double cur = value(std::span<const double>(x));
      const double d = cur - prev;
      sum[p] += d;
      sum_sq[p] += d * d;
      perm_total += d;
      prev = cur;
    }
    tot += perm_total;
    tot_sq += perm_total * perm_total;
  }

  const double n = static_cast<double>(n_permutations);
  auto se = [n](double s, double s2) {
    if (n < 2) return 0.0;
    const double mean = s / n;
    const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
    return std::sqrt(var / n);
  };
  r.values.resize(m);
  r.std_errors.resize(m);
  for (std::size_t p = 0; p < m; ++p) {
    r.values[p] = sum[p] / n;
    r.std_errors[p] = se(sum[p], sum_sq[p]);
  }
  r.sum_std_error = se(tot, tot_sq);
  return r;
}

// Players for an agent observation: served traffic, allocation gap, then one
// player per peer message block.
inline FeatureGroups observation_groups(const MessagePolicy& policy, std::size_t n_peers) {
  FeatureGroups g{{0}, {1}};
  const std::size_t k = static_cast<std::size_t>(policy.alphabet_size());
  for (std::size_t p = 0; p < n_peers && k > 0; ++p) {
    std::vector<std::size_t> block(k);
    std::iota(block.begin(), block.end(), 2 + p * k);
    g.push_back(std::move(block));
  }
  return g;
}

inline const std::vector<std::string>& attribution_feature_names() {
  static const std::vector<std::string> names{"traffic", "alloc_gap", "code_peer1",
                                              "code_peer2"};
  return names;
}

// Deterministic-mode Q-value of a fixed joint action.
class GreedyQValue {
 public:
  GreedyQValue(const QNetwork& net, int action) : net_(&net), action_(action) {
    if (action < 0 || static_cast<std::size_t>(action) >= net.num_actions()) {
      throw std::out_of_range("GreedyQValue: action out of range");
    }
    zero_.assign(net.bottleneck_dim(), 0.0);
  }

  // Fixes the action to the greedy one at `obs`.
  static GreedyQValue at(const QNetwork& net, std::span<const double> obs) {
    const std::vector<double> q = q_values(net, obs);
    return GreedyQValue(net, static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin()));
  }

  int action() const { return action_; }

  double operator()(std::span<const double> x) {
    return forward<double>(*net_, x, zero_, cache_)[static_cast<std::size_t>(action_)];
  }

 private:
  const QNetwork* net_;
  int action_;
  std::vector<double> zero_;
  ForwardCache cache_;
};

inline std::vector<double> feature_means(const std::vector<std::vector<double>>& data) {
  if (data.empty()) throw std::invalid_argument("feature_means: empty dataset");
  // Shifted by the first row: a constant column yields exactly that constant.
  const std::vector<double>& x0 = data.front();
  std::vector<double> d(x0.size(), 0.0);
  for (const auto& x : data) {
    if (x.size() != d.size()) throw std::invalid_argument("feature_means: ragged dataset");
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += x[j] - x0[j];
  }
  std::vector<double> m(x0.size());
  for (std::size_t j = 0; j < m.size(); ++j) {
    m[j] = x0[j] + d[j] / static_cast<double>(data.size());
  }
  return m;
}

// values[f][n] is the attribution of named feature f for observation n.
// Features absent under the policy (silent peers) are reported as 0.
struct AttributionTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> std_errors;
  std::vector<double> baseline;
};

// Observation n draws its permutations from stream (seed, n), so results do
// not depend on the worker count.
inline AttributionTable attribute_dataset(const QNetwork& net,
                                          const std::vector<std::vector<double>>& dataset,
                                          const MessagePolicy& policy,
                                          const AttributionConfig& cfg, std::uint64_t seed,
                                          unsigned jobs = 1) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("attribute_dataset: empty dataset");
  const std::size_t n_peers = kNumSlices - 1;
  const std::size_t dim = observation_size(policy, n_peers);
  for (const auto& x : dataset) {
    if (x.size() != dim) {
      throw std::invalid_argument("attribute_dataset: observation has " +
                                  std::to_string(x.size()) + " features, policy needs " +
                                  std::to_string(dim));
    }
  }
  if (net.obs_dim() != dim) {
    throw std::invalid_argument("attribute_dataset: network input does not match policy");
  }
  const FeatureGroups groups = observation_groups(policy, n_peers);

  AttributionTable t;
  t.names = attribution_feature_names();
  t.baseline = cfg.baseline == AttributionBaseline::kMean ? feature_means(dataset)
                                                          : std::vector<double>(dim, 0.0);
  t.values.assign(t.names.size(), std::vector<double>(dataset.size(), 0.0));
  t.std_errors = t.values;

  std::vector<std::function<void()>> tasks;
  const unsigned workers = std::max(1u, jobs);
  for (unsigned w = 0; w < workers; ++w) {
    tasks.emplace_back([&, w] {
      for (std::size_t n = w; n < dataset.size(); n += workers) {
        Rng rng = make_stream(seed, Stream::kAttribution, n);
        GreedyQValue f = GreedyQValue::at(net, dataset[n]);
        const ShapleyResult r =
            shapley_sample(f, t.baseline, dataset[n], groups, cfg.n_permutations, rng);
        for (std::size_t p = 0; p < groups.size(); ++p) {
          t.values[p][n] = r.values[p];
          t.std_errors[p][n] = r.std_errors[p];
        }
      }
    });
  }
  run_parallel(std::move(tasks), workers);
  return t;
}

}  // namespace ibcomm

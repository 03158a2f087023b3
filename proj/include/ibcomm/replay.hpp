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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibcomm/env.hpp"
#include "ibcomm/rng.hpp"

namespace ibcomm {

struct Transition {
  Observation obs;
  int action_index = 0;
  double reward = 0.0;
  Observation next_obs;
  bool done = false;
};

// Binary tree of partial sums over a fixed number of leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("SumTree capacity must be > 0");
    leaves_ = 1;
    while (leaves_ < capacity) leaves_ <<= 1;
    nodes_.assign(2 * leaves_, 0.0);
  }

  std::size_t capacity() const { return capacity_; }
  double total() const { return nodes_[1]; }
  double get(std::size_t i) const { return nodes_[leaves_ + i]; }

  void set(std::size_t i, double value) {
    std::size_t n = leaves_ + i;
    nodes_[n] = value;
    for (n >>= 1; n >= 1; n >>= 1) nodes_[n] = nodes_[2 * n] + nodes_[2 * n + 1];
  }

  // Leaf whose cumulative range contains mass in [0, total()).
  std::size_t find(double mass) const {
    std::size_t n = 1;
    while (n < leaves_) {
      const double left = nodes_[2 * n];
      if (mass < left) {
        n = 2 * n;
      } else {
        mass -= left;
        n = 2 * n + 1;
      }
    }
    return std::min(n - leaves_, capacity_ - 1);
  }

 private:
  std::size_t capacity_;
  std::size_t leaves_;
  std::vector<double> nodes_;
};

struct ReplaySample {
  std::vector<std::size_t> indices;
  std::vector<const Transition*> transitions;
  std::vector<double> is_weights;
};

// Proportional prioritized replay: P(i) = p_i^alpha / sum_j p_j^alpha with
// importance weights (N P(i))^-beta normalized by the batch maximum.
class PrioritizedReplay {
 public:
  static constexpr double kPriorityFloor = 1e-3;

  PrioritizedReplay(std::size_t capacity, double alpha)
      : tree_(capacity), alpha_(alpha) {
    data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return tree_.capacity(); }
  double alpha() const { return alpha_; }
  // Largest priority assigned so far (1.0 before any update).
  double max_priority() const { return max_priority_; }
  double priority(std::size_t i) const {
    check_index(i);
    return priorities_[i];
  }
  const Transition& at(std::size_t i) const {
    check_index(i);
    return data_[i];
  }

  // Inserts at the current max priority, overwriting the oldest entry when
  // full. Returns the slot used.
  std::size_t store(Transition t) {
    const std::size_t slot = next_;
    if (data_.size() < capacity()) {
      data_.push_back(std::move(t));
      priorities_.push_back(0.0);
    } else {
      data_[slot] = std::move(t);
    }
    set_priority(slot, max_priority_);
    next_ = (next_ + 1) % capacity();
    return slot;
  }

  ReplaySample sample(std::size_t batch_size, double beta_is, Rng& rng) const {
    if (batch_size == 0 || data_.size() < batch_size) {
      throw std::runtime_error("replay holds " + std::to_string(data_.size()) +
                               " transitions, batch needs " +
                               std::to_string(batch_size));
    }
    ReplaySample s;
    s.indices.resize(batch_size);
    s.transitions.resize(batch_size);
    s.is_weights.resize(batch_size);
    const double total = tree_.total();
    const double n = static_cast<double>(data_.size());
    double max_w = 0.0;
    for (std::size_t b = 0; b < batch_size; ++b) {
      std::size_t i;
      do {  // rounding at the right edge can land on an empty leaf
        i = tree_.find(uniform01(rng) * total);
      } while (i >= data_.size() || tree_.get(i) <= 0.0);
      s.indices[b] = i;
      s.transitions[b] = &data_[i];
      const double p = tree_.get(i) / total;
      s.is_weights[b] = std::pow(n * p, -beta_is);
      max_w = std::max(max_w, s.is_weights[b]);
    }
    for (double& w : s.is_weights) w /= max_w;
    return s;
  }

  void update_priorities(std::span<const std::size_t> indices,
                         std::span<const double> td_errors) {
    if (indices.size() != td_errors.size()) {
      throw std::invalid_argument("update_priorities: length mismatch");
    }
    for (std::size_t k = 0; k < indices.size(); ++k) {
      check_index(indices[k]);
      const double p = std::abs(td_errors[k]) + kPriorityFloor;
      set_priority(indices[k], p);
      max_priority_ = std::max(max_priority_, p);
    }
  }

  // Sampling probability of slot i under the current priorities.
  double probability(std::size_t i) const {
    check_index(i);
    return tree_.get(i) / tree_.total();
  }

 private:
  void check_index(std::size_t i) const {
    if (i >= data_.size()) {
      throw std::out_of_range("replay index " + std::to_string(i) +
                              " beyond size " + std::to_string(data_.size()));
    }
  }
  void set_priority(std::size_t i, double p) {
    priorities_[i] = p;
    tree_.set(i, std::pow(p, alpha_));
  }

  SumTree tree_;
  double alpha_;
  std::vector<Transition> data_;
  std::vector<double> priorities_;
  std::size_t next_ = 0;
  double max_priority_ = 1.0;
};

}  // namespace ibcomm

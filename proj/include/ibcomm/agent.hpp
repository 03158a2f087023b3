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

// Per-slice DQN agent with an information-bottleneck Q-network, prioritized
// replay and a hard-synced target network.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ibcomm/comm.hpp"
#include "ibcomm/env.hpp"
#include "ibcomm/nn.hpp"
#include "ibcomm/replay.hpp"
#include "ibcomm/rng.hpp"

namespace ibcomm {

struct AgentConfig {
  double gamma = 0.99;
  double lr = 0.0005;
  std::size_t batch_size = 64;
  double epsilon_start = 1.0;
  double epsilon_decay = 0.99;  // per episode, multiplicative
  double epsilon_floor = 0.01;
  double beta_initial = 0.0;     // KL weight at episode 0
  double beta_rate = 0.001;      // KL weight gained per episode
  double per_alpha = 0.6;
  double per_beta_is_start = 0.4;
  double per_beta_is_end = 1.0;
  std::size_t target_sync_period = 200;  // learn steps
  std::size_t replay_capacity = 50000;
  std::size_t hidden_dim = 64;
  std::size_t bottleneck_dim = 32;
  double grad_clip = 10.0;
  bool stochastic_acting = false;  // true: sample bottleneck noise when acting

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0, 1]");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be > 0");
    if (!(epsilon_floor >= 0.0 && epsilon_floor <= epsilon_start && epsilon_start <= 1.0)) {
      throw std::invalid_argument("epsilon schedule must satisfy 0 <= floor <= start <= 1");
    }
    if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0)) {
      throw std::invalid_argument("epsilon_decay must be in (0, 1]");
    }
    if (!(beta_initial >= 0.0) || !(beta_rate >= 0.0)) {
      throw std::invalid_argument("beta_initial and beta_rate must be >= 0");
    }
    if (!(per_alpha >= 0.0)) throw std::invalid_argument("per_alpha must be >= 0");
    if (target_sync_period == 0 || replay_capacity < batch_size) {
      throw std::invalid_argument("bad target_sync_period or replay_capacity");
    }
    if (hidden_dim == 0 || bottleneck_dim == 0) {
      throw std::invalid_argument("layer sizes must be > 0");
    }
  }
};

// Schedules, all indexed by episode.
inline double epsilon_at(const AgentConfig& c, int episode) {
  return std::max(c.epsilon_floor,
                  c.epsilon_start * std::pow(c.epsilon_decay, static_cast<double>(episode)));
}
inline double anneal_beta(int episode, double rate = 0.001, double initial = 0.0) {
  if (episode < 0) throw std::invalid_argument("episode must be >= 0");
  return initial + rate * static_cast<double>(episode);
}
inline double beta_at(const AgentConfig& c, int episode) {
  return anneal_beta(episode, c.beta_rate, c.beta_initial);
}
inline double per_beta_is_at(const AgentConfig& c, int episode, int total_episodes) {
  if (total_episodes <= 1) return c.per_beta_is_end;
  const double frac = std::min(1.0, static_cast<double>(episode) /
                                        static_cast<double>(total_episodes - 1));
  return c.per_beta_is_start + (c.per_beta_is_end - c.per_beta_is_start) * frac;
}

// Epsilon-greedy over a joint action vector; ties go to the lowest index.
inline int select_action(std::span<const double> q, double epsilon, Rng& rng) {
  if (q.empty()) throw std::invalid_argument("select_action: empty Q vector");
  const double u = uniform01(rng);
  if (u < epsilon) return static_cast<int>(uniform_index(rng, q.size()));
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i) {
    if (q[i] > q[best]) best = i;
  }
  return static_cast<int>(best);
}

inline int encode_action(int cpu_level, int message, int n_msg) {
  if (cpu_level < 0 || cpu_level >= kNumCpuLevels || message < 0 || message >= n_msg) {
    throw std::out_of_range("encode_action: component out of range");
  }
  return cpu_level * n_msg + message;
}

inline ActionPair decode_action(int index, int n_msg) {
  if (n_msg < 1 || index < 0 || index >= kNumCpuLevels * n_msg) {
    throw std::out_of_range("action index " + std::to_string(index) +
                            " outside joint space of " +
                            std::to_string(kNumCpuLevels * n_msg));
  }
  return ActionPair{index / n_msg, index % n_msg};
}

// y = r for terminal transitions, r + gamma * max_a' Q_target(s', a')
// otherwise. The target network runs in deterministic mode.
inline std::vector<double> td_targets(std::span<const Transition* const> batch,
                                      const QNetwork& target_net, double gamma) {
  std::vector<double> y(batch.size());
  const std::vector<double> zero(target_net.bottleneck_dim(), 0.0);
  ForwardCache c;
  std::vector<double> x;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    if (t.done || gamma == 0.0) {
      y[i] = t.reward;
      continue;
    }
    x = t.next_obs.features();
    const auto& q = forward<double>(target_net, x, zero, c);
    y[i] = t.reward + gamma * *std::max_element(q.begin(), q.end());
  }
  return y;
}

struct LearnResult {
  bool ready = false;  // false: replay below batch size, nothing done
  LossBreakdown loss;
  double grad_norm = 0.0;
};

class DqnAgent {
 public:
  // Streams are derived from (seed, agent_id); agents never share state.
  DqnAgent(AgentConfig config, std::size_t obs_dim, std::size_t num_actions,
           std::uint64_t seed, std::uint64_t agent_id)
      : config_(std::move(config)),
        replay_(config_.replay_capacity, config_.per_alpha),
        explore_rng_(make_stream(seed, Stream::kExplore, agent_id)),
        noise_rng_(make_stream(seed, Stream::kBottleneck, agent_id)),
        replay_rng_(make_stream(seed, Stream::kReplay, agent_id)) {
    config_.validate();
    Rng init = make_stream(seed, Stream::kNetInit, agent_id);
    online_ = make_qnetwork(obs_dim, config_.hidden_dim, config_.bottleneck_dim,
                            num_actions, init);
    target_ = online_;
    adam_ = AdamState(online_);
    grads_ = online_.zeros_like();
  }

  const AgentConfig& config() const { return config_; }
  const QNetwork& online() const { return online_; }
  QNetwork& online() { return online_; }
  const QNetwork& target() const { return target_; }
  const PrioritizedReplay& replay() const { return replay_; }
  std::size_t learn_steps() const { return learn_steps_; }

  // Training-mode action, epsilon-greedy. The bottleneck is sampled only
  // when stochastic_acting is set; otherwise the mean code is used.
  int act(const Observation& obs, double epsilon) {
    feat_ = obs.features();
    noise_.resize(online_.bottleneck_dim());
    for (double& e : noise_) {
      e = config_.stochastic_acting ? standard_normal(noise_rng_) : 0.0;
    }
    const auto& q = forward<double>(online_, feat_, noise_, cache_);
    return select_action(q, epsilon, explore_rng_);
  }

  // Evaluation-mode action: noise = 0, greedy.
  int act_greedy(const Observation& obs) const {
    const std::vector<double> x = obs.features();
    const std::vector<double> q = q_values(online_, x);
    return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
  }

  void store(Transition t) { replay_.store(std::move(t)); }

  // One gradient step on a prioritized batch. KL weight `beta` and IS
  // exponent `beta_is` come from the episode schedules.
  LearnResult learn_step(double beta, double beta_is) {
    LearnResult r;
    if (replay_.size() < config_.batch_size) return r;
    const std::size_t n = config_.batch_size;
    ReplaySample s = replay_.sample(n, beta_is, replay_rng_);
    const std::vector<double> y = td_targets(s.transitions, target_, config_.gamma);

    inputs_.resize(n);
    noises_.resize(n);
    actions_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      inputs_[i] = s.transitions[i]->obs.features();
      noises_[i].resize(online_.bottleneck_dim());
      for (double& e : noises_[i]) e = standard_normal(noise_rng_);
      actions_[i] = s.transitions[i]->action_index;
    }
    grads_.for_each_block([](std::span<double> b) { std::fill(b.begin(), b.end(), 0.0); });
    BatchLossResult br = batch_loss_and_gradients(online_, inputs_, noises_, actions_,
                                                  y, s.is_weights, beta, grads_);
    r.grad_norm = clip_grad_norm(grads_, config_.grad_clip);
    adam_step(online_, grads_, adam_, AdamOptions{config_.lr, 0.9, 0.999, 1e-8});
    replay_.update_priorities(s.indices, br.td_errors);

    ++learn_steps_;
    if (learn_steps_ % config_.target_sync_period == 0) sync_target();
    r.ready = true;
    r.loss = br.loss;
    return r;
  }

  void sync_target() { target_ = online_; }

 private:
  AgentConfig config_;
  QNetwork online_;
  QNetwork target_;
  AdamState adam_;
  QNetwork grads_;
  PrioritizedReplay replay_;
  Rng explore_rng_;
  Rng noise_rng_;
  Rng replay_rng_;
  std::size_t learn_steps_ = 0;

  // Scratch buffers reused across calls.
  ForwardCache cache_;
  std::vector<double> feat_;
  std::vector<double> noise_;
  std::vector<std::vector<double>> inputs_;
  std::vector<std::vector<double>> noises_;
  std::vector<int> actions_;
};

// Agent checkpoint: header (magic, version, episode, epsilon, beta,
// per_beta_is) followed by the online network in network-checkpoint format.
struct AgentCheckpointHeader {
  std::int64_t episode = 0;
  double epsilon = 0.0;
  double beta = 0.0;
  double per_beta_is = 0.0;

  friend bool operator==(const AgentCheckpointHeader&,
                         const AgentCheckpointHeader&) = default;
};

inline constexpr char kAgentMagic[4] = {'I', 'B', 'A', 'G'};
inline constexpr std::uint32_t kAgentFormatVersion = 1;

inline void save_agent_checkpoint(std::ostream& os, const AgentCheckpointHeader& h,
                                  const QNetwork& net) {
  os.write(kAgentMagic, 4);
  detail::write_pod(os, kAgentFormatVersion);
  detail::write_pod(os, h.episode);
  detail::write_pod(os, h.epsilon);
  detail::write_pod(os, h.beta);
  detail::write_pod(os, h.per_beta_is);
  save_network(os, net);
}

inline std::pair<AgentCheckpointHeader, QNetwork> load_agent_checkpoint(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kAgentMagic, 4) != 0) {
    throw std::runtime_error("not an agent checkpoint");
  }
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != kAgentFormatVersion) {
    throw std::runtime_error("unsupported agent checkpoint version");
  }
  AgentCheckpointHeader h;
  h.episode = detail::read_pod<std::int64_t>(is);
  h.epsilon = detail::read_pod<double>(is);
  h.beta = detail::read_pod<double>(is);
  h.per_beta_is = detail::read_pod<double>(is);
  return {h, load_network(is)};
}

}  // namespace ibcomm

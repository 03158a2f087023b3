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

// Discrete-time network-slicing environment.
//
// Each slice owns a transmission queue (radio side, drained at a fluctuating
// radio rate) feeding a computation queue (edge side, drained by the CPU
// frequency granted from a shared pool). Agents request CPU each step; when
// the summed requests exceed the pool the step is a conflict and grants are
// scaled down proportionally.
//
// Units: traffic and radio rates in Mbps, CPU in GHz, time in ms, backlogs in
// bits and cycles.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibcomm/comm.hpp"
#include "ibcomm/rng.hpp"

namespace ibcomm {

inline constexpr std::size_t kNumSlices = 3;

enum class ServiceClass { kEmbb, kUrllc, kMmtc };

inline const char* service_class_name(ServiceClass c) {
  switch (c) {
    case ServiceClass::kEmbb:
      return "eMBB";
    case ServiceClass::kUrllc:
      return "URLLC";
    case ServiceClass::kMmtc:
      return "mMTC";
  }
  return "?";
}

struct SliceSpec {
  int id = 0;
  ServiceClass service_class = ServiceClass::kEmbb;
  double traffic_mean = 1.0;   // Mbps
  double traffic_std = 0.0;    // Mbps
  double cpu_share = 1.0;      // GHz
  double radio_nominal = 1.0;  // Mbps

  void validate() const {
    if (!(traffic_mean > 0.0) || !(traffic_std >= 0.0) || !(cpu_share > 0.0) ||
        !(radio_nominal > 0.0)) {
      throw std::invalid_argument("invalid SliceSpec for slice " +
                                  std::to_string(id));
    }
  }
};

struct ClusterSpec {
  std::array<SliceSpec, kNumSlices> slices{};
  double cpu_total = 0.0;        // GHz
  double cycles_per_bit = 500.0;
  double step_ms = 10.0;
  double latency_cap_ms = 100.0;
  double radio_fluct_lo = 0.7;   // multiplier on radio_nominal
  double radio_fluct_hi = 1.0;
  double traffic_correlation = 0.0;  // lag-1 correlation of the log-traffic

  double share_sum() const {
    double s = 0.0;
    for (const auto& sl : slices) s += sl.cpu_share;
    return s;
  }
  double step_seconds() const { return step_ms * 1e-3; }

  // The pool may be tightened below the share sum (stringent setting) but
  // never enlarged beyond it.
  void validate() const {
    for (const auto& s : slices) s.validate();
    if (!(cpu_total > 0.0) || cpu_total > share_sum() * (1.0 + 1e-12)) {
      throw std::invalid_argument("cpu_total must lie in (0, sum of shares]");
    }
    if (!(step_ms > 0.0) || !(latency_cap_ms > 0.0) || !(cycles_per_bit > 0.0)) {
      throw std::invalid_argument(
          "step_ms, latency_cap_ms and cycles_per_bit must be positive");
    }
    if (!(traffic_correlation >= 0.0 && traffic_correlation < 1.0)) {
      throw std::invalid_argument("traffic_correlation must lie in [0, 1)");
    }
    if (!(radio_fluct_lo > 0.0) || radio_fluct_hi > 1.0 ||
        radio_fluct_lo > radio_fluct_hi) {
      throw std::invalid_argument("radio fluctuation range must lie in (0, 1]");
    }
  }
};

struct RewardParams {
  double latency_ref_ms = 10.0;
  double conflict_penalty = 1.0;
  double underutil_penalty = 0.5;
  double underutil_threshold = 0.10;
};

struct EnvConfig {
  ClusterSpec cluster;
  RewardParams reward;
  std::vector<double> cpu_levels{0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
  int steps_per_episode = 60;
};

struct SliceState {
  double t_backlog = 0.0;       // bits (always integral)
  double c_backlog = 0.0;       // cycles
  double served_traffic = 0.0;  // Mbps leaving the T-queue this step
  double t_latency = 0.0;       // ms
  double c_latency = 0.0;       // ms
  double granted_cpu = 0.0;     // GHz

  double latency() const { return t_latency + c_latency; }
};

struct Observation {
  double served_norm = 0.0;  // served_traffic / traffic_mean
  double gap_norm = 0.0;     // (granted - share) / share
  std::vector<double> inbound_msgs;

  std::size_t size() const { return 2 + inbound_msgs.size(); }

  // Flat network input.
  std::vector<double> features() const {
    std::vector<double> f;
    f.reserve(size());
    f.push_back(served_norm);
    f.push_back(gap_norm);
    f.insert(f.end(), inbound_msgs.begin(), inbound_msgs.end());
    return f;
  }

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct ActionPair {
  int cpu_level = 0;
  int message = 0;
};

struct StepOutcome {
  std::array<Observation, kNumSlices> observations;
  std::array<double, kNumSlices> rewards{};
  std::array<double, kNumSlices> latencies{};  // ms
  std::array<double, kNumSlices> requested{};  // GHz, pre-grant
  std::array<double, kNumSlices> granted{};    // GHz
  std::array<int, kNumSlices> messages{};      // emitted this step (-1: none)
  std::array<double, kNumSlices> offered_bits{};
  std::array<double, kNumSlices> drained_bits{};
  bool conflict = false;
  double utilization = 0.0;
  bool done = false;
};

// Draws offered traffic (Mbps) from a lognormal moment-matched to the slice's
// mean and standard deviation.
inline double lognormal_traffic(const SliceSpec& spec, double z) {
  if (spec.traffic_std == 0.0) return spec.traffic_mean;
  const double cv2 =
      (spec.traffic_std * spec.traffic_std) / (spec.traffic_mean * spec.traffic_mean);
  const double sigma2 = std::log1p(cv2);
  const double mu = std::log(spec.traffic_mean) - 0.5 * sigma2;
  return std::exp(mu + std::sqrt(sigma2) * z);
}

inline double sample_traffic(const SliceSpec& spec, Rng& rng) {
  return lognormal_traffic(spec, standard_normal(rng));
}

// Offered traffic as a stationary Gaussian AR(1) in log space. Each draw has
// the same lognormal marginal as sample_traffic(); successive draws have
// lag-1 latent correlation `rho` (rho = 0 gives independent draws).
class TrafficProcess {
 public:
  TrafficProcess() = default;
  TrafficProcess(const SliceSpec& spec, double rho, Rng& rng)
      : spec_(spec), rho_(rho), latent_(standard_normal(rng)) {}

  double next(Rng& rng) {
    const double out = lognormal_traffic(spec_, latent_);
    latent_ = rho_ * latent_ + std::sqrt(1.0 - rho_ * rho_) * standard_normal(rng);
    return out;
  }

 private:
  SliceSpec spec_;
  double rho_ = 0.0;
  double latent_ = 0.0;
};

// Whole bits arriving in one step at the given rate.
inline double offered_bits(double offered_mbps, const ClusterSpec& cluster) {
  return std::round(offered_mbps * 1e6 * cluster.step_seconds());
}

// One step of the fluid two-stage queue. Bit counts are kept integral, which
// makes the transmission-queue conservation identity exact in floating point.
inline SliceState advance_queues(const SliceState& state, double offered_mbps,
                                 double radio_mbps, double cpu_ghz,
                                 const ClusterSpec& cluster,
                                 double* drained_bits_out = nullptr) {
  const double dt = cluster.step_seconds();
  const double cap = cluster.latency_cap_ms;
  SliceState next = state;
  next.granted_cpu = cpu_ghz;

  next.t_backlog += offered_bits(offered_mbps, cluster);
  const double drained_bits =
      std::min(next.t_backlog, std::floor(radio_mbps * 1e6 * dt));
  next.t_backlog -= drained_bits;
  next.served_traffic = drained_bits / dt * 1e-6;
  next.t_latency = std::min(next.t_backlog / (radio_mbps * 1e6) * 1e3, cap);

  next.c_backlog += drained_bits * cluster.cycles_per_bit;
  const double cycles_per_s = cpu_ghz * 1e9;
  const double drained_cycles = std::min(next.c_backlog, cycles_per_s * dt);
  next.c_backlog -= drained_cycles;
  if (cpu_ghz <= 0.0) {
    next.c_latency = next.c_backlog > 0.0 ? cap : 0.0;
  } else {
    next.c_latency = std::min(next.c_backlog / cycles_per_s * 1e3, cap);
  }
  if (drained_bits_out) *drained_bits_out = drained_bits;
  return next;
}

struct GrantResult {
  std::array<double, kNumSlices> granted{};
  bool conflict = false;
};

// Grants requests as-is when they fit the pool; otherwise flags a conflict and
// scales every request down by the same factor so the pool is exactly used.
inline GrantResult grant_allocations(std::span<const double, kNumSlices> requests,
                                     const ClusterSpec& cluster) {
  GrantResult r;
  double sum = 0.0;
  for (double q : requests) {
    if (!(q >= 0.0)) throw std::invalid_argument("negative CPU request");
    sum += q;
  }
  if (sum <= cluster.cpu_total) {
    std::copy(requests.begin(), requests.end(), r.granted.begin());
    return r;
  }
  r.conflict = true;
  const double scale = cluster.cpu_total / sum;
  for (std::size_t i = 0; i < kNumSlices; ++i) r.granted[i] = requests[i] * scale;
  // Rounding can leave the scaled sum an ulp above the pool; trim the largest
  // grant until the pool bound holds exactly.
  const auto largest = std::max_element(r.granted.begin(), r.granted.end());
  while (r.granted[0] + r.granted[1] + r.granted[2] > cluster.cpu_total) {
    *largest = std::nextafter(*largest, 0.0);
  }
  return r;
}

inline double compute_utilization(std::span<const double, kNumSlices> granted,
                                  const ClusterSpec& cluster) {
  double sum = 0.0;
  for (double g : granted) sum += g;
  return std::clamp(sum / cluster.cpu_total, 0.0, 1.0);
}

inline double compute_reward(double latency_ms, bool conflict,
                             double utilization, const RewardParams& p) {
  double r = std::exp(-latency_ms / p.latency_ref_ms);
  if (conflict) r -= p.conflict_penalty;
  if (utilization < p.underutil_threshold) r -= p.underutil_penalty;
  return r;
}

// Three-slice environment with a one-step-delayed message channel.
class SlicingEnv {
 public:
  SlicingEnv(EnvConfig config, MessagePolicy policy)
      : config_(std::move(config)), policy_(policy) {
    config_.cluster.validate();
    if (config_.cpu_levels.size() != static_cast<std::size_t>(kNumCpuLevels)) {
      throw std::invalid_argument("expected " + std::to_string(kNumCpuLevels) +
                                  " CPU levels");
    }
    if (config_.steps_per_episode < 1) {
      throw std::invalid_argument("steps_per_episode must be >= 1");
    }
  }

  const EnvConfig& config() const { return config_; }
  const ClusterSpec& cluster() const { return config_.cluster; }
  const MessagePolicy& policy() const { return policy_; }
  int step_count() const { return step_; }
  bool done() const { return done_; }
  const std::array<SliceState, kNumSlices>& states() const { return states_; }

  std::array<Observation, kNumSlices> reset(std::uint64_t seed) {
    traffic_rng_ = make_stream(seed, Stream::kTraffic);
    radio_rng_ = make_stream(seed, Stream::kRadio);
    for (std::size_t i = 0; i < kNumSlices; ++i) {
      states_[i] = SliceState{};
      states_[i].granted_cpu = config_.cluster.slices[i].cpu_share;
    }
    for (std::size_t i = 0; i < kNumSlices; ++i) {
      traffic_[i] = TrafficProcess(config_.cluster.slices[i],
                                   config_.cluster.traffic_correlation, traffic_rng_);
    }
    last_messages_.fill(0);
    step_ = 0;
    done_ = false;
    return observe();
  }

  StepOutcome step(std::span<const ActionPair, kNumSlices> actions) {
    if (done_) throw std::logic_error("env_step called after done; reset first");
    const ClusterSpec& cl = config_.cluster;
    StepOutcome out;

    for (std::size_t i = 0; i < kNumSlices; ++i) {
      const int lvl = actions[i].cpu_level;
      if (lvl < 0 || lvl >= kNumCpuLevels) {
        throw std::out_of_range("cpu level " + std::to_string(lvl));
      }
      out.requested[i] =
          config_.cpu_levels[static_cast<std::size_t>(lvl)] * cl.slices[i].cpu_share;
    }
    const GrantResult grant = grant_allocations(out.requested, cl);
    out.granted = grant.granted;
    out.conflict = grant.conflict;

    std::array<double, kNumSlices> offered{};
    std::array<double, kNumSlices> radio{};
    for (std::size_t i = 0; i < kNumSlices; ++i) {
      offered[i] = traffic_[i].next(traffic_rng_);
    }
    for (std::size_t i = 0; i < kNumSlices; ++i) {
      const double f = cl.radio_fluct_lo +
                       (cl.radio_fluct_hi - cl.radio_fluct_lo) * uniform01(radio_rng_);
      radio[i] = cl.slices[i].radio_nominal * f;
    }
    for (std::size_t i = 0; i < kNumSlices; ++i) {
      out.offered_bits[i] = offered_bits(offered[i], cl);
      states_[i] = advance_queues(states_[i], offered[i], radio[i], out.granted[i],
                                  cl, &out.drained_bits[i]);
    }

    out.utilization = compute_utilization(out.granted, cl);
    for (std::size_t i = 0; i < kNumSlices; ++i) {
      out.latencies[i] = states_[i].latency();
      out.rewards[i] = compute_reward(out.latencies[i], out.conflict,
                                      out.utilization, config_.reward);
    }

    for (std::size_t i = 0; i < kNumSlices; ++i) {
      switch (policy_.kind()) {
        case MessagePolicy::Kind::kEmergent: {
          const int m = actions[i].message;
          if (m < 0 || m >= policy_.alphabet_size()) {
            throw std::out_of_range("message symbol " + std::to_string(m));
          }
          last_messages_[i] = m;
          break;
        }
        case MessagePolicy::Kind::kPredefined:
          last_messages_[i] = predefined_message(out.granted[i], cl.slices[i].cpu_share);
          break;
        case MessagePolicy::Kind::kSilent:
          last_messages_[i] = -1;
          break;
      }
      out.messages[i] = last_messages_[i];
    }

    ++step_;
    done_ = step_ >= config_.steps_per_episode;
    out.done = done_;
    out.observations = observe();
    return out;
  }

 private:
  std::array<Observation, kNumSlices> observe() const {
    std::array<Observation, kNumSlices> obs;
    const int k = policy_.alphabet_size();
    for (std::size_t i = 0; i < kNumSlices; ++i) {
      const SliceSpec& s = config_.cluster.slices[i];
      obs[i].served_norm = states_[i].served_traffic / s.traffic_mean;
      obs[i].gap_norm = (states_[i].granted_cpu - s.cpu_share) / s.cpu_share;
      if (k > 0) {
        std::array<int, kNumSlices - 1> peers{};
        std::size_t p = 0;
        for (std::size_t j = 0; j < kNumSlices; ++j) {
          if (j != i) peers[p++] = last_messages_[j];
        }
        obs[i].inbound_msgs = encode_inbound(peers, k);
      }
    }
    return obs;
  }

  EnvConfig config_;
  MessagePolicy policy_;
  std::array<SliceState, kNumSlices> states_{};
  std::array<int, kNumSlices> last_messages_{};
  std::array<TrafficProcess, kNumSlices> traffic_{};
  Rng traffic_rng_;
  Rng radio_rng_;
  int step_ = 0;
  bool done_ = true;
};

// Cluster with the default three slices: shares 15/15/10 GHz, traffic
// statistics for eMBB/URLLC/mMTC, radio capacity at twice the mean traffic
// and log-traffic correlated at 0.9 between steps.
inline ClusterSpec default_cluster() {
  ClusterSpec c;
  const std::array<ServiceClass, kNumSlices> classes{
      ServiceClass::kEmbb, ServiceClass::kUrllc, ServiceClass::kMmtc};
  const std::array<double, kNumSlices> share{15.0, 15.0, 10.0};
  const std::array<double, kNumSlices> mean{23.33, 7.80, 14.80};
  const std::array<double, kNumSlices> stdev{22.38, 9.25, 20.86};
  for (std::size_t i = 0; i < kNumSlices; ++i) {
    c.slices[i] = SliceSpec{static_cast<int>(i), classes[i], mean[i], stdev[i],
                            share[i], 2.0 * mean[i]};
  }
  c.cpu_total = c.share_sum();
  c.traffic_correlation = 0.9;
  return c;
}

}  // namespace ibcomm

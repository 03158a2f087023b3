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

// Episode loop, frozen-policy evaluation and metric aggregation.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ibcomm/agent.hpp"
#include "ibcomm/comm.hpp"
#include "ibcomm/config.hpp"
#include "ibcomm/env.hpp"
#include "ibcomm/rng.hpp"

namespace ibcomm {

struct StepRecord {
  int episode = 0;
  int step = 0;
  bool conflict = false;
  double utilization = 0.0;
  std::array<int, kNumSlices> cpu_level{};
  std::array<double, kNumSlices> requested{};
  std::array<double, kNumSlices> granted{};
  std::array<double, kNumSlices> latency{};
  std::array<double, kNumSlices> reward{};
  std::array<int, kNumSlices> message{};  // -1 when silent

  double mean_latency() const {
    return (latency[0] + latency[1] + latency[2]) / 3.0;
  }
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EpisodeSummary {
  int episode = 0;
  int conflicts = 0;
  double mean_utilization = 0.0;
  double mean_latency = 0.0;
  double mean_reward = 0.0;
  double epsilon = 0.0;
  double beta = 0.0;
  double per_beta_is = 0.0;
  double mean_td_loss = 0.0;  // over learn steps that ran; 0 if none
  double mean_kl = 0.0;

  friend bool operator==(const EpisodeSummary&, const EpisodeSummary&) = default;
};

struct MetricsLog {
  std::vector<StepRecord> steps;
  std::vector<EpisodeSummary> episodes;
};

// Step-derived episode fields (conflicts, utilization, latency, reward).
// Schedule and loss fields are left zero.
inline std::vector<EpisodeSummary> aggregate_episodes(const std::vector<StepRecord>& steps) {
  std::vector<EpisodeSummary> out;
  std::size_t i = 0;
  while (i < steps.size()) {
    EpisodeSummary e;
    e.episode = steps[i].episode;
    std::size_t n = 0;
    double util = 0.0, lat = 0.0, rew = 0.0;
    for (; i < steps.size() && steps[i].episode == e.episode; ++i, ++n) {
      e.conflicts += steps[i].conflict ? 1 : 0;
      util += steps[i].utilization;
      lat += steps[i].mean_latency();
      rew += (steps[i].reward[0] + steps[i].reward[1] + steps[i].reward[2]) / 3.0;
    }
    e.mean_utilization = util / static_cast<double>(n);
    e.mean_latency = lat / static_cast<double>(n);
    e.mean_reward = rew / static_cast<double>(n);
    out.push_back(e);
  }
  return out;
}

// True when every step-derived aggregate in the log matches recomputation.
inline bool aggregates_consistent(const MetricsLog& log) {
  const auto re = aggregate_episodes(log.steps);
  if (re.size() != log.episodes.size()) return false;
  for (std::size_t i = 0; i < re.size(); ++i) {
    const auto& a = re[i];
    const auto& b = log.episodes[i];
    if (a.episode != b.episode || a.conflicts != b.conflicts ||
        a.mean_utilization != b.mean_utilization || a.mean_latency != b.mean_latency ||
        a.mean_reward != b.mean_reward) {
      return false;
    }
  }
  return true;
}

// Per-episode environment seed, distinct for training and evaluation.
inline std::uint64_t episode_seed(std::uint64_t seed, int episode, bool eval) {
  Rng r = make_stream(seed, eval ? Stream::kEvalTraffic : Stream::kTraffic,
                      static_cast<std::uint64_t>(episode));
  return r();
}

inline std::vector<DqnAgent> make_agents(const RunConfig& cfg, std::uint64_t seed) {
  std::vector<DqnAgent> agents;
  const std::size_t obs_dim = observation_size(cfg.policy, kNumSlices - 1);
  const std::size_t n_act = static_cast<std::size_t>(action_space_size(cfg.policy));
  for (std::size_t i = 0; i < kNumSlices; ++i) {
    agents.emplace_back(cfg.agent, obs_dim, n_act, seed, i);
  }
  return agents;
}

struct TrainingRun {
  std::uint64_t seed = 0;
  MetricsLog log;
  std::vector<DqnAgent> agents;
};

inline StepRecord make_record(int episode, int step,
                              const std::array<ActionPair, kNumSlices>& acts,
                              const StepOutcome& out) {
  StepRecord r;
  r.episode = episode;
  r.step = step;
  r.conflict = out.conflict;
  r.utilization = out.utilization;
  for (std::size_t i = 0; i < kNumSlices; ++i) {
    r.cpu_level[i] = acts[i].cpu_level;
    r.requested[i] = out.requested[i];
    r.granted[i] = out.granted[i];
    r.latency[i] = out.latencies[i];
    r.reward[i] = out.rewards[i];
    r.message[i] = out.messages[i];
  }
  return r;
}

// Trains three independent agents for cfg.episodes episodes. Fully
// deterministic in (cfg, seed).
inline TrainingRun run_training(const RunConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TrainingRun run;
  run.seed = seed;
  run.agents = make_agents(cfg, seed);
  SlicingEnv env(cfg.env, cfg.policy);
  const int n_msg = message_factor(cfg.policy);
  run.log.steps.reserve(static_cast<std::size_t>(cfg.episodes * cfg.env.steps_per_episode));

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = epsilon_at(cfg.agent, ep);
    const double beta = beta_at(cfg.agent, ep);
    const double beta_is = per_beta_is_at(cfg.agent, ep, cfg.episodes);
    auto obs = env.reset(episode_seed(seed, ep, false));
    double td_sum = 0.0, kl_sum = 0.0;
    std::size_t learns = 0;
    const std::size_t first = run.log.steps.size();

    while (!env.done()) {
      std::array<int, kNumSlices> idx{};
      std::array<ActionPair, kNumSlices> acts{};
      for (std::size_t i = 0; i < kNumSlices; ++i) {
        idx[i] = run.agents[i].act(obs[i], eps);
        acts[i] = decode_action(idx[i], n_msg);
      }
      const int step = env.step_count();
      StepOutcome out = env.step(acts);
      for (std::size_t i = 0; i < kNumSlices; ++i) {
        run.agents[i].store(Transition{obs[i], idx[i], out.rewards[i],
                                       out.observations[i], out.done});
      }
      for (auto& a : run.agents) {
        const LearnResult lr = a.learn_step(beta, beta_is);
        if (lr.ready) {
          td_sum += lr.loss.td_loss;
          kl_sum += lr.loss.kl_loss;
          ++learns;
        }
      }
      run.log.steps.push_back(make_record(ep, step, acts, out));
      obs = std::move(out.observations);
    }

    std::vector<StepRecord> ep_steps(run.log.steps.begin() + static_cast<std::ptrdiff_t>(first),
                                     run.log.steps.end());
    EpisodeSummary s = aggregate_episodes(ep_steps).front();
    s.epsilon = eps;
    s.beta = beta;
    s.per_beta_is = beta_is;
    if (learns) {
      s.mean_td_loss = td_sum / static_cast<double>(learns);
      s.mean_kl = kl_sum / static_cast<double>(learns);
    }
    run.log.episodes.push_back(s);
  }
  return run;
}

// Frozen-policy rollouts: greedy actions, deterministic bottleneck, fresh
// traffic seeds.
inline MetricsLog evaluate(const std::vector<DqnAgent>& agents, const RunConfig& cfg,
                           std::uint64_t seed, int episodes) {
  if (agents.size() != kNumSlices) throw std::invalid_argument("need one agent per slice");
  SlicingEnv env(cfg.env, cfg.policy);
  const int n_msg = message_factor(cfg.policy);
  MetricsLog log;
  for (int ep = 0; ep < episodes; ++ep) {
    auto obs = env.reset(episode_seed(seed, ep, true));
    while (!env.done()) {
      std::array<ActionPair, kNumSlices> acts{};
      for (std::size_t i = 0; i < kNumSlices; ++i) {
        acts[i] = decode_action(agents[i].act_greedy(obs[i]), n_msg);
      }
      const int step = env.step_count();
      StepOutcome out = env.step(acts);
      log.steps.push_back(make_record(ep, step, acts, out));
      obs = std::move(out.observations);
    }
  }
  log.episodes = aggregate_episodes(log.steps);
  return log;
}

// Observations seen by one agent during greedy evaluation (attribution input).
inline std::vector<Observation> collect_observations(const std::vector<DqnAgent>& agents,
                                                     const RunConfig& cfg, std::uint64_t seed,
                                                     int episodes, std::size_t agent) {
  SlicingEnv env(cfg.env, cfg.policy);
  const int n_msg = message_factor(cfg.policy);
  std::vector<Observation> out;
  for (int ep = 0; ep < episodes; ++ep) {
    auto obs = env.reset(episode_seed(seed, ep, true));
    while (!env.done()) {
      std::array<ActionPair, kNumSlices> acts{};
      for (std::size_t i = 0; i < kNumSlices; ++i) {
        acts[i] = decode_action(agents[i].act_greedy(obs[i]), n_msg);
      }
      StepOutcome o = env.step(acts);
      obs = std::move(o.observations);
      out.push_back(obs[agent]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregations

inline std::vector<int> episode_conflicts(const MetricsLog& log) {
  std::vector<int> c;
  for (const auto& e : log.episodes) c.push_back(e.conflicts);
  return c;
}

// Mean conflicts per episode over consecutive windows; a trailing partial
// window is reported over its own length.
inline std::vector<double> windowed_conflicts(const MetricsLog& log, std::size_t window = 100) {
  if (log.episodes.empty()) throw std::invalid_argument("windowed_conflicts: empty log");
  if (window == 0) throw std::invalid_argument("window must be > 0");
  std::vector<double> out;
  for (std::size_t b = 0; b < log.episodes.size(); b += window) {
    const std::size_t e = std::min(b + window, log.episodes.size());
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += log.episodes[i].conflicts;
    out.push_back(s / static_cast<double>(e - b));
  }
  return out;
}

// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty data");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct LatencyStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  std::vector<double> cdf_quantiles;  // latency at p = 0, 0.01, ..., 1
};

inline LatencyStats latency_stats_of(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("latency_stats: empty log");
  std::sort(samples.begin(), samples.end());
  LatencyStats s;
  s.median = quantile_sorted(samples, 0.5);
  s.q1 = quantile_sorted(samples, 0.25);
  s.q3 = quantile_sorted(samples, 0.75);
  s.iqr = s.q3 - s.q1;
  for (int k = 0; k <= 100; ++k) s.cdf_quantiles.push_back(quantile_sorted(samples, k / 100.0));
  return s;
}

// Statistics of the per-step mean latency across slices.
inline LatencyStats latency_stats(const MetricsLog& log) {
  std::vector<double> v;
  v.reserve(log.steps.size());
  for (const auto& s : log.steps) v.push_back(s.mean_latency());
  return latency_stats_of(std::move(v));
}

struct UtilizationSummary {
  std::vector<double> per_episode;  // mean step utilization
  double in_band_fraction = 0.0;    // episodes with mean inside [low, high]
  double mean = 0.0;                // over all steps
};

inline UtilizationSummary utilization_series(const MetricsLog& log, double low = 0.10,
                                             double high = 0.90) {
  if (log.steps.empty()) throw std::invalid_argument("utilization_series: empty log");
  UtilizationSummary u;
  std::size_t in = 0;
  for (const auto& e : aggregate_episodes(log.steps)) {
    u.per_episode.push_back(e.mean_utilization);
    if (e.mean_utilization >= low && e.mean_utilization <= high) ++in;
  }
  u.in_band_fraction = static_cast<double>(in) / static_cast<double>(u.per_episode.size());
  for (const auto& st : log.steps) u.mean += st.utilization;
  u.mean /= static_cast<double>(log.steps.size());
  return u;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
  std::size_t n = 0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  r.n = v.size();
  if (v.empty()) return r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Multi-run orchestration

// Runs tasks on up to `jobs` threads. Each task must touch only its own
// state.
inline void run_parallel(std::vector<std::function<void()>> tasks, unsigned jobs) {
  if (jobs <= 1 || tasks.size() <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::vector<std::exception_ptr> errors(tasks.size());
  std::size_t next = 0;
  std::mutex m;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < std::min<std::size_t>(jobs, tasks.size()); ++w) {
    pool.emplace_back([&] {
      while (true) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(m);
          if (next >= tasks.size()) return;
          i = next++;
        }
        try {
          tasks[i]();
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// The tightened cluster used by the alphabet sweep.
inline RunConfig stringent(RunConfig cfg) {
  cfg.env.cluster.cpu_total = cfg.env.cluster.share_sum() * cfg.stringent_pool_factor;
  return cfg;
}

struct SweepRow {
  MessagePolicy policy = MessagePolicy::silent();
  std::vector<double> final_window;  // per seed
  MeanStd summary;
};

// One training run per (policy, seed) on the stringent cluster; reports the
// final-window mean conflicts per episode.
inline std::vector<SweepRow> sweep_alphabet(const RunConfig& base,
                                            const std::vector<MessagePolicy>& policies,
                                            const std::vector<std::uint64_t>& seeds,
                                            unsigned jobs = 1) {
  std::vector<SweepRow> rows(policies.size());
  for (std::size_t p = 0; p < policies.size(); ++p) {
    rows[p].policy = policies[p];
    rows[p].final_window.resize(seeds.size());
  }
  std::vector<std::function<void()>> tasks;
  for (std::size_t p = 0; p < policies.size(); ++p) {
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      tasks.emplace_back([&, p, s] {
        RunConfig cfg = stringent(base);
        cfg.policy = policies[p];
        const TrainingRun run = run_training(cfg, seeds[s]);
        rows[p].final_window[s] = windowed_conflicts(run.log).back();
      });
    }
  }
  run_parallel(std::move(tasks), jobs);
  for (auto& r : rows) r.summary = mean_std(r.final_window);
  return rows;
}

}  // namespace ibcomm

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

// Flat key-value run configuration.
//
//   # comment
//   key = value
//   list_key = 1,2,3
//
// Unknown keys, malformed values and duplicate keys are errors reported with
// their line number. Keys not present keep their default values.

#pragma once

#include <array>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ibcomm/agent.hpp"
#include "ibcomm/comm.hpp"
#include "ibcomm/env.hpp"

namespace ibcomm {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& where, int line, const std::string& what)
      : std::runtime_error(where + (line > 0 ? ":" + std::to_string(line) : "") +
                           ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct RunConfig {
  EnvConfig env;
  AgentConfig agent;
  MessagePolicy policy = MessagePolicy::emergent(3);
  int episodes = 500;
  int eval_episodes = 50;
  double radio_capacity_factor = 2.0;  // radio_nominal = factor * traffic_mean
  double util_band_low = 0.10;
  double util_band_high = 0.90;
  double stringent_pool_factor = 0.75;
  std::size_t shapley_permutations = 2000;

  RunConfig() {
    env.cluster = default_cluster();
    env.reward = RewardParams{};
  }

  // Re-derives dependent cluster fields after list edits.
  void finalize() {
    for (auto& s : env.cluster.slices) {
      s.radio_nominal = radio_capacity_factor * s.traffic_mean;
    }
    env.cluster.cpu_total = env.cluster.share_sum();
  }

  void validate() const {
    env.cluster.validate();
    agent.validate();
    if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
    if (eval_episodes < 1) throw std::invalid_argument("eval_episodes must be >= 1");
    if (env.steps_per_episode < 1) throw std::invalid_argument("steps_per_episode must be >= 1");
    if (!(stringent_pool_factor > 0.0 && stringent_pool_factor <= 1.0)) {
      throw std::invalid_argument("stringent_pool_factor must be in (0, 1]");
    }
    if (shapley_permutations < 1) {
      throw std::invalid_argument("shapley_permutations must be >= 1");
    }
  }
};

namespace config_detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

inline std::int64_t parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<double> parse_list(std::string_view s) {
  std::vector<double> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(parse_double(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

inline std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

template <std::size_t N>
std::array<double, N> to_array(const std::vector<double>& v, std::string_view key) {
  if (v.size() != N) {
    throw std::invalid_argument(std::string(key) + " needs " + std::to_string(N) +
                                " values");
  }
  std::array<double, N> a{};
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}

struct Entry {
  const char* key;
  const char* tag;  // "paper" or "decision"
  const char* doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename F>
std::vector<double> per_slice(const RunConfig& c, F f) {
  std::vector<double> v;
  for (const auto& s : c.env.cluster.slices) v.push_back(f(s));
  return v;
}

inline Entry num(const char* key, const char* tag, const char* doc,
                 std::function<double&(RunConfig&)> ref) {
  return Entry{key, tag, doc,
               [ref](const RunConfig& c) {
                 return format_double(ref(const_cast<RunConfig&>(c)));
               },
               [ref](RunConfig& c, std::string_view v) { ref(c) = parse_double(v); }};
}

template <typename I>
Entry integer(const char* key, const char* tag, const char* doc,
              std::function<I&(RunConfig&)> ref) {
  return Entry{key, tag, doc,
               [ref](const RunConfig& c) {
                 return std::to_string(ref(const_cast<RunConfig&>(c)));
               },
               [ref](RunConfig& c, std::string_view v) {
                 const auto x = parse_int(v);
                 if (x < 0) throw std::invalid_argument("must be non-negative");
                 ref(c) = static_cast<I>(x);
               }};
}

inline Entry boolean(const char* key, const char* tag, const char* doc,
                     std::function<bool&(RunConfig&)> ref) {
  return Entry{key, tag, doc,
               [ref](const RunConfig& c) {
                 return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false");
               },
               [ref](RunConfig& c, std::string_view v) {
                 v = trim(v);
                 if (v == "true") {
                   ref(c) = true;
                 } else if (v == "false") {
                   ref(c) = false;
                 } else {
                   throw std::invalid_argument("expected true or false, got '" +
                                               std::string(v) + "'");
                 }
               }};
}

inline Entry slice_list(const char* key, const char* tag, const char* doc,
                        double SliceSpec::*field) {
  return Entry{key, tag, doc,
               [field](const RunConfig& c) {
                 return format_list(per_slice(c, [field](const SliceSpec& s) { return s.*field; }));
               },
               [field, key](RunConfig& c, std::string_view v) {
                 const auto a = to_array<kNumSlices>(parse_list(v), key);
                 for (std::size_t i = 0; i < kNumSlices; ++i) {
                   c.env.cluster.slices[i].*field = a[i];
                 }
               }};
}

// Every configurable key in export order.
inline const std::vector<Entry>& entries() {
  static const std::vector<Entry> kEntries = {
      slice_list("shares_ghz", "paper", "default CPU share per slice (eMBB, URLLC, mMTC), GHz",
                 &SliceSpec::cpu_share),
      slice_list("traffic_mean_mbps", "paper", "mean offered traffic per slice, Mbps",
                 &SliceSpec::traffic_mean),
      slice_list("traffic_std_mbps", "paper", "traffic standard deviation per slice, Mbps",
                 &SliceSpec::traffic_std),
      num("traffic_correlation", "decision", "lag-1 correlation of log-traffic between steps",
          [](RunConfig& c) -> double& { return c.env.cluster.traffic_correlation; }),
      num("radio_capacity_factor", "decision", "nominal radio rate as a multiple of mean traffic",
          [](RunConfig& c) -> double& { return c.radio_capacity_factor; }),
      Entry{"radio_fluctuation", "decision",
            "per-step radio rate multiplier range, uniform",
            [](const RunConfig& c) {
              return format_list({c.env.cluster.radio_fluct_lo, c.env.cluster.radio_fluct_hi});
            },
            [](RunConfig& c, std::string_view v) {
              const auto a = to_array<2>(parse_list(v), "radio_fluctuation");
              c.env.cluster.radio_fluct_lo = a[0];
              c.env.cluster.radio_fluct_hi = a[1];
            }},
      num("cycles_per_bit", "decision", "CPU cycles needed per transmitted bit",
          [](RunConfig& c) -> double& { return c.env.cluster.cycles_per_bit; }),
      num("step_ms", "decision", "duration of one environment step, ms",
          [](RunConfig& c) -> double& { return c.env.cluster.step_ms; }),
      num("latency_cap_ms", "decision", "per-queue latency cap, ms",
          [](RunConfig& c) -> double& { return c.env.cluster.latency_cap_ms; }),
      Entry{"cpu_levels", "decision", "CPU request levels as multiples of the slice share",
            [](const RunConfig& c) { return format_list(c.env.cpu_levels); },
            [](RunConfig& c, std::string_view v) {
              const auto a = parse_list(v);
              if (a.size() != static_cast<std::size_t>(kNumCpuLevels)) {
                throw std::invalid_argument("cpu_levels needs " +
                                            std::to_string(kNumCpuLevels) + " values");
              }
              c.env.cpu_levels = a;
            }},
      num("reward_latency_ref_ms", "decision", "latency scale of the exp(-latency/ref) reward, ms",
          [](RunConfig& c) -> double& { return c.env.reward.latency_ref_ms; }),
      num("conflict_penalty", "decision", "reward penalty on conflict steps",
          [](RunConfig& c) -> double& { return c.env.reward.conflict_penalty; }),
      num("underutil_penalty", "decision", "reward penalty when pool utilization is low",
          [](RunConfig& c) -> double& { return c.env.reward.underutil_penalty; }),
      num("underutil_threshold", "decision", "utilization below which the penalty applies",
          [](RunConfig& c) -> double& { return c.env.reward.underutil_threshold; }),
      num("util_band_low", "paper", "lower utilization threshold for reporting",
          [](RunConfig& c) -> double& { return c.util_band_low; }),
      num("util_band_high", "paper", "upper utilization threshold for reporting",
          [](RunConfig& c) -> double& { return c.util_band_high; }),
      integer<int>("episodes", "paper", "training episodes",
                   [](RunConfig& c) -> int& { return c.episodes; }),
      integer<int>("steps_per_episode", "paper", "steps per episode",
                   [](RunConfig& c) -> int& { return c.env.steps_per_episode; }),
      integer<std::size_t>("hidden_dim", "paper", "width of the ReLU hidden layer",
                           [](RunConfig& c) -> std::size_t& { return c.agent.hidden_dim; }),
      integer<std::size_t>("bottleneck_dim", "paper", "dimension of the stochastic bottleneck",
                           [](RunConfig& c) -> std::size_t& { return c.agent.bottleneck_dim; }),
      num("lr", "paper", "Adam learning rate",
          [](RunConfig& c) -> double& { return c.agent.lr; }),
      integer<std::size_t>("batch_size", "paper", "replay batch size",
                           [](RunConfig& c) -> std::size_t& { return c.agent.batch_size; }),
      num("gamma", "paper", "discount factor",
          [](RunConfig& c) -> double& { return c.agent.gamma; }),
      num("beta_initial", "paper", "KL weight at episode 0",
          [](RunConfig& c) -> double& { return c.agent.beta_initial; }),
      num("beta_rate", "paper", "KL weight added per episode",
          [](RunConfig& c) -> double& { return c.agent.beta_rate; }),
      num("epsilon_start", "decision", "initial exploration rate",
          [](RunConfig& c) -> double& { return c.agent.epsilon_start; }),
      num("epsilon_decay", "decision", "multiplicative exploration decay per episode",
          [](RunConfig& c) -> double& { return c.agent.epsilon_decay; }),
      num("epsilon_floor", "decision", "minimum exploration rate",
          [](RunConfig& c) -> double& { return c.agent.epsilon_floor; }),
      num("per_alpha", "decision", "replay prioritization exponent",
          [](RunConfig& c) -> double& { return c.agent.per_alpha; }),
      num("per_beta_is_start", "decision", "importance-sampling exponent at the first episode",
          [](RunConfig& c) -> double& { return c.agent.per_beta_is_start; }),
      num("per_beta_is_end", "decision", "importance-sampling exponent at the last episode",
          [](RunConfig& c) -> double& { return c.agent.per_beta_is_end; }),
      integer<std::size_t>("target_sync_period", "decision", "learn steps between target syncs",
                           [](RunConfig& c) -> std::size_t& { return c.agent.target_sync_period; }),
      integer<std::size_t>("replay_capacity", "decision", "replay buffer capacity",
                           [](RunConfig& c) -> std::size_t& { return c.agent.replay_capacity; }),
      num("grad_clip", "decision", "global gradient-norm clip",
          [](RunConfig& c) -> double& { return c.agent.grad_clip; }),
      boolean("stochastic_acting", "decision",
              "sample bottleneck noise when acting during training (false: act on the mean)",
              [](RunConfig& c) -> bool& { return c.agent.stochastic_acting; }),
      integer<int>("eval_episodes", "decision", "frozen-policy evaluation episodes",
                   [](RunConfig& c) -> int& { return c.eval_episodes; }),
      num("stringent_pool_factor", "decision", "pool fraction kept in the alphabet sweep",
          [](RunConfig& c) -> double& { return c.stringent_pool_factor; }),
      integer<std::size_t>("shapley_permutations", "decision", "permutations per attribution",
                           [](RunConfig& c) -> std::size_t& { return c.shapley_permutations; }),
      Entry{"comm_policy", "decision", "emergent:<k>, predefined or silent",
            [](const RunConfig& c) { return c.policy.to_string(); },
            [](RunConfig& c, std::string_view v) {
              c.policy = MessagePolicy::parse(trim(v));
            }},
  };
  return kEntries;
}

}  // namespace config_detail

inline RunConfig parse_config(std::istream& in, const std::string& where = "<config>") {
  RunConfig cfg;
  std::vector<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) {
      s = s.substr(0, hash);
    }
    s = config_detail::trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where, lineno, "expected 'key = value'");
    }
    const std::string key(config_detail::trim(s.substr(0, eq)));
    const std::string_view value = config_detail::trim(s.substr(eq + 1));
    const config_detail::Entry* entry = nullptr;
    for (const auto& e : config_detail::entries()) {
      if (key == e.key) entry = &e;
    }
    if (!entry) throw ConfigError(where, lineno, "unknown key '" + key + "'");
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      throw ConfigError(where, lineno, "duplicate key '" + key + "'");
    }
    seen.push_back(key);
    try {
      entry->set(cfg, value);
    } catch (const std::exception& ex) {
      throw ConfigError(where, lineno, key + ": " + ex.what());
    }
  }
  cfg.finalize();
  try {
    cfg.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(where, 0, ex.what());
  }
  return cfg;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  return parse_config(in, path);
}

// Canonical text form. Each key is preceded by a comment tagged [paper] or
// [decision]. write_config(parse(write_config(c))) == write_config(c).
inline std::string write_config(const RunConfig& cfg) {
  std::string out = "# ibcomm run configuration\n";
  for (const auto& e : config_detail::entries()) {
    out += "\n# [";
    out += e.tag;
    out += "] ";
    out += e.doc;
    out += '\n';
    out += e.key;
    out += " = ";
    out += e.get(cfg);
    out += '\n';
  }
  return out;
}

inline RunConfig default_run_config() {
  RunConfig c;
  c.finalize();
  return c;
}

}  // namespace ibcomm

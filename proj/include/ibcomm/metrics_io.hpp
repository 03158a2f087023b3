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

// CSV and JSON writers for run metrics. Doubles are printed in shortest
// round-trip form, so a written file parses back to identical values.
// Column layouts are documented in docs/metrics_schema.md.

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ibcomm/attribution.hpp"
#include "ibcomm/comm.hpp"
#include "ibcomm/config.hpp"
#include "ibcomm/train.hpp"

namespace ibcomm {

namespace io_detail {

inline std::string fmt(double v) { return config_detail::format_double(v); }

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  while (true) {
    const auto p = line.find(sep);
    out.push_back(line.substr(0, p));
    if (p == std::string_view::npos) break;
    line.remove_prefix(p + 1);
  }
  return out;
}

template <typename T>
T parse(std::string_view s, int line) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("line " + std::to_string(line) + ": bad field '" +
                             std::string(s) + "'");
  }
  return v;
}

}  // namespace io_detail

inline const std::string& steps_csv_header() {
  static const std::string h =
      "episode,step,conflict,utilization,"
      "level0,level1,level2,requested0,requested1,requested2,"
      "granted0,granted1,granted2,latency0,latency1,latency2,"
      "reward0,reward1,reward2,message0,message1,message2";
  return h;
}

inline void write_steps_csv(std::ostream& os, const std::vector<StepRecord>& steps) {
  using io_detail::fmt;
  os << steps_csv_header() << '\n';
  for (const auto& r : steps) {
    os << r.episode << ',' << r.step << ',' << (r.conflict ? 1 : 0) << ','
       << fmt(r.utilization);
    for (int v : r.cpu_level) os << ',' << v;
    for (double v : r.requested) os << ',' << fmt(v);
    for (double v : r.granted) os << ',' << fmt(v);
    for (double v : r.latency) os << ',' << fmt(v);
    for (double v : r.reward) os << ',' << fmt(v);
    for (int v : r.message) os << ',' << v;
    os << '\n';
  }
}

inline std::vector<StepRecord> read_steps_csv(std::istream& is) {
  using io_detail::parse;
  std::string line;
  if (!std::getline(is, line) || line != steps_csv_header()) {
    throw std::runtime_error("steps CSV: missing or unexpected header");
  }
  std::vector<StepRecord> out;
  int n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = io_detail::split(line);
    if (f.size() != 22) {
      throw std::runtime_error("steps CSV line " + std::to_string(n) + ": expected 22 fields");
    }
    StepRecord r;
    r.episode = parse<int>(f[0], n);
    r.step = parse<int>(f[1], n);
    r.conflict = parse<int>(f[2], n) != 0;
    r.utilization = parse<double>(f[3], n);
    for (std::size_t i = 0; i < kNumSlices; ++i) {
      r.cpu_level[i] = parse<int>(f[4 + i], n);
      r.requested[i] = parse<double>(f[7 + i], n);
      r.granted[i] = parse<double>(f[10 + i], n);
      r.latency[i] = parse<double>(f[13 + i], n);
      r.reward[i] = parse<double>(f[16 + i], n);
      r.message[i] = parse<int>(f[19 + i], n);
    }
    out.push_back(r);
  }
  return out;
}

inline void write_episodes_csv(std::ostream& os, const std::vector<EpisodeSummary>& eps) {
  using io_detail::fmt;
  os << "episode,conflicts,mean_utilization,mean_latency,mean_reward,"
        "epsilon,beta,per_beta_is,mean_td_loss,mean_kl\n";
  for (const auto& e : eps) {
    os << e.episode << ',' << e.conflicts << ',' << fmt(e.mean_utilization) << ','
       << fmt(e.mean_latency) << ',' << fmt(e.mean_reward) << ',' << fmt(e.epsilon) << ','
       << fmt(e.beta) << ',' << fmt(e.per_beta_is) << ',' << fmt(e.mean_td_loss) << ','
       << fmt(e.mean_kl) << '\n';
  }
}

// 101 rows: probability on a 1% grid and the latency quantile.
inline void write_latency_cdf_csv(std::ostream& os, const LatencyStats& s) {
  os << "probability,latency_ms\n";
  for (std::size_t i = 0; i < s.cdf_quantiles.size(); ++i) {
    os << io_detail::fmt(static_cast<double>(i) / 100.0) << ','
       << io_detail::fmt(s.cdf_quantiles[i]) << '\n';
  }
}

inline void write_attribution_csv(std::ostream& os, const AttributionTable& t) {
  for (std::size_t f = 0; f < t.names.size(); ++f) os << (f ? "," : "") << t.names[f];
  os << '\n';
  const std::size_t n = t.values.empty() ? 0 : t.values.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < t.values.size(); ++f) {
      os << (f ? "," : "") << io_detail::fmt(t.values[f][i]);
    }
    os << '\n';
  }
}

// Prefix shared by every per-run file, e.g. "emergent3_s7".
inline std::string run_tag(const MessagePolicy& policy, std::uint64_t seed) {
  return policy.file_tag() + "_s" + std::to_string(seed);
}

inline nlohmann::ordered_json config_json(const RunConfig& cfg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& e : config_detail::entries()) j[e.key] = e.get(cfg);
  return j;
}

struct RunSummary {
  std::uint64_t seed = 0;
  std::vector<double> conflict_windows;
  LatencyStats eval_latency;
  UtilizationSummary eval_utilization;
  double eval_conflicts_per_episode = 0.0;
  double wall_clock_s = 0.0;  // only non-deterministic field
};

inline RunSummary summarize(const TrainingRun& run, const MetricsLog& eval,
                            const RunConfig& cfg) {
  RunSummary s;
  s.seed = run.seed;
  s.conflict_windows = windowed_conflicts(run.log);
  s.eval_latency = latency_stats(eval);
  s.eval_utilization = utilization_series(eval, cfg.util_band_low, cfg.util_band_high);
  double c = 0.0;
  for (int k : episode_conflicts(eval)) c += k;
  s.eval_conflicts_per_episode = c / static_cast<double>(eval.episodes.size());
  return s;
}

inline nlohmann::ordered_json summary_json(const RunSummary& s, const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["format"] = "ibcomm-run-summary/1";
  j["policy"] = cfg.policy.to_string();
  j["seed"] = s.seed;
  j["config"] = config_json(cfg);
  j["schedules"] = {
      {"epsilon_first", epsilon_at(cfg.agent, 0)},
      {"epsilon_last", epsilon_at(cfg.agent, cfg.episodes - 1)},
      {"beta_first", beta_at(cfg.agent, 0)},
      {"beta_last", beta_at(cfg.agent, cfg.episodes - 1)},
      {"per_beta_is_first", per_beta_is_at(cfg.agent, 0, cfg.episodes)},
      {"per_beta_is_last", per_beta_is_at(cfg.agent, cfg.episodes - 1, cfg.episodes)}};
  j["train"] = {{"conflict_windows", s.conflict_windows},
                {"final_window_conflicts",
                 s.conflict_windows.empty() ? 0.0 : s.conflict_windows.back()}};
  j["eval"] = {{"episodes", cfg.eval_episodes},
               {"conflicts_per_episode", s.eval_conflicts_per_episode},
               {"latency_median_ms", s.eval_latency.median},
               {"latency_q1_ms", s.eval_latency.q1},
               {"latency_q3_ms", s.eval_latency.q3},
               {"latency_iqr_ms", s.eval_latency.iqr},
               {"utilization_mean", s.eval_utilization.mean},
               {"utilization_in_band_fraction", s.eval_utilization.in_band_fraction}};
  j["wall_clock_s"] = s.wall_clock_s;
  return j;
}

// Opens `path` for writing or throws naming it.
inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

}  // namespace ibcomm

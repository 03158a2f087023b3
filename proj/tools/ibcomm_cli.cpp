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

// ibcomm command-line driver.
//
//   ibcomm train --policy emergent:3 --seed 1,2,3 --out runs/
//   ibcomm compare --policies emergent:3,predefined,silent --seed 1,2,3
//   ibcomm sweep-alphabet --sizes silent,3,8,13 --seed 1,2
//   ibcomm attribute --out runs/ --seed 1 --agent 2
//   ibcomm export-defaults --file defaults.cfg
//
// Exit status: 0 success, 1 usage error, 2 config error, 3 runtime error.

#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ibcomm/agent.hpp"
#include "ibcomm/attribution.hpp"
#include "ibcomm/config.hpp"
#include "ibcomm/metrics_io.hpp"
#include "ibcomm/svg.hpp"
#include "ibcomm/train.hpp"

namespace fs = std::filesystem;
using namespace ibcomm;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::string seeds = "1";
  std::string out = "ibcomm_out";
  std::string policy;
  int episodes = 0;
  unsigned jobs = 1;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_policy = true) {
  cmd->add_option("--config", f.config, "flat key = value config file");
  cmd->add_option("--seed", f.seeds, "comma-separated seed list")->capture_default_str();
  cmd->add_option("--out", f.out, "output directory")->capture_default_str();
  if (with_policy) {
    cmd->add_option("--policy", f.policy, "emergent:<k>, predefined or silent");
  }
  cmd->add_option("--episodes", f.episodes, "override the episode count");
  cmd->add_option("--jobs", f.jobs, "parallel runs")->capture_default_str();
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      seeds.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("bad seed '" + item + "'");
    }
  }
  if (seeds.empty()) throw UsageError("--seed needs at least one value");
  return seeds;
}

std::vector<MessagePolicy> parse_policies(const std::string& text) {
  std::vector<MessagePolicy> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      if (!item.empty() && std::isdigit(static_cast<unsigned char>(item[0]))) {
        out.push_back(MessagePolicy::emergent(std::stoi(item)));
      } else {
        out.push_back(MessagePolicy::parse(item));
      }
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  if (out.empty()) throw UsageError("no policies given");
  return out;
}

RunConfig base_config(const CommonFlags& f) {
  RunConfig cfg = f.config.empty() ? default_run_config() : load_config(f.config);
  if (!f.policy.empty()) {
    try {
      cfg.policy = MessagePolicy::parse(f.policy);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  if (f.episodes > 0) cfg.episodes = f.episodes;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(f.config.empty() ? "<defaults>" : f.config, 0, e.what());
  }
  return cfg;
}

std::string checkpoint_name(const std::string& tag, std::size_t agent) {
  return "agent" + std::to_string(agent) + "_" + tag + ".ckpt";
}

template <typename F>
void write_file(const fs::path& p, F&& body) {
  std::ofstream os = open_output(p);
  body(os);
  if (!os) throw std::runtime_error("write failed: " + p.string());
}

// Trains, evaluates and writes every per-run file.
RunSummary train_one(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainingRun run = run_training(cfg, seed);
  MetricsLog eval = evaluate(run.agents, cfg, seed, cfg.eval_episodes);
  RunSummary s = summarize(run, eval, cfg);
  s.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string tag = run_tag(cfg.policy, seed);
  write_file(dir / ("steps_" + tag + ".csv"), [&](auto& os) { write_steps_csv(os, run.log.steps); });
  write_file(dir / ("episodes_" + tag + ".csv"),
             [&](auto& os) { write_episodes_csv(os, run.log.episodes); });
  write_file(dir / ("eval_steps_" + tag + ".csv"),
             [&](auto& os) { write_steps_csv(os, eval.steps); });
  write_file(dir / ("latency_cdf_" + tag + ".csv"),
             [&](auto& os) { write_latency_cdf_csv(os, s.eval_latency); });
  write_file(dir / ("summary_" + tag + ".json"),
             [&](auto& os) { os << summary_json(s, cfg).dump(2) << '\n'; });
  const int last = cfg.episodes - 1;
  const AgentCheckpointHeader h{cfg.episodes, epsilon_at(cfg.agent, last),
                                beta_at(cfg.agent, last),
                                per_beta_is_at(cfg.agent, last, cfg.episodes)};
  for (std::size_t i = 0; i < run.agents.size(); ++i) {
    write_file(dir / checkpoint_name(tag, i),
               [&](auto& os) { save_agent_checkpoint(os, h, run.agents[i].online()); });
  }
  return s;
}

std::vector<RunSummary> train_seeds(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                    const fs::path& dir, unsigned jobs) {
  std::vector<RunSummary> out(seeds.size());
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    tasks.emplace_back([&, i] { out[i] = train_one(cfg, seeds[i], dir); });
  }
  run_parallel(std::move(tasks), jobs);
  return out;
}

// Agents rebuilt from checkpoints written by `train`.
std::vector<DqnAgent> load_agents(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  std::vector<DqnAgent> agents = make_agents(cfg, seed);
  const std::string tag = run_tag(cfg.policy, seed);
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const fs::path p = dir / checkpoint_name(tag, i);
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + p.string());
    auto [header, net] = load_agent_checkpoint(is);
    if (!net.same_shape(agents[i].online())) {
      throw std::runtime_error(p.string() + ": network shape does not match policy " +
                               cfg.policy.to_string());
    }
    agents[i].online() = std::move(net);
  }
  return agents;
}

int cmd_train(const CommonFlags& f) {
  const RunConfig cfg = base_config(f);
  const auto seeds = parse_seeds(f.seeds);
  fs::create_directories(f.out);
  const auto sums = train_seeds(cfg, seeds, f.out, f.jobs);
  std::vector<double> finals;
  for (const auto& s : sums) {
    finals.push_back(s.conflict_windows.back());
    std::printf("%s seed %llu: final-window conflicts/episode %.3f, eval median %.3f ms\n",
                cfg.policy.to_string().c_str(), static_cast<unsigned long long>(s.seed),
                s.conflict_windows.back(), s.eval_latency.median);
  }
  const MeanStd m = mean_std(finals);
  std::printf("final-window conflicts/episode: mean %.3f std %.3f over %zu seed(s)\n", m.mean,
              m.std, m.n);
  return 0;
}

int cmd_evaluate(const CommonFlags& f) {
  const RunConfig cfg = base_config(f);
  for (std::uint64_t seed : parse_seeds(f.seeds)) {
    const auto agents = load_agents(cfg, seed, f.out);
    const MetricsLog eval = evaluate(agents, cfg, seed, cfg.eval_episodes);
    const LatencyStats ls = latency_stats(eval);
    const UtilizationSummary us = utilization_series(eval, cfg.util_band_low, cfg.util_band_high);
    const std::string tag = run_tag(cfg.policy, seed);
    write_file(fs::path(f.out) / ("eval_steps_" + tag + ".csv"),
               [&](auto& os) { write_steps_csv(os, eval.steps); });
    write_file(fs::path(f.out) / ("latency_cdf_" + tag + ".csv"),
               [&](auto& os) { write_latency_cdf_csv(os, ls); });
    int conflicts = 0;
    for (int c : episode_conflicts(eval)) conflicts += c;
    std::printf("%s seed %llu: median %.3f ms, IQR %.3f ms, in-band %.3f, conflicts %d\n",
                cfg.policy.to_string().c_str(), static_cast<unsigned long long>(seed),
                ls.median, ls.iqr, us.in_band_fraction, conflicts);
  }
  return 0;
}

RunSummary read_summary(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error("cannot open " + p.string());
  const auto j = nlohmann::json::parse(is);
  RunSummary s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.conflict_windows = j.at("train").at("conflict_windows").get<std::vector<double>>();
  const auto& e = j.at("eval");
  s.eval_conflicts_per_episode = e.at("conflicts_per_episode").get<double>();
  s.eval_latency.median = e.at("latency_median_ms").get<double>();
  s.eval_latency.q1 = e.at("latency_q1_ms").get<double>();
  s.eval_latency.q3 = e.at("latency_q3_ms").get<double>();
  s.eval_latency.iqr = e.at("latency_iqr_ms").get<double>();
  s.eval_utilization.mean = e.at("utilization_mean").get<double>();
  s.eval_utilization.in_band_fraction = e.at("utilization_in_band_fraction").get<double>();
  return s;
}

std::string pm(const MeanStd& m) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f +- %.3f", m.mean, m.std);
  return buf;
}

int cmd_compare(const CommonFlags& f, const std::string& policies_text,
                const std::string& from, bool svg) {
  const RunConfig base = base_config(f);
  const auto policies = parse_policies(policies_text);
  const auto seeds = parse_seeds(f.seeds);
  if (policies.size() < 2) {
    std::fprintf(stderr, "warning: only one policy given, the table has a single row\n");
  }
  fs::create_directories(f.out);

  struct Row {
    MessagePolicy policy;
    std::vector<RunSummary> runs;
  };
  std::vector<Row> rows;
  for (const auto& p : policies) {
    RunConfig cfg = base;
    cfg.policy = p;
    Row r{p, {}};
    if (!from.empty()) {
      for (auto s : seeds) {
        r.runs.push_back(read_summary(fs::path(from) / ("summary_" + run_tag(p, s) + ".json")));
      }
    } else {
      r.runs = train_seeds(cfg, seeds, f.out, f.jobs);
    }
    rows.push_back(std::move(r));
  }

  std::ofstream csv = open_output(fs::path(f.out) / "compare.csv");
  csv << "policy,window,conflicts_mean,conflicts_std,eval_median_mean,eval_median_std,"
         "eval_iqr_mean,eval_iqr_std,in_band_mean,in_band_std,seeds\n";
  std::printf("%-12s %-40s %-18s %-18s %-18s\n", "policy", "conflicts/episode per window",
              "eval median ms", "eval IQR ms", "util in-band");
  std::vector<SvgSeries> window_series;
  for (const auto& r : rows) {
    const std::size_t nw = r.runs.front().conflict_windows.size();
    std::vector<double> med, iqr, band;
    for (const auto& s : r.runs) {
      med.push_back(s.eval_latency.median);
      iqr.push_back(s.eval_latency.iqr);
      band.push_back(s.eval_utilization.in_band_fraction);
    }
    const MeanStd mm = mean_std(med), mi = mean_std(iqr), mb = mean_std(band);
    std::string windows;
    SvgSeries ser{r.policy.to_string(), {}, {}};
    for (std::size_t w = 0; w < nw; ++w) {
      std::vector<double> v;
      for (const auto& s : r.runs) v.push_back(s.conflict_windows.at(w));
      const MeanStd mw = mean_std(v);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s%.2f", w ? " " : "", mw.mean);
      windows += buf;
      ser.x.push_back(static_cast<double>(w + 1));
      ser.y.push_back(mw.mean);
      csv << r.policy.to_string() << ',' << w << ',' << io_detail::fmt(mw.mean) << ','
          << io_detail::fmt(mw.std) << ',' << io_detail::fmt(mm.mean) << ','
          << io_detail::fmt(mm.std) << ',' << io_detail::fmt(mi.mean) << ','
          << io_detail::fmt(mi.std) << ',' << io_detail::fmt(mb.mean) << ','
          << io_detail::fmt(mb.std) << ',' << r.runs.size() << '\n';
    }
    window_series.push_back(std::move(ser));
    std::printf("%-12s %-40s %-18s %-18s %-18s\n", r.policy.to_string().c_str(),
                windows.c_str(), pm(mm).c_str(), pm(mi).c_str(), pm(mb).c_str());
  }
  if (svg) {
    write_file(fs::path(f.out) / "compare_conflicts.svg", [&](auto& os) {
      write_line_chart(os, "Conflicts per episode", "100-episode window", "conflicts",
                       window_series);
    });
  }
  return 0;
}

int cmd_sweep(const CommonFlags& f, const std::string& sizes) {
  const RunConfig base = base_config(f);
  const auto policies = parse_policies(sizes);
  const auto seeds = parse_seeds(f.seeds);
  fs::create_directories(f.out);
  const auto rows = sweep_alphabet(base, policies, seeds, f.jobs);
  std::ofstream csv = open_output(fs::path(f.out) / "sweep_alphabet.csv");
  csv << "policy,seed,final_window_conflicts\n";
  std::printf("stringent pool: %.3f GHz\n", stringent(base).env.cluster.cpu_total);
  for (const auto& r : rows) {
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      csv << r.policy.to_string() << ',' << seeds[s] << ','
          << io_detail::fmt(r.final_window[s]) << '\n';
    }
    std::printf("%-12s final-window conflicts/episode %s\n", r.policy.to_string().c_str(),
                pm(r.summary).c_str());
  }
  return 0;
}

int cmd_attribute(const CommonFlags& f, std::size_t agent, std::size_t permutations,
                  const std::string& baseline, int episodes) {
  const RunConfig cfg = base_config(f);
  if (cfg.policy.is_silent()) {
    std::fprintf(stderr, "warning: silent policy has no message features; code columns are 0\n");
  }
  if (agent >= kNumSlices) throw UsageError("--agent must be 0, 1 or 2");
  AttributionConfig ac;
  ac.n_permutations = permutations ? permutations : cfg.shapley_permutations;
  if (baseline == "mean") {
    ac.baseline = AttributionBaseline::kMean;
  } else if (baseline == "zeros") {
    ac.baseline = AttributionBaseline::kZeros;
  } else {
    throw UsageError("--baseline must be mean or zeros");
  }
  for (std::uint64_t seed : parse_seeds(f.seeds)) {
    const auto agents = load_agents(cfg, seed, f.out);
    const auto obs = collect_observations(agents, cfg, seed, episodes, agent);
    std::vector<std::vector<double>> data;
    for (const auto& o : obs) data.push_back(o.features());
    const AttributionTable t =
        attribute_dataset(agents[agent].online(), data, cfg.policy, ac, seed, f.jobs);
    const fs::path p = fs::path(f.out) / ("attribution_" + run_tag(cfg.policy, seed) + "_agent" +
                                          std::to_string(agent) + ".csv");
    write_file(p, [&](auto& os) { write_attribution_csv(os, t); });
    std::printf("%s: %zu observations\n", p.string().c_str(), data.size());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ibcomm: multi-agent slicing with learned communication"};
  app.require_subcommand(1);

  CommonFlags f;
  auto* train = app.add_subcommand("train", "train agents per seed and write metrics");
  add_common(train, f);
  auto* eval = app.add_subcommand("evaluate", "re-evaluate checkpoints from --out");
  add_common(eval, f);

  std::string policies = "emergent:3,predefined,silent";
  std::string from;
  bool svg = false;
  auto* compare = app.add_subcommand("compare", "compare policies across seeds");
  add_common(compare, f, false);
  compare->add_option("--policies", policies, "comma-separated policies")->capture_default_str();
  compare->add_option("--from", from, "read summaries from this directory instead of training");
  compare->add_flag("--svg", svg, "also write an SVG chart");

  std::string sizes = "silent,3,8,13";
  auto* sweep = app.add_subcommand("sweep-alphabet", "alphabet sweep on the stringent pool");
  add_common(sweep, f, false);
  sweep->add_option("--sizes", sizes, "silent or alphabet sizes")->capture_default_str();

  std::size_t agent = 2, permutations = 0;
  std::string baseline = "mean";
  int attr_episodes = 10;
  auto* attribute = app.add_subcommand("attribute", "Shapley attributions from checkpoints");
  add_common(attribute, f);
  attribute->add_option("--agent", agent, "agent index")->capture_default_str();
  attribute->add_option("--permutations", permutations, "permutations (default from config)");
  attribute->add_option("--baseline", baseline, "mean or zeros")->capture_default_str();
  attribute->add_option("--eval-episodes", attr_episodes, "episodes of observations")
      ->capture_default_str();

  std::string defaults_file;
  auto* exp = app.add_subcommand("export-defaults", "write the default config");
  exp->add_option("--file", defaults_file, "output path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (f.jobs == 0) throw UsageError("--jobs must be >= 1");
    if (*train) return cmd_train(f);
    if (*eval) return cmd_evaluate(f);
    if (*compare) return cmd_compare(f, policies, from, svg);
    if (*sweep) return cmd_sweep(f, sizes);
    if (*attribute) return cmd_attribute(f, agent, permutations, baseline, attr_episodes);
    if (*exp) {
      const std::string text = write_config(default_run_config());
      if (defaults_file.empty()) {
        std::cout << text;
      } else {
        write_file(defaults_file, [&](auto& os) { os << text; });
      }
      return 0;
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}

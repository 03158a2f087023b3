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

// Runs the ibcomm binary end to end on a tiny configuration.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ibcomm/metrics_io.hpp"

#ifndef IBCOMM_CLI_PATH
#error "IBCOMM_CLI_PATH must point at the ibcomm binary"
#endif

namespace ibcomm {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("ibcomm_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream cfg(dir_ / "tiny.cfg");
    cfg << "episodes = 2\nsteps_per_episode = 20\neval_episodes = 2\nbatch_size = 8\n";
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(IBCOMM_CLI_PATH) + " " + args + " >" + out.string() +
                            " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  std::string tiny() const { return "--config " + (dir_ / "tiny.cfg").string(); }
  std::string out_dir() const { return "--out " + (dir_ / "out").string(); }

  fs::path dir_;
};

TEST_F(CliTest, ExportDefaultsContent) {
  const Result r = run("export-defaults");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("# [paper]"), std::string::npos);
  EXPECT_NE(r.out.find("\nshares_ghz = 15,15,10\n"), std::string::npos);
  EXPECT_NE(r.out.find("\ncycles_per_bit = 500\n"), std::string::npos);
  EXPECT_EQ(r.out, write_config(default_run_config()));
}

TEST_F(CliTest, ExportedFileDrivesTraining) {
  const fs::path cfg = dir_ / "defaults.cfg";
  ASSERT_EQ(run("export-defaults --file " + cfg.string()).code, 0);
  EXPECT_EQ(write_config(load_config(cfg.string())), slurp(cfg));
  const Result r = run("train --config " + cfg.string() + " --episodes 1 " + out_dir());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto steps = [&] {
    std::ifstream is(dir_ / "out" / "steps_emergent3_s1.csv");
    return read_steps_csv(is);
  }();
  EXPECT_EQ(steps.size(), 60u);
  EXPECT_NE(r.out.find("final-window conflicts/episode"), std::string::npos);
}

TEST_F(CliTest, TrainWritesMetricsAndCheckpoints) {
  const Result r = run("train --policy emergent:3 --seed 1 " + tiny() + " " + out_dir());
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* name : {"steps_emergent3_s1.csv", "episodes_emergent3_s1.csv",
                           "eval_steps_emergent3_s1.csv", "latency_cdf_emergent3_s1.csv",
                           "summary_emergent3_s1.json", "agent0_emergent3_s1.ckpt",
                           "agent1_emergent3_s1.ckpt", "agent2_emergent3_s1.ckpt"}) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / name)) << name;
  }
}

TEST_F(CliTest, SeedListWritesOneFilePerSeed) {
  const Result r = run("train --seed 1,2,3 --policy silent " + tiny() + " " + out_dir());
  ASSERT_EQ(r.code, 0) << r.err;
  for (int s = 1; s <= 3; ++s) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / ("steps_silent_s" + std::to_string(s) + ".csv")));
  }
}

TEST_F(CliTest, MissingConfigNamesPath) {
  const std::string missing = (dir_ / "nope.cfg").string();
  const Result r = run("train --config " + missing);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(missing), std::string::npos);
}

TEST_F(CliTest, BadConfigLineReported) {
  std::ofstream(dir_ / "bad.cfg") << "episodes = 2\nwhat = 1\n";
  const Result r = run("train --config " + (dir_ / "bad.cfg").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad.cfg:2"), std::string::npos);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run("train --no-such-flag").code, 1);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("train --policy emergent:1 " + tiny()).code, 1);
  EXPECT_EQ(run("train --seed x " + tiny()).code, 1);
}

TEST_F(CliTest, CompareSinglePolicyWarnsAndPassesMediansThrough) {
  const Result r =
      run("compare --policies silent --svg " + tiny() + " " + out_dir());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  const std::string csv = slurp(dir_ / "out" / "compare.csv");
  // Two lines: header and the single window of the single policy.
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "compare_conflicts.svg"));

  std::ifstream is(dir_ / "out" / "eval_steps_silent_s1.csv");
  MetricsLog eval;
  eval.steps = read_steps_csv(is);
  const double median = latency_stats(eval).median;
  const auto row = csv.substr(csv.find('\n') + 1);
  std::vector<std::string> fields;
  std::stringstream ss(row);
  for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
  ASSERT_GE(fields.size(), 5u);
  EXPECT_EQ(std::stod(fields[4]), median);
}

TEST_F(CliTest, CompareFromSummaries) {
  ASSERT_EQ(run("train --policy silent --seed 1,2 " + tiny() + " " + out_dir()).code, 0);
  ASSERT_EQ(run("train --policy predefined --seed 1,2 " + tiny() + " " + out_dir()).code, 0);
  const Result r = run("compare --policies silent,predefined --seed 1,2 --from " +
                       (dir_ / "out").string() + " " + tiny() + " " + out_dir());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.err.find("warning"), std::string::npos);
  const std::string csv = slurp(dir_ / "out" / "compare.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("\nsilent,0,"), std::string::npos);
  EXPECT_NE(csv.find("\npredefined,0,"), std::string::npos);
}

TEST_F(CliTest, EvaluateReproducesTrainingEvaluation) {
  ASSERT_EQ(run("train --seed 4 " + tiny() + " " + out_dir()).code, 0);
  const fs::path p = dir_ / "out" / "eval_steps_emergent3_s4.csv";
  const std::string first = slurp(p);
  fs::remove(p);
  const Result r = run("evaluate --seed 4 " + tiny() + " " + out_dir());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(p), first);
}

TEST_F(CliTest, AttributeWritesTable) {
  ASSERT_EQ(run("train --seed 5 " + tiny() + " " + out_dir()).code, 0);
  const Result r = run("attribute --seed 5 --agent 1 --permutations 20 --eval-episodes 1 " +
                       tiny() + " " + out_dir());
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(dir_ / "out" / "attribution_emergent3_s5_agent1.csv");
  EXPECT_EQ(csv.rfind("traffic,alloc_gap,code_peer1,code_peer2\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
}

TEST_F(CliTest, EvaluateWithoutCheckpointsFails) {
  const Result r = run("evaluate --seed 9 " + tiny() + " " + out_dir());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("checkpoint"), std::string::npos);
}

TEST_F(CliTest, SweepWritesRows) {
  const Result r = run("sweep-alphabet --sizes silent,3 --seed 1,2 " + tiny() + " " + out_dir());
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(dir_ / "out" / "sweep_alphabet.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(r.out.find("stringent pool: 30.000 GHz"), std::string::npos);
}

}  // namespace
}  // namespace ibcomm

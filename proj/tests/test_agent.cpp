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

#include "ibcomm/agent.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace ibcomm {
namespace {

Observation obs_of(double a, double b) {
  Observation o;
  o.served_norm = a;
  o.gap_norm = b;
  return o;
}

Transition transition(double a, double b, int action, double reward, bool done) {
  Transition t;
  t.obs = obs_of(a, b);
  t.next_obs = obs_of(b, a);
  t.action_index = action;
  t.reward = reward;
  t.done = done;
  return t;
}

TEST(SelectActionTest, GreedyPicksArgmax) {
  Rng r = make_stream(1, Stream::kExplore);
  EXPECT_EQ(select_action(std::vector<double>{0.1, 0.5, 0.2}, 0.0, r), 1);
}

TEST(SelectActionTest, TiesGoToLowestIndex) {
  Rng r = make_stream(1, Stream::kExplore);
  EXPECT_EQ(select_action(std::vector<double>{0.3, 0.3, 0.3}, 0.0, r), 0);
}

TEST(SelectActionTest, EmptyRejected) {
  Rng r = make_stream(1, Stream::kExplore);
  EXPECT_THROW(select_action(std::vector<double>{}, 0.0, r), std::invalid_argument);
}

TEST(SelectActionTest, FullExplorationIsUniform) {
  Rng r = make_stream(2, Stream::kExplore);
  const std::vector<double> q{5.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  std::vector<std::size_t> counts(6, 0);
  for (int i = 0; i < 60000; ++i) ++counts[select_action(q, 1.0, r)];
  EXPECT_GT(testing::chi_square_pvalue(counts, std::vector<double>(6, 1.0 / 6)), 0.01);
}

TEST(SelectActionTest, GreedyInvariantToPositiveScaling) {
  Rng r = make_stream(3, Stream::kExplore);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> q(18), scaled(18);
    for (std::size_t i = 0; i < q.size(); ++i) {
      q[i] = standard_normal(r);
      scaled[i] = 3.7 * q[i] + 11.0;
    }
    Rng a = make_stream(k, Stream::kExplore), b = make_stream(k, Stream::kExplore);
    EXPECT_EQ(select_action(q, 0.0, a), select_action(scaled, 0.0, b));
  }
}

TEST(ActionCodingTest, DecodeExamples) {
  const ActionPair a = decode_action(7, 3);
  EXPECT_EQ(a.cpu_level, 2);
  EXPECT_EQ(a.message, 1);
  const ActionPair b = decode_action(5, 1);
  EXPECT_EQ(b.cpu_level, 5);
  EXPECT_EQ(b.message, 0);
  EXPECT_THROW(decode_action(18, 3), std::out_of_range);
  EXPECT_THROW(decode_action(-1, 3), std::out_of_range);
}

TEST(ActionCodingTest, RoundTrip) {
  for (int n : {1, 3, 8, 13}) {
    for (int i = 0; i < kNumCpuLevels * n; ++i) {
      const ActionPair p = decode_action(i, n);
      EXPECT_EQ(encode_action(p.cpu_level, p.message, n), i);
    }
  }
}

TEST(TdTargetsTest, TerminalUsesRewardOnly) {
  Rng init = make_stream(4, Stream::kNetInit);
  const QNetwork net = make_qnetwork(2, 8, 4, 6, init);
  const Transition t = transition(0.5, 0.2, 0, 0.75, true);
  const std::vector<const Transition*> batch{&t};
  EXPECT_EQ(td_targets(batch, net, 0.99)[0], 0.75);
}

TEST(TdTargetsTest, ZeroGammaUsesRewardOnly) {
  Rng init = make_stream(5, Stream::kNetInit);
  const QNetwork net = make_qnetwork(2, 8, 4, 6, init);
  const Transition t = transition(0.5, 0.2, 0, -0.25, false);
  const std::vector<const Transition*> batch{&t};
  EXPECT_EQ(td_targets(batch, net, 0.0)[0], -0.25);
}

TEST(TdTargetsTest, ConstantTargetNetwork) {
  // Zero weights everywhere and a constant head bias give Q(s', a) = c.
  QNetwork net(2, 8, 4, 6);
  std::fill(net.head.biases.begin(), net.head.biases.end(), 2.0);
  const Transition t = transition(0.5, 0.2, 0, 1.0, false);
  const std::vector<const Transition*> batch{&t};
  EXPECT_NEAR(td_targets(batch, net, 0.9)[0], 1.0 + 0.9 * 2.0, 1e-15);
}

TEST(TdTargetsTest, UsesMaxOverActions) {
  QNetwork net(2, 8, 4, 3);
  net.head.biases = {1.0, 4.0, -2.0};
  const Transition t = transition(0.5, 0.2, 0, 0.0, false);
  const std::vector<const Transition*> batch{&t};
  EXPECT_EQ(td_targets(batch, net, 0.5)[0], 2.0);
}

AgentConfig small_config() {
  AgentConfig c;
  c.batch_size = 4;
  c.replay_capacity = 100;
  c.hidden_dim = 16;
  c.bottleneck_dim = 4;
  c.target_sync_period = 5;
  return c;
}

TEST(DqnAgentTest, NotReadyBelowBatch) {
  DqnAgent agent(small_config(), 2, 6, 1, 0);
  for (int i = 0; i < 3; ++i) agent.store(transition(0.1 * i, 0.0, i, 0.0, false));
  const QNetwork before = agent.online();
  const LearnResult r = agent.learn_step(0.0, 0.4);
  EXPECT_FALSE(r.ready);
  EXPECT_EQ(agent.online(), before);
  EXPECT_EQ(agent.learn_steps(), 0u);
}

TEST(DqnAgentTest, TargetSyncedOnPeriod) {
  DqnAgent agent(small_config(), 2, 6, 2, 0);
  for (int i = 0; i < 10; ++i) agent.store(transition(0.1 * i, -0.1 * i, i % 6, 1.0, false));
  const QNetwork initial_target = agent.target();
  EXPECT_EQ(agent.target(), agent.online());
  for (int i = 0; i < 4; ++i) {
    ASSERT_TRUE(agent.learn_step(0.0, 0.4).ready);
    EXPECT_EQ(agent.target(), initial_target);
    EXPECT_FALSE(agent.target() == agent.online());
  }
  agent.learn_step(0.0, 0.4);
  EXPECT_EQ(agent.learn_steps(), 5u);
  EXPECT_EQ(agent.target(), agent.online());
  agent.learn_step(0.0, 0.4);
  EXPECT_FALSE(agent.target() == agent.online());
}

TEST(DqnAgentTest, SameSeedSameTrajectory) {
  DqnAgent a(small_config(), 2, 6, 3, 1), b(small_config(), 2, 6, 3, 1);
  for (int i = 0; i < 20; ++i) {
    const Transition t = transition(0.05 * i, 0.3, i % 6, 0.1 * i, i % 7 == 0);
    a.store(t);
    b.store(t);
  }
  for (int i = 0; i < 10; ++i) {
    const LearnResult ra = a.learn_step(0.01, 0.5);
    const LearnResult rb = b.learn_step(0.01, 0.5);
    EXPECT_EQ(ra.loss.total, rb.loss.total);
    EXPECT_EQ(a.act(obs_of(0.2, 0.1), 0.3), b.act(obs_of(0.2, 0.1), 0.3));
  }
  EXPECT_EQ(a.online(), b.online());
}

TEST(DqnAgentTest, DistinctAgentIdsDiffer) {
  DqnAgent a(small_config(), 2, 6, 3, 0), b(small_config(), 2, 6, 3, 1);
  EXPECT_FALSE(a.online() == b.online());
}

// A single terminal transition with reward 1: Q(s, a) converges to 1.
TEST(DqnAgentTest, ConvergesOnSingleTransition) {
  AgentConfig c = small_config();
  c.batch_size = 1;
  c.replay_capacity = 1;
  c.lr = 0.01;
  DqnAgent agent(c, 2, 6, 4, 0);
  agent.store(transition(0.5, -0.5, 2, 1.0, true));
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double l = agent.learn_step(0.0, 1.0).loss.td_loss;
    if (i < 20) first += l;
    if (i >= 180) last += l;
  }
  const std::vector<double> x{0.5, -0.5};
  EXPECT_NEAR(q_values(agent.online(), x)[2], 1.0, 0.05);
  EXPECT_LT(last, 0.1 * first);
}

TEST(SchedulesTest, BetaIsLinear) {
  EXPECT_EQ(anneal_beta(0), 0.0);
  EXPECT_EQ(anneal_beta(1000), 1.0);
  EXPECT_EQ(anneal_beta(500), 0.5);
  EXPECT_EQ(anneal_beta(1), 0.001);
  EXPECT_THROW(anneal_beta(-1), std::invalid_argument);
  const AgentConfig c;
  for (int e = 0; e < 1000; ++e) EXPECT_EQ(beta_at(c, e), 0.001 * e);
}

TEST(SchedulesTest, EpsilonDecaysToFloor) {
  const AgentConfig c;
  EXPECT_EQ(epsilon_at(c, 0), 1.0);
  for (int e = 0; e < 1000; ++e) {
    EXPECT_EQ(epsilon_at(c, e), std::max(0.01, std::pow(0.99, e)));
  }
  EXPECT_EQ(epsilon_at(c, 999), 0.01);
}

TEST(SchedulesTest, ImportanceExponentAnneals) {
  const AgentConfig c;
  EXPECT_EQ(per_beta_is_at(c, 0, 1000), 0.4);
  EXPECT_EQ(per_beta_is_at(c, 999, 1000), 1.0);
  for (int e = 1; e < 1000; ++e) {
    EXPECT_GE(per_beta_is_at(c, e, 1000), per_beta_is_at(c, e - 1, 1000));
  }
}

TEST(AgentCheckpointTest, RoundTrip) {
  DqnAgent agent(small_config(), 2, 6, 5, 2);
  const AgentCheckpointHeader h{42, 0.25, 0.042, 0.7};
  std::stringstream ss;
  save_agent_checkpoint(ss, h, agent.online());
  const auto [h2, net] = load_agent_checkpoint(ss);
  EXPECT_EQ(h2, h);
  EXPECT_EQ(net, agent.online());
  std::stringstream bad("IBQN");
  EXPECT_THROW(load_agent_checkpoint(bad), std::runtime_error);
}

}  // namespace
}  // namespace ibcomm

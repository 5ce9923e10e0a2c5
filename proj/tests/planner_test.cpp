#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

#include "hop/belief.hpp"
#include "hop/errors.hpp"
#include "hop/planner.hpp"
#include "hop/rng.hpp"
#include "test_support.hpp"
#include "toy_game.hpp"

namespace hop {
namespace {

using test::ToyGame;
using test::ToyPolicy;

class UniformCoplayer final : public CoplayerPolicy {
 public:
  void distribution(const GridState&, AgentId, int, ActionMask legal, std::span<double> out) const override {
    UniformPriorValue().evaluate(GridState{}, 0, legal, out);
  }
};

// Co-player always plays action `a`.
class FixedCoplayer final : public CoplayerPolicy {
 public:
  explicit FixedCoplayer(int a) : a_(a) {}
  void distribution(const GridState&, AgentId, int, ActionMask, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    out[a_] = 1.0;
  }

 private:
  int a_;
};

TEST(Puct, ZeroVisitsScoreZero) {
  EXPECT_EQ(puct_score(EdgeStats{}, 0.25, 0, 2.0), 0.0);
}

TEST(Puct, HandEvaluation) {
  EXPECT_DOUBLE_EQ(puct_score(EdgeStats{3, 3.0}, 0.5, 4, 2.0), 1.5);
}

TEST(Puct, SmallCRanksByQ) {
  const EdgeStats a{10, 4.0}, b{2, 1.0};  // Q = 0.4 vs 0.5
  EXPECT_LT(puct_score(a, 0.9, 12, 1e-9), puct_score(b, 0.1, 12, 1e-9));
}

TEST(Search, VisitConservationAndBackupConsistency) {
  auto env = test::msh_4h1s();
  UniformCoplayer om;
  UniformPriorValue pv;
  PlannerConfig cfg;
  cfg.iterations = 300;
  Rng spawn(4);
  const GridState root = env->spawn(spawn);
  SearchTree tree(*env, root, 1, {0, -1, 1, 0}, om, pv, cfg);
  std::map<std::pair<int, int>, std::pair<int, double>> seen;
  SearchLogSink sink = [&](const SearchLogEntry& e) {
    auto& acc = seen[{e.node, e.action}];
    acc.first += 1;
    acc.second += e.value;
  };
  Rng rng(9);
  for (int i = 0; i < cfg.iterations; ++i) tree.iterate(rng, 0, i, &sink);

  int root_total = 0;
  for (int v : tree.root_visits()) root_total += v;
  EXPECT_EQ(root_total, cfg.iterations);
  for (std::size_t n = 0; n < tree.nodes().size(); ++n) {
    const auto& node = tree.nodes()[n];
    int sum = 0;
    for (std::size_t a = 0; a < node.edges.size(); ++a) {
      const auto& st = node.edges[a].stats;
      sum += st.visits;
      if (st.visits == 0) continue;
      const auto& acc = seen.at({static_cast<int>(n), static_cast<int>(a)});
      EXPECT_EQ(acc.first, st.visits);
      EXPECT_NEAR(st.q(), acc.second / acc.first, 1e-12);
    }
    EXPECT_EQ(sum, node.visits - 1) << "node " << n;
  }
}

TEST(Search, RemovedCoplayersStopActing) {
  auto env = test::msh_4h1s();
  UniformCoplayer om;
  UniformPriorValue pv;
  PlannerConfig cfg;
  cfg.iterations = 200;
  GridState root = test::make_state(8, 8, {{0, 0}, {1, 1}, {2, 2}, {3, 3}},
                                    {test::entity(EntityKind::kStag, 7, 7),
                                     test::entity(EntityKind::kHare, 6, 0)});
  root.agents[2].alive = false;
  Rng rng(1);
  EXPECT_NO_THROW(run_round(*env, root, 0, {-1, 0, -1, 1}, om, pv, cfg, rng));
}

TEST(Search, TerminalChildValueIsTheImmediateReward) {
  ToyGame game(5);
  FixedCoplayer om(2);
  UniformPriorValue pv;
  PlannerConfig cfg;
  cfg.iterations = 60;
  Rng spawn(0);
  GridState root = game.spawn(spawn);
  root = game.step(root, {1, 0}).state;  // one step left
  Rng rng(2);
  const RoundResult rr = run_round(game, root, 0, {-1, 0}, om, pv, cfg, rng);
  for (int a = 0; a < 3; ++a) {
    ASSERT_GT(rr.visits[a], 0);
    EXPECT_NEAR(rr.q[a], game.second_reward(1, 0, a, 2), 1e-12);
  }
}

TEST(Search, IllegalActionsAreNeverSelected) {
  ToyGame game(3, 0b101);
  ToyPolicy om(game);
  UniformPriorValue pv;
  PlannerConfig cfg;
  cfg.iterations = 500;
  Rng spawn(0);
  const GridState root = game.spawn(spawn);
  SearchTree tree(game, root, 0, {-1, 1}, om, pv, cfg);
  Rng rng(3);
  for (int i = 0; i < cfg.iterations; ++i) tree.iterate(rng);
  for (const auto& node : tree.nodes()) EXPECT_EQ(node.edges[1].stats.visits, 0);
}

TEST(Search, ArgumentErrors) {
  ToyGame game(0);
  ToyPolicy om(game);
  UniformPriorValue pv;
  PlannerConfig cfg;
  Rng rng(0);
  GridState root = game.spawn(rng);
  cfg.iterations = 0;
  EXPECT_THROW(run_round(game, root, 0, {-1, 0}, om, pv, cfg, rng), ArgumentError);
  cfg.iterations = 10;
  EXPECT_THROW(run_round(game, root, 0, {-1}, om, pv, cfg, rng), ArgumentError);
  GridState done = game.step(game.step(root, {0, 0}).state, {0, 0}).state;
  EXPECT_THROW(run_round(game, done, 0, {-1, 0}, om, pv, cfg, rng), ArgumentError);
  cfg.rounds = 0;
  const std::vector<GoalBelief> beliefs{GoalBelief::uniform(0, 1, 2)};
  EXPECT_THROW(plan(game, root, 0, beliefs, om, pv, cfg, rng), ArgumentError);
}

TEST(Boltzmann, BetaZeroIsUniformOverLegal) {
  const std::vector<double> q{3.0, -1.0, 7.0, 0.5};
  const auto p = boltzmann(q, 0.0, 0b1011);
  EXPECT_DOUBLE_EQ(p[0], 1.0 / 3);
  EXPECT_DOUBLE_EQ(p[1], 1.0 / 3);
  EXPECT_EQ(p[2], 0.0);
  EXPECT_DOUBLE_EQ(p[3], 1.0 / 3);
}

TEST(Boltzmann, LargeBetaConcentratesOnArgmax) {
  const std::vector<double> q{0.1, 0.3, 0.2};
  const auto p = boltzmann(q, 1e4, 0b111);
  EXPECT_NEAR(p[1], 1.0, 1e-12);
}

TEST(Boltzmann, ShiftInvariant) {
  // Dyadic values keep beta * (q + c) exact.
  const std::vector<double> q{0.25, -1.5, 0.75, 2.0};
  std::vector<double> shifted(q);
  for (double& v : shifted) v += 8.0;
  const auto p = boltzmann(q, 2.0, 0b1111);
  const auto r = boltzmann(shifted, 2.0, 0b1111);
  for (int a = 0; a < 4; ++a) EXPECT_EQ(p[a], r[a]);
}

TEST(Boltzmann, MatchesSoftmaxOracle) {
  Rng rng(12);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> q(5);
    for (double& v : q) v = 4 * rng.uniform() - 2;
    const double beta = 5 * rng.uniform();
    const auto p = boltzmann(q, beta, 0b11111);
    double z = 0;
    for (double v : q) z += std::exp(beta * v);
    for (int a = 0; a < 5; ++a) EXPECT_NEAR(p[a], std::exp(beta * q[a]) / z, 1e-12);
  }
}

TEST(Plan, SingleLegalActionIsAPointMass) {
  ToyGame game(1, 0b010);
  ToyPolicy om(game);
  UniformPriorValue pv;
  PlannerConfig cfg;
  cfg.rounds = 3;
  cfg.iterations = 50;
  Rng rng(0);
  const GridState root = game.spawn(rng);
  const std::vector<GoalBelief> beliefs{GoalBelief::uniform(0, 1, 2)};
  const PlanResult r = plan(game, root, 0, beliefs, om, pv, cfg, rng);
  EXPECT_EQ(r.action, 1);
  EXPECT_EQ(r.policy[1], 1.0);
  EXPECT_EQ(r.goal_combinations.size(), 3u);
}

TEST(Plan, DeterministicUnderFixedSeed) {
  auto env = test::msh_4h2s();
  UniformCoplayer om;
  UniformPriorValue pv;
  PlannerConfig cfg;
  cfg.rounds = 4;
  cfg.iterations = 80;
  Rng spawn(6);
  const GridState root = env->spawn(spawn);
  std::vector<GoalBelief> beliefs;
  for (AgentId j = 1; j < 4; ++j) beliefs.push_back(GoalBelief{0, j, {0.2, 0.3, 0.5}});
  Rng r1(77), r2(77);
  const PlanResult a = plan(*env, root, 0, beliefs, om, pv, cfg, r1);
  const PlanResult b = plan(*env, root, 0, beliefs, om, pv, cfg, r2);
  ASSERT_EQ(a.q_avg.size(), b.q_avg.size());
  EXPECT_EQ(std::memcmp(a.q_avg.data(), b.q_avg.data(), a.q_avg.size() * sizeof(double)), 0);
  EXPECT_EQ(a.policy, b.policy);
  EXPECT_EQ(a.action, b.action);
  EXPECT_EQ(a.goal_combinations, b.goal_combinations);
}

TEST(Plan, QIsTheMeanOverRounds) {
  ToyGame game(2);
  ToyPolicy om(game);
  UniformPriorValue pv;
  PlannerConfig cfg;
  cfg.rounds = 5;
  cfg.iterations = 40;
  Rng spawn(0);
  const GridState root = game.spawn(spawn);
  const std::vector<GoalBelief> beliefs{GoalBelief{0, 1, {0.5, 0.5}}};
  Rng rng(31);
  const PlanResult r = plan(game, root, 0, beliefs, om, pv, cfg, rng);

  // Replay the same random stream by hand.
  Rng replay(31);
  std::vector<double> sum(3, 0.0);
  for (int l = 0; l < cfg.rounds; ++l) {
    auto goals = sample_goal_combination(beliefs, 2, replay);
    goals[0] = -1;
    Rng round_rng(replay.next());
    const RoundResult rr = run_round(game, root, 0, goals, om, pv, cfg, round_rng);
    for (int a = 0; a < 3; ++a) sum[a] += rr.q[a];
  }
  for (int a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(r.q_avg[a], sum[a] / cfg.rounds);
}

// Mean absolute error of Q_avg against exhaustive expectimax, over instances.
double toy_error(int iterations, double c) {
  double total = 0.0;
  int count = 0;
  for (int seed = 0; seed < 6; ++seed) {
    ToyGame game(seed);
    ToyPolicy om(game);
    UniformPriorValue pv;
    PlannerConfig cfg;
    cfg.rounds = 8;
    cfg.iterations = iterations;
    cfg.c_puct = c;
    Rng spawn(0);
    const GridState root = game.spawn(spawn);
    const std::vector<GoalBelief> beliefs{GoalBelief{0, 1, {0.3, 0.7}}};
    Rng rng(100 + seed);
    const PlanResult r = plan(game, root, 0, beliefs, om, pv, cfg, rng);
    for (int a = 0; a < 3; ++a) {
      double oracle = 0.0;
      for (const auto& g : r.goal_combinations) oracle += game.expectimax(a, g[1], cfg.gamma);
      oracle /= r.goal_combinations.size();
      total += std::abs(r.q_avg[a] - oracle);
      ++count;
    }
  }
  return total / count;
}

TEST(Plan, ConvergesTowardExpectimaxAsIterationsGrow) {
  const double e1 = toy_error(100, 2.0);
  const double e2 = toy_error(1000, 2.0);
  const double e3 = toy_error(40000, 2.0);
  EXPECT_GT(e1, e2);
  EXPECT_GT(e2, e3);
  EXPECT_LT(e3, 0.05);
}

TEST(SearchLog, WritesHeaderAndRows) {
  std::ostringstream out;
  SearchLogWriter writer(out);
  auto sink = writer.sink();
  sink(SearchLogEntry{1, 2, 0, 0, 3, 0.5});
  EXPECT_EQ(out.str(), "# hop-search-log v1\nround,iteration,depth,node,action,value\n1,2,0,0,3,0.5\n");
}

}  // namespace
}  // namespace hop

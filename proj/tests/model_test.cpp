#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "gradient_check.hpp"
#include "hop/errors.hpp"
#include "hop/mlp.hpp"
#include "hop/opponent_model.hpp"
#include "hop/planner.hpp"
#include "test_support.hpp"

namespace hop {
namespace {

std::shared_ptr<MshEnvironment> small_msh() {
  MshConfig c;
  c.width = 4;
  c.height = 4;
  c.n_hares = 2;
  return std::make_shared<MshEnvironment>(c);
}

std::vector<ReplayEntry> random_entries(const Environment& env, int n, Rng& rng) {
  std::vector<ReplayEntry> out;
  for (int i = 0; i < n; ++i) {
    GridState s = env.spawn(rng);
    const int subject = static_cast<int>(rng.index(env.n_agents()));
    out.push_back(ReplayEntry{s, subject, static_cast<int>(rng.index(env.n_actions())),
                              static_cast<int>(rng.index(env.spec().n_goals(subject)))});
  }
  return out;
}

std::vector<const ReplayEntry*> pointers(const std::vector<ReplayEntry>& v) {
  std::vector<const ReplayEntry*> out;
  for (const auto& e : v) out.push_back(&e);
  return out;
}

TEST(Mlp, ForwardMatchesHandComputation) {
  Mlp net(Architecture{2, 2, 1}, 1);
  auto p = net.parameters();
  // W1[in][hid] | b1 | W2[out][hid] | b2
  const double vals[] = {0.1, -0.2, 0.3, 0.4, 0.05, -0.05, 1.5, -2.0, 0.25};
  std::copy(std::begin(vals), std::end(vals), p.begin());
  Mlp::Workspace ws;
  const std::vector<double> x{1.0, 2.0};
  net.forward(x, ws);
  const double h0 = std::tanh(0.1 * 1 + 0.3 * 2 + 0.05);
  const double h1 = std::tanh(-0.2 * 1 + 0.4 * 2 - 0.05);
  EXPECT_NEAR(ws.output[0], 1.5 * h0 - 2.0 * h1 + 0.25, 1e-15);
}

TEST(Mlp, SaveLoadIsBitExact) {
  Mlp net(Architecture{7, 5, 3}, 9);
  Rng rng(3);
  net.randomize(rng, 0.7);
  std::stringstream buf;
  net.save(buf);
  const Mlp back = Mlp::load(buf);
  EXPECT_EQ(back.architecture(), net.architecture());
  ASSERT_EQ(back.parameter_count(), net.parameter_count());
  for (std::size_t i = 0; i < net.parameter_count(); ++i) {
    EXPECT_EQ(std::memcmp(&back.parameters()[i], &net.parameters()[i], sizeof(double)), 0);
  }
}

TEST(Mlp, LoadRejectsTruncatedInput) {
  std::istringstream in("mlp 2 2 1 9\n0x1p+0\n");
  EXPECT_THROW(Mlp::load(in), LoadError);
  std::istringstream wrong("mlp 2 2 1 8\n");
  EXPECT_THROW(Mlp::load(wrong), LoadError);
}

TEST(GoalConditionedModel, GradientMatchesFiniteDifferences) {
  auto env = small_msh();
  Rng rng(1);
  const auto data = random_entries(*env, 6, rng);
  const auto batch = pointers(data);
  for (int point = 0; point < 5; ++point) {
    GoalConditionedModel model(env, 8, 100 + point);
    model.network().randomize(rng, 0.5);
    std::vector<double> grad(model.network().parameter_count(), 0.0);
    model.loss(batch, grad);
    const double err = test::max_relative_gradient_error(
        model.network().parameters(), [&] { return model.loss(batch); }, grad, 300, rng);
    EXPECT_LT(err, 1e-4);
  }
}

TEST(PolicyValueModel, GradientMatchesFiniteDifferences) {
  auto env = small_msh();
  Rng rng(2);
  std::vector<PolicyValueModel::Sample> data;
  for (int i = 0; i < 6; ++i) {
    GridState s = env->spawn(rng);
    std::vector<double> pi(6);
    double z = 0.0;
    for (double& v : pi) z += (v = rng.uniform());
    for (double& v : pi) v /= z;
    data.push_back({s, static_cast<AgentId>(rng.index(4)), pi, rng.uniform() * 10 - 2});
  }
  std::vector<const PolicyValueModel::Sample*> batch;
  for (const auto& s : data) batch.push_back(&s);
  for (int point = 0; point < 5; ++point) {
    PolicyValueModel pv(env, 8, 200 + point);
    pv.network().randomize(rng, 0.5);
    std::vector<double> grad(pv.network().parameter_count(), 0.0);
    pv.loss(batch, grad);
    const double err = test::max_relative_gradient_error(
        pv.network().parameters(),
        [&] {
          const auto l = pv.loss(batch);
          return l.policy + l.value;
        },
        grad, 300, rng);
    EXPECT_LT(err, 1e-4);
  }
}

TEST(GoalConditionedModel, FreshModelIsUniformOverLegalActions) {
  auto env = test::msh_4h1s();
  GoalConditionedModel model(env, 16, 1);
  Rng rng(1);
  const GridState s = env->spawn(rng);
  for (double p : model.predict(s, 1, 0)) EXPECT_NEAR(p, 1.0 / 6.0, 1e-15);
  EXPECT_THROW(model.predict(s, 1, 2), ArgumentError);
}

TEST(GoalConditionedModel, TrainingReducesLossAndLearnsGoalDependence) {
  auto env = small_msh();
  Rng rng(4);
  // Synthetic behaviour: goal 0 always hunts, goal 1 always moves left.
  ReplayBuffer buffer(400);
  for (int i = 0; i < 400; ++i) {
    GridState s = env->spawn(rng);
    const int g = static_cast<int>(rng.index(2));
    buffer.push(ReplayEntry{s, 1, g == 0 ? action::kInteract : action::kLeft, g});
  }
  GoalConditionedModel model(env, 16, 3);
  std::vector<const ReplayEntry*> all;
  for (const auto& e : buffer.entries()) all.push_back(&e);
  const double before = model.loss(all);
  for (int e = 0; e < 30; ++e) model.train_epochs(buffer, 1, 32, 0.1, rng);
  const double after = model.loss(all);
  EXPECT_LT(after, 0.5 * before);
  const GridState s = env->spawn(rng);
  EXPECT_GT(model.predict(s, 1, 0)[action::kInteract], 0.8);
  EXPECT_GT(model.predict(s, 1, 1)[action::kLeft], 0.8);
}

TEST(GoalConditionedModel, CheckpointRoundTripAndMismatch) {
  auto env = test::msh_4h1s();
  GoalConditionedModel model(env, 12, 5);
  Rng rng(5);
  model.network().randomize(rng, 0.3);
  std::stringstream buf;
  model.save(buf);
  const std::string text = buf.str();
  const GoalConditionedModel back = GoalConditionedModel::load(buf, env);
  const auto a = model.network().parameters();
  const auto b = back.network().parameters();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
  std::istringstream again(text);
  EXPECT_THROW(GoalConditionedModel::load(again, small_msh()), LoadError);
  std::istringstream wrong_header("hop-policy-value v1\n");
  EXPECT_THROW(GoalConditionedModel::load(wrong_header, env), LoadError);
}

TEST(GoalConditionedModel, NonFiniteLossIsATrainingError) {
  auto env = small_msh();
  GoalConditionedModel model(env, 4, 1);
  model.network().parameters()[model.network().parameter_count() - 1] =
      std::numeric_limits<double>::quiet_NaN();
  Rng rng(1);
  const auto data = random_entries(*env, 2, rng);
  const auto batch = pointers(data);
  EXPECT_THROW(model.train_step(batch, 0.1), TrainingError);
}

TEST(ReplayBuffer, EvictsOldestFirst) {
  ReplayBuffer buf(5000);
  for (int i = 0; i < 5003; ++i) buf.push(ReplayEntry{GridState{}, 0, i % 6, i});
  EXPECT_EQ(buf.size(), 5000u);
  EXPECT_TRUE(buf.full());
  EXPECT_EQ(buf[0].goal, 3);
  EXPECT_EQ(buf[4999].goal, 5002);
  EXPECT_THROW(ReplayBuffer(0), ConfigError);
}

TEST(PolicyValueModel, RejectsUnnormalizedTargetsAndRoundTrips) {
  auto env = small_msh();
  PolicyValueModel pv(env, 8, 1);
  Rng rng(1);
  PolicyValueModel::Sample bad{env->spawn(rng), 0, std::vector<double>(6, 0.5), 0.0};
  const PolicyValueModel::Sample* b[] = {&bad};
  EXPECT_THROW(pv.loss(b), ContractError);
  pv.network().randomize(rng, 0.2);
  std::stringstream buf;
  pv.save(buf);
  const PolicyValueModel back = PolicyValueModel::load(buf, env);
  EXPECT_EQ(std::memcmp(back.network().parameters().data(), pv.network().parameters().data(),
                        pv.network().parameter_count() * sizeof(double)),
            0);
}

TEST(PolicyValueModel, SingleRepeatedSampleRegressesToItsReturn) {
  auto env = small_msh();
  Rng rng(8);
  const PolicyValueModel::Sample sample{env->spawn(rng), 0, std::vector<double>(6, 1.0 / 6.0), 3.0};
  std::vector<const PolicyValueModel::Sample*> batch(16, &sample);
  PolicyValueModel pv(env, 8, 2);
  for (int i = 0; i < 500; ++i) pv_train_step(pv, batch, 0.05);
  std::vector<double> prior(6);
  const double v = pv.evaluate(sample.state, 0, env->legal_actions(sample.state, 0), prior);
  EXPECT_NEAR(v, 3.0, 1e-3);
}

}  // namespace
}  // namespace hop

#pragma once

#include <optional>

#include "hop/game.hpp"

namespace hop {

struct MshConfig {
  int width = 8;
  int height = 8;
  int n_agents = 4;
  int n_hares = 4;
  int n_stags = 1;
  double stag_reward = 10.0;
  double hare_reward = 1.0;
  int t_max = 30;
  // 4h2s rule: the episode ends this many steps after the first successful hunt.
  std::optional<int> post_first_hunt_window;
  double discount = 0.95;

  static MshConfig four_hares_one_stag();
  static MshConfig four_hares_two_stags();
  void validate() const;
};

// Markov stag hunt. Goals per agent: 0 = hunt a stag, 1 = hunt a hare.
class MshEnvironment : public Environment {
 public:
  static constexpr int kStagGoal = 0;
  static constexpr int kHareGoal = 1;

  explicit MshEnvironment(MshConfig config);

  const MshConfig& config() const { return config_; }

  GridState spawn(Rng& rng) const override;
  StepResult step(const GridState& state, const JointAction& joint) const override;
  std::optional<int> goal_in_state(const GridState& state, AgentId agent) const override;
  int feature_size() const override;
  void encode(const GridState& state, AgentId subject, int goal,
              std::span<double> out) const override;

 private:
  MshConfig config_;
};

}  // namespace hop

#pragma once

#include "hop/game.hpp"

namespace hop {

struct MsgConfig {
  int width = 8;
  int height = 8;
  int n_agents = 4;
  int n_drifts = 6;
  double removal_cost = 4.0;    // shared evenly among the removers of one drift
  double removal_reward = 6.0;  // paid to every agent per removed drift
  int t_max = 50;
  double discount = 0.95;

  void validate() const;
};

// Markov snowdrift game.
//
// Goals per agent (the set used by the goal-conditioned model): goal s in
// [0, n_drifts) is "remove drift s"; goal n_drifts is "stay lazy", attributed
// at the end of a finished episode when the agent removed nothing in the window.
class MsgEnvironment : public Environment {
 public:
  explicit MsgEnvironment(MsgConfig config);

  const MsgConfig& config() const { return config_; }
  int lazy_goal() const { return config_.n_drifts; }

  GridState spawn(Rng& rng) const override;
  StepResult step(const GridState& state, const JointAction& joint) const override;
  std::optional<int> goal_in_state(const GridState& state, AgentId agent) const override;
  std::optional<int> terminal_goal(AgentId agent) const override;
  int feature_size() const override;
  void encode(const GridState& state, AgentId subject, int goal,
              std::span<double> out) const override;

 private:
  MsgConfig config_;
};

}  // namespace hop

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hop/belief.hpp"
#include "hop/game.hpp"
#include "hop/opponent_model.hpp"
#include "hop/planner.hpp"
#include "hop/rng.hpp"

namespace hop {

class Agent {
 public:
  explicit Agent(AgentId id) : id_(id) {}
  virtual ~Agent() = default;

  AgentId id() const { return id_; }
  virtual std::string kind() const = 0;

  virtual void begin_episode(const GridState& /*initial*/) {}
  virtual int act(const GridState& state) = 0;
  virtual void observe(const TransitionRecord& /*record*/, const GridState& /*next*/) {}
  virtual void end_episode(const EpisodeTrajectory& /*traj*/) {}

 private:
  AgentId id_;
};

enum class RuleKind { kRandom, kCooperator, kDefector };

// Scripted co-player policy. Cooperators walk a shortest path to the nearest
// stag (stag hunt) or drift (snowdrift) and interact on arrival; defectors do
// the same with hares, or in snowdrift pick uniformly among the non-remove
// actions; random agents pick uniformly among legal actions. Distance ties go
// to the lowest entity index, move ties to the lowest action index.
int rule_act(const Environment& env, RuleKind kind, AgentId agent, const GridState& state, Rng& rng);

class RuleAgent final : public Agent {
 public:
  RuleAgent(AgentId id, RuleKind kind, std::shared_ptr<const Environment> env, std::uint64_t seed);

  std::string kind() const override;
  RuleKind rule() const { return rule_; }
  int act(const GridState& state) override;

 private:
  RuleKind rule_;
  std::shared_ptr<const Environment> env_;
  Rng rng_;
};

struct HopParams {
  double alpha = 0.99;
  PlannerConfig planner;
  int update_interval = 2000;  // T_u, in environment steps
  std::size_t buffer_capacity = 5000;
  double pv_learning_rate = 1e-4;
  double om_learning_rate = 5e-4;
  int hidden = 64;
  int om_epochs = 1;
  int pv_epochs = 1;
  int batch_size = 64;
  double likelihood_floor = 1e-6;
  bool per_coplayer_models = false;

  static HopParams self_play(GameKind kind);
  static HopParams adaptation(GameKind kind);
  // Applies "key=value" overrides (keys as in the config file, without the "hop." prefix).
  void apply(const std::map<std::string, std::string>& overrides);
  void validate() const;
};

// Hierarchical opponent modelling and planning agent.
class HopAgent final : public Agent {
 public:
  HopAgent(AgentId id, std::shared_ptr<const Environment> env, HopParams params, std::uint64_t seed);

  std::string kind() const override { return "hop"; }
  void begin_episode(const GridState& initial) override;
  int act(const GridState& state) override;
  void observe(const TransitionRecord& record, const GridState& next) override;
  void end_episode(const EpisodeTrajectory& traj) override;

  const HopParams& params() const { return params_; }
  HopParams& mutable_params() { return params_; }
  const EpisodePrior& episode_prior(AgentId subject) const { return priors_.at(subject); }
  void set_episode_prior(AgentId subject, EpisodePrior prior);
  // Current within-episode belief over the subject's model goal set.
  GoalBelief belief(AgentId subject) const;
  const std::optional<PlanResult>& last_plan() const { return last_plan_; }
  const BeliefDiagnostics& diagnostics() const { return diagnostics_; }
  int episodes_completed() const { return episodes_completed_; }
  int om_updates() const { return om_updates_; }
  int pv_updates() const { return pv_updates_; }
  const ReplayBuffer& replay_buffer(AgentId subject) const;
  const GoalConditionedModel& opponent_model(AgentId subject) const;
  const PolicyValueModel& policy_value() const { return pv_; }

  // Models and episode priors; hyperparameters are taken from the config at load time.
  void save_checkpoint(std::ostream& out) const;
  void load_checkpoint(std::istream& in);

 private:
  struct PendingStep {
    GridState state;
    AgentId subject;
    int action;
  };
  struct Decision {
    GridState state;
    std::vector<double> policy;
  };

  bool hierarchical() const;
  std::size_t model_index(AgentId subject) const;
  std::vector<GoalBelief> planning_beliefs(const GridState& state) const;

  std::shared_ptr<const Environment> env_;
  HopParams params_;
  Rng rng_;
  std::vector<GoalConditionedModel> models_;
  std::vector<ReplayBuffer> buffers_;
  PolicyValueModel pv_;
  std::vector<EpisodePrior> priors_;          // indexed by agent id
  std::vector<GoalBelief> beliefs_;           // flat beliefs (stag hunt and other games)
  std::vector<MsgHierBelief> hier_beliefs_;   // snowdrift
  std::vector<PendingStep> pending_;
  std::vector<Decision> decisions_;
  std::vector<PolicyValueModel::Sample> pv_data_;
  std::optional<PlanResult> last_plan_;
  BeliefDiagnostics diagnostics_;
  int expected_t_ = 0;
  int episodes_completed_ = 0;
  int om_updates_ = 0;
  int pv_updates_ = 0;
};

// Builds an agent from its config name: "hop", "cooperator", "defector" or "random".
std::unique_ptr<Agent> make_agent(const std::string& name, AgentId id,
                                  std::shared_ptr<const Environment> env, std::uint64_t seed,
                                  const HopParams& hop_params);

}  // namespace hop

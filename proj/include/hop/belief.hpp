#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "hop/game.hpp"
#include "hop/policy.hpp"

namespace hop {

class Rng;

inline constexpr double kNormalizationTolerance = 1e-9;

// observer's belief over subject's goals.
struct GoalBelief {
  AgentId observer = 0;
  AgentId subject = 0;
  std::vector<double> probs;

  static GoalBelief uniform(AgentId observer, AgentId subject, int n_goals);
  // Throws ContractError unless entries are in [0, 1] and sum to 1 within tolerance.
  void validate() const;
};

// Episode-start belief over a subject's goals plus the horizon weight that
// discounts older episodes.
struct EpisodePrior {
  std::vector<double> probs;
  double alpha = 0.99;

  static EpisodePrior uniform(int n_goals, double alpha);
  void validate() const;
};

struct IntraUpdateOptions {
  // Model likelihoods are clamped from below before the Bayes multiply so one
  // confident misprediction cannot eliminate a hypothesis for good.
  double likelihood_floor = 1e-6;
};

struct BeliefDiagnostics {
  // Updates skipped because every goal gave the observed action zero likelihood.
  std::size_t degenerate_updates = 0;
};

// Posterior proportional to prior x likelihood. When the evidence has zero
// probability under every goal the belief is returned unchanged.
GoalBelief intra_update(const GoalBelief& belief, std::span<const double> likelihoods,
                        const IntraUpdateOptions& options = {},
                        BeliefDiagnostics* diagnostics = nullptr);

// Same update with likelihoods Pr(action | state, g) taken from `model`.
GoalBelief intra_update(const GoalBelief& belief, const Environment& env, const GridState& state,
                        int subject_action, const CoplayerPolicy& model,
                        const IntraUpdateOptions& options = {},
                        BeliefDiagnostics* diagnostics = nullptr);

// Discounted-indicator mixture alpha * prior + (1 - alpha) * 1(g = attributed),
// renormalized. No attribution leaves the prior unchanged.
EpisodePrior inter_update(const EpisodePrior& prior, std::optional<int> attributed);

// Two-layer snowdrift belief.
//
// Top layer: the episode prior over "removes k drifts this episode", indexed
// by k in [0, n_drifts] (k = 0 is the lazy goal). During an episode, after the
// subject has removed m drifts,
//   b(cooperate) proportional to sum_{k > m} prior[k],  b(lazy) proportional to prior[0].
// Bottom layer: which present drift the subject is heading for, given that it
// cooperates; reset to uniform at episode start and updated by Bayes with the
// per-drift goal-conditioned model.
struct MsgHierBelief {
  AgentId observer = 0;
  AgentId subject = 0;
  std::vector<double> prior;        // n_drifts + 1 entries, index = removal count
  std::vector<double> conditional;  // n_drifts entries, b(drift s | cooperate)
  int removed = 0;                  // m
  double p_cooperate = 0.0;
  double p_lazy = 1.0;

  int n_drifts() const { return static_cast<int>(conditional.size()); }
  // Belief over the goal-conditioned model's goal set: drift s -> b(s | C) b(C),
  // lazy (index n_drifts) -> b(lazy).
  GoalBelief flatten() const;
  void validate() const;
};

MsgHierBelief msg_hier_start(AgentId observer, AgentId subject, const EpisodePrior& prior,
                             const GridState& state);

// Bayes step on the conditional layer with the action taken at `state`, then
// the top layer is recomputed from the subject's removal count at `state`.
MsgHierBelief msg_hier_update(const MsgHierBelief& belief, const Environment& env,
                              const GridState& state, int subject_action,
                              const CoplayerPolicy& model, const IntraUpdateOptions& options = {},
                              BeliefDiagnostics* diagnostics = nullptr);

// Brings the belief in line with a new state: drifts no longer present drop out
// of the conditional layer and the top layer follows the removal count.
void msg_hier_sync(MsgHierBelief& belief, const GridState& state);

// Top layer only, from a prior and a removal count.
void msg_hier_recompute_top(MsgHierBelief& belief);

// Independent categorical draw per belief. Result has one entry per agent
// (n_agents); agents without a belief get -1.
std::vector<int> sample_goal_combination(std::span<const GoalBelief> beliefs, int n_agents,
                                         Rng& rng);

// CSV trace of beliefs:  episode,t,observer,subject,goal,prob
class BeliefTraceWriter {
 public:
  explicit BeliefTraceWriter(std::ostream& out);
  void write(int episode, int t, const GoalBelief& belief);

 private:
  std::ostream& out_;
};

}  // namespace hop

#pragma once

#include <span>

#include "hop/game.hpp"

namespace hop {

// Goal-conditioned behaviour of a co-player: the likelihood source for goal
// inference and the co-player simulator inside search.
class CoplayerPolicy {
 public:
  virtual ~CoplayerPolicy() = default;
  // Writes a distribution over all actions into out[0, n_actions). Actions not
  // in `legal` get probability 0.
  virtual void distribution(const GridState& state, AgentId subject, int goal, ActionMask legal,
                            std::span<double> out) const = 0;
};

// Search prior and leaf value for the focal agent.
class PriorValueSource {
 public:
  virtual ~PriorValueSource() = default;
  // Writes the prior into prior_out[0, n_actions) and returns the state value.
  virtual double evaluate(const GridState& state, AgentId focal, ActionMask legal,
                          std::span<double> prior_out) const = 0;
};

// Uniform prior over legal actions, zero value.
class UniformPriorValue final : public PriorValueSource {
 public:
  double evaluate(const GridState& state, AgentId focal, ActionMask legal,
                  std::span<double> prior_out) const override;
};

// Writes exp(logits) normalized over `legal` into out; illegal entries get 0.
void masked_softmax(std::span<const double> logits, ActionMask legal, std::span<double> out);

}  // namespace hop

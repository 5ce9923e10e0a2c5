#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "hop/game.hpp"
#include "hop/mlp.hpp"
#include "hop/policy.hpp"

namespace hop {

class Rng;

// (state, subject action, subject goal) tuple for negative log-likelihood training.
struct ReplayEntry {
  GridState state;
  AgentId subject = 0;
  int action = 0;
  int goal = 0;
};

// FIFO buffer of bounded capacity.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 5000);

  void push(ReplayEntry entry);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return entries_.size() >= capacity_; }
  const ReplayEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::deque<ReplayEntry>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<ReplayEntry> entries_;
};

// pi_w(a | s, g): a two-layer perceptron over the environment's feature
// encoding of (state, subject, goal), with a masked softmax over actions.
// One model is shared by all subjects; the encoding carries a subject-identity
// one-hot.
class GoalConditionedModel final : public CoplayerPolicy {
 public:
  GoalConditionedModel(std::shared_ptr<const Environment> env, int hidden, std::uint64_t seed);
  GoalConditionedModel(std::shared_ptr<const Environment> env, Mlp net);

  void distribution(const GridState& state, AgentId subject, int goal, ActionMask legal,
                    std::span<double> out) const override;
  // Distribution over the subject's legal actions at `state`.
  std::vector<double> predict(const GridState& state, AgentId subject, int goal) const;

  // Mean -log pi(a | s, g) over the batch; gradient accumulated into grad when non-empty.
  double loss(std::span<const ReplayEntry* const> batch, std::span<double> grad = {}) const;
  // One SGD step on the mean negative log-likelihood. Returns the loss before the step.
  double train_step(std::span<const ReplayEntry* const> batch, double learning_rate);
  // Shuffled minibatch SGD over the whole buffer. Returns the mean pre-step loss.
  double train_epochs(const ReplayBuffer& buffer, int epochs, int batch_size, double learning_rate,
                      Rng& rng);

  const Environment& environment() const { return *env_; }
  Mlp& network() { return net_; }
  const Mlp& network() const { return net_; }

  void save(std::ostream& out) const;
  static GoalConditionedModel load(std::istream& in, std::shared_ptr<const Environment> env);

 private:
  std::shared_ptr<const Environment> env_;
  Mlp net_;
};

// Throws TrainingError (with a short diagnostic dump) when loss is not finite.
void check_finite_loss(double loss, std::size_t batch_size, std::span<const double> params,
                       const char* what);

}  // namespace hop

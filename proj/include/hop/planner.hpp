#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "hop/belief.hpp"
#include "hop/game.hpp"
#include "hop/mlp.hpp"
#include "hop/policy.hpp"

namespace hop {

class Rng;

// pi_theta(. | s) and v_theta(s) for the focal agent: one two-layer perceptron
// with n_actions policy logits followed by a scalar value output.
class PolicyValueModel final : public PriorValueSource {
 public:
  struct Sample {
    GridState state;
    AgentId focal = 0;
    std::vector<double> policy_target;  // search policy, sums to 1 over legal actions
    double value_target = 0.0;          // realized discounted return
  };
  struct Losses {
    double policy = 0.0;
    double value = 0.0;
  };

  PolicyValueModel(std::shared_ptr<const Environment> env, int hidden, std::uint64_t seed);
  PolicyValueModel(std::shared_ptr<const Environment> env, Mlp net);

  double evaluate(const GridState& state, AgentId focal, ActionMask legal,
                  std::span<double> prior_out) const override;

  // Mean cross-entropy and mean squared error over the batch; gradient of their
  // sum accumulated into grad when non-empty.
  Losses loss(std::span<const Sample* const> batch, std::span<double> grad = {}) const;

  Mlp& network() { return net_; }
  const Mlp& network() const { return net_; }

  void save(std::ostream& out) const;
  static PolicyValueModel load(std::istream& in, std::shared_ptr<const Environment> env);

 private:
  std::shared_ptr<const Environment> env_;
  Mlp net_;
};

// One SGD step on policy + value loss; returns the losses before the step.
PolicyValueModel::Losses pv_train_step(PolicyValueModel& pv,
                                       std::span<const PolicyValueModel::Sample* const> batch,
                                       double learning_rate);

struct PlannerConfig {
  int rounds = 8;          // N_s: goal combinations sampled per decision
  int iterations = 200;    // N_i: search iterations per round
  double beta = 2.0;       // rationality of the Boltzmann action choice
  double c_puct = 2.0;     // exploration coefficient
  double gamma = 0.95;
};

struct EdgeStats {
  int visits = 0;
  double value_sum = 0.0;
  double q() const { return visits > 0 ? value_sum / visits : 0.0; }
};

// Q + c * prior * sqrt(parent_visits) / (1 + N). Unvisited edges have Q = 0.
double puct_score(const EdgeStats& edge, double prior, int parent_visits, double c);

struct SearchLogEntry {
  int round = 0;
  int iteration = 0;
  int depth = 0;
  int node = 0;
  int action = 0;
  double value = 0.0;  // discounted value backed up through (node, action)
};
using SearchLogSink = std::function<void(const SearchLogEntry&)>;

// Writes  round,iteration,depth,node,action,value  rows.
class SearchLogWriter {
 public:
  explicit SearchLogWriter(std::ostream& out);
  SearchLogSink sink();

 private:
  std::ostream& out_;
};

// Search tree for one sampled goal combination.
//
// Nodes hold states; an edge (node, focal action) leads to one child per
// distinct successor state, because the co-players' actions are re-sampled
// from their goal-conditioned policies every time the edge is taken.
//
// Visit convention: creating a node counts as its first visit (the leaf
// evaluation), every later pass through it adds one. Hence for every node,
// sum of edge visits = node visits - 1. The root is created before the first
// iteration, so after N iterations its edges hold N visits in total.
class SearchTree {
 public:
  struct Child {
    std::uint64_t hash = 0;
    int node = 0;
  };
  struct Edge {
    EdgeStats stats;
    std::vector<Child> children;
  };
  struct Node {
    GridState state;
    bool terminal = false;  // environment done or focal agent removed
    int depth = 0;
    int visits = 0;
    double value = 0.0;  // leaf evaluation at creation
    ActionMask legal = 0;
    std::vector<double> prior;
    std::vector<Edge> edges;
    // Cached co-player action distributions, parallel to coplayers.
    std::vector<AgentId> coplayers;
    std::vector<std::vector<double>> coplayer_dists;
  };

  SearchTree(const Environment& env, const GridState& root, AgentId focal, std::vector<int> goals,
             const CoplayerPolicy& om, const PriorValueSource& pv, const PlannerConfig& config);

  // One select / expand / evaluate / backup pass.
  void iterate(Rng& rng, int round = 0, int iteration = 0, const SearchLogSink* log = nullptr);

  const Node& root() const { return nodes_.front(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<double> root_q() const;
  std::vector<int> root_visits() const;

 private:
  int make_node(GridState state, int depth);
  double simulate(int node, Rng& rng, int round, int iteration, const SearchLogSink* log);

  const Environment& env_;
  AgentId focal_;
  std::vector<int> goals_;
  const CoplayerPolicy& om_;
  const PriorValueSource& pv_;
  PlannerConfig config_;
  std::vector<Node> nodes_;
};

struct RoundResult {
  std::vector<double> q;  // per focal action; unvisited and illegal actions read 0
  std::vector<int> visits;
};

// N_i iterations of search from `root` under a fixed goal combination
// (goals[j] is co-player j's goal, -1 for the focal agent and absent agents).
RoundResult run_round(const Environment& env, const GridState& root, AgentId focal,
                      const std::vector<int>& goals, const CoplayerPolicy& om,
                      const PriorValueSource& pv, const PlannerConfig& config, Rng& rng,
                      int round = 0, const SearchLogSink* log = nullptr);

struct PlanResult {
  std::vector<double> q_avg;
  std::vector<double> policy;  // Boltzmann distribution, zero on illegal actions
  double beta = 0.0;
  int action = 0;
  std::vector<std::vector<int>> goal_combinations;  // one per round
};

// Softmax of beta * q over the legal actions.
std::vector<double> boltzmann(std::span<const double> q, double beta, ActionMask legal);

// Samples N_s goal combinations from the beliefs, searches each, averages the
// root action values over rounds and samples an action from the Boltzmann policy.
PlanResult plan(const Environment& env, const GridState& state, AgentId focal,
                std::span<const GoalBelief> beliefs, const CoplayerPolicy& om,
                const PriorValueSource& pv, const PlannerConfig& config, Rng& rng,
                const SearchLogSink* log = nullptr);

}  // namespace hop

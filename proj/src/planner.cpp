#include "hop/planner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "hop/errors.hpp"
#include "hop/opponent_model.hpp"
#include "hop/rng.hpp"

namespace hop {

// ---------------------------------------------------------------------------
// Policy-value model

PolicyValueModel::PolicyValueModel(std::shared_ptr<const Environment> env, int hidden,
                                   std::uint64_t seed)
    : env_(std::move(env)),
      net_(Architecture{env_->feature_size(), hidden, env_->n_actions() + 1}, seed) {}

PolicyValueModel::PolicyValueModel(std::shared_ptr<const Environment> env, Mlp net)
    : env_(std::move(env)), net_(std::move(net)) {
  const Architecture want{env_->feature_size(), net_.architecture().hidden, env_->n_actions() + 1};
  if (!(net_.architecture() == want)) {
    throw LoadError("policy-value model: network does not match environment features");
  }
}

double PolicyValueModel::evaluate(const GridState& state, AgentId focal, ActionMask legal,
                                  std::span<double> prior_out) const {
  thread_local std::vector<double> x;
  thread_local Mlp::Workspace ws;
  const int A = env_->n_actions();
  x.resize(env_->feature_size());
  env_->encode(state, focal, -1, x);
  net_.forward(x, ws);
  masked_softmax(std::span<const double>(ws.output).first(A), legal, prior_out.first(A));
  return ws.output[A];
}

PolicyValueModel::Losses PolicyValueModel::loss(std::span<const Sample* const> batch,
                                                std::span<double> grad) const {
  if (batch.empty()) throw ArgumentError("pv loss: empty batch");
  const int A = env_->n_actions();
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<double> x(env_->feature_size());
  std::vector<double> p(A);
  std::vector<double> d_out(A + 1);
  Mlp::Workspace ws;
  Losses total;
  for (const Sample* s : batch) {
    if (static_cast<int>(s->policy_target.size()) != A) {
      throw ContractError("pv loss: policy target has the wrong size");
    }
    double tsum = 0.0;
    for (double v : s->policy_target) tsum += v;
    if (std::abs(tsum - 1.0) > kNormalizationTolerance || !std::isfinite(s->value_target)) {
      throw ContractError("pv loss: policy target not normalized or value target not finite");
    }
    const ActionMask legal = env_->legal_actions(s->state, s->focal);
    env_->encode(s->state, s->focal, -1, x);
    net_.forward(x, ws);
    masked_softmax(std::span<const double>(ws.output).first(A), legal, p);
    for (int a = 0; a < A; ++a) {
      if (s->policy_target[a] > 0.0) total.policy -= s->policy_target[a] * std::log(p[a]);
    }
    const double err = ws.output[A] - s->value_target;
    total.value += err * err;
    if (!grad.empty()) {
      for (int a = 0; a < A; ++a) {
        d_out[a] = mask_has(legal, a) ? inv * (p[a] - s->policy_target[a]) : 0.0;
      }
      d_out[A] = inv * 2.0 * err;
      net_.backward(x, ws, d_out, grad);
    }
  }
  total.policy *= inv;
  total.value *= inv;
  return total;
}

void PolicyValueModel::save(std::ostream& out) const {
  out << "hop-policy-value v1\n";
  net_.save(out);
}

PolicyValueModel PolicyValueModel::load(std::istream& in, std::shared_ptr<const Environment> env) {
  std::string line;
  in >> std::ws;
  if (!std::getline(in, line) || line != "hop-policy-value v1") {
    throw LoadError("checkpoint: expected 'hop-policy-value v1'");
  }
  return PolicyValueModel(std::move(env), Mlp::load(in));
}

PolicyValueModel::Losses pv_train_step(PolicyValueModel& pv,
                                       std::span<const PolicyValueModel::Sample* const> batch,
                                       double learning_rate) {
  std::vector<double> grad(pv.network().parameter_count(), 0.0);
  const auto l = pv.loss(batch, grad);
  check_finite_loss(l.policy + l.value, batch.size(), pv.network().parameters(), "policy-value model");
  auto params = pv.network().parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grad[i];
  return l;
}

// ---------------------------------------------------------------------------
// Search

double puct_score(const EdgeStats& edge, double prior, int parent_visits, double c) {
  return edge.q() + c * prior * std::sqrt(static_cast<double>(parent_visits)) / (1.0 + edge.visits);
}

SearchLogWriter::SearchLogWriter(std::ostream& out) : out_(out) {
  out_ << "# hop-search-log v1\n";
  out_ << "round,iteration,depth,node,action,value\n";
}

SearchLogSink SearchLogWriter::sink() {
  return [this](const SearchLogEntry& e) {
    out_ << e.round << ',' << e.iteration << ',' << e.depth << ',' << e.node << ',' << e.action
         << ',' << format_double(e.value) << '\n';
  };
}

SearchTree::SearchTree(const Environment& env, const GridState& root, AgentId focal,
                       std::vector<int> goals, const CoplayerPolicy& om,
                       const PriorValueSource& pv, const PlannerConfig& config)
    : env_(env), focal_(focal), goals_(std::move(goals)), om_(om), pv_(pv), config_(config) {
  if (focal < 0 || focal >= env.n_agents()) throw ArgumentError("search: invalid focal agent");
  if (static_cast<int>(goals_.size()) != env.n_agents()) {
    throw ArgumentError("search: goal combination needs one entry per agent");
  }
  nodes_.reserve(static_cast<std::size_t>(config.iterations) + 1);
  make_node(root, 0);
  if (nodes_.front().terminal) throw ArgumentError("search: root is terminal for the focal agent");
}

int SearchTree::make_node(GridState state, int depth) {
  Node n;
  n.terminal = state.done || !state.agents[focal_].alive;
  n.depth = depth;
  n.visits = 1;
  const int A = env_.n_actions();
  n.edges.resize(A);
  if (!n.terminal) {
    n.legal = env_.legal_actions(state, focal_);
    n.prior.assign(A, 0.0);
    n.value = pv_.evaluate(state, focal_, n.legal, n.prior);
  }
  n.state = std::move(state);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

double SearchTree::simulate(int idx, Rng& rng, int round, int iteration, const SearchLogSink* log) {
  const int A = env_.n_actions();
  {
    Node& n = nodes_[idx];
    n.visits += 1;
    if (n.terminal) return 0.0;
    if (n.coplayers.empty()) {
      // Co-player behaviour is evaluated lazily: leaves that are never passed
      // through again do not pay for it.
      for (AgentId j = 0; j < n.state.n_agents(); ++j) {
        if (j == focal_ || !n.state.agents[j].alive) continue;
        const ActionMask legal = env_.legal_actions(n.state, j);
        std::vector<double> dist(A, 0.0);
        if (goals_[j] >= 0) {
          om_.distribution(n.state, j, goals_[j], legal, dist);
        } else {
          int k = std::popcount(legal);
          for (int a = 0; a < A; ++a) dist[a] = mask_has(legal, a) ? 1.0 / k : 0.0;
        }
        n.coplayers.push_back(j);
        n.coplayer_dists.push_back(std::move(dist));
      }
    }
  }

  Node& n = nodes_[idx];
  int parent_visits = 0;
  for (const auto& e : n.edges) parent_visits += e.stats.visits;
  int best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < A; ++a) {
    if (!mask_has(n.legal, a)) continue;
    const double s = puct_score(n.edges[a].stats, n.prior[a], parent_visits, config_.c_puct);
    if (s > best_score) {
      best_score = s;
      best = a;
    }
  }

  JointAction joint(n.state.n_agents(), kNoAction);
  joint[focal_] = best;
  for (std::size_t k = 0; k < n.coplayers.size(); ++k) {
    joint[n.coplayers[k]] = static_cast<int>(rng.categorical(n.coplayer_dists[k]));
  }
  StepResult step = env_.step(n.state, joint);
  const double reward = step.rewards[focal_];
  const std::uint64_t h = step.state.hash();
  const int depth = n.depth;

  int child = -1;
  for (const auto& c : n.edges[best].children) {
    if (c.hash == h) {
      child = c.node;
      break;
    }
  }
  double v;
  if (child >= 0) {
    v = simulate(child, rng, round, iteration, log);
  } else {
    child = make_node(std::move(step.state), depth + 1);
    nodes_[idx].edges[best].children.push_back(Child{h, child});
    v = nodes_[child].terminal ? 0.0 : nodes_[child].value;
  }
  const double g = reward + config_.gamma * v;
  EdgeStats& st = nodes_[idx].edges[best].stats;
  st.visits += 1;
  st.value_sum += g;
  if (log && *log) (*log)(SearchLogEntry{round, iteration, depth, idx, best, g});
  return g;
}

void SearchTree::iterate(Rng& rng, int round, int iteration, const SearchLogSink* log) {
  simulate(0, rng, round, iteration, log);
}

std::vector<double> SearchTree::root_q() const {
  std::vector<double> q(env_.n_actions(), 0.0);
  for (int a = 0; a < env_.n_actions(); ++a) q[a] = root().edges[a].stats.q();
  return q;
}

std::vector<int> SearchTree::root_visits() const {
  std::vector<int> v(env_.n_actions(), 0);
  for (int a = 0; a < env_.n_actions(); ++a) v[a] = root().edges[a].stats.visits;
  return v;
}

RoundResult run_round(const Environment& env, const GridState& root, AgentId focal,
                      const std::vector<int>& goals, const CoplayerPolicy& om,
                      const PriorValueSource& pv, const PlannerConfig& config, Rng& rng, int round,
                      const SearchLogSink* log) {
  if (config.iterations < 1) throw ArgumentError("run_round: iteration budget must be >= 1");
  SearchTree tree(env, root, focal, goals, om, pv, config);
  for (int i = 0; i < config.iterations; ++i) tree.iterate(rng, round, i, log);
  return RoundResult{tree.root_q(), tree.root_visits()};
}

std::vector<double> boltzmann(std::span<const double> q, double beta, ActionMask legal) {
  std::vector<double> logits(q.size());
  for (std::size_t a = 0; a < q.size(); ++a) logits[a] = beta * q[a];
  std::vector<double> p(q.size());
  masked_softmax(logits, legal, p);
  return p;
}

PlanResult plan(const Environment& env, const GridState& state, AgentId focal,
                std::span<const GoalBelief> beliefs, const CoplayerPolicy& om,
                const PriorValueSource& pv, const PlannerConfig& config, Rng& rng,
                const SearchLogSink* log) {
  if (config.rounds < 1) throw ArgumentError("plan: need at least one round");
  if (!(config.beta >= 0.0)) throw ArgumentError("plan: beta must be >= 0");
  const ActionMask legal = env.legal_actions(state, focal);
  if (legal == 0) throw ArgumentError("plan: focal agent has no legal action");
  const int A = env.n_actions();

  PlanResult result;
  result.q_avg.assign(A, 0.0);
  result.beta = config.beta;
  for (int l = 0; l < config.rounds; ++l) {
    auto goals = sample_goal_combination(beliefs, env.n_agents(), rng);
    goals[focal] = -1;
    Rng round_rng(rng.next());
    const RoundResult rr = run_round(env, state, focal, goals, om, pv, config, round_rng, l, log);
    for (int a = 0; a < A; ++a) result.q_avg[a] += rr.q[a];
    result.goal_combinations.push_back(std::move(goals));
  }
  for (double& q : result.q_avg) q /= config.rounds;
  result.policy = boltzmann(result.q_avg, config.beta, legal);
  result.action = static_cast<int>(rng.categorical(result.policy));
  return result;
}

}  // namespace hop

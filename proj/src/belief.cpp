#include "hop/belief.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "hop/errors.hpp"
#include "hop/rng.hpp"

namespace hop {

namespace {

void check_distribution(std::span<const double> p, const char* what) {
  if (p.empty()) throw ContractError(std::string(what) + ": empty distribution");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError(std::string(what) + ": probability outside [0, 1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kNormalizationTolerance) {
    throw ContractError(std::string(what) + ": probabilities sum to " + format_double(sum));
  }
}

// Normalizes in place. Returns false (leaving p untouched) if the mass is zero.
bool normalize(std::vector<double>& p) {
  const double z = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(z > 0.0)) return false;
  for (double& v : p) v /= z;
  return true;
}

}  // namespace

GoalBelief GoalBelief::uniform(AgentId observer, AgentId subject, int n_goals) {
  if (n_goals < 1) throw ArgumentError("belief needs at least one goal");
  return GoalBelief{observer, subject, std::vector<double>(n_goals, 1.0 / n_goals)};
}

void GoalBelief::validate() const { check_distribution(probs, "goal belief"); }

EpisodePrior EpisodePrior::uniform(int n_goals, double alpha) {
  if (n_goals < 1) throw ArgumentError("prior needs at least one goal");
  return EpisodePrior{std::vector<double>(n_goals, 1.0 / n_goals), alpha};
}

void EpisodePrior::validate() const {
  check_distribution(probs, "episode prior");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("horizon weight must be in [0, 1]");
}

GoalBelief intra_update(const GoalBelief& belief, std::span<const double> likelihoods,
                        const IntraUpdateOptions& options, BeliefDiagnostics* diagnostics) {
  belief.validate();
  if (likelihoods.size() != belief.probs.size()) {
    throw ArgumentError("intra_update: one likelihood per goal required");
  }
  GoalBelief out = belief;
  for (std::size_t g = 0; g < out.probs.size(); ++g) {
    out.probs[g] *= std::max(likelihoods[g], options.likelihood_floor);
  }
  if (!normalize(out.probs)) {
    if (diagnostics) ++diagnostics->degenerate_updates;
    return belief;
  }
  return out;
}

GoalBelief intra_update(const GoalBelief& belief, const Environment& env, const GridState& state,
                        int subject_action, const CoplayerPolicy& model,
                        const IntraUpdateOptions& options, BeliefDiagnostics* diagnostics) {
  const ActionMask legal = env.legal_actions(state, belief.subject);
  if (subject_action < 0 || subject_action >= env.n_actions() || !mask_has(legal, subject_action)) {
    throw ArgumentError("intra_update: observed action is not legal");
  }
  std::vector<double> lik(belief.probs.size());
  double p[kMaxActions];
  for (std::size_t g = 0; g < lik.size(); ++g) {
    model.distribution(state, belief.subject, static_cast<int>(g), legal,
                       std::span<double>(p, env.n_actions()));
    lik[g] = p[subject_action];
  }
  return intra_update(belief, lik, options, diagnostics);
}

EpisodePrior inter_update(const EpisodePrior& prior, std::optional<int> attributed) {
  prior.validate();
  if (!attributed) return prior;
  if (*attributed < 0 || *attributed >= static_cast<int>(prior.probs.size())) {
    throw ArgumentError("inter_update: attributed goal outside the support");
  }
  EpisodePrior out = prior;
  for (std::size_t g = 0; g < out.probs.size(); ++g) {
    const double indicator = static_cast<int>(g) == *attributed ? 1.0 : 0.0;
    out.probs[g] = prior.alpha * prior.probs[g] + (1.0 - prior.alpha) * indicator;
  }
  normalize(out.probs);
  return out;
}

GoalBelief MsgHierBelief::flatten() const {
  GoalBelief b{observer, subject, std::vector<double>(conditional.size() + 1, 0.0)};
  for (std::size_t s = 0; s < conditional.size(); ++s) b.probs[s] = conditional[s] * p_cooperate;
  b.probs.back() = p_lazy;
  // Guard against rounding drift so the flattened vector stays exactly normalizable.
  normalize(b.probs);
  return b;
}

void MsgHierBelief::validate() const {
  check_distribution(prior, "snowdrift prior");
  const double cs = std::accumulate(conditional.begin(), conditional.end(), 0.0);
  if (cs != 0.0) check_distribution(conditional, "snowdrift sub-goal belief");
  if (std::abs(p_cooperate + p_lazy - 1.0) > kNormalizationTolerance) {
    throw ContractError("snowdrift top-level belief not normalized");
  }
}

void msg_hier_recompute_top(MsgHierBelief& belief) {
  const int n = static_cast<int>(belief.prior.size()) - 1;
  double still = 0.0;
  for (int k = std::max(belief.removed + 1, 1); k <= n; ++k) still += belief.prior[k];
  const double lazy = belief.prior[0];
  const bool any_drift =
      std::any_of(belief.conditional.begin(), belief.conditional.end(), [](double v) { return v > 0; });
  if (!any_drift || still + lazy <= 0.0) {
    belief.p_cooperate = 0.0;
    belief.p_lazy = 1.0;
    return;
  }
  belief.p_cooperate = still / (still + lazy);
  belief.p_lazy = lazy / (still + lazy);
}

void msg_hier_sync(MsgHierBelief& belief, const GridState& state) {
  for (int s = 0; s < belief.n_drifts(); ++s) {
    if (!state.entities.at(s).alive) belief.conditional[s] = 0.0;
  }
  if (!normalize(belief.conditional)) {
    // Every remaining drift had zero mass: restart uniformly over what is left.
    int left = 0;
    for (int s = 0; s < belief.n_drifts(); ++s) left += state.entities[s].alive;
    for (int s = 0; s < belief.n_drifts(); ++s) {
      belief.conditional[s] = state.entities[s].alive ? 1.0 / left : 0.0;
    }
  }
  belief.removed = state.removal_counts.at(belief.subject);
  msg_hier_recompute_top(belief);
}

MsgHierBelief msg_hier_start(AgentId observer, AgentId subject, const EpisodePrior& prior,
                             const GridState& state) {
  prior.validate();
  const int n = static_cast<int>(prior.probs.size()) - 1;
  if (n < 1 || static_cast<int>(state.entities.size()) != n) {
    throw ArgumentError("msg_hier_start: prior size must be n_drifts + 1");
  }
  MsgHierBelief b;
  b.observer = observer;
  b.subject = subject;
  b.prior = prior.probs;
  b.conditional.assign(n, 1.0 / n);
  msg_hier_sync(b, state);
  return b;
}

MsgHierBelief msg_hier_update(const MsgHierBelief& belief, const Environment& env,
                              const GridState& state, int subject_action,
                              const CoplayerPolicy& model, const IntraUpdateOptions& options,
                              BeliefDiagnostics* diagnostics) {
  belief.validate();
  const ActionMask legal = env.legal_actions(state, belief.subject);
  if (subject_action < 0 || subject_action >= env.n_actions() || !mask_has(legal, subject_action)) {
    throw ArgumentError("msg_hier_update: observed action is not legal");
  }
  MsgHierBelief out = belief;
  double p[kMaxActions];
  bool any = false;
  for (int s = 0; s < out.n_drifts(); ++s) {
    if (!state.entities.at(s).alive || out.conditional[s] == 0.0) {
      out.conditional[s] = 0.0;
      continue;
    }
    model.distribution(state, belief.subject, s, legal, std::span<double>(p, env.n_actions()));
    out.conditional[s] *= std::max(p[subject_action], options.likelihood_floor);
    any = any || out.conditional[s] > 0.0;
  }
  if (any) {
    normalize(out.conditional);
  } else if (std::any_of(belief.conditional.begin(), belief.conditional.end(),
                         [](double v) { return v > 0; })) {
    if (diagnostics) ++diagnostics->degenerate_updates;
    out.conditional = belief.conditional;
  }
  out.removed = state.removal_counts.at(belief.subject);
  msg_hier_recompute_top(out);
  return out;
}

std::vector<int> sample_goal_combination(std::span<const GoalBelief> beliefs, int n_agents,
                                         Rng& rng) {
  std::vector<int> combo(n_agents, -1);
  for (const auto& b : beliefs) {
    b.validate();
    if (b.subject < 0 || b.subject >= n_agents) throw ArgumentError("belief subject out of range");
    combo[b.subject] = static_cast<int>(rng.categorical(b.probs));
  }
  return combo;
}

BeliefTraceWriter::BeliefTraceWriter(std::ostream& out) : out_(out) {
  out_ << "# hop-beliefs v1\n";
  out_ << "episode,t,observer,subject,goal,prob\n";
}

void BeliefTraceWriter::write(int episode, int t, const GoalBelief& belief) {
  for (std::size_t g = 0; g < belief.probs.size(); ++g) {
    out_ << episode << ',' << t << ',' << belief.observer << ',' << belief.subject << ',' << g << ','
         << format_double(belief.probs[g]) << '\n';
  }
}

}  // namespace hop

#include "hop/agents.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "hop/errors.hpp"

namespace hop {

namespace {

int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

Cell moved(Cell c, int a, int width, int height) {
  switch (a) {
    case action::kLeft: c.x = std::max(c.x - 1, 0); break;
    case action::kRight: c.x = std::min(c.x + 1, width - 1); break;
    case action::kUp: c.y = std::max(c.y - 1, 0); break;
    case action::kDown: c.y = std::min(c.y + 1, height - 1); break;
    default: break;
  }
  return c;
}

// Walk toward the nearest live entity of `kind`; interact when standing on it.
// The grid has no obstacles, so breadth-first distance is the Manhattan distance.
int seek(const GridState& state, AgentId agent, EntityKind kind) {
  const Cell me = state.agents[agent].pos;
  int target = -1;
  int best = std::numeric_limits<int>::max();
  for (int e = 0; e < static_cast<int>(state.entities.size()); ++e) {
    const Entity& ent = state.entities[e];
    if (!ent.alive || ent.kind != kind) continue;
    const int d = manhattan(me, ent.pos);
    if (d < best) {
      best = d;
      target = e;
    }
  }
  if (target < 0) return action::kIdle;
  if (best == 0) return action::kInteract;
  const Cell goal = state.entities[target].pos;
  for (int a = action::kLeft; a <= action::kDown; ++a) {
    if (manhattan(moved(me, a, state.width, state.height), goal) < best) return a;
  }
  return action::kIdle;
}

int uniform_legal(ActionMask legal, int n_actions, Rng& rng) {
  int options[kMaxActions];
  int k = 0;
  for (int a = 0; a < n_actions; ++a) {
    if (mask_has(legal, a)) options[k++] = a;
  }
  if (k == 0) throw ArgumentError("rule agent: no legal action");
  return options[rng.index(k)];
}

int parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  int out = 0;
  try {
    out = std::stoi(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError("hop." + key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError("hop." + key + ": expected a number, got '" + v + "'");
  return out;
}

}  // namespace

int rule_act(const Environment& env, RuleKind kind, AgentId agent, const GridState& state, Rng& rng) {
  const ActionMask legal = env.legal_actions(state, agent);
  if (legal == 0) throw ArgumentError("rule agent: agent has no legal action at this state");
  if (kind == RuleKind::kRandom) return uniform_legal(legal, env.n_actions(), rng);
  const bool coop = kind == RuleKind::kCooperator;
  switch (env.spec().kind) {
    case GameKind::kStagHunt:
      return seek(state, agent, coop ? EntityKind::kStag : EntityKind::kHare);
    case GameKind::kSnowdrift:
      if (coop) return seek(state, agent, EntityKind::kDrift);
      return uniform_legal(legal & ~(1U << action::kInteract), env.n_actions(), rng);
    case GameKind::kOther:
      // Matrix games: action 0 cooperates, action 1 defects.
      return coop ? 0 : std::min(1, env.n_actions() - 1);
  }
  return action::kIdle;
}

RuleAgent::RuleAgent(AgentId id, RuleKind kind, std::shared_ptr<const Environment> env,
                     std::uint64_t seed)
    : Agent(id), rule_(kind), env_(std::move(env)), rng_(seed) {}

std::string RuleAgent::kind() const {
  switch (rule_) {
    case RuleKind::kRandom: return "random";
    case RuleKind::kCooperator: return "cooperator";
    case RuleKind::kDefector: return "defector";
  }
  return "?";
}

int RuleAgent::act(const GridState& state) { return rule_act(*env_, rule_, id(), state, rng_); }

// ---------------------------------------------------------------------------

HopParams HopParams::self_play(GameKind kind) {
  HopParams p;
  p.alpha = 0.99;
  p.planner.beta = 2.0;
  p.planner.gamma = 0.95;
  p.planner.iterations = 200;
  p.update_interval = 2000;
  p.buffer_capacity = 5000;
  p.pv_learning_rate = 1e-4;
  p.om_learning_rate = 5e-4;
  if (kind == GameKind::kSnowdrift) {
    p.planner.rounds = 5;
    p.planner.c_puct = 12.0;
  } else {
    p.planner.rounds = 8;
    p.planner.c_puct = 2.0;
  }
  return p;
}

HopParams HopParams::adaptation(GameKind kind) {
  HopParams p = self_play(kind);
  p.alpha = 0.95;
  p.planner.beta = 5.0;
  p.update_interval = 200;
  p.pv_learning_rate = 5e-4;
  return p;
}

void HopParams::apply(const std::map<std::string, std::string>& overrides) {
  for (const auto& [key, v] : overrides) {
    if (key == "alpha") alpha = parse_real(key, v);
    else if (key == "beta") planner.beta = parse_real(key, v);
    else if (key == "gamma") planner.gamma = parse_real(key, v);
    else if (key == "rounds") planner.rounds = parse_int(key, v);
    else if (key == "iterations") planner.iterations = parse_int(key, v);
    else if (key == "c") planner.c_puct = parse_real(key, v);
    else if (key == "update_interval") update_interval = parse_int(key, v);
    else if (key == "buffer") buffer_capacity = static_cast<std::size_t>(parse_int(key, v));
    else if (key == "pv_lr") pv_learning_rate = parse_real(key, v);
    else if (key == "om_lr") om_learning_rate = parse_real(key, v);
    else if (key == "hidden") hidden = parse_int(key, v);
    else if (key == "om_epochs") om_epochs = parse_int(key, v);
    else if (key == "pv_epochs") pv_epochs = parse_int(key, v);
    else if (key == "batch") batch_size = parse_int(key, v);
    else if (key == "likelihood_floor") likelihood_floor = parse_real(key, v);
    else if (key == "per_coplayer_models") per_coplayer_models = parse_int(key, v) != 0;
    else throw ConfigError("unknown hop parameter 'hop." + key + "'");
  }
  validate();
}

void HopParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("hop.alpha must be in [0, 1]");
  if (!(planner.beta >= 0.0)) throw ConfigError("hop.beta must be >= 0");
  if (!(planner.gamma >= 0.0 && planner.gamma < 1.0)) throw ConfigError("hop.gamma must be in [0, 1)");
  if (planner.rounds < 1 || planner.iterations < 1) {
    throw ConfigError("hop.rounds and hop.iterations must be >= 1");
  }
  if (!(planner.c_puct >= 0.0)) throw ConfigError("hop.c must be >= 0");
  if (update_interval < 1 || buffer_capacity < 1 || hidden < 1 || batch_size < 1) {
    throw ConfigError("hop.update_interval, hop.buffer, hop.hidden and hop.batch must be >= 1");
  }
  if (om_epochs < 0 || pv_epochs < 0) throw ConfigError("hop epochs must be >= 0");
  if (!(pv_learning_rate >= 0.0) || !(om_learning_rate >= 0.0)) {
    throw ConfigError("hop learning rates must be >= 0");
  }
  if (!(likelihood_floor >= 0.0 && likelihood_floor < 1.0)) {
    throw ConfigError("hop.likelihood_floor must be in [0, 1)");
  }
}

HopAgent::HopAgent(AgentId id, std::shared_ptr<const Environment> env, HopParams params,
                   std::uint64_t seed)
    : Agent(id),
      env_(std::move(env)),
      params_(params),
      rng_(derive_seed(seed, 1)),
      pv_(env_, params.hidden, derive_seed(seed, streams::kModelInit)) {
  params_.validate();
  const int n = env_->n_agents();
  if (id < 0 || id >= n) throw ArgumentError("hop agent: id outside the seat range");
  const std::size_t n_models = params_.per_coplayer_models ? static_cast<std::size_t>(n) : 1;
  for (std::size_t k = 0; k < n_models; ++k) {
    models_.emplace_back(env_, params_.hidden, derive_seed(seed, streams::kModelInit + 1 + k));
    buffers_.emplace_back(params_.buffer_capacity);
  }
  for (AgentId j = 0; j < n; ++j) priors_.push_back(EpisodePrior::uniform(env_->spec().n_goals(j), params_.alpha));
}

bool HopAgent::hierarchical() const { return env_->spec().kind == GameKind::kSnowdrift; }

std::size_t HopAgent::model_index(AgentId subject) const {
  return params_.per_coplayer_models ? static_cast<std::size_t>(subject) : 0;
}

const ReplayBuffer& HopAgent::replay_buffer(AgentId subject) const { return buffers_.at(model_index(subject)); }

const GoalConditionedModel& HopAgent::opponent_model(AgentId subject) const {
  return models_.at(model_index(subject));
}

void HopAgent::set_episode_prior(AgentId subject, EpisodePrior prior) {
  prior.validate();
  if (prior.probs.size() != priors_.at(subject).probs.size()) {
    throw ArgumentError("hop agent: prior does not match the subject's goal set");
  }
  priors_[subject] = std::move(prior);
}

void HopAgent::begin_episode(const GridState& initial) {
  const int n = env_->n_agents();
  beliefs_.clear();
  hier_beliefs_.clear();
  for (AgentId j = 0; j < n; ++j) {
    if (hierarchical()) {
      hier_beliefs_.push_back(msg_hier_start(id(), j, priors_[j], initial));
    } else {
      beliefs_.push_back(GoalBelief{id(), j, priors_[j].probs});
    }
  }
  pending_.clear();
  decisions_.clear();
  last_plan_.reset();
  expected_t_ = initial.t;
}

GoalBelief HopAgent::belief(AgentId subject) const {
  if (hierarchical()) return hier_beliefs_.at(subject).flatten();
  return beliefs_.at(subject);
}

std::vector<GoalBelief> HopAgent::planning_beliefs(const GridState& state) const {
  std::vector<GoalBelief> out;
  for (AgentId j = 0; j < state.n_agents(); ++j) {
    if (j == id() || !state.agents[j].alive) continue;
    out.push_back(belief(j));
  }
  return out;
}

int HopAgent::act(const GridState& state) {
  if (!state.agents.at(id()).alive) throw ArgumentError("hop agent: acting while removed");
  if (state.t != expected_t_) throw SequencingError("hop agent: act() for a state it has not observed");
  const ActionMask legal = env_->legal_actions(state, id());
  if (legal == 0) throw ArgumentError("hop agent: no legal action");
  if (std::has_single_bit(legal)) {
    last_plan_.reset();
    return std::countr_zero(legal);
  }
  const auto beliefs = planning_beliefs(state);
  const GoalConditionedModel& om = models_.front();
  if (params_.per_coplayer_models) {
    // The search asks one policy for every subject; route by subject.
    struct Router final : CoplayerPolicy {
      const HopAgent* self;
      void distribution(const GridState& s, AgentId subject, int goal, ActionMask l,
                        std::span<double> out) const override {
        self->opponent_model(subject).distribution(s, subject, goal, l, out);
      }
    } router;
    router.self = this;
    last_plan_ = plan(*env_, state, id(), beliefs, router, pv_, params_.planner, rng_);
  } else {
    last_plan_ = plan(*env_, state, id(), beliefs, om, pv_, params_.planner, rng_);
  }
  decisions_.push_back(Decision{state, last_plan_->policy});
  return last_plan_->action;
}

void HopAgent::observe(const TransitionRecord& record, const GridState& next) {
  const GridState& s = record.state;
  if (s.t != expected_t_) {
    throw SequencingError("hop agent: expected a record for t=" + std::to_string(expected_t_) +
                          ", got t=" + std::to_string(s.t));
  }
  if (static_cast<int>(record.joint.size()) != env_->n_agents()) {
    throw ArgumentError("hop agent: joint action size mismatch");
  }
  const IntraUpdateOptions opts{params_.likelihood_floor};
  for (AgentId j = 0; j < s.n_agents(); ++j) {
    if (j == id() || !s.agents[j].alive || record.joint[j] == kNoAction) continue;
    const int a = record.joint[j];
    const GoalConditionedModel& om = opponent_model(j);
    if (hierarchical()) {
      hier_beliefs_[j] = msg_hier_update(hier_beliefs_[j], *env_, s, a, om, opts, &diagnostics_);
      msg_hier_sync(hier_beliefs_[j], next);
    } else {
      beliefs_[j] = intra_update(beliefs_[j], *env_, s, a, om, opts, &diagnostics_);
    }
    pending_.push_back(PendingStep{s, j, a});
  }
  expected_t_ = next.t;
}

void HopAgent::end_episode(const EpisodeTrajectory& traj) {
  const int n = env_->n_agents();
  const int first_t = traj.records.empty() ? 0 : traj.records.front().state.t;

  // Inter-episode prior update.
  for (AgentId j = 0; j < n; ++j) {
    if (j == id()) continue;
    std::optional<int> g;
    if (hierarchical()) {
      const int n_drifts = static_cast<int>(priors_[j].probs.size()) - 1;
      g = std::min(traj.final_state.removal_counts.at(j), n_drifts);
    } else if (!traj.records.empty()) {
      if (auto ach = attribute_goal(*env_, traj, j, 0)) g = ach->goal.index;
    }
    priors_[j] = inter_update(priors_[j], g);
  }

  // Goal labels for the buffered steps, then the opponent model.
  for (const PendingStep& p : pending_) {
    const int t = p.state.t - first_t;
    if (t < 0 || t >= traj.length()) continue;
    if (auto ach = attribute_goal(*env_, traj, p.subject, t)) {
      buffers_[model_index(p.subject)].push(ReplayEntry{p.state, p.subject, p.action, ach->goal.index});
    }
  }
  pending_.clear();
  for (std::size_t k = 0; k < models_.size(); ++k) {
    if (buffers_[k].full() && params_.om_epochs > 0) {
      models_[k].train_epochs(buffers_[k], params_.om_epochs, params_.batch_size,
                              params_.om_learning_rate, rng_);
      ++om_updates_;
    }
  }

  // Policy-value targets from this episode's decisions.
  for (Decision& d : decisions_) {
    const int t = d.state.t - first_t;
    if (t < 0 || t >= traj.length()) continue;
    pv_data_.push_back(PolicyValueModel::Sample{std::move(d.state), id(), std::move(d.policy),
                                                discounted_return(traj, id(), t, params_.planner.gamma)});
  }
  decisions_.clear();

  ++episodes_completed_;
  const long long steps = static_cast<long long>(episodes_completed_) * env_->spec().t_max;
  if (steps % params_.update_interval == 0) {
    if (!pv_data_.empty() && params_.pv_epochs > 0) {
      std::vector<const PolicyValueModel::Sample*> order;
      for (const auto& s : pv_data_) order.push_back(&s);
      for (int e = 0; e < params_.pv_epochs; ++e) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.index(i)]);
        for (std::size_t b = 0; b < order.size(); b += params_.batch_size) {
          const std::size_t len = std::min<std::size_t>(params_.batch_size, order.size() - b);
          pv_train_step(pv_, std::span<const PolicyValueModel::Sample* const>(order.data() + b, len),
                        params_.pv_learning_rate);
        }
      }
      ++pv_updates_;
    }
    pv_data_.clear();
  }
  expected_t_ = 0;
}

void HopAgent::save_checkpoint(std::ostream& out) const {
  out << "hop-agent v1\n";
  out << "agent " << id() << " models " << models_.size() << '\n';
  for (const auto& m : models_) m.save(out);
  pv_.save(out);
  out << "priors " << priors_.size() << '\n';
  char buf[64];
  for (std::size_t j = 0; j < priors_.size(); ++j) {
    out << j << ' ' << priors_[j].probs.size();
    for (double p : priors_[j].probs) {
      std::snprintf(buf, sizeof buf, " %a", p);
      out << buf;
    }
    out << '\n';
  }
  out << "end\n";
}

void HopAgent::load_checkpoint(std::istream& in) {
  auto expect = [&](const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) throw LoadError("hop checkpoint: expected '" + word + "'");
  };
  std::string line;
  in >> std::ws;
  if (!std::getline(in, line) || line != "hop-agent v1") {
    throw LoadError("hop checkpoint: missing 'hop-agent v1' header");
  }
  int agent = 0;
  std::size_t n_models = 0;
  expect("agent");
  if (!(in >> agent)) throw LoadError("hop checkpoint: bad agent id");
  expect("models");
  if (!(in >> n_models) || n_models != models_.size()) {
    throw LoadError("hop checkpoint: opponent model count does not match the configuration");
  }
  std::vector<GoalConditionedModel> models;
  for (std::size_t k = 0; k < n_models; ++k) models.push_back(GoalConditionedModel::load(in, env_));
  PolicyValueModel pv = PolicyValueModel::load(in, env_);
  std::size_t n_priors = 0;
  expect("priors");
  if (!(in >> n_priors) || n_priors != priors_.size()) {
    throw LoadError("hop checkpoint: prior count does not match the number of agents");
  }
  std::vector<EpisodePrior> priors = priors_;
  for (std::size_t j = 0; j < n_priors; ++j) {
    std::size_t idx = 0;
    std::size_t size = 0;
    if (!(in >> idx >> size) || idx != j || size != priors[j].probs.size()) {
      throw LoadError("hop checkpoint: prior " + std::to_string(j) + " does not match the goal set");
    }
    for (double& p : priors[j].probs) {
      std::string tok;
      if (!(in >> tok)) throw LoadError("hop checkpoint: truncated prior");
      char* end = nullptr;
      p = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) throw LoadError("hop checkpoint: bad prior value '" + tok + "'");
    }
    priors[j].alpha = params_.alpha;
    try {
      priors[j].validate();
    } catch (const ContractError& e) {
      throw LoadError(std::string("hop checkpoint: ") + e.what());
    }
  }
  expect("end");
  models_ = std::move(models);
  pv_ = std::move(pv);
  priors_ = std::move(priors);
}

std::unique_ptr<Agent> make_agent(const std::string& name, AgentId id,
                                  std::shared_ptr<const Environment> env, std::uint64_t seed,
                                  const HopParams& hop_params) {
  if (name == "hop") return std::make_unique<HopAgent>(id, std::move(env), hop_params, seed);
  if (name == "cooperator") return std::make_unique<RuleAgent>(id, RuleKind::kCooperator, std::move(env), seed);
  if (name == "defector") return std::make_unique<RuleAgent>(id, RuleKind::kDefector, std::move(env), seed);
  if (name == "random") return std::make_unique<RuleAgent>(id, RuleKind::kRandom, std::move(env), seed);
  throw ConfigError("unknown agent '" + name + "' (expected hop, cooperator, defector or random)");
}

}  // namespace hop

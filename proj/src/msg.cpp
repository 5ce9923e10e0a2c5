#include "hop/msg.hpp"

#include <algorithm>

#include "grid_util.hpp"
#include "hop/errors.hpp"
#include "hop/rng.hpp"

namespace hop {

void MsgConfig::validate() const {
  if (width < 1 || height < 1) throw ConfigError("msg: grid must be at least 1x1");
  if (n_agents < 2) throw ConfigError("msg: need at least two agents");
  if (n_drifts < 1) throw ConfigError("msg: n_drifts must be >= 1");
  if (n_drifts > 30) throw ConfigError("msg: at most 30 drifts supported");
  if (!(removal_cost > 0.0) || !(removal_reward > 0.0)) {
    throw ConfigError("msg: cost and reward must be > 0");
  }
  if (t_max < 1) throw ConfigError("msg: t_max must be >= 1");
}

namespace {

GameSpec make_spec(const MsgConfig& c) {
  c.validate();
  GameSpec s;
  s.kind = GameKind::kSnowdrift;
  s.name = "msg";
  s.n_agents = c.n_agents;
  s.action_names = {"idle", "left", "right", "up", "down", "remove"};
  s.t_max = c.t_max;
  std::vector<std::string> goals;
  for (int d = 0; d < c.n_drifts; ++d) goals.push_back("remove-drift-" + std::to_string(d));
  goals.push_back("lazy");
  s.goal_sets.assign(c.n_agents, goals);
  s.discount = c.discount;
  return s;
}

constexpr int kPlanes = 3;  // other agents, drifts, goal target

}  // namespace

MsgEnvironment::MsgEnvironment(MsgConfig config) : Environment(make_spec(config)), config_(config) {}

GridState MsgEnvironment::spawn(Rng& rng) const {
  auto cells = detail::sample_distinct_cells(config_.width, config_.height,
                                             config_.n_drifts + config_.n_agents, rng);
  GridState s;
  s.width = config_.width;
  s.height = config_.height;
  int k = 0;
  for (int i = 0; i < config_.n_drifts; ++i) s.entities.push_back({EntityKind::kDrift, cells[k++]});
  for (int i = 0; i < config_.n_agents; ++i) s.agents.push_back({cells[k++], true});
  s.removal_counts.assign(config_.n_agents, 0);
  return s;
}

StepResult MsgEnvironment::step(const GridState& state, const JointAction& joint) const {
  check_joint(state, joint);
  StepResult r{state, std::vector<double>(state.n_agents(), 0.0), false};
  GridState& s = r.state;
  const int n = s.n_agents();

  for (int i = 0; i < n; ++i) {
    if (s.agents[i].alive) {
      s.agents[i].pos = detail::apply_move(s.agents[i].pos, joint[i], s.width, s.height);
    }
  }

  // Each drift is paid out independently; a remove on an empty cell does nothing.
  for (auto& e : s.entities) {
    if (!e.alive) continue;
    std::uint32_t mask = 0;
    int k = 0;
    for (int i = 0; i < n; ++i) {
      if (s.agents[i].alive && joint[i] == action::kInteract && s.agents[i].pos == e.pos) {
        mask |= 1U << i;
        ++k;
      }
    }
    if (k == 0) continue;
    e.alive = false;
    e.taken_by = mask;
    e.taken_at = s.t;
    const double cost = config_.removal_cost / static_cast<double>(k);
    for (int i = 0; i < n; ++i) {
      if (s.agents[i].alive) r.rewards[i] += config_.removal_reward;
      if ((mask >> i) & 1U) {
        r.rewards[i] -= cost;
        s.removal_counts[i] += 1;
      }
    }
  }

  s.t += 1;
  const bool any_drift = std::any_of(s.entities.begin(), s.entities.end(),
                                     [](const Entity& e) { return e.alive; });
  s.done = !any_drift || s.t >= config_.t_max;
  r.done = s.done;
  return r;
}

std::optional<int> MsgEnvironment::goal_in_state(const GridState& state, AgentId agent) const {
  if (agent < 0 || agent >= state.n_agents()) throw ArgumentError("goal_in_state: invalid agent");
  // The goal set of drift d holds the states whose most recent removal by
  // `agent` is d; the sets are disjoint by construction.
  int best = -1;
  int best_t = -1;
  for (int d = 0; d < static_cast<int>(state.entities.size()); ++d) {
    const auto& e = state.entities[d];
    if (!e.alive && ((e.taken_by >> agent) & 1U) && e.taken_at > best_t) {
      best = d;
      best_t = e.taken_at;
    }
  }
  if (best < 0) return std::nullopt;
  return best;
}

std::optional<int> MsgEnvironment::terminal_goal(AgentId /*agent*/) const { return lazy_goal(); }

int MsgEnvironment::feature_size() const {
  detail::EgocentricPlanes planes(config_.width, config_.height);
  // planes + goal kind(2) + time + own removals + drifts left + x + y + subject one-hot
  return kPlanes * planes.plane_size() + 2 + 5 + config_.n_agents;
}

void MsgEnvironment::encode(const GridState& state, AgentId subject, int goal,
                            std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  detail::EgocentricPlanes planes(config_.width, config_.height);
  const int ps = planes.plane_size();
  const Cell me = state.agents[subject].pos;
  auto others = out.subspan(0, ps);
  auto drifts = out.subspan(ps, ps);
  auto target = out.subspan(2 * ps, ps);
  for (int j = 0; j < state.n_agents(); ++j) {
    if (j != subject && state.agents[j].alive) planes.add(others, me, state.agents[j].pos);
  }
  int left = 0;
  for (const auto& e : state.entities) {
    if (!e.alive) continue;
    planes.add(drifts, me, e.pos);
    ++left;
  }
  auto extra = out.subspan(kPlanes * ps);
  if (goal >= 0 && goal < config_.n_drifts) {
    extra[0] = 1.0;
    const auto& e = state.entities[goal];
    if (e.alive) planes.add(target, me, e.pos);
  } else if (goal == config_.n_drifts) {
    extra[1] = 1.0;
  }
  extra[2] = static_cast<double>(state.t) / config_.t_max;
  extra[3] = static_cast<double>(state.removal_counts[subject]) / config_.n_drifts;
  extra[4] = static_cast<double>(left) / config_.n_drifts;
  extra[5] = config_.width > 1 ? static_cast<double>(me.x) / (config_.width - 1) : 0.0;
  extra[6] = config_.height > 1 ? static_cast<double>(me.y) / (config_.height - 1) : 0.0;
  extra[7 + subject] = 1.0;
}

}  // namespace hop

#include "hop/msh.hpp"

#include <algorithm>

#include "grid_util.hpp"
#include "hop/errors.hpp"
#include "hop/rng.hpp"

namespace hop {

MshConfig MshConfig::four_hares_one_stag() { return MshConfig{}; }

MshConfig MshConfig::four_hares_two_stags() {
  MshConfig c;
  c.n_stags = 2;
  c.post_first_hunt_window = 5;
  return c;
}

void MshConfig::validate() const {
  if (width < 1 || height < 1) throw ConfigError("msh: grid must be at least 1x1");
  if (n_agents < 2) throw ConfigError("msh: need at least two agents");
  if (n_hares < 0) throw ConfigError("msh: n_hares must be >= 0");
  if (n_stags < 1) throw ConfigError("msh: n_stags must be >= 1");
  if (!(stag_reward > 0.0) || !(hare_reward > 0.0)) throw ConfigError("msh: rewards must be > 0");
  if (t_max < 1) throw ConfigError("msh: t_max must be >= 1");
  if (post_first_hunt_window && *post_first_hunt_window < 1) {
    throw ConfigError("msh: post-hunt window must be >= 1");
  }
}

namespace {

GameSpec make_spec(const MshConfig& c) {
  c.validate();
  GameSpec s;
  s.kind = GameKind::kStagHunt;
  s.name = c.n_stags == 1 && !c.post_first_hunt_window ? "msh-4h1s" : "msh-4h2s";
  s.n_agents = c.n_agents;
  s.action_names = {"idle", "left", "right", "up", "down", "hunt"};
  s.t_max = c.t_max;
  s.goal_sets.assign(c.n_agents, {"stag", "hare"});
  s.discount = c.discount;
  return s;
}

constexpr int kPlanes = 3;  // other agents, stags, hares

}  // namespace

MshEnvironment::MshEnvironment(MshConfig config) : Environment(make_spec(config)), config_(config) {}

GridState MshEnvironment::spawn(Rng& rng) const {
  const int total = config_.n_stags + config_.n_hares + config_.n_agents;
  auto cells = detail::sample_distinct_cells(config_.width, config_.height, total, rng);
  GridState s;
  s.width = config_.width;
  s.height = config_.height;
  int k = 0;
  for (int i = 0; i < config_.n_stags; ++i) s.entities.push_back({EntityKind::kStag, cells[k++]});
  for (int i = 0; i < config_.n_hares; ++i) s.entities.push_back({EntityKind::kHare, cells[k++]});
  for (int i = 0; i < config_.n_agents; ++i) s.agents.push_back({cells[k++], true});
  s.removal_counts.assign(config_.n_agents, 0);
  return s;
}

StepResult MshEnvironment::step(const GridState& state, const JointAction& joint) const {
  check_joint(state, joint);
  StepResult r{state, std::vector<double>(state.n_agents(), 0.0), false};
  GridState& s = r.state;
  const int n = s.n_agents();

  for (int i = 0; i < n; ++i) {
    if (s.agents[i].alive) {
      s.agents[i].pos = detail::apply_move(s.agents[i].pos, joint[i], s.width, s.height);
    }
  }

  // Resolve hunts cell by cell, in order of the lowest-index hunter on the cell.
  std::vector<bool> handled(n, false);
  bool any_success = false;
  for (int i = 0; i < n; ++i) {
    if (!s.agents[i].alive || joint[i] != action::kInteract || handled[i]) continue;
    const Cell cell = s.agents[i].pos;
    std::vector<int> hunters;
    std::uint32_t mask = 0;
    for (int j = i; j < n; ++j) {
      if (s.agents[j].alive && joint[j] == action::kInteract && s.agents[j].pos == cell) {
        hunters.push_back(j);
        handled[j] = true;
        mask |= 1U << j;
      }
    }
    auto find_prey = [&](EntityKind kind) -> Entity* {
      for (auto& e : s.entities) {
        if (e.alive && e.kind == kind && e.pos == cell) return &e;
      }
      return nullptr;
    };
    Entity* prey = nullptr;
    double value = 0.0;
    if (hunters.size() >= 2) {
      prey = find_prey(EntityKind::kStag);
      value = config_.stag_reward;
    }
    if (!prey) {
      // A stag needs two hunters; a lone hunt falls through to a hare on the same cell.
      prey = find_prey(EntityKind::kHare);
      value = config_.hare_reward;
    }
    if (!prey) continue;
    prey->alive = false;
    prey->taken_by = mask;
    prey->taken_at = s.t;
    const double share = value / static_cast<double>(hunters.size());
    for (int j : hunters) {
      r.rewards[j] += share;
      s.agents[j].alive = false;
      s.removal_counts[j] += 1;
    }
    any_success = true;
  }

  s.t += 1;
  if (any_success && !s.first_hunt_t) s.first_hunt_t = s.t;

  const bool any_agent = std::any_of(s.agents.begin(), s.agents.end(),
                                     [](const AgentSlot& a) { return a.alive; });
  const bool any_prey = std::any_of(s.entities.begin(), s.entities.end(),
                                    [](const Entity& e) { return e.alive; });
  bool done = s.t >= config_.t_max || !any_agent || !any_prey;
  if (config_.post_first_hunt_window && s.first_hunt_t &&
      s.t >= *s.first_hunt_t + *config_.post_first_hunt_window) {
    done = true;
  }
  s.done = done;
  r.done = done;
  return r;
}

std::optional<int> MshEnvironment::goal_in_state(const GridState& state, AgentId agent) const {
  if (agent < 0 || agent >= state.n_agents()) throw ArgumentError("goal_in_state: invalid agent");
  for (const auto& e : state.entities) {
    if (!e.alive && (e.taken_by >> agent) & 1U) {
      return e.kind == EntityKind::kStag ? kStagGoal : kHareGoal;
    }
  }
  return std::nullopt;
}

int MshEnvironment::feature_size() const {
  detail::EgocentricPlanes planes(config_.width, config_.height);
  // planes + goal one-hot(2) + time + hunt window + x + y + subject one-hot
  return kPlanes * planes.plane_size() + 2 + 4 + config_.n_agents;
}

void MshEnvironment::encode(const GridState& state, AgentId subject, int goal,
                            std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  detail::EgocentricPlanes planes(config_.width, config_.height);
  const int ps = planes.plane_size();
  const Cell me = state.agents[subject].pos;
  auto others = out.subspan(0, ps);
  auto stags = out.subspan(ps, ps);
  auto hares = out.subspan(2 * ps, ps);
  for (int j = 0; j < state.n_agents(); ++j) {
    if (j != subject && state.agents[j].alive) planes.add(others, me, state.agents[j].pos);
  }
  for (const auto& e : state.entities) {
    if (!e.alive) continue;
    planes.add(e.kind == EntityKind::kStag ? stags : hares, me, e.pos);
  }
  auto extra = out.subspan(kPlanes * ps);
  if (goal >= 0) extra[goal] = 1.0;
  extra[2] = static_cast<double>(state.t) / config_.t_max;
  if (config_.post_first_hunt_window && state.first_hunt_t) {
    const int left = *state.first_hunt_t + *config_.post_first_hunt_window - state.t;
    extra[3] = static_cast<double>(left) / *config_.post_first_hunt_window;
  }
  extra[4] = config_.width > 1 ? static_cast<double>(me.x) / (config_.width - 1) : 0.0;
  extra[5] = config_.height > 1 ? static_cast<double>(me.y) / (config_.height - 1) : 0.0;
  extra[6 + subject] = 1.0;
}

}  // namespace hop

#include "hop/game.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <utility>

#include "hop/errors.hpp"
#include "hop/rng.hpp"

namespace hop {

void GameSpec::validate() const {
  if (n_agents < 2) throw ConfigError("game needs at least two agents");
  if (action_names.empty()) throw ConfigError("action space is empty");
  if (n_actions() > kMaxActions) throw ConfigError("too many actions");
  if (t_max < 1) throw ConfigError("t_max must be >= 1");
  if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("discount must be in [0, 1)");
  if (static_cast<int>(goal_sets.size()) != n_agents) {
    throw ConfigError("goal_sets must have one entry per agent");
  }
  for (const auto& goals : goal_sets) {
    std::set<std::string> seen(goals.begin(), goals.end());
    if (seen.size() != goals.size()) throw ConfigError("goal identifiers must be unique per agent");
  }
}

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

}  // namespace

std::uint64_t GridState::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = mix(h, static_cast<std::uint64_t>(width));
  h = mix(h, static_cast<std::uint64_t>(height));
  h = mix(h, static_cast<std::uint64_t>(t));
  for (const auto& a : agents) {
    h = mix(h, (static_cast<std::uint64_t>(a.pos.x) << 32) ^ static_cast<std::uint32_t>(a.pos.y));
    h = mix(h, a.alive ? 1 : 2);
  }
  for (const auto& e : entities) {
    h = mix(h, static_cast<std::uint64_t>(e.kind));
    h = mix(h, (static_cast<std::uint64_t>(e.pos.x) << 32) ^ static_cast<std::uint32_t>(e.pos.y));
    h = mix(h, e.alive ? 1 : 2);
    h = mix(h, e.taken_by);
    h = mix(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(e.taken_at)));
  }
  for (int c : removal_counts) h = mix(h, static_cast<std::uint64_t>(c));
  h = mix(h, first_hunt_t ? static_cast<std::uint64_t>(*first_hunt_t) + 1 : 0);
  h = mix(h, done ? 1 : 0);
  return h;
}

Environment::Environment(GameSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

ActionMask Environment::legal_actions(const GridState& state, AgentId agent) const {
  if (agent < 0 || agent >= state.n_agents()) throw ArgumentError("legal_actions: invalid agent");
  if (!state.agents[agent].alive || state.done) return 0;
  return full_mask(n_actions());
}

void Environment::check_joint(const GridState& state, const JointAction& joint) const {
  if (state.done) throw ArgumentError("step called on a terminal state");
  if (static_cast<int>(joint.size()) != state.n_agents()) {
    throw ArgumentError("joint action size does not match agent count");
  }
  for (int i = 0; i < state.n_agents(); ++i) {
    const int a = joint[i];
    if (!state.agents[i].alive) {
      if (a != kNoAction) {
        throw ArgumentError("action given for removed agent " + std::to_string(i));
      }
      continue;
    }
    if (a < 0 || a >= n_actions() || !mask_has(legal_actions(state, i), a)) {
      throw ArgumentError("illegal action " + std::to_string(a) + " for agent " +
                          std::to_string(i));
    }
  }
}

std::string Environment::render(const GridState& state) const {
  std::vector<std::string> rows(state.height, std::string(state.width, '.'));
  for (const auto& e : state.entities) {
    if (!e.alive) continue;
    char c = e.kind == EntityKind::kStag ? 'S' : e.kind == EntityKind::kHare ? 'h' : '*';
    rows[e.pos.y][e.pos.x] = c;
  }
  for (int i = 0; i < state.n_agents(); ++i) {
    const auto& a = state.agents[i];
    if (!a.alive) continue;
    char& c = rows[a.pos.y][a.pos.x];
    c = (c >= '0' && c <= '9') || c == '+' ? '+' : static_cast<char>('0' + i % 10);
  }
  std::ostringstream os;
  os << "t=" << state.t << (state.done ? " (done)" : "") << '\n';
  for (const auto& r : rows) os << r << '\n';
  return os.str();
}

const GridState& EpisodeTrajectory::state_after(int t) const {
  if (t + 1 < length()) return records[t + 1].state;
  return final_state;
}

std::optional<Achievement> attribute_goal(const Environment& env, const EpisodeTrajectory& traj,
                                          AgentId agent, int from_t) {
  if (agent < 0 || agent >= env.n_agents()) throw ArgumentError("attribute_goal: invalid agent");
  if (from_t < 0 || from_t >= traj.length()) {
    throw ArgumentError("attribute_goal: timestep out of range");
  }
  for (int l = from_t; l < traj.length(); ++l) {
    const auto before = env.goal_in_state(traj.records[l].state, agent);
    const auto after = env.goal_in_state(traj.state_after(l), agent);
    if (after && after != before) return Achievement{GoalId{agent, *after}, l};
  }
  if (traj.final_state.done) {
    if (auto g = env.terminal_goal(agent)) {
      return Achievement{GoalId{agent, *g}, traj.length() - 1};
    }
  }
  return std::nullopt;
}

double discounted_return(const EpisodeTrajectory& traj, AgentId agent, int from_t, double gamma) {
  if (from_t < 0 || from_t >= traj.length()) {
    throw ArgumentError("discounted_return: timestep out of range");
  }
  if (agent < 0 || agent >= static_cast<int>(traj.records[from_t].rewards.size())) {
    throw ArgumentError("discounted_return: invalid agent");
  }
  // Horner form from the back: G_l = r_l + gamma * G_{l+1}.
  double g = 0.0;
  for (int l = traj.length() - 1; l >= from_t; --l) {
    g = traj.records[l].rewards[agent] + gamma * g;
  }
  return g;
}

void attribute_all(const Environment& env, EpisodeTrajectory& traj) {
  traj.attributed_goals.assign(env.n_agents(), std::nullopt);
  if (traj.length() == 0) return;
  for (int i = 0; i < env.n_agents(); ++i) traj.attributed_goals[i] = attribute_goal(env, traj, i, 0);
}

double exact_sum(std::span<const double> values) {
  std::vector<double> partials;
  for (double x : values) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;
  std::size_t n = partials.size() - 1;
  double hi = partials[n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  // Round half-even when the remaining partials push the tail past the midpoint.
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_hash(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 16);
}

TrajectoryLogWriter::TrajectoryLogWriter(std::ostream& out,
                                         const std::map<std::string, std::string>& header)
    : out_(out) {
  out_ << "# hop-trajectory v1\n#";
  for (const auto& [k, v] : header) out_ << ' ' << k << '=' << v;
  out_ << '\n';
}

void TrajectoryLogWriter::write(const EpisodeTrajectory& traj) {
  out_ << "E," << traj.episode << ',' << traj.seed << '\n';
  for (int t = 0; t < traj.length(); ++t) {
    const auto& rec = traj.records[t];
    out_ << "R," << traj.episode << ',' << t << ',' << format_hash(rec.state.hash()) << ',';
    for (std::size_t i = 0; i < rec.joint.size(); ++i) out_ << (i ? " " : "") << rec.joint[i];
    out_ << ',';
    for (std::size_t i = 0; i < rec.rewards.size(); ++i) {
      out_ << (i ? " " : "") << format_double(rec.rewards[i]);
    }
    out_ << '\n';
  }
  out_ << "F," << traj.episode << ',' << traj.length() << ',' << format_hash(traj.final_state.hash())
       << '\n';
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T parse_number(const std::string& s, int base = 10) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw LoadError("trajectory log: bad number '" + s + "'");
  }
  return v;
}

double parse_double(const std::string& s) {
  double v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw LoadError("trajectory log: bad reward '" + s + "'");
  }
  return v;
}

}  // namespace

TrajectoryLog read_trajectory_log(std::istream& in) {
  TrajectoryLog log;
  std::string line;
  if (!std::getline(in, line) || line != "# hop-trajectory v1") {
    throw LoadError("not a trajectory log (missing '# hop-trajectory v1' header)");
  }
  if (!std::getline(in, line) || line.empty() || line[0] != '#') {
    throw LoadError("trajectory log: missing environment header line");
  }
  {
    std::istringstream hs(line.substr(1));
    std::string kv;
    while (hs >> kv) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw LoadError("trajectory log: bad header entry " + kv);
      log.header[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
  }
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto f = split(line, ',');
    if (f[0] == "E" && f.size() == 3) {
      LoggedEpisode ep;
      ep.episode = parse_number<int>(f[1]);
      ep.seed = parse_number<std::uint64_t>(f[2]);
      log.episodes.push_back(std::move(ep));
    } else if (f[0] == "R" && f.size() == 6) {
      if (log.episodes.empty() || log.episodes.back().episode != parse_number<int>(f[1])) {
        throw LoadError("trajectory log: record outside its episode block");
      }
      LoggedStep st;
      st.t = parse_number<int>(f[2]);
      st.state_hash = parse_number<std::uint64_t>(f[3], 16);
      for (const auto& a : split(f[4], ' ')) st.joint.push_back(parse_number<int>(a));
      for (const auto& r : split(f[5], ' ')) st.rewards.push_back(parse_double(r));
      log.episodes.back().steps.push_back(std::move(st));
    } else if (f[0] == "F" && f.size() == 4) {
      if (log.episodes.empty()) throw LoadError("trajectory log: F line before E line");
      log.episodes.back().final_hash = parse_number<std::uint64_t>(f[3], 16);
    } else {
      throw LoadError("trajectory log: malformed line '" + line + "'");
    }
  }
  return log;
}

}  // namespace hop

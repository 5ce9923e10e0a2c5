#include "hop/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "hop/belief.hpp"
#include "hop/errors.hpp"
#include "hop/msg.hpp"
#include "hop/msh.hpp"
#include "hop/rng.hpp"

namespace hop {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

void parse_grid(const std::string& v, int& width, int& height) {
  const auto x = v.find('x');
  bool ok = x != std::string::npos;
  if (ok) {
    try {
      std::size_t a = 0;
      std::size_t b = 0;
      width = std::stoi(v.substr(0, x), &a);
      height = std::stoi(v.substr(x + 1), &b);
      ok = a == x && b == v.size() - x - 1;
    } catch (const std::exception&) {
      ok = false;
    }
  }
  if (!ok || width < 1 || height < 1) throw ConfigError("grid: expected WxH, got '" + v + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

Config Config::parse(std::istream& in, const std::string& source) {
  Config c;
  c.source_ = source;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    c.values_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in, path);
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(it->second, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != it->second.size()) {
    throw ConfigError(source_ + ": " + key + ": expected an integer, got '" + it->second + "'");
  }
  return v;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    if (!it->second.empty() && it->second[0] != '-') v = std::stoull(it->second, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != it->second.size()) {
    throw ConfigError(source_ + ": " + key + ": expected an unsigned integer, got '" + it->second + "'");
  }
  return v;
}

double Config::get_real(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(it->second, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != it->second.size()) {
    throw ConfigError(source_ + ": " + key + ": expected a number, got '" + it->second + "'");
  }
  return v;
}

ExperimentConfig ExperimentConfig::from(const Config& config) {
  static const char* kKeys[] = {"env",     "variant", "grid",       "phase",  "agents",
                                "steps",   "eval_steps", "samples", "seed",   "checkpoint",
                                "beliefs", "trajectories", "matrix_eps"};
  ExperimentConfig e;
  for (const auto& [key, value] : config.values()) {
    if (key.rfind("hop.", 0) == 0) {
      e.hop_overrides[key.substr(4)] = value;
      continue;
    }
    bool known = false;
    for (const char* k : kKeys) known = known || key == k;
    if (!known) throw ConfigError(config.source() + ": unknown key '" + key + "'");
  }

  e.env = config.get("env", "msh");
  if (e.env != "msh" && e.env != "msg") throw ConfigError("env: expected msh or msg, got '" + e.env + "'");
  e.variant = config.get("variant", "4h1s");
  if (e.variant != "4h1s" && e.variant != "4h2s") {
    throw ConfigError("variant: expected 4h1s or 4h2s, got '" + e.variant + "'");
  }
  if (config.has("grid")) parse_grid(config.get("grid", ""), e.width, e.height);

  const std::string phase = config.get("phase", "selfplay");
  if (phase == "selfplay") e.phase = Phase::kSelfPlay;
  else if (phase == "adapt") e.phase = Phase::kAdapt;
  else throw ConfigError("phase: expected selfplay or adapt, got '" + phase + "'");

  const std::string fallback_agents =
      e.phase == Phase::kSelfPlay ? "hop,hop,hop,hop" : "hop,defector,defector,defector";
  e.agents = split(config.get("agents", fallback_agents), ',');
  if (e.agents.size() != 4) throw ConfigError("agents: expected 4 comma-separated seats");
  for (const auto& a : e.agents) {
    if (a != "hop" && a != "cooperator" && a != "defector" && a != "random") {
      throw ConfigError("agents: unknown agent '" + a + "'");
    }
  }

  e.steps = config.get_int("steps", e.phase == Phase::kSelfPlay ? 60000 : 2400);
  e.eval_steps = config.get_int("eval_steps", 600);
  e.samples = static_cast<int>(config.get_int("samples", 2000));
  if (e.steps < 0 || e.eval_steps < 0 || e.samples < 1) {
    throw ConfigError("steps and eval_steps must be >= 0, samples >= 1");
  }
  e.seed = config.get_u64("seed", 0);
  e.checkpoint = config.get("checkpoint", "");

  const std::string beliefs =
      config.get("beliefs", e.phase == Phase::kSelfPlay ? "episode" : "step");
  if (beliefs == "off") e.beliefs = BeliefDetail::kOff;
  else if (beliefs == "episode") e.beliefs = BeliefDetail::kEpisode;
  else if (beliefs == "step") e.beliefs = BeliefDetail::kStep;
  else throw ConfigError("beliefs: expected off, episode or step, got '" + beliefs + "'");
  e.log_trajectories = config.get_int("trajectories", 1) != 0;

  if (config.has("matrix_eps")) {
    e.matrix_eps.clear();
    for (const auto& v : split(config.get("matrix_eps", ""), ',')) {
      Config one;
      one.set("matrix_eps", v);
      e.matrix_eps.push_back(one.get_real("matrix_eps", 0.0));
    }
  }
  e.hop_params();  // validates the overrides
  return e;
}

GameKind ExperimentConfig::game_kind() const {
  return env == "msg" ? GameKind::kSnowdrift : GameKind::kStagHunt;
}

HopParams ExperimentConfig::hop_params() const {
  HopParams p = phase == Phase::kSelfPlay ? HopParams::self_play(game_kind())
                                          : HopParams::adaptation(game_kind());
  p.apply(hop_overrides);
  return p;
}

std::map<std::string, std::string> ExperimentConfig::describe() const {
  std::map<std::string, std::string> d;
  d["env"] = env;
  if (env == "msh") d["variant"] = variant;
  d["grid"] = std::to_string(width) + "x" + std::to_string(height);
  d["seed"] = std::to_string(seed);
  std::string seats;
  for (std::size_t i = 0; i < agents.size(); ++i) seats += (i ? "," : "") + agents[i];
  d["agents"] = seats;
  return d;
}

std::shared_ptr<const Environment> make_environment(const ExperimentConfig& config) {
  if (config.env == "msg") {
    MsgConfig c;
    c.width = config.width;
    c.height = config.height;
    return std::make_shared<MsgEnvironment>(c);
  }
  MshConfig c = config.variant == "4h2s" ? MshConfig::four_hares_two_stags()
                                         : MshConfig::four_hares_one_stag();
  c.width = config.width;
  c.height = config.height;
  return std::make_shared<MshEnvironment>(c);
}

std::shared_ptr<const Environment> make_environment(const std::map<std::string, std::string>& header) {
  Config c;
  for (const char* k : {"env", "variant", "grid"}) {
    auto it = header.find(k);
    if (it != header.end()) c.set(k, it->second);
  }
  return make_environment(ExperimentConfig::from(c));
}

std::vector<std::unique_ptr<Agent>> make_seats(const ExperimentConfig& config,
                                               std::shared_ptr<const Environment> env) {
  if (static_cast<int>(config.agents.size()) != env->n_agents()) {
    throw ConfigError("agents: need one entry per seat");
  }
  const HopParams params = config.hop_params();
  std::vector<std::unique_ptr<Agent>> seats;
  for (int s = 0; s < env->n_agents(); ++s) {
    seats.push_back(make_agent(config.agents[s], s, env, derive_seed(config.seed, streams::kSeat + s), params));
  }
  return seats;
}

std::uint64_t episode_seed(std::uint64_t master, int episode) {
  return derive_seed(master, streams::kEpisode + static_cast<std::uint64_t>(episode));
}

// ---------------------------------------------------------------------------
// Episodes

MetricsWriter::MetricsWriter(std::ostream& out, int n_agents) : out_(out) {
  out_ << "# hop-metrics v1\n";
  out_ << "episode,t,step";
  for (const char* col : {"action_", "reward_", "cumulative_"}) {
    for (int i = 0; i < n_agents; ++i) out_ << ',' << col << i;
  }
  out_ << ",consumed,done\n";
}

void MetricsWriter::write(int episode, int t, long long step, const JointAction& joint,
                          const std::vector<double>& rewards, const std::vector<double>& cumulative,
                          int consumed, bool done) {
  out_ << episode << ',' << t << ',' << step;
  for (int a : joint) out_ << ',' << a;
  for (double r : rewards) out_ << ',' << format_double(r);
  for (double c : cumulative) out_ << ',' << format_double(c);
  out_ << ',' << consumed << ',' << (done ? 1 : 0) << '\n';
}

namespace {

void check_seats(const Environment& env, const std::vector<std::unique_ptr<Agent>>& seats) {
  if (static_cast<int>(seats.size()) != env.n_agents()) throw ArgumentError("one agent per seat required");
  for (int i = 0; i < env.n_agents(); ++i) {
    if (!seats[i] || seats[i]->id() != i) throw ArgumentError("seat " + std::to_string(i) + " holds the wrong agent");
  }
}

void write_beliefs(BeliefTraceWriter& w, int episode, int t, const GridState& state,
                   const std::vector<std::unique_ptr<Agent>>& seats) {
  for (const auto& seat : seats) {
    const auto* hop = dynamic_cast<const HopAgent*>(seat.get());
    if (!hop) continue;
    for (AgentId j = 0; j < state.n_agents(); ++j) {
      if (j != hop->id()) w.write(episode, t, hop->belief(j));
    }
  }
}

int consumed_between(const GridState& before, const GridState& after) {
  int n = 0;
  for (std::size_t e = 0; e < before.entities.size(); ++e) {
    n += before.entities[e].alive && !after.entities[e].alive;
  }
  return n;
}

}  // namespace

EpisodeTrajectory play_episode(const Environment& env, std::vector<std::unique_ptr<Agent>>& seats,
                               int episode, std::uint64_t spawn_seed, int max_steps) {
  check_seats(env, seats);
  Rng spawn_rng(spawn_seed);
  GridState state = env.spawn(spawn_rng);
  for (auto& seat : seats) seat->begin_episode(state);
  EpisodeTrajectory traj;
  traj.episode = episode;
  traj.seed = spawn_seed;
  while (!state.done && (max_steps < 0 || traj.length() < max_steps)) {
    JointAction joint(env.n_agents(), kNoAction);
    for (int i = 0; i < env.n_agents(); ++i) {
      if (state.agents[i].alive) joint[i] = seats[i]->act(state);
    }
    StepResult sr = env.step(state, joint);
    TransitionRecord rec{std::move(state), std::move(joint), std::move(sr.rewards)};
    for (auto& seat : seats) seat->observe(rec, sr.state);
    traj.records.push_back(std::move(rec));
    state = std::move(sr.state);
  }
  traj.final_state = std::move(state);
  attribute_all(env, traj);
  for (auto& seat : seats) seat->end_episode(traj);
  return traj;
}

RunResult run_episodes(const Environment& env, std::vector<std::unique_ptr<Agent>>& seats,
                       long long steps, std::uint64_t seed, const RunOptions& options) {
  check_seats(env, seats);
  const int n = env.n_agents();
  std::optional<MetricsWriter> metrics;
  std::optional<BeliefTraceWriter> beliefs;
  std::optional<TrajectoryLogWriter> trajectories;
  if (options.metrics) metrics.emplace(*options.metrics, n);
  if (options.beliefs && options.belief_detail != BeliefDetail::kOff) beliefs.emplace(*options.beliefs);
  if (options.trajectories) trajectories.emplace(*options.trajectories, options.log_header);

  RunResult result;
  std::vector<double> cumulative(n, 0.0);
  for (int episode = 0; result.steps < steps; ++episode) {
    const std::uint64_t spawn_seed = episode_seed(seed, episode);
    Rng spawn_rng(spawn_seed);
    GridState state = env.spawn(spawn_rng);
    for (auto& seat : seats) seat->begin_episode(state);
    if (options.on_episode_start) options.on_episode_start(episode, seats);

    EpisodeTrajectory traj;
    traj.episode = episode;
    traj.seed = spawn_seed;
    EpisodeSummary summary;
    summary.episode = episode;
    summary.first_step = result.steps;
    summary.returns.assign(n, 0.0);
    std::vector<double> episode_rewards;
    while (!state.done && result.steps < steps) {
      if (beliefs && (traj.length() == 0 || options.belief_detail == BeliefDetail::kStep)) {
        write_beliefs(*beliefs, episode, state.t, state, seats);
      }
      JointAction joint(n, kNoAction);
      for (int i = 0; i < n; ++i) {
        if (state.agents[i].alive) joint[i] = seats[i]->act(state);
      }
      StepResult sr = env.step(state, joint);
      TransitionRecord rec{std::move(state), std::move(joint), std::move(sr.rewards)};
      for (auto& seat : seats) seat->observe(rec, sr.state);
      for (int i = 0; i < n; ++i) {
        cumulative[i] += rec.rewards[i];
        summary.returns[i] += rec.rewards[i];
        episode_rewards.push_back(rec.rewards[i]);
      }
      if (metrics) {
        metrics->write(episode, rec.state.t, result.steps, rec.joint, rec.rewards, cumulative,
                       consumed_between(rec.state, sr.state), sr.state.done);
      }
      result.step_rewards.push_back(rec.rewards);
      ++result.steps;
      traj.records.push_back(std::move(rec));
      state = std::move(sr.state);
    }
    traj.final_state = std::move(state);
    summary.length = traj.length();
    summary.group_total = exact_sum(episode_rewards);
    summary.finished = traj.final_state.done;
    attribute_all(env, traj);
    for (auto& seat : seats) seat->end_episode(traj);
    if (trajectories) trajectories->write(traj);
    result.episodes.push_back(std::move(summary));
  }
  return result;
}

RunResult run_selfplay(const ExperimentConfig& config, const RunOptions& options,
                       std::vector<std::unique_ptr<Agent>>* seats_out) {
  auto env = make_environment(config);
  auto seats = make_seats(config, env);
  RunResult r = run_episodes(*env, seats, config.steps, config.seed, options);
  if (seats_out) *seats_out = std::move(seats);
  return r;
}

AdaptationResult run_adaptation(const ExperimentConfig& config, std::istream* checkpoint,
                                const RunOptions& options,
                                std::vector<std::unique_ptr<Agent>>* seats_out) {
  auto env = make_environment(config);
  auto seats = make_seats(config, env);
  auto* focal = dynamic_cast<HopAgent*>(seats.front().get());
  if (!focal) throw ConfigError("adapt: seat 0 must be a hop agent");
  for (std::size_t s = 1; s < seats.size(); ++s) {
    if (!dynamic_cast<RuleAgent*>(seats[s].get())) {
      throw ConfigError("adapt: co-players must be rule agents (cooperator, defector or random)");
    }
  }
  if (checkpoint) focal->load_checkpoint(*checkpoint);
  for (AgentId j = 0; j < env->n_agents(); ++j) {
    focal->set_episode_prior(j, EpisodePrior::uniform(env->spec().n_goals(j), focal->params().alpha));
  }

  AdaptationResult out;
  out.run = run_episodes(*env, seats, config.steps, config.seed, options);
  const long long window = std::min(config.eval_steps, out.run.steps);
  const long long start = out.run.steps - window;
  if (window > 0) {
    double sum = 0.0;
    for (long long s = start; s < out.run.steps; ++s) sum += out.run.step_rewards[s][0];
    out.final_window_step_mean = sum / static_cast<double>(window);
    double ep_sum = 0.0;
    for (const auto& e : out.run.episodes) {
      if (e.first_step >= start) {
        ep_sum += e.returns[0];
        ++out.final_window_episodes;
      }
    }
    if (out.final_window_episodes > 0) out.final_window_episode_mean = ep_sum / out.final_window_episodes;
  }
  if (seats_out) *seats_out = std::move(seats);
  return out;
}

// ---------------------------------------------------------------------------
// Schelling diagrams

std::vector<SchellingRow> estimate_schelling(const Environment& env, int samples, std::uint64_t seed) {
  if (samples < 2) throw ArgumentError("schelling: need at least 2 samples per point");
  if (env.spec().kind == GameKind::kOther) throw ArgumentError("schelling: grid games only");
  auto shared = std::shared_ptr<const Environment>(&env, [](const Environment*) {});
  const int n = env.n_agents();
  std::vector<SchellingRow> rows;
  for (int k = 0; k < n; ++k) {
    double sums[2] = {0, 0};
    double sq[2] = {0, 0};
    const std::uint64_t point_seed = derive_seed(seed, streams::kSchelling + k);
    for (int s = 0; s < samples; ++s) {
      const std::uint64_t spawn_seed = derive_seed(point_seed, s);
      for (int f = 0; f < 2; ++f) {
        std::vector<std::unique_ptr<Agent>> seats;
        seats.push_back(std::make_unique<RuleAgent>(0, f == 0 ? RuleKind::kCooperator : RuleKind::kDefector,
                                                    shared, derive_seed(spawn_seed, 1)));
        for (int j = 1; j < n; ++j) {
          seats.push_back(std::make_unique<RuleAgent>(j, j <= k ? RuleKind::kCooperator : RuleKind::kDefector,
                                                      shared, derive_seed(spawn_seed, j + 1)));
        }
        const EpisodeTrajectory traj = play_episode(env, seats, s, spawn_seed);
        double ret = 0.0;
        for (const auto& rec : traj.records) ret += rec.rewards[0];
        sums[f] += ret;
        sq[f] += ret * ret;
      }
    }
    SchellingRow row;
    row.k = k;
    double mean[2];
    double se[2];
    for (int f = 0; f < 2; ++f) {
      mean[f] = sums[f] / samples;
      const double var = std::max(0.0, (sq[f] - samples * mean[f] * mean[f]) / (samples - 1));
      se[f] = std::sqrt(var / samples);
    }
    row.coop_mean = mean[0];
    row.coop_se = se[0];
    row.defect_mean = mean[1];
    row.defect_se = se[1];
    rows.push_back(row);
  }
  return rows;
}

void write_schelling_csv(std::ostream& out, const std::vector<SchellingRow>& rows) {
  out << "# hop-schelling v1\n";
  out << "k,coop_mean,coop_se,defect_mean,defect_se\n";
  for (const auto& r : rows) {
    out << r.k << ',' << format_double(r.coop_mean) << ',' << format_double(r.coop_se) << ','
        << format_double(r.defect_mean) << ',' << format_double(r.defect_se) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Matrix games

namespace {

GameSpec matrix_spec() {
  GameSpec s;
  s.kind = GameKind::kOther;
  s.name = "matrix";
  s.n_agents = 2;
  s.action_names = {"cooperate", "defect"};
  s.t_max = 1;
  s.goal_sets.assign(2, {"cooperate", "defect"});
  s.discount = 0.95;
  return s;
}

}  // namespace

MatrixGameEnvironment::MatrixGameEnvironment(Payoffs payoffs)
    : Environment(matrix_spec()), payoffs_(payoffs) {}

GridState MatrixGameEnvironment::spawn(Rng& /*rng*/) const {
  GridState s;
  s.width = 1;
  s.height = 1;
  s.agents.assign(2, AgentSlot{});
  s.removal_counts.assign(2, -1);
  return s;
}

StepResult MatrixGameEnvironment::step(const GridState& state, const JointAction& joint) const {
  check_joint(state, joint);
  StepResult r{state, std::vector<double>(2, 0.0), true};
  const Payoffs& m = payoffs_;
  auto pay = [&](int mine, int theirs) {
    if (mine == 0) return theirs == 0 ? m.R : m.S;
    return theirs == 0 ? m.T : m.P;
  };
  r.rewards[0] = pay(joint[0], joint[1]);
  r.rewards[1] = pay(joint[1], joint[0]);
  r.state.removal_counts = {joint[0], joint[1]};
  r.state.t += 1;
  r.state.done = true;
  return r;
}

std::optional<int> MatrixGameEnvironment::goal_in_state(const GridState& state, AgentId agent) const {
  const int a = state.removal_counts.at(agent);
  if (a < 0) return std::nullopt;
  return a;
}

int MatrixGameEnvironment::feature_size() const { return 2 + 2; }

void MatrixGameEnvironment::encode(const GridState& /*state*/, AgentId subject, int goal,
                                   std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  if (goal >= 0) out[goal] = 1.0;
  out[2 + subject] = 1.0;
}

void MatrixGoalPolicy::distribution(const GridState& /*state*/, AgentId /*subject*/, int goal,
                                    ActionMask legal, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  if (goal < 0 || goal >= static_cast<int>(out.size()) || !mask_has(legal, goal)) {
    throw ArgumentError("matrix policy: goal action is not legal");
  }
  out[goal] = 1.0;
}

double matrix_q_coop(const Payoffs& m, double q) { return q * m.R + (1.0 - q) * m.S; }
double matrix_q_defect(const Payoffs& m, double q) { return q * m.T + (1.0 - q) * m.P; }

MatrixVerdict check_matrix_point(const MatrixPoint& point) {
  MatrixVerdict v;
  v.point = point;
  const Payoffs& m = point.payoffs;
  const double p = point.p;
  const double q = p + point.eps;
  v.q_coop_true = matrix_q_coop(m, p);
  v.q_defect_true = matrix_q_defect(m, p);
  v.q_coop_sampled = matrix_q_coop(m, q);
  v.q_defect_sampled = matrix_q_defect(m, q);
  const double denom = p * (m.R - m.T) + (1.0 - p) * (m.S - m.P);
  if (denom == 0.0 || q < 0.0 || q > 1.0 || v.q_coop_true == v.q_defect_true ||
      v.q_coop_sampled == v.q_defect_sampled) {
    v.skipped = true;
    return v;
  }
  v.agree = (v.q_coop_true > v.q_defect_true) == (v.q_coop_sampled > v.q_defect_sampled);
  v.lhs = (m.T + m.S - m.R - m.P) / denom * point.eps;
  v.inequality = v.lhs < 1.0;
  v.consistent = v.inequality == v.agree;
  return v;
}

std::vector<MatrixVerdict> verify_matrix_condition(const std::vector<MatrixPoint>& points) {
  std::vector<MatrixVerdict> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(check_matrix_point(p));
  return out;
}

std::vector<MatrixPoint> default_matrix_grid(const std::vector<double>& eps_values) {
  const double levels[] = {-1.0, 0.0, 1.0, 5.0, 10.0};
  std::vector<MatrixPoint> out;
  for (double eps : eps_values) {
    for (double R : levels)
      for (double S : levels)
        for (double T : levels)
          for (double P : levels)
            for (int i = 1; i <= 16; ++i) out.push_back(MatrixPoint{Payoffs{R, S, T, P}, i / 17.0, eps});
  }
  return out;
}

std::optional<double> matrix_flip_eps(const Payoffs& m, double p) {
  // Q_coop - Q_defect at p + eps is  D - eps * (T + S - R - P).
  const double k = m.T + m.S - m.R - m.P;
  if (k == 0.0) return std::nullopt;
  const double d = p * (m.R - m.T) + (1.0 - p) * (m.S - m.P);
  return d / k;
}

std::vector<double> planner_matrix_q(const MatrixGameEnvironment& env, double q,
                                     const PlannerConfig& config, std::uint64_t seed) {
  const MatrixGoalPolicy om;
  const UniformPriorValue pv;
  Rng rng(seed);
  Rng spawn_rng(seed);
  const GridState root = env.spawn(spawn_rng);
  std::vector<double> out(env.n_actions(), 0.0);
  const double weight[2] = {q, 1.0 - q};
  for (int g = 0; g < 2; ++g) {
    const RoundResult rr = run_round(env, root, 0, {-1, g}, om, pv, config, rng, g);
    for (int a = 0; a < env.n_actions(); ++a) {
      if (rr.visits[a] == 0) throw ArgumentError("planner_matrix_q: budget too small to visit every action");
      out[a] += weight[g] * rr.q[a];
    }
  }
  return out;
}

double simulated_flip_eps(const MatrixGameEnvironment& env, double p, double lo, double hi,
                          const PlannerConfig& config, std::uint64_t seed, double tolerance) {
  auto gap = [&](double eps) {
    const auto q = planner_matrix_q(env, p + eps, config, seed);
    return q[0] - q[1];
  };
  double g_lo = gap(lo);
  const double g_hi = gap(hi);
  if ((g_lo > 0) == (g_hi > 0)) throw ArgumentError("simulated_flip_eps: no sign change in bracket");
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double g = gap(mid);
    if ((g > 0) == (g_lo > 0)) {
      lo = mid;
      g_lo = g;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

void write_matrix_report(std::ostream& out, const std::vector<MatrixVerdict>& verdicts) {
  out << "# hop-matrix-report v1\n";
  out << "R,S,T,P,p,eps,q_coop_true,q_defect_true,q_coop_sampled,q_defect_sampled,skipped,agree,"
         "lhs,inequality,consistent\n";
  for (const auto& v : verdicts) {
    const auto& m = v.point.payoffs;
    out << format_double(m.R) << ',' << format_double(m.S) << ',' << format_double(m.T) << ','
        << format_double(m.P) << ',' << format_double(v.point.p) << ',' << format_double(v.point.eps)
        << ',' << format_double(v.q_coop_true) << ',' << format_double(v.q_defect_true) << ','
        << format_double(v.q_coop_sampled) << ',' << format_double(v.q_defect_sampled) << ','
        << v.skipped << ',' << v.agree << ',' << format_double(v.lhs) << ',' << v.inequality << ','
        << v.consistent << '\n';
  }
}

// ---------------------------------------------------------------------------
// Replay

ReplayReport replay_log(const TrajectoryLog& log) {
  auto env = make_environment(log.header);
  ReplayReport report;
  auto mismatch = [&](const LoggedEpisode& e, int t, const std::string& what) {
    report.mismatches.push_back("episode " + std::to_string(e.episode) + " t=" + std::to_string(t) + ": " + what);
  };
  for (const auto& e : log.episodes) {
    ++report.episodes;
    Rng rng(e.seed);
    GridState s = env->spawn(rng);
    bool ok = true;
    for (const auto& step : e.steps) {
      if (step.t != s.t) {
        mismatch(e, step.t, "timestep out of sequence");
        ok = false;
        break;
      }
      if (step.state_hash != s.hash()) {
        mismatch(e, step.t, "state hash " + format_hash(s.hash()) + " != logged " + format_hash(step.state_hash));
        ok = false;
        break;
      }
      StepResult r;
      try {
        r = env->step(s, step.joint);
      } catch (const std::exception& ex) {
        mismatch(e, step.t, ex.what());
        ok = false;
        break;
      }
      if (r.rewards.size() != step.rewards.size() ||
          std::memcmp(r.rewards.data(), step.rewards.data(), r.rewards.size() * sizeof(double)) != 0) {
        mismatch(e, step.t, "rewards differ from the log");
        ok = false;
        break;
      }
      s = std::move(r.state);
      ++report.steps;
    }
    if (ok && s.hash() != e.final_hash) mismatch(e, s.t, "final state hash differs");
  }
  return report;
}

}  // namespace hop

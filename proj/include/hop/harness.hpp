#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hop/agents.hpp"
#include "hop/game.hpp"
#include "hop/planner.hpp"

namespace hop {

// "key = value" lines; '#' starts a comment, blank lines are ignored.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& source = "<config>");
  // ConfigError naming the path when the file cannot be opened.
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_real(const std::string& key, double fallback) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }
  const std::string& source() const { return source_; }

 private:
  std::map<std::string, std::string> values_;
  std::string source_;
};

enum class Phase { kSelfPlay, kAdapt };
enum class BeliefDetail { kOff, kEpisode, kStep };

struct ExperimentConfig {
  std::string env = "msh";      // msh | msg
  std::string variant = "4h1s"; // msh only: 4h1s | 4h2s
  int width = 8;
  int height = 8;
  Phase phase = Phase::kSelfPlay;
  std::vector<std::string> agents;  // one name per seat
  long long steps = 60000;
  long long eval_steps = 600;
  int samples = 2000;  // Schelling samples per point
  std::uint64_t seed = 0;
  std::string checkpoint;  // adapt: focal checkpoint to load
  BeliefDetail beliefs = BeliefDetail::kEpisode;
  bool log_trajectories = true;
  std::vector<double> matrix_eps{0.0, 0.01, 0.05, 0.1, 0.2};
  std::map<std::string, std::string> hop_overrides;  // "hop.<key>" entries, prefix stripped

  // Every key is checked; unknown keys and bad values raise ConfigError.
  static ExperimentConfig from(const Config& config);
  GameKind game_kind() const;
  HopParams hop_params() const;
  // key=value description written into trajectory log headers.
  std::map<std::string, std::string> describe() const;
};

std::shared_ptr<const Environment> make_environment(const ExperimentConfig& config);
// Rebuilds the environment from a trajectory log header.
std::shared_ptr<const Environment> make_environment(const std::map<std::string, std::string>& header);

// Seat s gets seed derive_seed(master, streams::kSeat + s).
std::vector<std::unique_ptr<Agent>> make_seats(const ExperimentConfig& config,
                                               std::shared_ptr<const Environment> env);

// Spawn state of episode k: env.spawn(Rng(episode_seed(master, k))).
std::uint64_t episode_seed(std::uint64_t master, int episode);

struct EpisodeSummary {
  int episode = 0;
  long long first_step = 0;
  int length = 0;
  bool finished = false;  // false when the step budget cut the episode
  std::vector<double> returns;
  double group_total = 0.0;  // exact_sum of every reward in the episode
};

struct RunResult {
  long long steps = 0;
  std::vector<EpisodeSummary> episodes;
  std::vector<std::vector<double>> step_rewards;  // [step][agent]
};

using EpisodeHook = std::function<void(int episode, const std::vector<std::unique_ptr<Agent>>& seats)>;

struct RunOptions {
  std::ostream* metrics = nullptr;      // metrics.csv
  std::ostream* beliefs = nullptr;      // beliefs.csv
  std::ostream* trajectories = nullptr; // trajectory log
  BeliefDetail belief_detail = BeliefDetail::kEpisode;
  std::map<std::string, std::string> log_header;
  EpisodeHook on_episode_start;
};

// Lockstep episodes until `steps` environment steps have been simulated. The
// last episode is cut short if the budget ends inside it; agents still see
// end_episode for it.
RunResult run_episodes(const Environment& env, std::vector<std::unique_ptr<Agent>>& seats,
                       long long steps, std::uint64_t seed, const RunOptions& options = {});

// One episode without logging or learning hooks beyond the agents' own.
EpisodeTrajectory play_episode(const Environment& env, std::vector<std::unique_ptr<Agent>>& seats,
                               int episode, std::uint64_t spawn_seed, int max_steps = -1);

// Self-play: runs config.steps steps with the configured seats (all HOP by
// default). The seats are returned through `seats_out` for checkpointing.
RunResult run_selfplay(const ExperimentConfig& config, const RunOptions& options,
                       std::vector<std::unique_ptr<Agent>>* seats_out = nullptr);

struct AdaptationResult {
  RunResult run;
  double final_window_step_mean = 0.0;     // focal reward per step over the last eval_steps steps
  double final_window_episode_mean = 0.0;  // focal return per episode starting in that window
  int final_window_episodes = 0;
};

// Seat 0 is the HOP agent under test, the other seats are rule agents. When a
// checkpoint is given its models are loaded; priors always restart uniform
// since the co-players are new.
AdaptationResult run_adaptation(const ExperimentConfig& config, std::istream* checkpoint,
                                const RunOptions& options,
                                std::vector<std::unique_ptr<Agent>>* seats_out = nullptr);

// metrics.csv writer:
//   # hop-metrics v1
//   episode,t,step,action_0..,reward_0..,cumulative_0..,consumed,done
class MetricsWriter {
 public:
  MetricsWriter(std::ostream& out, int n_agents);
  void write(int episode, int t, long long step, const JointAction& joint,
             const std::vector<double>& rewards, const std::vector<double>& cumulative,
             int consumed, bool done);

 private:
  std::ostream& out_;
};

// ---------------------------------------------------------------------------
// Schelling diagrams

struct SchellingRow {
  int k = 0;  // other cooperators
  double coop_mean = 0.0;
  double coop_se = 0.0;
  double defect_mean = 0.0;
  double defect_se = 0.0;
};

// Focal seat 0 plays cooperator or defector among k cooperators and 3 - k
// defectors, k = 0..n_agents-1. Both focal strategies see the same spawns.
std::vector<SchellingRow> estimate_schelling(const Environment& env, int samples, std::uint64_t seed);

void write_schelling_csv(std::ostream& out, const std::vector<SchellingRow>& rows);

// ---------------------------------------------------------------------------
// Two-player matrix games

struct Payoffs {
  double R = 0.0;  // both cooperate
  double S = 0.0;  // cooperate against a defector
  double T = 0.0;  // defect against a cooperator
  double P = 0.0;  // both defect
};

// One-shot symmetric matrix game as a one-step environment. Actions and goals:
// 0 = cooperate, 1 = defect. removal_counts holds the action each agent played.
class MatrixGameEnvironment final : public Environment {
 public:
  explicit MatrixGameEnvironment(Payoffs payoffs);
  const Payoffs& payoffs() const { return payoffs_; }

  GridState spawn(Rng& rng) const override;
  StepResult step(const GridState& state, const JointAction& joint) const override;
  std::optional<int> goal_in_state(const GridState& state, AgentId agent) const override;
  int feature_size() const override;
  void encode(const GridState& state, AgentId subject, int goal, std::span<double> out) const override;

 private:
  Payoffs payoffs_;
};

// A co-player with goal g plays action g.
class MatrixGoalPolicy final : public CoplayerPolicy {
 public:
  void distribution(const GridState& state, AgentId subject, int goal, ActionMask legal,
                    std::span<double> out) const override;
};

struct MatrixPoint {
  Payoffs payoffs;
  double p = 0.0;    // true probability that the co-player cooperates
  double eps = 0.0;  // sampling-frequency error
};

struct MatrixVerdict {
  MatrixPoint point;
  double q_coop_true = 0.0;
  double q_defect_true = 0.0;
  double q_coop_sampled = 0.0;
  double q_defect_sampled = 0.0;
  bool skipped = false;  // zero denominator or a tie under either frequency
  bool agree = false;    // argmax under p + eps equals argmax under p
  double lhs = 0.0;      // (T+S-R-P) / (p(R-T) + (1-p)(S-P)) * eps
  bool inequality = false;
  bool consistent = false;  // inequality == agree
};

// Closed-form action values when the co-player cooperates with frequency q.
double matrix_q_coop(const Payoffs& m, double q);
double matrix_q_defect(const Payoffs& m, double q);

MatrixVerdict check_matrix_point(const MatrixPoint& point);
std::vector<MatrixVerdict> verify_matrix_condition(const std::vector<MatrixPoint>& points);

// R, S, T, P in {-1, 0, 1, 5, 10} and p in {1/17, ..., 16/17}: 10^4 points per eps.
std::vector<MatrixPoint> default_matrix_grid(const std::vector<double>& eps_values);

// Closed-form eps at which the argmax flips: solves Q_coop(p+eps) = Q_defect(p+eps).
// nullopt when the two lines are parallel.
std::optional<double> matrix_flip_eps(const Payoffs& m, double p);

// Root action values from the planner on the matrix game, with the co-player's
// goal weighted by frequency q (cooperate) and 1 - q (defect). Each goal is
// searched once; the rounds are then averaged with those weights.
std::vector<double> planner_matrix_q(const MatrixGameEnvironment& env, double q,
                                     const PlannerConfig& config, std::uint64_t seed);

// Bisection on eps in [lo, hi] for the sign change of the planner's
// Q_coop - Q_defect at p + eps. Requires a sign change over the bracket.
double simulated_flip_eps(const MatrixGameEnvironment& env, double p, double lo, double hi,
                          const PlannerConfig& config, std::uint64_t seed, double tolerance = 1e-13);

void write_matrix_report(std::ostream& out, const std::vector<MatrixVerdict>& verdicts);

// ---------------------------------------------------------------------------
// Replay

struct ReplayReport {
  int episodes = 0;
  long long steps = 0;
  std::vector<std::string> mismatches;  // empty when every hash and reward matched
};

ReplayReport replay_log(const TrajectoryLog& log);

}  // namespace hop

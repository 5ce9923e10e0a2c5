#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hop {

class Rng;

using AgentId = int;

inline constexpr int kMaxActions = 8;
inline constexpr int kNoAction = -1;

// Primitive grid actions shared by both grid games.
namespace action {
inline constexpr int kIdle = 0;
inline constexpr int kLeft = 1;
inline constexpr int kRight = 2;
inline constexpr int kUp = 3;
inline constexpr int kDown = 4;
inline constexpr int kInteract = 5;  // "hunt" in stag hunt, "remove" in snowdrift
inline constexpr int kCount = 6;
}  // namespace action

// Bit i set <=> action i is legal.
using ActionMask = std::uint32_t;
inline constexpr bool mask_has(ActionMask m, int a) { return (m >> a) & 1U; }
inline constexpr ActionMask full_mask(int n) { return n >= 32 ? ~0U : ((1U << n) - 1U); }

// One entry per agent; kNoAction for agents that are no longer in play.
using JointAction = std::vector<int>;

struct GoalId {
  AgentId agent = 0;
  int index = 0;
  friend bool operator==(const GoalId&, const GoalId&) = default;
};

enum class GameKind { kStagHunt, kSnowdrift, kOther };

struct GameSpec {
  GameKind kind = GameKind::kOther;
  std::string name;
  int n_agents = 0;
  std::vector<std::string> action_names;
  int t_max = 1;
  std::vector<std::vector<std::string>> goal_sets;  // per agent
  double discount = 0.95;

  int n_actions() const { return static_cast<int>(action_names.size()); }
  int n_goals(AgentId a) const { return static_cast<int>(goal_sets.at(a).size()); }
  void validate() const;
};

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class EntityKind : std::uint8_t { kStag, kHare, kDrift };

struct AgentSlot {
  Cell pos;
  bool alive = true;
  friend bool operator==(const AgentSlot&, const AgentSlot&) = default;
};

struct Entity {
  EntityKind kind = EntityKind::kHare;
  Cell pos;
  bool alive = true;
  std::uint32_t taken_by = 0;  // bitmask of the agents that consumed it
  int taken_at = -1;           // timestep of the consuming action
  friend bool operator==(const Entity&, const Entity&) = default;
};

// Fully observable state of a grid game. Both grid games use the same value
// type; fields a game does not need stay at their defaults.
struct GridState {
  int width = 0;
  int height = 0;
  int t = 0;
  std::vector<AgentSlot> agents;
  std::vector<Entity> entities;
  std::vector<int> removal_counts;  // per agent, interactions that consumed an entity
  std::optional<int> first_hunt_t;
  bool done = false;

  int n_agents() const { return static_cast<int>(agents.size()); }
  bool alive(AgentId a) const { return agents.at(a).alive; }
  std::uint64_t hash() const;
  friend bool operator==(const GridState&, const GridState&) = default;
};

struct StepResult {
  GridState state;
  std::vector<double> rewards;
  bool done = false;
};

// Deterministic Markov game with goals. Implementations must be pure: step()
// depends only on its arguments, so a trajectory can be replayed exactly and
// search can simulate from any state.
class Environment {
 public:
  explicit Environment(GameSpec spec);
  virtual ~Environment() = default;

  const GameSpec& spec() const { return spec_; }
  int n_agents() const { return spec_.n_agents; }
  int n_actions() const { return spec_.n_actions(); }

  virtual GridState spawn(Rng& rng) const = 0;
  virtual StepResult step(const GridState& state, const JointAction& joint) const = 0;
  virtual ActionMask legal_actions(const GridState& state, AgentId agent) const;

  // Index of the goal whose state set contains `state` for `agent`, if any.
  // Goal sets are disjoint, so at most one applies.
  virtual std::optional<int> goal_in_state(const GridState& state, AgentId agent) const = 0;
  // Goal attributed at the end of a finished episode when the agent entered no
  // goal set in the attribution window.
  virtual std::optional<int> terminal_goal(AgentId /*agent*/) const { return std::nullopt; }

  // Model inputs. goal < 0 encodes "no goal" (used by the policy-value model).
  virtual int feature_size() const = 0;
  virtual void encode(const GridState& state, AgentId subject, int goal,
                      std::span<double> out) const = 0;

  virtual std::string render(const GridState& state) const;

 protected:
  void check_joint(const GridState& state, const JointAction& joint) const;

 private:
  GameSpec spec_;
};

// One step of an episode: the state the joint action was taken in, the joint
// action and the rewards it produced.
struct TransitionRecord {
  GridState state;
  JointAction joint;
  std::vector<double> rewards;
};

struct Achievement {
  GoalId goal;
  int t = 0;  // index of the record whose joint action entered the goal set
  friend bool operator==(const Achievement&, const Achievement&) = default;
};

struct EpisodeTrajectory {
  int episode = 0;
  std::uint64_t seed = 0;  // spawn seed of the initial state
  std::vector<TransitionRecord> records;
  GridState final_state;
  std::vector<std::optional<Achievement>> attributed_goals;  // per agent, from t = 0

  int length() const { return static_cast<int>(records.size()); }
  const GridState& state_after(int t) const;
};

// First goal set `agent` enters at or after record `from_t`. When none is
// entered and the episode finished, the environment's terminal goal (if it
// defines one) is attributed at the last record.
std::optional<Achievement> attribute_goal(const Environment& env, const EpisodeTrajectory& traj,
                                          AgentId agent, int from_t);

// Sum over l >= from_t of gamma^(l - from_t) * r_agent(l).
double discounted_return(const EpisodeTrajectory& traj, AgentId agent, int from_t, double gamma);

void attribute_all(const Environment& env, EpisodeTrajectory& traj);

// Structured-text trajectory log.
//
//   # hop-trajectory v1
//   # key=value key=value ...            (environment description)
//   E,<episode>,<spawn seed>
//   R,<episode>,<t>,<state hash>,<a_0 a_1 ...>,<r_0 r_1 ...>
//   F,<episode>,<t>,<final state hash>
//
// Hashes are 16 lowercase hex digits. Rewards use the shortest decimal form
// that round-trips to the same double.
class TrajectoryLogWriter {
 public:
  TrajectoryLogWriter(std::ostream& out, const std::map<std::string, std::string>& header);
  void write(const EpisodeTrajectory& traj);

 private:
  std::ostream& out_;
};

struct LoggedStep {
  int t = 0;
  std::uint64_t state_hash = 0;
  JointAction joint;
  std::vector<double> rewards;
};

struct LoggedEpisode {
  int episode = 0;
  std::uint64_t seed = 0;
  std::vector<LoggedStep> steps;
  std::uint64_t final_hash = 0;
};

struct TrajectoryLog {
  std::map<std::string, std::string> header;
  std::vector<LoggedEpisode> episodes;
};

TrajectoryLog read_trajectory_log(std::istream& in);

std::string format_double(double v);

std::string format_hash(std::uint64_t h);

// Correctly rounded sum of doubles (Shewchuk partials with a final half-even
// correction). Group totals are built with it so that shares of a split cost
// add back up exactly.
double exact_sum(std::span<const double> values);

}  // namespace hop

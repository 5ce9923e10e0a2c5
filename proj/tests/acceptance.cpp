// Acceptance gate: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria (0 when everything passes). Criterion numbers given as
// arguments restrict the run to those criteria.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "gradient_check.hpp"
#include "hop/agents.hpp"
#include "hop/belief.hpp"
#include "hop/harness.hpp"
#include "hop/msg.hpp"
#include "hop/msh.hpp"
#include "hop/opponent_model.hpp"
#include "hop/planner.hpp"
#include "hop/rng.hpp"
#include "toy_game.hpp"

namespace {

using namespace hop;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool ok = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1. Folded intra-episode updates equal the joint Bayes posterior.
Verdict bayes_oracle() {
  Rng rng(101);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const int n_goals = 2 + static_cast<int>(rng.index(4));
    std::vector<double> prior(n_goals);
    double z = 0.0;
    for (double& p : prior) z += (p = 0.05 + rng.uniform());
    for (double& p : prior) p /= z;
    std::vector<std::vector<double>> lik(5, std::vector<double>(n_goals));
    for (auto& row : lik) for (double& l : row) l = 0.01 + 0.99 * rng.uniform();

    GoalBelief b{0, 1, prior};
    for (const auto& row : lik) b = intra_update(b, row);

    std::vector<double> joint(prior);
    double zj = 0.0;
    for (int g = 0; g < n_goals; ++g) {
      for (const auto& row : lik) joint[g] *= row[g];
      zj += joint[g];
    }
    for (int g = 0; g < n_goals; ++g) worst = std::max(worst, std::abs(b.probs[g] - joint[g] / zj));
  }
  return {worst <= 1e-9, fmt("max |folded - joint| = %.3g over 100 instances", worst)};
}

// 2. Repeated attribution of one goal: b_k = 1 - 0.5 alpha^k.
Verdict inter_closed_form() {
  double worst = 0.0;
  for (double alpha : {0.5, 0.95, 0.99}) {
    EpisodePrior p = EpisodePrior::uniform(2, alpha);
    for (int k = 1; k <= 200; ++k) {
      p = inter_update(p, 0);
      worst = std::max(worst, std::abs(p.probs[0] - (1.0 - 0.5 * std::pow(alpha, k))));
    }
  }
  return {worst <= 1e-12, fmt("max deviation %.3g", worst)};
}

// 3. Search values against exhaustive expectimax on ten random toy games.
Verdict mcts_vs_expectimax() {
  double worst = 0.0;
  int worst_instance = -1;
  for (int inst = 0; inst < 10; ++inst) {
    test::ToyGame game(inst);
    test::ToyPolicy om(game);
    UniformPriorValue pv;
    PlannerConfig cfg;
    cfg.rounds = 16;
    cfg.iterations = 2000;
    cfg.c_puct = 2.0;
    cfg.gamma = 0.95;
    Rng spawn(0);
    const GridState root = game.spawn(spawn);
    const int goal = inst % 2;
    std::vector<double> probs(2, 0.0);
    probs[goal] = 1.0;
    const std::vector<GoalBelief> beliefs{GoalBelief{0, 1, probs}};
    Rng rng(derive_seed(303, inst));
    const PlanResult r = plan(game, root, 0, beliefs, om, pv, cfg, rng);
    for (int a = 0; a < 3; ++a) {
      const double err = std::abs(r.q_avg[a] - game.expectimax(a, goal, cfg.gamma));
      if (err > worst) {
        worst = err;
        worst_instance = inst;
      }
    }
  }
  return {worst <= 0.05, fmt("max |Q_avg - expectimax| = %.4f", worst) + " (instance " +
                             std::to_string(worst_instance) + ", c=2)"};
}

// 4. Finite differences on both approximators at default width.
Verdict gradient_checks() {
  auto env = std::make_shared<MshEnvironment>(MshConfig::four_hares_one_stag());
  Rng rng(404);
  std::vector<ReplayEntry> entries;
  std::vector<PolicyValueModel::Sample> samples;
  for (int i = 0; i < 8; ++i) {
    const GridState s = env->spawn(rng);
    const AgentId j = static_cast<AgentId>(rng.index(4));
    entries.push_back(ReplayEntry{s, j, static_cast<int>(rng.index(6)), static_cast<int>(rng.index(2))});
    std::vector<double> pi(6);
    double z = 0.0;
    for (double& v : pi) z += (v = rng.uniform());
    for (double& v : pi) v /= z;
    samples.push_back({s, j, pi, 10 * rng.uniform() - 2});
  }
  std::vector<const ReplayEntry*> eb;
  for (const auto& e : entries) eb.push_back(&e);
  std::vector<const PolicyValueModel::Sample*> sb;
  for (const auto& s : samples) sb.push_back(&s);

  double worst_om = 0.0;
  double worst_pv = 0.0;
  for (int point = 0; point < 10; ++point) {
    GoalConditionedModel om(env, 64, 500 + point);
    om.network().randomize(rng, 0.3);
    std::vector<double> g(om.network().parameter_count(), 0.0);
    om.loss(eb, g);
    worst_om = std::max(worst_om, test::max_relative_gradient_error(
                                      om.network().parameters(), [&] { return om.loss(eb); }, g, 200, rng));

    PolicyValueModel pv(env, 64, 600 + point);
    pv.network().randomize(rng, 0.3);
    std::vector<double> gp(pv.network().parameter_count(), 0.0);
    pv.loss(sb, gp);
    worst_pv = std::max(worst_pv, test::max_relative_gradient_error(
                                      pv.network().parameters(),
                                      [&] {
                                        const auto l = pv.loss(sb);
                                        return l.policy + l.value;
                                      },
                                      gp, 200, rng));
  }
  return {worst_om < 1e-4 && worst_pv < 1e-4,
          fmt("opponent model %.3g", worst_om) + fmt(", policy-value %.3g", worst_pv)};
}

// 5. Reward accounting of the two environments.
Verdict accounting() {
  std::string detail;
  bool ok = true;

  auto msg = std::make_shared<MsgEnvironment>(MsgConfig{});
  {
    std::vector<std::unique_ptr<Agent>> seats;
    for (AgentId i = 0; i < 4; ++i) seats.push_back(std::make_unique<RuleAgent>(i, RuleKind::kCooperator, msg, i));
    int bad = 0;
    for (int e = 0; e < 500; ++e) {
      const auto traj = play_episode(*msg, seats, e, episode_seed(55, e));
      std::vector<double> all;
      for (const auto& r : traj.records) all.insert(all.end(), r.rewards.begin(), r.rewards.end());
      const bool cleared = std::none_of(traj.final_state.entities.begin(), traj.final_state.entities.end(),
                                        [](const Entity& x) { return x.alive; });
      if (!cleared || exact_sum(all) / 4.0 != 30.0) ++bad;
    }
    ok = ok && bad == 0;
    detail += "msg clearance: " + std::to_string(500 - bad) + "/500 at exactly 30.0";
  }

  auto msh = std::make_shared<MshEnvironment>(MshConfig::four_hares_one_stag());
  {
    int stag_deaths = 0;
    int bad = 0;
    for (int k = 0; k < 3000; ++k) {
      Rng rng(derive_seed(66, k));
      GridState s = msh->spawn(rng);
      while (!s.done) {
        JointAction joint(4, kNoAction);
        for (AgentId i = 0; i < 4; ++i) {
          if (!s.agents[i].alive) continue;
          // Mostly seek the stag so that joint kills are common.
          joint[i] = rule_act(*msh, rng.uniform() < 0.8 ? RuleKind::kCooperator : RuleKind::kRandom, i, s, rng);
        }
        const StepResult r = msh->step(s, joint);
        for (std::size_t e = 0; e < s.entities.size(); ++e) {
          if (s.entities[e].kind != EntityKind::kStag || !s.entities[e].alive || r.state.entities[e].alive) continue;
          ++stag_deaths;
          std::vector<double> shares;
          for (AgentId i = 0; i < 4; ++i) {
            if ((r.state.entities[e].taken_by >> i) & 1U) shares.push_back(r.rewards[i]);
          }
          const bool even = std::all_of(shares.begin(), shares.end(), [&](double v) { return v == shares[0]; });
          if (exact_sum(shares) != 10.0 || !even) ++bad;
        }
        s = r.state;
      }
    }
    ok = ok && bad == 0 && stag_deaths > 0;
    detail += "; stag deaths: " + std::to_string(stag_deaths - bad) + "/" + std::to_string(stag_deaths) +
              " emit exactly 10.0 split evenly";
  }

  auto two = std::make_shared<MshEnvironment>(MshConfig::four_hares_two_stags());
  {
    int hunts = 0;
    int bad = 0;
    for (int k = 0; k < 3000; ++k) {
      Rng rng(derive_seed(77, k));
      GridState s = two->spawn(rng);
      while (!s.done) {
        JointAction joint(4, kNoAction);
        for (AgentId i = 0; i < 4; ++i) {
          if (s.agents[i].alive) joint[i] = rule_act(*two, static_cast<RuleKind>(rng.index(3)), i, s, rng);
        }
        s = two->step(s, joint).state;
        if (s.first_hunt_t && s.t > *s.first_hunt_t + 5) ++bad;
      }
      hunts += s.first_hunt_t.has_value();
    }
    ok = ok && bad == 0 && hunts > 0;
    detail += "; 4h2s: " + std::to_string(hunts) + " episodes with a hunt, " + std::to_string(bad) +
              " steps past first_hunt_t+5";
  }
  return {ok, detail};
}

// 6. Schelling diagrams of the three settings.
Verdict schelling() {
  auto h1 = std::make_shared<MshEnvironment>(MshConfig::four_hares_one_stag());
  auto h2 = std::make_shared<MshEnvironment>(MshConfig::four_hares_two_stags());
  auto sd = std::make_shared<MsgEnvironment>(MsgConfig{});
  const auto r1 = estimate_schelling(*h1, 2000, 7);
  const auto r2 = estimate_schelling(*h2, 2000, 7);
  const auto r3 = estimate_schelling(*sd, 2000, 7);
  bool ok = true;
  std::string detail;

  auto zero = [](const SchellingRow& r) { return std::abs(r.coop_mean) <= 2.0 * r.coop_se; };
  const bool z1 = zero(r1[0]);
  const bool z2 = zero(r2[0]);
  ok = ok && z1 && z2;
  detail += fmt("msh coop(k=0): 4h1s %.4g", r1[0].coop_mean) + fmt(" se %.2g", r1[0].coop_se) +
            fmt(", 4h2s %.4g", r2[0].coop_mean) + fmt(" se %.2g", r2[0].coop_se);

  // Non-decreasing within two combined standard errors, and strictly higher at
  // k=3 than at k=0.
  bool mono = r3.back().defect_mean > r3.front().defect_mean;
  for (std::size_t k = 0; k + 1 < r3.size(); ++k) {
    const double se = std::hypot(r3[k].defect_se, r3[k + 1].defect_se);
    mono = mono && r3[k + 1].defect_mean >= r3[k].defect_mean - 2.0 * se;
  }
  ok = ok && mono;
  detail += "; msg defect(k) =";
  for (const auto& r : r3) detail += fmt(" %.4g", r.defect_mean);

  auto crosses = [](const std::vector<SchellingRow>& rows) {
    bool above = false;
    bool below = false;
    for (const auto& r : rows) {
      above = above || r.coop_mean > r.defect_mean;
      below = below || r.coop_mean < r.defect_mean;
    }
    return above && below;
  };
  const bool c1 = crosses(r1), c2 = crosses(r2), c3 = crosses(r3);
  ok = ok && c1 && c2 && c3;
  detail += std::string("; crossings ") + (c1 ? "y" : "n") + (c2 ? "y" : "n") + (c3 ? "y" : "n");
  return {ok, detail};
}

// 7. Matrix-game verifier.
Verdict matrix_verifier() {
  const auto verdicts = verify_matrix_condition(default_matrix_grid({0.0}));
  std::size_t checked = 0;
  std::size_t agree = 0;
  for (const auto& v : verdicts) {
    if (v.skipped) continue;
    ++checked;
    agree += v.agree;
  }
  const bool all_agree = checked > 0 && agree == checked;

  Rng rng(707);
  PlannerConfig cfg;
  cfg.iterations = 16;
  cfg.c_puct = 100.0;
  int settings = 0;
  double worst = 0.0;
  while (settings < 20) {
    const Payoffs m{std::round(20 * rng.uniform() - 10), std::round(20 * rng.uniform() - 10),
                    std::round(20 * rng.uniform() - 10), std::round(20 * rng.uniform() - 10)};
    const double p = 0.05 + 0.9 * rng.uniform();
    const auto flip = matrix_flip_eps(m, p);
    // Keep settings whose flip lies strictly inside the probability range.
    if (!flip || p + *flip <= 0.01 || p + *flip >= 0.99) continue;
    MatrixGameEnvironment env(m);
    const double sim = simulated_flip_eps(env, p, -p, 1.0 - p, cfg, derive_seed(708, settings));
    worst = std::max(worst, std::abs(sim - *flip));
    ++settings;
  }
  return {all_agree && worst <= 1e-9,
          "eps=0 agreement " + std::to_string(agree) + "/" + std::to_string(checked) +
              fmt(" (non-degenerate of 10000); max |analytic - simulated flip| = %.3g over 20 settings", worst)};
}

// 8. HOP against three stag-hunt defectors: episode-start b(stag) per co-player.
Verdict adaptation_beliefs() {
  int good = 0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::istringstream text("phase = adapt\nenv = msh\nvariant = 4h1s\nsteps = 1500\nbeliefs = off\n"
                            "trajectories = 0\nseed = " + std::to_string(seed) + "\n");
    const ExperimentConfig cfg = ExperimentConfig::from(Config::parse(text));
    std::vector<std::vector<double>> stag(4);
    RunOptions opts;
    opts.on_episode_start = [&](int, const std::vector<std::unique_ptr<Agent>>& seats) {
      const auto& hop = static_cast<const HopAgent&>(*seats[0]);
      for (AgentId j = 1; j < 4; ++j) stag[j].push_back(hop.episode_prior(j).probs[MshEnvironment::kStagGoal]);
    };
    run_adaptation(cfg, nullptr, opts);
    bool all = true;
    int latest = -1;
    for (AgentId j = 1; j < 4; ++j) {
      const auto& b = stag[j];
      int hit = -1;
      for (int e = 4; e < std::min<int>(50, b.size()); ++e) {
        double m = 0.0;
        for (int w = e - 4; w <= e; ++w) m += b[w];
        if (m / 5.0 < 0.2) {
          hit = e;
          break;
        }
      }
      all = all && hit >= 0 && b.front() >= 0.2;
      latest = std::max(latest, hit < 0 ? 999 : hit);
    }
    good += all;
    per_seed += (seed ? "," : "") + (latest == 999 ? std::string("-") : std::to_string(latest));
  }
  return {good >= 9, std::to_string(good) + "/10 seeds below 0.2 within 50 episodes (episode reached: " +
                         per_seed + ")"};
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 9. Two CLI invocations with the same seed write identical CSVs.
Verdict cli_reproducible() {
  const fs::path dir = fs::temp_directory_path() / "hop_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "sp.cfg") << "env = msh\nvariant = 4h2s\nsteps = 300\nhop.iterations = 40\n";
  std::ofstream(dir / "ad.cfg") << "phase = adapt\nenv = msg\nsteps = 150\nhop.iterations = 30\n";
  std::ofstream(dir / "sc.cfg") << "env = msg\nsamples = 50\n";
  const std::string cli = HOP_CLI_PATH;
  bool ok = true;
  int files = 0;
  const char* runs[][2] = {{"selfplay", "sp.cfg"}, {"adapt", "ad.cfg"}, {"schelling", "sc.cfg"}};
  for (const auto& r : runs) {
    for (const char* tag : {"a", "b"}) {
      const fs::path out = dir / (std::string(r[0]) + "_" + tag);
      const int code = run_command(cli + " " + r[0] + " --config " + (dir / r[1]).string() + " --seed 13 --out " +
                                   out.string() + " >/dev/null 2>&1");
      ok = ok && code == 0;
    }
    for (const auto& entry : fs::directory_iterator(dir / (std::string(r[0]) + "_a"))) {
      if (entry.path().extension() != ".csv") continue;
      const fs::path other = dir / (std::string(r[0]) + "_b") / entry.path().filename();
      ok = ok && fs::exists(other) && slurp(entry.path()) == slurp(other);
      ++files;
    }
  }
  fs::remove_all(dir);
  return {ok && files >= 6, std::to_string(files) + " CSV files compared byte for byte"};
}

// 10. Snowdrift self-play.
Verdict msg_selfplay() {
  std::istringstream text("env = msg\nseed = 1\n");
  const ExperimentConfig cfg = ExperimentConfig::from(Config::parse(text));
  auto env = make_environment(cfg);
  auto seats = make_seats(cfg, env);
  const int episodes = 1200;
  std::vector<double> group(episodes);
  for (int e = 0; e < episodes; ++e) {
    const auto traj = play_episode(*env, seats, e, episode_seed(cfg.seed, e));
    std::vector<double> all;
    for (const auto& r : traj.records) all.insert(all.end(), r.rewards.begin(), r.rewards.end());
    group[e] = exact_sum(all) / env->n_agents();
  }
  auto mean = [&](int from, int to) {
    double s = 0.0;
    for (int e = from; e < to; ++e) s += group[e];
    return s / (to - from);
  };
  const double overall = mean(0, episodes);
  const double first = mean(0, episodes / 4);
  const double last = mean(3 * episodes / 4, episodes);
  return {overall > 0.0 && last > first,
          fmt("group average %.3f", overall) + fmt(", first quartile %.3f", first) +
              fmt(", final quartile %.3f", last)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    double limit_s;
    std::function<Verdict()> run;
  };
  const Criterion criteria[] = {
      {"bayes-oracle", 1.0, bayes_oracle},
      {"inter-closed-form", 1.0, inter_closed_form},
      {"mcts-vs-expectimax", 30.0, mcts_vs_expectimax},
      {"gradient-checks", 10.0, gradient_checks},
      {"environment-accounting", 1.0, accounting},
      {"schelling-diagrams", 300.0, schelling},
      {"matrix-verifier", 60.0, matrix_verifier},
      {"adaptation-beliefs", 1200.0, adaptation_beliefs},
      {"cli-reproducible", 600.0, cli_reproducible},
      {"msg-selfplay", 7200.0, msg_selfplay},
  };
  int failed = 0;
  int index = 0;
  for (const auto& c : criteria) {
    ++index;
    if (argc > 1 && std::find_if(argv + 1, argv + argc, [&](const char* a) { return std::atoi(a) == index; }) ==
                        argv + argc) {
      continue;
    }
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    const bool in_time = secs <= c.limit_s;
    const bool pass = v.ok && in_time;
    failed += !pass;
    std::printf("%s %2d %s: %s; %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", index, c.name,
                v.detail.c_str(), secs, c.limit_s, in_time ? "" : " over time");
    std::fflush(stdout);
  }
  return failed;
}

// Command-line front end: self-play, adaptation, Schelling diagrams, the
// matrix-game verifier and trajectory replay.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "hop/agents.hpp"
#include "hop/errors.hpp"
#include "hop/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

hop::ExperimentConfig load_config(const Globals& g, bool required) {
  hop::Config raw;
  if (!g.config_path.empty()) {
    raw = hop::Config::load(g.config_path);
  } else if (required) {
    throw hop::ConfigError("--config is required for this command");
  }
  hop::ExperimentConfig cfg = hop::ExperimentConfig::from(raw);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

std::ofstream open_out(const Globals& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  const fs::path path = fs::path(g.out_dir) / name;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void save_checkpoints(const Globals& g, const std::vector<std::unique_ptr<hop::Agent>>& seats) {
  for (const auto& seat : seats) {
    const auto* hop = dynamic_cast<const hop::HopAgent*>(seat.get());
    if (!hop) continue;
    auto out = open_out(g, "checkpoint_seat" + std::to_string(hop->id()) + ".txt");
    hop->save_checkpoint(out);
  }
}

int cmd_run(const Globals& g, hop::Phase phase) {
  hop::ExperimentConfig cfg = load_config(g, true);
  if (cfg.phase != phase) {
    throw hop::ConfigError(g.config_path + ": phase does not match the command");
  }
  auto metrics = open_out(g, "metrics.csv");
  std::optional<std::ofstream> beliefs;
  std::optional<std::ofstream> traj;
  hop::RunOptions opts;
  opts.metrics = &metrics;
  opts.belief_detail = cfg.beliefs;
  if (cfg.beliefs != hop::BeliefDetail::kOff) {
    beliefs = open_out(g, "beliefs.csv");
    opts.beliefs = &*beliefs;
  }
  if (cfg.log_trajectories) {
    traj = open_out(g, "trajectories.log");
    opts.trajectories = &*traj;
    opts.log_header = cfg.describe();
  }
  std::vector<std::unique_ptr<hop::Agent>> seats;
  if (phase == hop::Phase::kSelfPlay) {
    const hop::RunResult r = hop::run_selfplay(cfg, opts, &seats);
    save_checkpoints(g, seats);
    std::cout << "selfplay: " << r.steps << " steps, " << r.episodes.size() << " episodes\n";
    return 0;
  }
  std::optional<std::ifstream> ckpt;
  if (!cfg.checkpoint.empty()) {
    ckpt.emplace(cfg.checkpoint);
    if (!*ckpt) throw hop::LoadError("cannot open checkpoint '" + cfg.checkpoint + "'");
  }
  const hop::AdaptationResult r = hop::run_adaptation(cfg, ckpt ? &*ckpt : nullptr, opts, &seats);
  auto summary = open_out(g, "summary.csv");
  summary << "# hop-adapt-summary v1\n";
  summary << "steps,episodes,window_steps,window_step_mean,window_episodes,window_episode_mean\n";
  summary << r.run.steps << ',' << r.run.episodes.size() << ',' << std::min(cfg.eval_steps, r.run.steps)
          << ',' << hop::format_double(r.final_window_step_mean) << ',' << r.final_window_episodes << ','
          << hop::format_double(r.final_window_episode_mean) << '\n';
  save_checkpoints(g, seats);
  std::cout << "adapt: " << r.run.steps << " steps, final-window mean return per episode "
            << hop::format_double(r.final_window_episode_mean) << '\n';
  return 0;
}

int cmd_schelling(const Globals& g) {
  const hop::ExperimentConfig cfg = load_config(g, true);
  auto env = hop::make_environment(cfg);
  const auto rows = hop::estimate_schelling(*env, cfg.samples, cfg.seed);
  auto out = open_out(g, "schelling.csv");
  hop::write_schelling_csv(out, rows);
  hop::write_schelling_csv(std::cout, rows);
  return 0;
}

int cmd_verify_matrix(const Globals& g) {
  const hop::ExperimentConfig cfg = load_config(g, false);
  const auto verdicts = hop::verify_matrix_condition(hop::default_matrix_grid(cfg.matrix_eps));
  auto out = open_out(g, "matrix_report.csv");
  hop::write_matrix_report(out, verdicts);
  std::size_t skipped = 0, agree = 0, consistent = 0;
  for (const auto& v : verdicts) {
    skipped += v.skipped;
    agree += !v.skipped && v.agree;
    consistent += !v.skipped && v.consistent;
  }
  const std::size_t checked = verdicts.size() - skipped;
  std::cout << "verify-matrix: " << verdicts.size() << " points, " << skipped << " skipped, " << agree
            << '/' << checked << " argmax agree, " << consistent << '/' << checked
            << " consistent with the inequality\n";
  return 0;
}

int cmd_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hop::LoadError("cannot open trajectory log '" + path + "'");
  const hop::ReplayReport r = hop::replay_log(hop::read_trajectory_log(in));
  for (const auto& m : r.mismatches) std::cerr << "mismatch: " << m << '\n';
  if (!r.mismatches.empty()) {
    std::cerr << "replay: " << r.mismatches.size() << " episode(s) differ from the log\n";
    return 1;
  }
  std::cout << "replay: " << r.episodes << " episodes, " << r.steps << " steps reproduced exactly\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical opponent modelling and planning experiments", "hop"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Experiment config file (key = value lines)");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();

  auto* selfplay = app.add_subcommand("selfplay", "Self-play training run");
  auto* adapt = app.add_subcommand("adapt", "Few-shot adaptation against rule co-players");
  auto* schelling = app.add_subcommand("schelling", "Schelling diagram estimate");
  auto* verify = app.add_subcommand("verify-matrix", "Matrix-game consistency check");
  auto* replay = app.add_subcommand("replay", "Replay a trajectory log and compare");
  std::string log_path;
  replay->add_option("trajectory-log", log_path, "Trajectory log to replay")->required();
  for (auto* sub : {selfplay, adapt, schelling, verify, replay}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n"
              << app.get_formatter()->make_help(&app, "hop", CLI::AppFormatMode::Normal);
    return 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (selfplay->parsed()) return cmd_run(g, hop::Phase::kSelfPlay);
    if (adapt->parsed()) return cmd_run(g, hop::Phase::kAdapt);
    if (schelling->parsed()) return cmd_schelling(g);
    if (verify->parsed()) return cmd_verify_matrix(g);
    if (replay->parsed()) return cmd_replay(log_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

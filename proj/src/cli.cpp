#include "cyberdef/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cyberdef/checkpoint.hpp"
#include "cyberdef/commgraph.hpp"
#include "cyberdef/curves.hpp"
#include "cyberdef/errors.hpp"
#include "cyberdef/replay.hpp"
#include "cyberdef/trainer.hpp"

namespace cyberdef::cli {

namespace fs = std::filesystem;

namespace {

/// Raised for problems the user can fix by changing the invocation.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

fs::path output_dir(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("CYBERDEF_OUTPUT_DIR"); env && *env) return env;
  return fallback;
}

std::string format_pm(double mean, double sd) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.6f±%.6f", mean, sd);
  return buf;
}

Scenario resolve_scenario(const std::string& name, const std::string& file) {
  if (!file.empty()) {
    try {
      return load_scenario(read_file(file));
    } catch (const ConfigError& e) {
      throw UsageError(file + ": " + e.what());
    }
  }
  try {
    return builtin_scenario(name);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

void apply_config_text(train::TrainConfig& config, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(source + ":" + std::to_string(line_no) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    try {
      train::apply_override(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

struct TrainArgs {
  std::string scenario = "homogeneous";
  std::string scenario_file;
  std::string config_file;
  std::vector<std::string> overrides;
  long long steps = 0;
  long long seed = -1;
  int threads = 0;
  std::string out;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const Scenario scenario = resolve_scenario(a.scenario, a.scenario_file);
  train::TrainConfig config;
  if (!a.config_file.empty()) apply_config_text(config, read_file(a.config_file), a.config_file);
  if (a.steps > 0) config.total_steps = a.steps;
  if (a.seed >= 0) config.seed = static_cast<std::uint64_t>(a.seed);
  if (a.threads > 0) config.threads = a.threads;
  for (const auto& o : a.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw UsageError("override '" + o + "' is not key=value");
    try {
      train::apply_override(config, o.substr(0, eq), o.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }
  try {
    train::validate(config);
    train::iteration_count(config, train::effective_scenario(scenario, config).horizon);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }

  const fs::path dir = output_dir(a.out, "cyberdef_out");
  fs::create_directories(dir);
  auto csv = open_output(dir / "training.csv");
  auto matrix = open_output(dir / "matrix.log");
  auto actions = open_output(dir / "actions.jsonl");
  csv << logs::kCsvHeader << '\n';
  logs::ActionLogWriter action_log(actions, train::effective_scenario(scenario, config));

  train::TrainSinks sinks;
  sinks.row = [&](const logs::TrainingRow& r) {
    csv << logs::csv_row(r) << '\n';
    csv.flush();
    if (!a.quiet) {
      out << "steps " << r.steps << "  train " << format_pm(r.train_mean, r.train_std) << "  policy_loss "
          << logs::format_double(r.policy_loss) << "  entropy " << logs::format_double(r.entropy);
      if (r.eval_mean) out << "  eval " << format_pm(*r.eval_mean, *r.eval_std);
      out << '\n';
    }
  };
  sinks.matrix_line = [&](const std::string& line) { matrix << line << '\n'; };
  sinks.action_log = &action_log;
  sinks.checkpoint = [&](const train::Learner& l, long long) { write_file(dir / "checkpoint.json", train::save_checkpoint(l)); };

  const auto result = train::train(scenario, config, sinks);
  write_file(dir / "checkpoint.json", train::save_checkpoint(result.learner));
  out << "trained " << result.episodes << " episodes (" << result.env_steps << " steps, " << result.iterations
      << " iterations); artifacts in " << dir.string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  int episodes = 100;
  long long seed = 0;
  std::string out;
  std::string scenario;
  std::string scenario_file;
  bool identity_mask = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto learner = train::load_checkpoint(read_file(a.checkpoint));
  if (!a.scenario.empty() || !a.scenario_file.empty()) {
    Scenario wanted = resolve_scenario(a.scenario, a.scenario_file);
    wanted.horizon = learner.scenario.horizon;
    wanted.gamma = learner.scenario.gamma;
    train::require_same_scenario(learner, wanted);
  }
  if (a.episodes < 1) throw UsageError("--episodes must be at least 1");
  const fs::path dir = output_dir(a.out, "cyberdef_out");
  fs::create_directories(dir);
  auto actions = open_output(dir / "eval_actions.jsonl");
  logs::ActionLogWriter log(actions, learner.scenario);
  std::optional<nn::Matrix> mask;
  if (a.identity_mask) mask = graph::identity_mask(learner.policy.agent_count());
  const auto r = train::evaluate_policy(learner, a.episodes, static_cast<std::uint64_t>(a.seed), mask, &log);
  out << format_pm(r.mean, r.stddev) << '\n';
  return kExitOk;
}

int cmd_replay(const std::string& path, std::ostream& out, std::ostream& err) {
  const auto log = logs::parse_action_log(read_file(path));
  const auto report = replay::replay(log);
  if (report.first_divergence) {
    const auto& d = *report.first_divergence;
    err << "divergence in episode " << d.episode << " at step " << d.step << " (line " << d.line << "): logged "
        << logs::format_double(d.logged) << ", replayed " << logs::format_double(d.replayed) << " [" << d.reason
        << "]\n";
    return kExitDivergence;
  }
  out << "replayed " << report.episodes << " episodes, " << report.steps << " steps, 0 divergences\n";
  return kExitOk;
}

int cmd_curves(const std::string& csv, long long window, const std::string& out_path, std::ostream& out) {
  const auto rows = logs::parse_training_csv(read_file(csv));
  const auto text = curves::format_series(curves::downsample(rows, window));
  if (out_path.empty())
    out << text;
  else
    write_file(out_path, text);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-agent cyber-defence training with a learned communication graph"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a policy and its communication graph");
  train_cmd->add_option("--scenario", ta.scenario, "Built-in scenario (homogeneous, heterogeneous, host_based, micro)");
  train_cmd->add_option("--scenario-file", ta.scenario_file, "Scenario definition file (overrides --scenario)");
  train_cmd->add_option("--config", ta.config_file, "File of key = value training settings");
  train_cmd->add_option("--set", ta.overrides, "Override one training setting, key=value (repeatable)");
  train_cmd->add_option("--steps", ta.steps, "Total environment steps");
  train_cmd->add_option("--seed", ta.seed, "Base seed");
  train_cmd->add_option("--threads", ta.threads, "Collection threads");
  train_cmd->add_option("--out", ta.out, "Output directory (default $CYBERDEF_OUTPUT_DIR or ./cyberdef_out)");
  train_cmd->add_flag("--quiet", ta.quiet, "Suppress per-interval summaries");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--episodes", ea.episodes, "Evaluation episodes");
  eval_cmd->add_option("--seed", ea.seed, "Evaluation seed");
  eval_cmd->add_option("--out", ea.out, "Output directory (default $CYBERDEF_OUTPUT_DIR or ./cyberdef_out)");
  eval_cmd->add_option("--scenario", ea.scenario, "Refuse unless the checkpoint matches this built-in scenario");
  eval_cmd->add_option("--scenario-file", ea.scenario_file, "Refuse unless the checkpoint matches this scenario file");
  eval_cmd->add_flag("--identity-mask", ea.identity_mask, "Evaluate without inter-agent communication");

  std::string replay_path;
  auto* replay_cmd = app.add_subcommand("replay", "Re-execute an action log and verify every reward");
  replay_cmd->add_option("--log", replay_path, "Action log (JSON lines)")->required();

  std::string curves_csv, curves_out;
  long long window = 1;
  auto* curves_cmd = app.add_subcommand("emit-curves", "Downsample a training CSV into plot-ready series");
  curves_cmd->add_option("--csv", curves_csv, "Training CSV")->required();
  curves_cmd->add_option("--window", window, "Window width in environment steps");
  curves_cmd->add_option("--out", curves_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(ta, out);
    if (eval_cmd->parsed()) return cmd_eval(ea, out);
    if (replay_cmd->parsed()) return cmd_replay(replay_path, out, err);
    if (curves_cmd->parsed()) {
      if (window < 1) throw UsageError("--window must be at least 1");
      return cmd_curves(curves_csv, window, curves_out, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace cyberdef::cli

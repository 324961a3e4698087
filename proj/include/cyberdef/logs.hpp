#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cyberdef/scenario.hpp"

namespace cyberdef::logs {

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

/// One row of the training log. Evaluation columns are absent on rows
/// without an evaluation.
struct TrainingRow {
  long long steps = 0;
  double train_mean = 0.0;
  double train_std = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  std::optional<double> eval_mean;
  std::optional<double> eval_std;
};

inline constexpr std::string_view kCsvHeader =
    "steps,train_mean,train_std,policy_loss,value_loss,entropy,eval_mean,eval_std";

std::string csv_row(const TrainingRow& row);
/// Parses a whole CSV (header required). ConfigError("csv_parse") with the
/// line number on malformed input.
std::vector<TrainingRow> parse_training_csv(std::string_view text);

/// Line-delimited JSON action log. The first record carries the scenario so
/// that a log can be replayed on its own; every episode is framed by an
/// "episode" record (environment seed) and an "end" record (total reward).
class ActionLogWriter {
 public:
  ActionLogWriter(std::ostream& out, const Scenario& scenario);

  void begin_episode(long long episode, std::uint64_t env_seed, std::string_view mode);
  /// One record per agent with the team reward of the step.
  void step(long long episode, int step, std::span<const BlueAction> joint, std::span<const int> indices, double reward);
  void end_episode(long long episode, double total);

 private:
  std::ostream* out_;
  std::vector<std::string> agent_names_;
};

struct LoggedEpisode {
  long long episode = 0;
  std::uint64_t env_seed = 0;
  std::string mode;
  std::vector<std::vector<BlueAction>> joint_actions;
  std::vector<double> rewards;
  std::vector<int> step_lines;  // source line of each step's first record
  double total = 0.0;
};

struct ActionLog {
  Scenario scenario;
  std::vector<LoggedEpisode> episodes;
};

/// ConfigError("action_log_parse") with the line number on malformed or
/// truncated input.
ActionLog parse_action_log(std::string_view text);

}  // namespace cyberdef::logs

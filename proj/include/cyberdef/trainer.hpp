#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cyberdef/commgraph.hpp"
#include "cyberdef/logs.hpp"
#include "cyberdef/optim.hpp"
#include "cyberdef/policy.hpp"
#include "cyberdef/rollout.hpp"

namespace cyberdef::train {

struct TrainConfig {
  long long total_steps = 500000;
  int threads = 1;
  /// 0 keeps the scenario's horizon.
  int horizon = 0;
  /// Negative keeps the scenario's discount.
  double gamma = -1.0;
  double gae_lambda = 0.95;
  double ppo_clip = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  int epochs = 4;
  int minibatches = 2;
  int buffers_per_update = 8;
  /// Intervals count episode-loop iterations (threads episodes each).
  int log_interval = 10;
  int eval_interval = 50;
  int eval_episodes = 10;
  std::uint64_t seed = 1;
  double sparsity = 0.5;
  double temperature_start = 1.0;
  double temperature_end = 0.1;
  double lr = 3e-4;
  double edge_lr = 1e-3;
  double max_grad_norm = 10.0;
  bool value_norm = true;
  double value_norm_beta = 0.999;
  bool learn_graph = true;
  policy::PolicyConfig model;
};

/// Throws ConfigError naming the offending key.
void validate(const TrainConfig& config);

/// Sets one field from "key=value" text (keys as in the struct, model
/// fields as model.<name>). ConfigError("unknown_key" / "bad_value").
void apply_override(TrainConfig& config, std::string_view key, std::string_view value);
std::vector<std::string> override_keys();

/// The scenario with the config's horizon and discount applied.
Scenario effective_scenario(const Scenario& scenario, const TrainConfig& config);

/// Number of episode-loop iterations: total_steps / (threads * horizon).
long long iteration_count(const TrainConfig& config, int horizon);

/// Everything a checkpoint holds.
struct Learner {
  Scenario scenario;
  policy::Policy policy;
  graph::CommGraph graph;
  ValueNormalizer vnorm;
  /// Model optimizer state; not persisted in checkpoints.
  nn::AdamState adam;

  Learner(const Scenario& s, const policy::PolicyConfig& model, const TrainConfig& config);
  Learner(Scenario s, policy::Policy p, graph::CommGraph g, ValueNormalizer v);
};

struct LossReport {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  int updates = 0;
  int skipped = 0;
};

/// Clipped-surrogate PPO over all buffers: epochs x minibatches Adam steps
/// on the model and, when learn_graph is set, an edge_update on the graph
/// logits for every mask in the minibatch.
LossReport ppo_update(Learner& learner, const std::vector<RolloutBuffer>& buffers, const TrainConfig& config,
                      Rng& rng);

/// Policy objective on one minibatch, built on `g` (exposed for gradient
/// checking). Advantages must already be normalized.
struct MinibatchData {
  policy::Batch batch;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> value_targets;  // normalized
};
struct MinibatchLoss {
  nn::Var total;
  nn::Var policy_loss;
  nn::Var value_loss;
  nn::Var entropy;
  policy::Evaluation eval;
};
MinibatchLoss minibatch_loss(nn::Graph& g, const policy::Policy& policy, const MinibatchData& data,
                             const TrainConfig& config);

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> totals;
};

/// Greedy evaluation. Episode e uses environment seed derive_seed(seed, {e}).
/// The eval-mode mask of the learned graph is used unless `mask_override`
/// is given. Parameters and graph are left untouched.
EvalResult evaluate_policy(const Learner& learner, int episodes, std::uint64_t seed,
                           const std::optional<Matrix>& mask_override = std::nullopt,
                           logs::ActionLogWriter* action_log = nullptr);

/// Where train() sends its artifacts; any member may be empty.
struct TrainSinks {
  std::function<void(const logs::TrainingRow&)> row;
  std::function<void(const std::string&)> matrix_line;
  logs::ActionLogWriter* action_log = nullptr;
  std::function<void(const Learner&, long long steps)> checkpoint;
};

struct TrainResult {
  Learner learner;
  std::vector<logs::TrainingRow> rows;
  long long iterations = 0;
  long long episodes = 0;
  long long env_steps = 0;
  long long matrix_lines = 0;
  int skipped_updates = 0;
};

/// Episode loop: per iteration one mask is sampled and `threads` episodes
/// are collected in parallel on it; updates run once buffers_per_update
/// episodes are pending (and on the remainder at the end). Deterministic in
/// (scenario, config).
TrainResult train(const Scenario& scenario, const TrainConfig& config, const TrainSinks& sinks = {});

/// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& xs);

}  // namespace cyberdef::train

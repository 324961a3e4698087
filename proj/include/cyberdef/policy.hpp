#pragma once

#include <cstdint>
#include <vector>

#include "cyberdef/autodiff.hpp"
#include "cyberdef/random.hpp"
#include "cyberdef/scenario.hpp"
#include "cyberdef/tensor.hpp"

namespace cyberdef::policy {

using nn::Graph;
using nn::Matrix;
using nn::Var;

struct PolicyConfig {
  int d_model = 64;
  int heads = 4;
  int encoder_blocks = 2;
  int decoder_blocks = 2;
  int ff_hidden = 64;
  double head_init_scale = 0.01;

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

/// Throws ConfigError naming the offending field.
void validate(const PolicyConfig& config);

enum class DecodeMode { Sample, Greedy };

struct JointActionSample {
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  Matrix mask_used;
};

/// Teacher-forced batch: `samples` joint observations with the actions taken
/// and the communication mask in force. Rows are sample-major, agent-minor.
struct Batch {
  int samples = 0;
  Matrix obs;                    // (samples * N) x obs_len
  std::vector<int> actions;      // samples * N
  Matrix available;              // (samples * N) x max action count, 1 = allowed; empty = all allowed
  std::vector<Matrix> masks;     // distinct N x N masks
  std::vector<int> mask_of;      // per sample, index into masks
};

/// Differentiable outputs of evaluate_actions, one row per (sample, agent).
struct Evaluation {
  Var log_probs;
  Var entropy;
  Var values;
  Var representations;
  /// Gate leaves whose gradients feed mask_gradients().
  Var encoder_gate;
  Var decoder_gate;
};

/// Graph-masked attention policy. Observation embedding per agent type,
/// encoder attending over the communication graph, per-agent value head and
/// an autoregressive decoder over the joint action.
///
/// Masks use the commgraph convention: mask(s, r) = 1 lets agent r read
/// agent s. In every attention layer keys and values come from per-agent
/// quantities that depend on that agent alone, so agent i's outputs depend
/// only on agents j with mask(j, i) = 1 regardless of depth.
class Policy {
 public:
  Policy(const Scenario& scenario, const PolicyConfig& config, std::uint64_t seed);

  const PolicyConfig& config() const { return config_; }
  nn::ParameterStore& parameters() { return params_; }
  const nn::ParameterStore& parameters() const { return params_; }

  int agent_count() const { return n_; }
  int obs_len() const { return obs_len_; }
  int action_count(int agent) const { return action_count_[static_cast<std::size_t>(agent)]; }
  int max_action_count() const { return max_actions_; }
  int type_of(int agent) const { return type_of_[static_cast<std::size_t>(agent)]; }
  int type_count() const { return static_cast<int>(type_members_.size()); }

  /// Agent embeddings, N x d.
  Matrix embed(const std::vector<ObservationVector>& joint_obs) const;
  /// Representations (N x d) and per-agent values (N).
  std::pair<Matrix, std::vector<double>> encode(const std::vector<ObservationVector>& joint_obs,
                                                const Matrix& mask) const;
  /// Autoregressive joint action in agent order. `available` is N x max
  /// action count (empty = everything allowed).
  JointActionSample act(const std::vector<ObservationVector>& joint_obs, const Matrix& mask, DecodeMode mode,
                        Rng& rng, const Matrix& available = {}) const;
  /// Per-agent action probabilities given the prefix of earlier actions
  /// (agents < i use `prefix`).
  std::vector<double> action_probabilities(const std::vector<ObservationVector>& joint_obs, const Matrix& mask,
                                           int agent, const std::vector<int>& prefix) const;

  /// Teacher-forced log-probabilities, entropies and values on `g`.
  Evaluation evaluate_actions(Graph& g, const Batch& batch) const;

  /// Gradient of the backpropagated loss with respect to each mask of the
  /// batch (mask convention, diagonal zero). Call after g.backward().
  std::vector<Matrix> mask_gradients(const Graph& g, const Evaluation& ev, const Batch& batch) const;

  /// Stacks joint observations into a batch row block.
  Matrix stack_observations(const std::vector<ObservationVector>& joint_obs) const;

 private:
  Var embed(Graph& g, const Matrix& obs, int samples) const;
  Var encode(Graph& g, Var embedding, Var gate, int samples) const;
  Var value_head(Graph& g, Var h) const;
  Var action_tokens(Graph& g, const std::vector<int>& actions, int samples) const;
  Var decode(Graph& g, Var x, Var tokens, Var gate, int samples, int queries) const;
  Var head_logits(Graph& g, int head, Var x) const;
  Var block(Graph& g, const std::string& prefix, Var x, Var kv_source, Var gate, const nn::AttentionLayout& layout) const;
  Var p(Graph& g, const std::string& name) const;

  Matrix encoder_gate(const Batch& batch) const;
  Matrix decoder_gate(const Batch& batch) const;

  PolicyConfig config_;
  int n_ = 0;
  int obs_len_ = 0;
  int max_actions_ = 0;
  std::vector<int> action_count_;
  std::vector<int> type_of_;
  std::vector<std::vector<int>> type_members_;
  std::vector<int> head_sizes_;  // distinct action counts, ascending
  std::vector<int> head_of_;
  mutable nn::ParameterStore params_;
};

}  // namespace cyberdef::policy

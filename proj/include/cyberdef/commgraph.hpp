#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

#include "cyberdef/optim.hpp"
#include "cyberdef/random.hpp"
#include "cyberdef/tensor.hpp"

namespace cyberdef::graph {

using nn::Matrix;

/// Learnable directed communication graph over N agents. Entry (s, r) of
/// the logit and mask matrices refers to the edge s -> r: agent r may attend
/// to agent s. Diagonal entries are always-on self edges.
struct CommGraph {
  int n_agents = 1;
  double sparsity = 1.0;
  double temperature = 1.0;
  Matrix logits;
  nn::AdamState adam;
  std::int64_t skipped_updates = 0;
};

/// Number of active off-diagonal edges: min(N^2 - N, ceil(S N^2)).
int edge_budget(int n_agents, double sparsity);

/// Logits ~ N(0, init_scale^2), temperature 1. ConfigError("sparsity_range")
/// unless 0 < sparsity <= 1, ConfigError("agent_count") if n_agents < 1.
CommGraph init_graph(int n_agents, double sparsity, std::uint64_t seed, double init_scale = 0.01);

enum class MaskMode { Train, Eval };

/// A selected mask together with what the straight-through gradient needs.
struct MaskSample {
  Matrix mask;       // 0/1, diagonal 1
  Matrix perturbed;  // logits (+ temperature-scaled Gumbel noise in train mode)
  double threshold = 0.0;
  double temperature = 1.0;
};

/// Global top-k over off-diagonal entries; ties go to the smaller
/// (row, col). Eval mode ignores `rng` and is a pure function of the logits.
MaskSample sample_mask(const CommGraph& graph, MaskMode mode, Rng& rng);

/// Eval-mode mask without a random stream.
Matrix eval_mask(const CommGraph& graph);

Matrix identity_mask(int n_agents);
Matrix complete_mask(int n_agents);

/// Continuous selection score sigmoid((perturbed - threshold) / temperature)
/// off the diagonal, 1 on it.
Matrix relaxed_scores(const MaskSample& sample);

/// Logit gradient obtained by passing `mask_grad` through the relaxed score;
/// diagonal entries are zero.
Matrix straight_through_grad(const MaskSample& sample, const Matrix& mask_grad);

/// One ascent step on the logits along `mask_grad`, the gradient of the
/// training objective (to be increased) with respect to the mask entries.
/// Uses Adam with the given learning rate. Non-finite gradients skip the
/// step, increment skipped_updates and return false.
bool edge_update(CommGraph& graph, const MaskSample& sample, const Matrix& mask_grad, double lr);

/// Ascent step on the logits from an already straight-through logit
/// gradient (for example a sum over several masks). Same skipping rules.
bool apply_logit_gradient(CommGraph& graph, const Matrix& logit_grad, double lr);

/// Geometric schedule from `start` at progress 0 to `end` at progress 1.
double annealed_temperature(double start, double end, double progress);

/// "<episode> | r0c0 r0c1 ... / r1c0 ..." with 0/1 entries.
std::string serialize_matrix(long long episode, const Matrix& mask);
/// Inverse of serialize_matrix. ConfigError("matrix_parse") on malformed input.
std::pair<long long, Matrix> parse_matrix_line(std::string_view line);

int off_diagonal_count(const Matrix& mask);

}  // namespace cyberdef::graph

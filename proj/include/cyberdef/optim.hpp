#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cyberdef/tensor.hpp"

namespace cyberdef::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators, one pair per parameter, shaped like it.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step = 0;
  std::int64_t skipped = 0;
};

/// One bias-corrected Adam update of `values` in place. If any gradient is
/// non-finite nothing changes, `state.skipped` is incremented and false is
/// returned.
bool adam_step(std::span<Matrix* const> values, std::span<const Matrix* const> grads, AdamState& state,
               const AdamConfig& config);

/// Updates every parameter of the store from its own gradient.
bool adam_step(ParameterStore& store, AdamState& state, const AdamConfig& config);

/// Rescales all gradients so that their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

}  // namespace cyberdef::nn

#include "cyberdef/optim.hpp"

#include <cmath>

#include "cyberdef/errors.hpp"

namespace cyberdef::nn {

bool adam_step(std::span<Matrix* const> values, std::span<const Matrix* const> grads, AdamState& state,
               const AdamConfig& config) {
  if (values.size() != grads.size()) throw ContractViolation("adam_step: one gradient per parameter");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i]->rows() != grads[i]->rows() || values[i]->cols() != grads[i]->cols())
      throw ContractViolation("adam_step: gradient shape differs from parameter");
  for (const auto* g : grads)
    if (!g->allFinite()) {
      ++state.skipped;
      return false;
    }
  if (state.m.empty()) {
    for (const auto* x : values) {
      state.m.push_back(Matrix::Zero(x->rows(), x->cols()));
      state.v.push_back(Matrix::Zero(x->rows(), x->cols()));
    }
  }
  if (state.m.size() != values.size()) throw ContractViolation("adam_step: state belongs to other parameters");

  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = *grads[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseAbs2();
    values[i]->array() -= config.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.eps);
  }
  return true;
}

bool adam_step(ParameterStore& store, AdamState& state, const AdamConfig& config) {
  std::vector<Matrix*> values;
  std::vector<const Matrix*> grads;
  for (auto* p : store.all()) {
    if (p->grad.size() == 0) p->zero_grad();
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  return adam_step(values, grads, state, config);
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (auto* p : store.all())
    if (p->grad.size() != 0) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm && max_norm > 0.0)
    for (auto* p : store.all())
      if (p->grad.size() != 0) p->grad *= max_norm / norm;
  return norm;
}

}  // namespace cyberdef::nn

#include "cyberdef/commgraph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <vector>

#include "cyberdef/errors.hpp"

namespace cyberdef::graph {

int edge_budget(int n_agents, double sparsity) {
  const double n2 = static_cast<double>(n_agents) * n_agents;
  // The tolerance keeps products such as 0.1 * 100 from rounding up.
  const double k = std::ceil(sparsity * n2 - 1e-9);
  return static_cast<int>(std::min(n2 - n_agents, std::max(0.0, k)));
}

CommGraph init_graph(int n_agents, double sparsity, std::uint64_t seed, double init_scale) {
  if (n_agents < 1) throw ConfigError("agent_count", "communication graph needs at least one agent");
  if (!(sparsity > 0.0 && sparsity <= 1.0))
    throw ConfigError("sparsity_range", "sparsity must lie in (0, 1], got " + std::to_string(sparsity));
  CommGraph g;
  g.n_agents = n_agents;
  g.sparsity = sparsity;
  g.logits = Matrix::Zero(n_agents, n_agents);
  Rng rng(derive_seed(seed, {0x67726170}));
  for (int r = 0; r < n_agents; ++r)
    for (int c = 0; c < n_agents; ++c)
      if (r != c) g.logits(r, c) = init_scale * rng.normal();
  return g;
}

MaskSample sample_mask(const CommGraph& graph, MaskMode mode, Rng& rng) {
  const int n = graph.n_agents;
  MaskSample s;
  s.temperature = graph.temperature;
  s.perturbed = graph.logits;
  if (mode == MaskMode::Train)
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (r != c) s.perturbed(r, c) += graph.temperature * rng.gumbel();

  std::vector<std::pair<int, int>> cells;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (r != c) cells.emplace_back(r, c);
  std::stable_sort(cells.begin(), cells.end(), [&](const auto& a, const auto& b) {
    return s.perturbed(a.first, a.second) > s.perturbed(b.first, b.second);
  });
  const int k = edge_budget(n, graph.sparsity);
  s.mask = Matrix::Identity(n, n);
  for (int i = 0; i < k; ++i) s.mask(cells[i].first, cells[i].second) = 1.0;
  if (k > 0) {
    const double vk = s.perturbed(cells[k - 1].first, cells[k - 1].second);
    if (k < static_cast<int>(cells.size()))
      s.threshold = 0.5 * (vk + s.perturbed(cells[k].first, cells[k].second));
    else
      s.threshold = vk - graph.temperature;
  }
  return s;
}

Matrix eval_mask(const CommGraph& graph) {
  Rng unused(0);
  return sample_mask(graph, MaskMode::Eval, unused).mask;
}

Matrix identity_mask(int n_agents) { return Matrix::Identity(n_agents, n_agents); }

Matrix complete_mask(int n_agents) { return Matrix::Ones(n_agents, n_agents); }

Matrix relaxed_scores(const MaskSample& sample) {
  const auto n = sample.perturbed.rows();
  Matrix r = Matrix::Ones(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) r(i, j) = 1.0 / (1.0 + std::exp(-(sample.perturbed(i, j) - sample.threshold) / sample.temperature));
  return r;
}

Matrix straight_through_grad(const MaskSample& sample, const Matrix& mask_grad) {
  const auto n = sample.perturbed.rows();
  if (mask_grad.rows() != n || mask_grad.cols() != n)
    throw ContractViolation("straight_through_grad: gradient must be N x N");
  const Matrix r = relaxed_scores(sample);
  Matrix g = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) g(i, j) = mask_grad(i, j) * r(i, j) * (1.0 - r(i, j)) / sample.temperature;
  return g;
}

bool edge_update(CommGraph& graph, const MaskSample& sample, const Matrix& mask_grad, double lr) {
  return apply_logit_gradient(graph, straight_through_grad(sample, mask_grad), lr);
}

bool apply_logit_gradient(CommGraph& graph, const Matrix& logit_grad, double lr) {
  if (logit_grad.rows() != graph.n_agents || logit_grad.cols() != graph.n_agents)
    throw ContractViolation("apply_logit_gradient: gradient must be N x N");
  Matrix descent = -logit_grad;
  descent.diagonal().setZero();
  if (!descent.allFinite()) {
    ++graph.skipped_updates;
    return false;
  }
  nn::AdamConfig cfg;
  cfg.lr = lr;
  Matrix* values[] = {&graph.logits};
  const Matrix* grads[] = {&descent};
  const bool ok = nn::adam_step(values, grads, graph.adam, cfg);
  if (!ok) ++graph.skipped_updates;
  return ok;
}

double annealed_temperature(double start, double end, double progress) {
  progress = std::clamp(progress, 0.0, 1.0);
  return start * std::pow(end / start, progress);
}

std::string serialize_matrix(long long episode, const Matrix& mask) {
  std::string out = std::to_string(episode) + " |";
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    if (r > 0) out += " /";
    for (Eigen::Index c = 0; c < mask.cols(); ++c) out += mask(r, c) != 0.0 ? " 1" : " 0";
  }
  return out;
}

std::pair<long long, Matrix> parse_matrix_line(std::string_view line) {
  const auto fail = [&](const std::string& why) {
    return ConfigError("matrix_parse", why + " in '" + std::string(line) + "'");
  };
  const auto bar = line.find('|');
  if (bar == std::string_view::npos) throw fail("missing '|'");
  std::string_view head = line.substr(0, bar);
  while (!head.empty() && head.back() == ' ') head.remove_suffix(1);
  long long episode = 0;
  auto [p, ec] = std::from_chars(head.data(), head.data() + head.size(), episode);
  if (ec != std::errc() || p != head.data() + head.size() || head.empty()) throw fail("bad episode index");

  std::vector<std::vector<double>> rows(1);
  std::istringstream in{std::string(line.substr(bar + 1))};
  std::string tok;
  while (in >> tok) {
    if (tok == "/")
      rows.emplace_back();
    else if (tok == "0" || tok == "1")
      rows.back().push_back(tok == "1" ? 1.0 : 0.0);
    else
      throw fail("unexpected token '" + tok + "'");
  }
  const auto n = rows.size();
  for (const auto& r : rows)
    if (r.size() != n) throw fail("matrix is not square");
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return {episode, m};
}

int off_diagonal_count(const Matrix& mask) {
  int k = 0;
  for (Eigen::Index r = 0; r < mask.rows(); ++r)
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
      if (r != c && mask(r, c) != 0.0) ++k;
  return k;
}

}  // namespace cyberdef::graph

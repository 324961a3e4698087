#include "cyberdef/policy.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cyberdef/errors.hpp"

namespace cyberdef::policy {

namespace {

Matrix normal_matrix(Rng& rng, int rows, int cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

void add_linear(nn::ParameterStore& store, Rng& rng, const std::string& name, int in, int out, double scale = 1.0) {
  store.add(name + ".w", normal_matrix(rng, in, out, scale / std::sqrt(static_cast<double>(in))));
  store.add(name + ".b", Matrix::Zero(1, out));
}

void add_norm(nn::ParameterStore& store, const std::string& name, int d) {
  store.add(name + ".g", Matrix::Ones(1, d));
  store.add(name + ".b", Matrix::Zero(1, d));
}

void add_block(nn::ParameterStore& store, Rng& rng, const std::string& name, int d, int ff) {
  add_linear(store, rng, name + ".q", d, d);
  // A key bias shifts every score of a query equally, so it is left out.
  store.add(name + ".k.w", normal_matrix(rng, d, d, 1.0 / std::sqrt(static_cast<double>(d))));
  add_linear(store, rng, name + ".v", d, d);
  add_linear(store, rng, name + ".o", d, d);
  add_norm(store, name + ".ln1", d);
  add_linear(store, rng, name + ".ff1", d, ff);
  add_linear(store, rng, name + ".ff2", ff, d);
  add_norm(store, name + ".ln2", d);
}

}  // namespace

void validate(const PolicyConfig& c) {
  if (c.d_model < 1) throw ConfigError("d_model", "model width must be positive");
  if (c.heads < 1 || c.d_model % c.heads != 0)
    throw ConfigError("heads", "head count must be positive and divide the model width");
  if (c.encoder_blocks < 1) throw ConfigError("encoder_blocks", "need at least one encoder block");
  if (c.decoder_blocks < 1) throw ConfigError("decoder_blocks", "need at least one decoder block");
  if (c.ff_hidden < 1) throw ConfigError("ff_hidden", "feed-forward width must be positive");
  if (!(c.head_init_scale > 0.0) || !std::isfinite(c.head_init_scale))
    throw ConfigError("head_init_scale", "head initialization scale must be positive");
}

Policy::Policy(const Scenario& scenario, const PolicyConfig& config, std::uint64_t seed) : config_(config) {
  validate(config);
  n_ = static_cast<int>(scenario.agents.size());
  if (n_ < 1) throw ContractViolation("Policy: scenario has no agents");
  obs_len_ = static_cast<int>(scenario.obs_len());

  std::map<std::pair<std::size_t, std::size_t>, int> type_ids;
  for (const auto& a : scenario.agents) {
    const int m = static_cast<int>(a.action_space.size());
    action_count_.push_back(m);
    max_actions_ = std::max(max_actions_, m);
    const auto key = std::make_pair(a.raw_obs_len, a.action_space.size());
    auto [it, fresh] = type_ids.emplace(key, static_cast<int>(type_members_.size()));
    if (fresh) type_members_.emplace_back();
    type_of_.push_back(it->second);
    type_members_[static_cast<std::size_t>(it->second)].push_back(a.id);
    if (std::find(head_sizes_.begin(), head_sizes_.end(), m) == head_sizes_.end()) head_sizes_.push_back(m);
  }
  std::sort(head_sizes_.begin(), head_sizes_.end());
  for (int m : action_count_)
    head_of_.push_back(static_cast<int>(std::find(head_sizes_.begin(), head_sizes_.end(), m) - head_sizes_.begin()));

  const int d = config.d_model;
  Rng rng(derive_seed(seed, {0x706f6c}));
  for (int t = 0; t < type_count(); ++t) add_linear(params_, rng, "embed.t" + std::to_string(t), obs_len_, d);
  add_norm(params_, "enc.ln0", d);
  for (int b = 0; b < config.encoder_blocks; ++b) add_block(params_, rng, "enc" + std::to_string(b), d, config.ff_hidden);
  add_linear(params_, rng, "value.1", d, d);
  add_linear(params_, rng, "value.2", d, 1, 0.1);
  params_.add("dec.query_pos", normal_matrix(rng, n_, d, 0.1));
  params_.add("dec.token_pos", normal_matrix(rng, n_ + 1, d, 0.1));
  for (int m : head_sizes_) params_.add("dec.act" + std::to_string(m), normal_matrix(rng, m, d, 0.1));
  for (int b = 0; b < config.decoder_blocks; ++b) add_block(params_, rng, "dec" + std::to_string(b), d, config.ff_hidden);
  for (int m : head_sizes_) {
    add_linear(params_, rng, "head" + std::to_string(m) + ".1", d, d);
    add_linear(params_, rng, "head" + std::to_string(m) + ".2", d, m, config.head_init_scale);
  }
}

Var Policy::p(Graph& g, const std::string& name) const {
  auto* param = params_.find(name);
  if (!param) throw ContractViolation("Policy: missing parameter " + name);
  return g.param(*param);
}

Matrix Policy::stack_observations(const std::vector<ObservationVector>& joint_obs) const {
  if (static_cast<int>(joint_obs.size()) != n_) throw ContractViolation("Policy: one observation per agent expected");
  Matrix out(n_, obs_len_);
  for (int i = 0; i < n_; ++i) {
    const auto& o = joint_obs[static_cast<std::size_t>(i)];
    if (static_cast<int>(o.size()) != obs_len_)
      throw ContractViolation("Policy: observation of agent " + std::to_string(i) + " has length " +
                              std::to_string(o.size()) + ", expected " + std::to_string(obs_len_));
    for (int c = 0; c < obs_len_; ++c) out(i, c) = o[static_cast<std::size_t>(c)];
  }
  return out;
}

Var Policy::embed(Graph& g, const Matrix& obs, int samples) const {
  if (obs.rows() != static_cast<Eigen::Index>(samples) * n_ || obs.cols() != obs_len_)
    throw ContractViolation("Policy: observation batch has the wrong shape");
  std::vector<Var> parts;
  std::vector<std::vector<int>> rows;
  for (int t = 0; t < type_count(); ++t) {
    std::vector<int> r;
    for (int s = 0; s < samples; ++s)
      for (int i : type_members_[static_cast<std::size_t>(t)]) r.push_back(s * n_ + i);
    Matrix x(static_cast<Eigen::Index>(r.size()), obs_len_);
    for (std::size_t k = 0; k < r.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = obs.row(r[k]);
    const std::string name = "embed.t" + std::to_string(t);
    parts.push_back(g.gelu(g.linear(g.constant(std::move(x)), p(g, name + ".w"), p(g, name + ".b"))));
    rows.push_back(std::move(r));
  }
  return g.assemble_rows(parts, rows, samples * n_);
}

Var Policy::block(Graph& g, const std::string& pre, Var x, Var kv, Var gate, const nn::AttentionLayout& layout) const {
  const auto lin = [&](Var in, const std::string& name) { return g.linear(in, p(g, pre + name + ".w"), p(g, pre + name + ".b")); };
  const Var att = g.attention(lin(x, ".q"), g.matmul(kv, p(g, pre + ".k.w")), lin(kv, ".v"), gate, layout);
  const Var x1 = g.layer_norm(g.add(x, lin(att, ".o")), p(g, pre + ".ln1.g"), p(g, pre + ".ln1.b"));
  const Var ff = lin(g.gelu(lin(x1, ".ff1")), ".ff2");
  return g.layer_norm(g.add(x1, ff), p(g, pre + ".ln2.g"), p(g, pre + ".ln2.b"));
}

Var Policy::encode(Graph& g, Var embedding, Var gate, int samples) const {
  const Var h0 = g.layer_norm(embedding, p(g, "enc.ln0.g"), p(g, "enc.ln0.b"));
  const nn::AttentionLayout layout{samples, n_, n_, config_.heads};
  Var h = h0;
  for (int b = 0; b < config_.encoder_blocks; ++b) h = block(g, "enc" + std::to_string(b), h, h0, gate, layout);
  return h;
}

Var Policy::value_head(Graph& g, Var h) const {
  const Var hidden = g.gelu(g.linear(h, p(g, "value.1.w"), p(g, "value.1.b")));
  return g.linear(hidden, p(g, "value.2.w"), p(g, "value.2.b"));
}

Var Policy::action_tokens(Graph& g, const std::vector<int>& actions, int samples) const {
  std::vector<Var> parts;
  std::vector<std::vector<int>> rows;
  std::vector<int> start_rows;
  for (int s = 0; s < samples; ++s) start_rows.push_back(s * (n_ + 1));
  parts.push_back(g.constant(Matrix::Zero(samples, config_.d_model)));
  rows.push_back(start_rows);
  for (std::size_t h = 0; h < head_sizes_.size(); ++h) {
    std::vector<int> r, idx;
    for (int s = 0; s < samples; ++s)
      for (int i = 0; i < n_; ++i)
        if (head_of_[static_cast<std::size_t>(i)] == static_cast<int>(h)) {
          r.push_back(s * (n_ + 1) + 1 + i);
          idx.push_back(actions[static_cast<std::size_t>(s * n_ + i)]);
        }
    if (r.empty()) continue;
    parts.push_back(g.gather_rows(p(g, "dec.act" + std::to_string(head_sizes_[h])), idx));
    rows.push_back(std::move(r));
  }
  std::vector<int> pos;
  for (int s = 0; s < samples; ++s)
    for (int j = 0; j <= n_; ++j) pos.push_back(j);
  return g.add(g.assemble_rows(parts, rows, samples * (n_ + 1)), g.gather_rows(p(g, "dec.token_pos"), pos));
}

Var Policy::decode(Graph& g, Var x, Var tokens, Var gate, int samples, int queries) const {
  const nn::AttentionLayout layout{samples, queries, n_ + 1, config_.heads};
  for (int b = 0; b < config_.decoder_blocks; ++b) x = block(g, "dec" + std::to_string(b), x, tokens, gate, layout);
  return x;
}

Var Policy::head_logits(Graph& g, int head, Var x) const {
  const std::string pre = "head" + std::to_string(head_sizes_[static_cast<std::size_t>(head)]);
  const Var hidden = g.gelu(g.linear(x, p(g, pre + ".1.w"), p(g, pre + ".1.b")));
  return g.linear(hidden, p(g, pre + ".2.w"), p(g, pre + ".2.b"));
}

Matrix Policy::encoder_gate(const Batch& batch) const {
  Matrix gate(static_cast<Eigen::Index>(batch.samples) * n_, n_);
  for (int s = 0; s < batch.samples; ++s) {
    const auto& m = batch.masks[static_cast<std::size_t>(batch.mask_of[static_cast<std::size_t>(s)])];
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) gate(s * n_ + i, j) = (i == j) ? 1.0 : m(j, i);
  }
  return gate;
}

Matrix Policy::decoder_gate(const Batch& batch) const {
  Matrix gate = Matrix::Zero(static_cast<Eigen::Index>(batch.samples) * n_, n_ + 1);
  for (int s = 0; s < batch.samples; ++s) {
    const auto& m = batch.masks[static_cast<std::size_t>(batch.mask_of[static_cast<std::size_t>(s)])];
    for (int i = 0; i < n_; ++i) {
      gate(s * n_ + i, 0) = 1.0;
      for (int j = 0; j < i; ++j) gate(s * n_ + i, 1 + j) = m(j, i);
    }
  }
  return gate;
}

Evaluation Policy::evaluate_actions(Graph& g, const Batch& batch) const {
  const int S = batch.samples;
  const int rows_total = S * n_;
  if (S < 1) throw ContractViolation("evaluate_actions: empty batch");
  if (static_cast<int>(batch.actions.size()) != rows_total || static_cast<int>(batch.mask_of.size()) != S)
    throw ContractViolation("evaluate_actions: batch sizes disagree");
  for (int k : batch.mask_of)
    if (k < 0 || k >= static_cast<int>(batch.masks.size())) throw ContractViolation("evaluate_actions: bad mask index");
  for (const auto& m : batch.masks)
    if (m.rows() != n_ || m.cols() != n_) throw ContractViolation("evaluate_actions: mask must be N x N");
  for (int r = 0; r < rows_total; ++r) {
    const int a = batch.actions[static_cast<std::size_t>(r)];
    if (a < 0 || a >= action_count_[static_cast<std::size_t>(r % n_)])
      throw ContractViolation("evaluate_actions: action index out of range");
  }

  Evaluation ev;
  const Var e = embed(g, batch.obs, S);
  ev.encoder_gate = g.leaf(encoder_gate(batch));
  const Var h = encode(g, e, ev.encoder_gate, S);
  ev.representations = h;
  ev.values = value_head(g, h);

  std::vector<int> agent_rows;
  for (int s = 0; s < S; ++s)
    for (int i = 0; i < n_; ++i) agent_rows.push_back(i);
  const Var x = g.add(h, g.gather_rows(p(g, "dec.query_pos"), agent_rows));
  const Var tokens = action_tokens(g, batch.actions, S);
  ev.decoder_gate = g.leaf(decoder_gate(batch));
  const Var y = decode(g, x, tokens, ev.decoder_gate, S, n_);

  std::vector<Var> lp_parts, ent_parts;
  std::vector<std::vector<int>> part_rows;
  for (std::size_t hd = 0; hd < head_sizes_.size(); ++hd) {
    const int m = head_sizes_[hd];
    std::vector<int> r, acts;
    for (int row = 0; row < rows_total; ++row)
      if (head_of_[static_cast<std::size_t>(row % n_)] == static_cast<int>(hd)) {
        r.push_back(row);
        acts.push_back(batch.actions[static_cast<std::size_t>(row)]);
      }
    if (r.empty()) continue;
    Matrix avail = Matrix::Ones(static_cast<Eigen::Index>(r.size()), m);
    if (batch.available.size() != 0)
      for (std::size_t k = 0; k < r.size(); ++k) avail.row(static_cast<Eigen::Index>(k)) = batch.available.row(r[k]).leftCols(m);
    for (std::size_t k = 0; k < r.size(); ++k)
      if (avail(static_cast<Eigen::Index>(k), acts[k]) == 0.0)
        throw ContractViolation("evaluate_actions: recorded action is unavailable");
    const Var logits = head_logits(g, static_cast<int>(hd), g.gather_rows(y, r));
    const Var lp = g.log_softmax_masked(logits, avail);
    lp_parts.push_back(g.gather_cols(lp, acts));
    const Var plogp = g.mul(g.exp(lp), g.mul(lp, g.constant(avail)));
    ent_parts.push_back(g.scale(g.row_sum(plogp), -1.0));
    part_rows.push_back(std::move(r));
  }
  ev.log_probs = g.assemble_rows(lp_parts, part_rows, rows_total);
  ev.entropy = g.assemble_rows(ent_parts, part_rows, rows_total);
  return ev;
}

std::vector<Matrix> Policy::mask_gradients(const Graph& g, const Evaluation& ev, const Batch& batch) const {
  std::vector<Matrix> out(batch.masks.size(), Matrix::Zero(n_, n_));
  const auto& ge = g.grad(ev.encoder_gate);
  const auto& gd = g.grad(ev.decoder_gate);
  for (int s = 0; s < batch.samples; ++s) {
    auto& m = out[static_cast<std::size_t>(batch.mask_of[static_cast<std::size_t>(s)])];
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        if (i == j) continue;
        if (ge.size() != 0) m(j, i) += ge(s * n_ + i, j);
        if (j < i && gd.size() != 0) m(j, i) += gd(s * n_ + i, 1 + j);
      }
  }
  return out;
}

Matrix Policy::embed(const std::vector<ObservationVector>& joint_obs) const {
  Graph g(false);
  return g.value(embed(g, stack_observations(joint_obs), 1));
}

std::pair<Matrix, std::vector<double>> Policy::encode(const std::vector<ObservationVector>& joint_obs,
                                                      const Matrix& mask) const {
  Batch b;
  b.samples = 1;
  b.masks = {mask};
  b.mask_of = {0};
  Graph g(false);
  const Var h = encode(g, embed(g, stack_observations(joint_obs), 1), g.constant(encoder_gate(b)), 1);
  const Matrix& v = g.value(value_head(g, h));
  return {g.value(h), std::vector<double>(v.data(), v.data() + v.size())};
}

JointActionSample Policy::act(const std::vector<ObservationVector>& joint_obs, const Matrix& mask, DecodeMode mode,
                              Rng& rng, const Matrix& available) const {
  if (mask.rows() != n_ || mask.cols() != n_) throw ContractViolation("act: mask must be N x N");
  Batch b;
  b.samples = 1;
  b.masks = {mask};
  b.mask_of = {0};
  Graph g(false);
  const Var h = encode(g, embed(g, stack_observations(joint_obs), 1), g.constant(encoder_gate(b)), 1);
  const Matrix& v = g.value(value_head(g, h));
  std::vector<int> agent_rows(static_cast<std::size_t>(n_));
  for (int i = 0; i < n_; ++i) agent_rows[static_cast<std::size_t>(i)] = i;
  const Var x = g.add(h, g.gather_rows(p(g, "dec.query_pos"), agent_rows));
  const Matrix dgate = decoder_gate(b);

  JointActionSample out;
  out.mask_used = mask;
  out.actions.assign(static_cast<std::size_t>(n_), 0);
  for (int i = 0; i < n_; ++i) {
    const int m = action_count_[static_cast<std::size_t>(i)];
    Matrix avail = Matrix::Ones(1, m);
    if (available.size() != 0) avail = available.row(i).leftCols(m);
    const Var tokens = action_tokens(g, out.actions, 1);
    const Var y = decode(g, g.gather_rows(x, std::vector<int>{i}), tokens, g.constant(dgate.row(i)), 1, 1);
    const Var lp = g.log_softmax_masked(head_logits(g, head_of_[static_cast<std::size_t>(i)], y), avail);
    const Matrix& row = g.value(lp);
    int chosen = -1;
    if (mode == DecodeMode::Greedy) {
      for (int a = 0; a < m; ++a)
        if (avail(0, a) != 0.0 && (chosen < 0 || row(0, a) > row(0, chosen))) chosen = a;
    } else {
      const double u = rng.uniform();
      double acc = 0.0;
      for (int a = 0; a < m; ++a) {
        if (avail(0, a) == 0.0) continue;
        acc += std::exp(row(0, a));
        chosen = a;
        if (u < acc) break;
      }
    }
    out.actions[static_cast<std::size_t>(i)] = chosen;
    out.log_probs.push_back(row(0, chosen));
    out.values.push_back(v(i, 0));
  }
  return out;
}

std::vector<double> Policy::action_probabilities(const std::vector<ObservationVector>& joint_obs, const Matrix& mask,
                                                 int agent, const std::vector<int>& prefix) const {
  if (agent < 0 || agent >= n_) throw ContractViolation("action_probabilities: agent out of range");
  Batch b;
  b.samples = 1;
  b.masks = {mask};
  b.mask_of = {0};
  b.obs = stack_observations(joint_obs);
  b.actions.assign(static_cast<std::size_t>(n_), 0);
  for (int j = 0; j < agent && j < static_cast<int>(prefix.size()); ++j)
    b.actions[static_cast<std::size_t>(j)] = prefix[static_cast<std::size_t>(j)];
  std::vector<double> probs;
  for (int a = 0; a < action_count_[static_cast<std::size_t>(agent)]; ++a) {
    b.actions[static_cast<std::size_t>(agent)] = a;
    Graph g(false);
    const auto ev = evaluate_actions(g, b);
    probs.push_back(std::exp(g.value(ev.log_probs)(agent, 0)));
  }
  return probs;
}

}  // namespace cyberdef::policy

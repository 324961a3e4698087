#include "cyberdef/trainer.hpp"

#include <charconv>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <thread>

#include "cyberdef/errors.hpp"
#include "cyberdef/optim.hpp"

namespace cyberdef::train {

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size() || text.empty())
    throw ConfigError("bad_value", "cannot parse '" + std::string(text) + "' for " + std::string(key));
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("bad_value", "expected true/false for " + std::string(key) + ", got '" + std::string(text) + "'");
}

using Setter = std::function<void(TrainConfig&, std::string_view key, std::string_view value)>;

template <typename T>
Setter number(T TrainConfig::*field) {
  return [field](TrainConfig& c, std::string_view k, std::string_view v) { c.*field = parse_number<T>(k, v); };
}

template <typename T>
Setter model_number(T policy::PolicyConfig::*field) {
  return [field](TrainConfig& c, std::string_view k, std::string_view v) { c.model.*field = parse_number<T>(k, v); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"total_steps", number(&TrainConfig::total_steps)},
      {"threads", number(&TrainConfig::threads)},
      {"horizon", number(&TrainConfig::horizon)},
      {"gamma", number(&TrainConfig::gamma)},
      {"gae_lambda", number(&TrainConfig::gae_lambda)},
      {"ppo_clip", number(&TrainConfig::ppo_clip)},
      {"entropy_coef", number(&TrainConfig::entropy_coef)},
      {"value_coef", number(&TrainConfig::value_coef)},
      {"epochs", number(&TrainConfig::epochs)},
      {"minibatches", number(&TrainConfig::minibatches)},
      {"buffers_per_update", number(&TrainConfig::buffers_per_update)},
      {"log_interval", number(&TrainConfig::log_interval)},
      {"eval_interval", number(&TrainConfig::eval_interval)},
      {"eval_episodes", number(&TrainConfig::eval_episodes)},
      {"seed", number(&TrainConfig::seed)},
      {"sparsity", number(&TrainConfig::sparsity)},
      {"temperature_start", number(&TrainConfig::temperature_start)},
      {"temperature_end", number(&TrainConfig::temperature_end)},
      {"lr", number(&TrainConfig::lr)},
      {"edge_lr", number(&TrainConfig::edge_lr)},
      {"max_grad_norm", number(&TrainConfig::max_grad_norm)},
      {"value_norm", [](TrainConfig& c, std::string_view k, std::string_view v) { c.value_norm = parse_bool(k, v); }},
      {"value_norm_beta", number(&TrainConfig::value_norm_beta)},
      {"learn_graph", [](TrainConfig& c, std::string_view k, std::string_view v) { c.learn_graph = parse_bool(k, v); }},
      {"model.d_model", model_number(&policy::PolicyConfig::d_model)},
      {"model.heads", model_number(&policy::PolicyConfig::heads)},
      {"model.encoder_blocks", model_number(&policy::PolicyConfig::encoder_blocks)},
      {"model.decoder_blocks", model_number(&policy::PolicyConfig::decoder_blocks)},
      {"model.ff_hidden", model_number(&policy::PolicyConfig::ff_hidden)},
      {"model.head_init_scale", model_number(&policy::PolicyConfig::head_init_scale)},
  };
  return table;
}

void require(bool ok, const char* key, const std::string& msg) {
  if (!ok) throw ConfigError(key, msg);
}

}  // namespace

void validate(const TrainConfig& c) {
  require(c.total_steps > 0, "total_steps", "must be positive");
  require(c.threads >= 1, "threads", "must be at least 1");
  require(c.horizon >= 0, "horizon", "must be positive (0 keeps the scenario value)");
  require(c.gamma < 0.0 || c.gamma <= 1.0, "gamma", "must lie in [0, 1]");
  require(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0, "gae_lambda", "must lie in [0, 1]");
  require(c.ppo_clip > 0.0 && c.ppo_clip < 1.0, "ppo_clip", "must lie in (0, 1)");
  require(c.entropy_coef >= 0.0, "entropy_coef", "must be non-negative");
  require(c.value_coef >= 0.0, "value_coef", "must be non-negative");
  require(c.epochs >= 1, "epochs", "must be at least 1");
  require(c.minibatches >= 1, "minibatches", "must be at least 1");
  require(c.buffers_per_update >= 1, "buffers_per_update", "must be at least 1");
  require(c.log_interval >= 1, "log_interval", "must be at least 1");
  require(c.eval_interval >= 1, "eval_interval", "must be at least 1");
  require(c.eval_episodes >= 0, "eval_episodes", "must be non-negative");
  require(c.sparsity > 0.0 && c.sparsity <= 1.0, "sparsity", "must lie in (0, 1]");
  require(c.temperature_start > 0.0 && c.temperature_end > 0.0, "temperature", "temperatures must be positive");
  require(c.lr > 0.0, "lr", "must be positive");
  require(c.edge_lr >= 0.0, "edge_lr", "must be non-negative");
  require(c.max_grad_norm > 0.0, "max_grad_norm", "must be positive");
  require(c.value_norm_beta > 0.0 && c.value_norm_beta < 1.0, "value_norm_beta", "must lie in (0, 1)");
  policy::validate(c.model);
}

void apply_override(TrainConfig& config, std::string_view key, std::string_view value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown_key", "unknown config key '" + std::string(key) + "'");
  it->second(config, key, value);
}

std::vector<std::string> override_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

Scenario effective_scenario(const Scenario& scenario, const TrainConfig& config) {
  Scenario s = scenario;
  if (config.horizon > 0) s.horizon = config.horizon;
  if (config.gamma >= 0.0) s.gamma = config.gamma;
  validate_scenario(s);
  return s;
}

long long iteration_count(const TrainConfig& config, int horizon) {
  const long long per_iteration = static_cast<long long>(config.threads) * horizon;
  const long long n = config.total_steps / per_iteration;
  if (n < 1)
    throw ConfigError("total_steps", "total_steps " + std::to_string(config.total_steps) +
                                         " is smaller than one iteration (threads x horizon = " +
                                         std::to_string(per_iteration) + ")");
  return n;
}

Learner::Learner(const Scenario& s, const policy::PolicyConfig& model, const TrainConfig& config)
    : scenario(s),
      policy(s, model, derive_seed(config.seed, {0x6d6f64})),
      graph(graph::init_graph(static_cast<int>(s.agents.size()), config.sparsity, derive_seed(config.seed, {0x6772}))) {
  vnorm.enabled = config.value_norm;
  vnorm.beta = config.value_norm_beta;
}

Learner::Learner(Scenario s, policy::Policy p, graph::CommGraph g, ValueNormalizer v)
    : scenario(std::move(s)), policy(std::move(p)), graph(std::move(g)), vnorm(v) {}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

MinibatchLoss minibatch_loss(nn::Graph& g, const policy::Policy& policy, const MinibatchData& data,
                             const TrainConfig& config) {
  const auto column = [](const std::vector<double>& v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
    return m;
  };
  MinibatchLoss out;
  out.eval = policy.evaluate_actions(g, data.batch);
  const nn::Var adv = g.constant(column(data.advantages));
  const nn::Var ratio = g.exp(g.sub(out.eval.log_probs, g.constant(column(data.old_log_probs))));
  const nn::Var surr1 = g.mul(ratio, adv);
  const nn::Var surr2 = g.mul(g.clamp(ratio, 1.0 - config.ppo_clip, 1.0 + config.ppo_clip), adv);
  out.policy_loss = g.scale(g.mean(g.minimum(surr1, surr2)), -1.0);
  out.value_loss = g.mean(g.square(g.sub(out.eval.values, g.constant(column(data.value_targets)))));
  out.entropy = g.mean(out.eval.entropy);
  out.total = g.sub(g.add(out.policy_loss, g.scale(out.value_loss, config.value_coef)),
                    g.scale(out.entropy, config.entropy_coef));
  return out;
}

LossReport ppo_update(Learner& learner, const std::vector<RolloutBuffer>& buffers, const TrainConfig& config,
                      Rng& rng) {
  if (buffers.empty()) throw ContractViolation("ppo_update: no buffers");
  const int n = learner.policy.agent_count();
  const double gamma = learner.scenario.gamma;

  std::vector<double> advantages, returns;
  std::vector<std::pair<int, int>> samples;  // (buffer, step)
  for (std::size_t b = 0; b < buffers.size(); ++b) {
    const auto adv = compute_returns(buffers[b], gamma, config.gae_lambda);
    advantages.insert(advantages.end(), adv.advantages.begin(), adv.advantages.end());
    returns.insert(returns.end(), adv.returns.begin(), adv.returns.end());
    for (int t = 0; t < buffers[b].length(); ++t) samples.emplace_back(static_cast<int>(b), t);
  }
  std::vector<std::size_t> offset(buffers.size(), 0);
  for (std::size_t b = 1; b < buffers.size(); ++b)
    offset[b] = offset[b - 1] + static_cast<std::size_t>(buffers[b - 1].length() * n);
  normalize_advantages(advantages);
  learner.vnorm.update(returns);

  // Episodes of one iteration share a mask.
  std::vector<int> mask_id(buffers.size());
  std::vector<const graph::MaskSample*> distinct;
  std::map<long long, int> by_iteration;
  for (std::size_t b = 0; b < buffers.size(); ++b) {
    auto [it, fresh] = by_iteration.emplace(buffers[b].iteration, static_cast<int>(distinct.size()));
    if (fresh) distinct.push_back(&buffers[b].mask);
    mask_id[b] = it->second;
  }

  nn::AdamConfig adam;
  adam.lr = config.lr;
  LossReport report;
  const int mb_count = std::min<int>(config.minibatches, static_cast<int>(samples.size()));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = samples.size(); i > 1; --i) std::swap(samples[i - 1], samples[rng.below(i)]);
    for (int mb = 0; mb < mb_count; ++mb) {
      const std::size_t lo = samples.size() * static_cast<std::size_t>(mb) / static_cast<std::size_t>(mb_count);
      const std::size_t hi = samples.size() * static_cast<std::size_t>(mb + 1) / static_cast<std::size_t>(mb_count);
      MinibatchData data;
      auto& batch = data.batch;
      batch.samples = static_cast<int>(hi - lo);
      batch.obs.resize(static_cast<Eigen::Index>(batch.samples) * n, learner.policy.obs_len());
      std::map<int, int> local_mask;
      for (std::size_t k = lo; k < hi; ++k) {
        const auto [b, t] = samples[k];
        const auto& buf = buffers[static_cast<std::size_t>(b)];
        const int row0 = static_cast<int>(k - lo) * n;
        batch.obs.middleRows(row0, n) = buf.obs.middleRows(static_cast<Eigen::Index>(t) * n, n);
        auto [it, fresh] = local_mask.emplace(mask_id[static_cast<std::size_t>(b)], static_cast<int>(batch.masks.size()));
        if (fresh) batch.masks.push_back(buf.mask.mask);
        batch.mask_of.push_back(it->second);
        for (int i = 0; i < n; ++i) {
          const std::size_t src = static_cast<std::size_t>(t * n + i);
          batch.actions.push_back(buf.actions[src]);
          data.old_log_probs.push_back(buf.log_probs[src]);
          data.advantages.push_back(advantages[offset[static_cast<std::size_t>(b)] + src]);
          data.value_targets.push_back(learner.vnorm.normalize(returns[offset[static_cast<std::size_t>(b)] + src]));
        }
      }

      nn::Graph g;
      const auto loss = minibatch_loss(g, learner.policy, data, config);
      const double total = g.value(loss.total)(0, 0);
      if (!std::isfinite(total)) {
        ++report.skipped;
        continue;
      }
      auto& store = learner.policy.parameters();
      store.zero_grad();
      g.backward(loss.total);
      nn::clip_grad_norm(store, config.max_grad_norm);
      if (!nn::adam_step(store, learner.adam, adam)) {
        ++report.skipped;
        continue;
      }
      if (config.learn_graph && config.edge_lr > 0.0 && learner.graph.n_agents > 1) {
        const auto grads = learner.policy.mask_gradients(g, loss.eval, batch);
        Matrix logit_grad = Matrix::Zero(n, n);
        for (const auto& [global, local] : local_mask)
          logit_grad += graph::straight_through_grad(*distinct[static_cast<std::size_t>(global)],
                                                     -grads[static_cast<std::size_t>(local)]);
        graph::apply_logit_gradient(learner.graph, logit_grad, config.edge_lr);
      }
      report.policy_loss += g.value(loss.policy_loss)(0, 0);
      report.value_loss += g.value(loss.value_loss)(0, 0);
      report.entropy += g.value(loss.entropy)(0, 0);
      ++report.updates;
    }
  }
  if (report.updates > 0) {
    report.policy_loss /= report.updates;
    report.value_loss /= report.updates;
    report.entropy /= report.updates;
  }
  return report;
}

EvalResult evaluate_policy(const Learner& learner, int episodes, std::uint64_t seed,
                           const std::optional<Matrix>& mask_override, logs::ActionLogWriter* action_log) {
  graph::MaskSample mask;
  mask.mask = mask_override ? *mask_override : graph::eval_mask(learner.graph);
  const int n = learner.policy.agent_count();
  if (mask.mask.rows() != n || mask.mask.cols() != n) throw ContractViolation("evaluate_policy: mask must be N x N");
  EvalResult out;
  Rng unused(0);
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t env_seed = derive_seed(seed, {static_cast<std::uint64_t>(e)});
    const auto buf = collect_episode(learner.scenario, learner.policy, mask, learner.vnorm, env_seed, unused,
                                     policy::DecodeMode::Greedy);
    out.totals.push_back(buf.total_reward);
    if (action_log) {
      action_log->begin_episode(e, env_seed, "eval");
      for (int t = 0; t < buf.length(); ++t)
        action_log->step(e, t, buf.joint_actions[static_cast<std::size_t>(t)],
                         std::span<const int>(buf.actions).subspan(static_cast<std::size_t>(t * n), static_cast<std::size_t>(n)),
                         buf.rewards[static_cast<std::size_t>(t)]);
      action_log->end_episode(e, buf.total_reward);
    }
  }
  std::tie(out.mean, out.stddev) = mean_std(out.totals);
  return out;
}

TrainResult train(const Scenario& base, const TrainConfig& config, const TrainSinks& sinks) {
  validate(config);
  const Scenario scenario = effective_scenario(base, config);
  const long long iterations = iteration_count(config, scenario.horizon);
  const int T = config.threads;

  TrainResult result{Learner(scenario, config.model, config), {}, 0, 0, 0, 0, 0};
  Learner& learner = result.learner;
  Rng update_rng(derive_seed(config.seed, {0x757064}));
  const std::uint64_t eval_seed = derive_seed(config.seed, {0x6576616c});

  std::vector<RolloutBuffer> pending;
  std::vector<double> window_rewards;
  LossReport window_loss;
  LossReport last_loss;
  int window_updates = 0;

  const auto run_update = [&] {
    const auto rep = ppo_update(learner, pending, config, update_rng);
    pending.clear();
    result.skipped_updates += rep.skipped;
    if (rep.updates > 0) {
      window_loss.policy_loss += rep.policy_loss;
      window_loss.value_loss += rep.value_loss;
      window_loss.entropy += rep.entropy;
      ++window_updates;
    }
  };

  for (long long it = 0; it < iterations; ++it) {
    learner.graph.temperature = graph::annealed_temperature(
        config.temperature_start, config.temperature_end,
        iterations > 1 ? static_cast<double>(it) / static_cast<double>(iterations - 1) : 1.0);
    Rng mask_rng(derive_seed(config.seed, {static_cast<std::uint64_t>(it), 0x6d61736b}));
    const auto mask = graph::sample_mask(learner.graph, graph::MaskMode::Train, mask_rng);
    if (sinks.matrix_line) sinks.matrix_line(graph::serialize_matrix(it, mask.mask));
    ++result.matrix_lines;

    std::vector<RolloutBuffer> collected(static_cast<std::size_t>(T));
    const auto worker = [&](int thread) {
      const std::uint64_t env_seed = derive_seed(config.seed, {static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(thread), 1});
      Rng action_rng(derive_seed(config.seed, {static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(thread), 2}));
      collected[static_cast<std::size_t>(thread)] =
          collect_episode(scenario, learner.policy, mask, learner.vnorm, env_seed, action_rng);
      collected[static_cast<std::size_t>(thread)].iteration = it;
    };
    if (T == 1) {
      worker(0);
    } else {
      std::vector<std::exception_ptr> errors(static_cast<std::size_t>(T));
      std::vector<std::thread> pool;
      for (int t = 0; t < T; ++t)
        pool.emplace_back([&, t] {
          try {
            worker(t);
          } catch (...) {
            errors[static_cast<std::size_t>(t)] = std::current_exception();
          }
        });
      for (auto& th : pool) th.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }

    const long long done = it + 1;
    const bool log_now = done % config.log_interval == 0 || done == iterations;
    const bool eval_now = config.eval_episodes > 0 && (done % config.eval_interval == 0 || done == iterations);
    if (log_now && sinks.action_log) {
      const auto& buf = collected[0];
      sinks.action_log->begin_episode(it, buf.env_seed, "train");
      for (int t = 0; t < buf.length(); ++t)
        sinks.action_log->step(it, t, buf.joint_actions[static_cast<std::size_t>(t)],
                               std::span<const int>(buf.actions).subspan(static_cast<std::size_t>(t * learner.policy.agent_count()),
                                                                         static_cast<std::size_t>(learner.policy.agent_count())),
                               buf.rewards[static_cast<std::size_t>(t)]);
      sinks.action_log->end_episode(it, buf.total_reward);
    }
    for (auto& buf : collected) {
      window_rewards.push_back(buf.total_reward);
      result.env_steps += buf.length();
      ++result.episodes;
      pending.push_back(std::move(buf));
    }
    if (static_cast<int>(pending.size()) >= config.buffers_per_update || done == iterations) run_update();

    if (log_now || eval_now) {
      logs::TrainingRow row;
      row.steps = result.env_steps;
      std::tie(row.train_mean, row.train_std) = mean_std(window_rewards);
      if (window_updates > 0) {
        last_loss.policy_loss = window_loss.policy_loss / window_updates;
        last_loss.value_loss = window_loss.value_loss / window_updates;
        last_loss.entropy = window_loss.entropy / window_updates;
      }
      row.policy_loss = last_loss.policy_loss;
      row.value_loss = last_loss.value_loss;
      row.entropy = last_loss.entropy;
      if (eval_now) {
        const auto ev = evaluate_policy(learner, config.eval_episodes, eval_seed);
        row.eval_mean = ev.mean;
        row.eval_std = ev.stddev;
      }
      window_rewards.clear();
      window_loss = {};
      window_updates = 0;
      result.rows.push_back(row);
      if (sinks.row) sinks.row(row);
      if (log_now && sinks.checkpoint) sinks.checkpoint(learner, result.env_steps);
    }
  }
  result.iterations = iterations;
  return result;
}

}  // namespace cyberdef::train

#include "cyberdef/rollout.hpp"

#include <cmath>
#include <numeric>

#include "cyberdef/errors.hpp"

namespace cyberdef::train {

void ValueNormalizer::update(std::span<const double> targets) {
  if (!enabled || targets.empty()) return;
  const double n = static_cast<double>(targets.size());
  const double m = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
  double sq = 0.0;
  for (double t : targets) sq += t * t;
  sq /= n;
  running_mean = beta * running_mean + (1.0 - beta) * m;
  running_mean_sq = beta * running_mean_sq + (1.0 - beta) * sq;
  debias = beta * debias + (1.0 - beta);
}

double ValueNormalizer::mean() const { return (!enabled || debias <= 0.0) ? 0.0 : running_mean / debias; }

double ValueNormalizer::stddev() const {
  if (!enabled || debias <= 0.0) return 1.0;
  const double m = mean();
  const double var = running_mean_sq / debias - m * m;
  return std::sqrt(std::max(var, 1e-4));
}

double ValueNormalizer::normalize(double x) const { return (x - mean()) / stddev(); }

double ValueNormalizer::denormalize(double x) const { return x * stddev() + mean(); }

RolloutBuffer collect_episode(const Scenario& scenario, const policy::Policy& policy, const graph::MaskSample& mask,
                              const ValueNormalizer& vnorm, std::uint64_t env_seed, Rng& action_rng,
                              policy::DecodeMode mode) {
  const int n = static_cast<int>(scenario.agents.size());
  const int horizon = scenario.horizon;
  RolloutBuffer buf;
  buf.horizon = horizon;
  buf.n_agents = n;
  buf.env_seed = env_seed;
  buf.mask = mask;
  buf.obs.resize(static_cast<Eigen::Index>(horizon) * n, static_cast<Eigen::Index>(scenario.obs_len()));

  netsim::Environment env(scenario, env_seed);
  std::vector<ObservationVector> obs = env.reset(env_seed);
  for (int t = 0; t < horizon; ++t) {
    const auto sample = policy.act(obs, mask.mask, mode, action_rng);
    buf.obs.middleRows(static_cast<Eigen::Index>(t) * n, n) = policy.stack_observations(obs);
    std::vector<BlueAction> joint;
    for (int i = 0; i < n; ++i) {
      const int a = sample.actions[static_cast<std::size_t>(i)];
      buf.actions.push_back(a);
      buf.log_probs.push_back(sample.log_probs[static_cast<std::size_t>(i)]);
      buf.values.push_back(vnorm.denormalize(sample.values[static_cast<std::size_t>(i)]));
      joint.push_back(scenario.agents[static_cast<std::size_t>(i)].action_space[static_cast<std::size_t>(a)]);
    }
    auto result = env.step(joint);
    buf.rewards.push_back(result.team_reward);
    buf.dones.push_back(result.done ? 1 : 0);
    buf.total_reward += result.team_reward;
    buf.joint_actions.push_back(std::move(joint));
    obs = result.joint_obs;
    if (result.done) break;
  }
  if (buf.length() != horizon) throw ContractViolation("collect_episode: episode ended before the horizon");
  return buf;
}

Advantages compute_returns(const RolloutBuffer& buffer, double gamma, double gae_lambda) {
  const int n = buffer.n_agents;
  const int T = buffer.length();
  Advantages out;
  out.advantages.assign(static_cast<std::size_t>(T * n), 0.0);
  out.returns.assign(static_cast<std::size_t>(T * n), 0.0);
  for (int i = 0; i < n; ++i) {
    double next_return = 0.0;
    double next_value = 0.0;
    for (int t = T - 1; t >= 0; --t) {
      const auto idx = static_cast<std::size_t>(t * n + i);
      const double r = buffer.rewards[static_cast<std::size_t>(t)];
      double g = r;
      if (!buffer.dones[static_cast<std::size_t>(t)] && t + 1 < T)
        g = r + gamma * ((1.0 - gae_lambda) * next_value + gae_lambda * next_return);
      out.returns[idx] = g;
      out.advantages[idx] = g - buffer.values[idx];
      next_return = g;
      next_value = buffer.values[idx];
    }
  }
  return out;
}

void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);
}

}  // namespace cyberdef::train

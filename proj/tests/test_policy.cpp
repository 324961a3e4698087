#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cyberdef/commgraph.hpp"
#include "cyberdef/errors.hpp"
#include "cyberdef/policy.hpp"
#include "cyberdef/scenario.hpp"

using namespace cyberdef;
using namespace cyberdef::policy;

namespace {

PolicyConfig small_config() {
  PolicyConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.ff_hidden = 8;
  c.head_init_scale = 1.0;
  return c;
}

std::vector<ObservationVector> random_obs(const Scenario& s, Rng& rng) {
  std::vector<ObservationVector> out;
  for (const auto& a : s.agents) {
    ObservationVector o(a.padded_obs_len, 0);
    for (std::size_t k = 0; k < a.raw_obs_len; ++k) o[k] = rng.bernoulli(0.4) ? 1 : 0;
    out.push_back(o);
  }
  return out;
}

Matrix random_mask(int n, Rng& rng) {
  Matrix m = Matrix::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) m(i, j) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return m;
}

std::vector<int> random_actions(const Policy& p, Rng& rng) {
  std::vector<int> a;
  for (int i = 0; i < p.agent_count(); ++i) a.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(p.action_count(i)))));
  return a;
}

Batch single(const Policy& p, const std::vector<ObservationVector>& obs, const Matrix& mask, const std::vector<int>& actions) {
  Batch b;
  b.samples = 1;
  b.obs = p.stack_observations(obs);
  b.actions = actions;
  b.masks = {mask};
  b.mask_of = {0};
  return b;
}

struct Outputs {
  Matrix reps;
  Matrix values;
  Matrix log_probs;
};

Outputs run(const Policy& p, const Batch& b) {
  Graph g(false);
  const auto ev = p.evaluate_actions(g, b);
  return {g.value(ev.representations), g.value(ev.values), g.value(ev.log_probs)};
}

}  // namespace

TEST_CASE("config validation") {
  PolicyConfig c;
  c.heads = 3;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = PolicyConfig{};
  c.d_model = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  CHECK_NOTHROW(validate(PolicyConfig{}));
}

TEST_CASE("agent types and heads") {
  const Policy het(builtin_scenario("heterogeneous"), small_config(), 1);
  CHECK(het.type_count() == 2);
  CHECK(het.type_of(0) == het.type_of(1));
  CHECK(het.type_of(2) != het.type_of(0));
  const Policy hb(builtin_scenario("host_based"), small_config(), 1);
  CHECK(hb.type_count() == 2);
  CHECK(hb.parameters().find("head4.2.w") != nullptr);
  CHECK(hb.parameters().find("head5.2.w") != nullptr);
  CHECK(hb.max_action_count() == 5);
  for (const auto* p : hb.parameters().all()) CHECK(p->value.allFinite());
}

TEST_CASE("embedding") {
  const auto s = builtin_scenario("heterogeneous");
  const Policy p(s, small_config(), 3);
  const std::vector<ObservationVector> zeros(3, ObservationVector(s.obs_len(), 0));
  CHECK(p.embed(zeros).isZero());

  std::vector<ObservationVector> same(3, ObservationVector(s.obs_len(), 0));
  same[0][0] = same[1][0] = same[2][0] = 1;
  same[0][1] = same[1][1] = same[2][1] = 1;
  const Matrix e = p.embed(same);
  CHECK(e.row(0) == e.row(1));
  CHECK(e.row(0) != e.row(2));

  auto bad = zeros;
  bad[1].push_back(0);
  CHECK_THROWS_AS(p.embed(bad), ContractViolation);
}

TEST_CASE("identity mask isolates agents") {
  const auto s = builtin_scenario("host_based");
  const Policy p(s, small_config(), 4);
  Rng rng(1);
  const auto obs = random_obs(s, rng);
  const auto [h, v] = p.encode(obs, graph::identity_mask(7));
  for (int i = 0; i < 7; ++i) {
    auto changed = random_obs(s, rng);
    changed[static_cast<std::size_t>(i)] = obs[static_cast<std::size_t>(i)];
    const auto [h2, v2] = p.encode(changed, graph::identity_mask(7));
    CHECK(h2.row(i) == h.row(i));
    CHECK(v2[static_cast<std::size_t>(i)] == v[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("absent edges carry no influence") {
  for (const char* name : {"homogeneous", "heterogeneous", "host_based"}) {
    const auto s = builtin_scenario(name);
    const int n = static_cast<int>(s.agent_count());
    const Policy p(s, small_config(), 5);
    Rng rng(derive_seed(6, {static_cast<std::uint64_t>(n)}));
    for (int trial = 0; trial < 60; ++trial) {
      const auto obs = random_obs(s, rng);
      const Matrix mask = random_mask(n, rng);
      const auto actions = random_actions(p, rng);
      const auto base = run(p, single(p, obs, mask, actions));
      const int j = static_cast<int>(rng.below(static_cast<std::size_t>(n)));
      auto perturbed = obs;
      perturbed[static_cast<std::size_t>(j)] = random_obs(s, rng)[static_cast<std::size_t>(j)];
      const auto moved = run(p, single(p, perturbed, mask, actions));
      for (int i = 0; i < n; ++i) {
        if (i == j || mask(j, i) != 0.0) continue;
        CHECK(moved.reps.row(i) == base.reps.row(i));
        CHECK(moved.values(i, 0) == base.values(i, 0));
        CHECK(moved.log_probs(i, 0) == base.log_probs(i, 0));
      }
    }
  }
}

TEST_CASE("complete-mask encoder is permutation equivariant") {
  const auto s = builtin_scenario("homogeneous");
  const Policy p(s, small_config(), 7);
  Rng rng(8);
  const auto obs = random_obs(s, rng);
  const std::vector<ObservationVector> swapped = {obs[1], obs[0]};
  const auto [h, v] = p.encode(obs, graph::complete_mask(2));
  const auto [hs, vs] = p.encode(swapped, graph::complete_mask(2));
  CHECK((h.row(0) - hs.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((h.row(1) - hs.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(v[0] == doctest::Approx(vs[1]).epsilon(1e-12));
}

TEST_CASE("later agents' actions never affect earlier log-probs") {
  const auto s = builtin_scenario("host_based");
  const Policy p(s, small_config(), 9);
  Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const auto obs = random_obs(s, rng);
    const Matrix mask = graph::complete_mask(7);
    auto actions = random_actions(p, rng);
    const auto base = run(p, single(p, obs, mask, actions));
    const int k = 1 + static_cast<int>(rng.below(6));
    for (int i = k; i < 7; ++i) actions[static_cast<std::size_t>(i)] = random_actions(p, rng)[static_cast<std::size_t>(i)];
    const auto moved = run(p, single(p, obs, mask, actions));
    for (int i = 0; i < k; ++i) CHECK(moved.log_probs(i, 0) == base.log_probs(i, 0));
  }
}

TEST_CASE("decoding") {
  const auto s = builtin_scenario("heterogeneous");
  const Policy p(s, small_config(), 11);
  Rng rng(12);
  const auto obs = random_obs(s, rng);
  const Matrix mask = graph::complete_mask(3);

  SUBCASE("probabilities are normalized and respect availability") {
    Matrix available = Matrix::Ones(3, p.max_action_count());
    available(0, 0) = available(0, 4) = 0.0;
    available(2, 1) = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      Rng r(static_cast<std::uint64_t>(trial));
      const auto sample = p.act(obs, mask, DecodeMode::Sample, r, available);
      CHECK(sample.actions[0] != 0);
      CHECK(sample.actions[0] != 4);
      CHECK(sample.actions[2] != 1);
      for (int i = 0; i < 3; ++i) {
        CHECK(sample.actions[static_cast<std::size_t>(i)] < p.action_count(i));
        CHECK(sample.log_probs[static_cast<std::size_t>(i)] <= 0.0);
      }
    }
    for (int i = 0; i < 3; ++i) {
      const auto probs = p.action_probabilities(obs, mask, i, {1, 2});
      CHECK(std::accumulate(probs.begin(), probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
    }
    Matrix none = Matrix::Ones(3, p.max_action_count());
    none.row(1).setZero();
    CHECK_THROWS_AS(p.act(obs, mask, DecodeMode::Greedy, rng, none), ContractViolation);
  }

  SUBCASE("greedy picks the argmax and is pure") {
    Rng r1(1), r2(99);
    const auto a = p.act(obs, mask, DecodeMode::Greedy, r1);
    const auto b = p.act(obs, mask, DecodeMode::Greedy, r2);
    CHECK(a.actions == b.actions);
    CHECK(a.log_probs == b.log_probs);
    std::vector<int> prefix;
    for (int i = 0; i < 3; ++i) {
      const auto probs = p.action_probabilities(obs, mask, i, prefix);
      const int best = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      CHECK(a.actions[static_cast<std::size_t>(i)] == best);
      prefix.push_back(best);
    }
  }

  SUBCASE("teacher-forced log-probs equal sampled ones") {
    for (int trial = 0; trial < 20; ++trial) {
      Rng r(static_cast<std::uint64_t>(100 + trial));
      const auto sample = p.act(obs, mask, DecodeMode::Sample, r);
      const auto out = run(p, single(p, obs, mask, sample.actions));
      for (int i = 0; i < 3; ++i) {
        CHECK(out.log_probs(i, 0) == doctest::Approx(sample.log_probs[static_cast<std::size_t>(i)]).epsilon(1e-6));
        CHECK(out.values(i, 0) == doctest::Approx(sample.values[static_cast<std::size_t>(i)]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("sampled frequencies match the head probabilities") {
  const auto s = builtin_scenario("micro");
  auto cfg = small_config();
  cfg.head_init_scale = 3.0;
  const Policy p(s, cfg, 13);
  Rng rng(14);
  const auto obs = random_obs(s, rng);
  const Matrix mask = graph::complete_mask(2);
  const auto probs = p.action_probabilities(obs, mask, 0, {});
  constexpr int kDraws = 100000;
  std::vector<int> counts(probs.size(), 0);
  for (int d = 0; d < kDraws; ++d) ++counts[static_cast<std::size_t>(p.act(obs, mask, DecodeMode::Sample, rng).actions[0])];
  for (std::size_t a = 0; a < probs.size(); ++a) {
    const double se = std::sqrt(probs[a] * (1 - probs[a]) / kDraws);
    CAPTURE(a);
    CHECK(std::abs(static_cast<double>(counts[a]) / kDraws - probs[a]) <= 3 * se + 1e-12);
  }
}

TEST_CASE("uniform head has entropy ln m") {
  const auto s = builtin_scenario("heterogeneous");
  Policy p(s, small_config(), 15);
  for (auto* prm : p.parameters().all())
    if (prm->name.rfind("head", 0) == 0 && prm->name.find(".2.") != std::string::npos) prm->value.setZero();
  Rng rng(16);
  const auto obs = random_obs(s, rng);
  Graph g(false);
  const auto ev = p.evaluate_actions(g, single(p, obs, graph::complete_mask(3), {0, 3, 2}));
  CHECK(g.value(ev.entropy)(0, 0) == doctest::Approx(std::log(11.0)).epsilon(1e-12));
  CHECK(g.value(ev.entropy)(2, 0) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  CHECK(g.value(ev.log_probs)(2, 0) == doctest::Approx(-std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("log-prob gradient matches finite differences for every parameter") {
  const auto s = builtin_scenario("heterogeneous");
  Policy p(s, small_config(), 17);
  Rng rng(18);
  Batch b;
  b.samples = 2;
  b.obs = Matrix(6, static_cast<Eigen::Index>(s.obs_len()));
  const auto o1 = random_obs(s, rng), o2 = random_obs(s, rng);
  b.obs << p.stack_observations(o1), p.stack_observations(o2);
  b.actions = random_actions(p, rng);
  const auto more = random_actions(p, rng);
  b.actions.insert(b.actions.end(), more.begin(), more.end());
  b.masks = {graph::complete_mask(3), random_mask(3, rng)};
  b.mask_of = {0, 1};
  auto params = p.parameters().all();
  // A step of 1e-5 balances truncation against roundoff for losses of this size.
  const auto r = nn::grad_check([&](Graph& g) { return g.sum(p.evaluate_actions(g, b).log_probs); }, params, 1e-5);
  CAPTURE(r.worst_parameter);
  CAPTURE(r.worst_analytic);
  CAPTURE(r.worst_numeric);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("mask gradients match finite differences of a relaxed mask") {
  const auto s = builtin_scenario("heterogeneous");
  const Policy p(s, small_config(), 19);
  Rng rng(20);
  const auto obs = random_obs(s, rng);
  const auto actions = random_actions(p, rng);
  Matrix mask(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) mask(i, j) = i == j ? 1.0 : 0.3 + 0.6 * rng.uniform();
  const auto objective = [&](const Matrix& m) {
    Graph g(false);
    const auto ev = p.evaluate_actions(g, single(p, obs, m, actions));
    return g.value(ev.log_probs).sum() + g.value(ev.values).sum();
  };
  Graph g;
  const auto b = single(p, obs, mask, actions);
  const auto ev = p.evaluate_actions(g, b);
  g.backward(g.add(g.sum(ev.log_probs), g.sum(ev.values)));
  const Matrix analytic = p.mask_gradients(g, ev, b)[0];
  CHECK(analytic.diagonal().isZero());
  const double eps = 1e-6;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      Matrix up = mask, down = mask;
      up(i, j) += eps;
      down(i, j) -= eps;
      const double numeric = (objective(up) - objective(down)) / (2 * eps);
      const double denom = std::max({std::abs(numeric), std::abs(analytic(i, j)), 1e-8});
      CAPTURE(i);
      CAPTURE(j);
      CHECK(std::abs(numeric - analytic(i, j)) / denom < 1e-4);
    }
}

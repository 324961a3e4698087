#include <doctest.h>

#include <cmath>
#include <limits>

#include "cyberdef/commgraph.hpp"
#include "cyberdef/errors.hpp"

using namespace cyberdef;
using namespace cyberdef::graph;

namespace {

// Budget from exact rational arithmetic: S = num / den.
int rational_budget(int n, int num, int den) {
  const int cells = n * n;
  const int k = (num * cells + den - 1) / den;
  return std::min(cells - n, k);
}

}  // namespace

TEST_CASE("edge budget") {
  CHECK(edge_budget(3, 0.5) == 5);
  CHECK(edge_budget(7, 0.5) == 25);
  CHECK(edge_budget(1, 0.3) == 0);
  CHECK(edge_budget(4, 1.0) == 12);
  const int fractions[][2] = {{1, 10}, {1, 4}, {1, 2}, {1, 1}, {3, 10}, {7, 10}};
  for (int n = 1; n <= 12; ++n)
    for (const auto& f : fractions) {
      CAPTURE(n);
      CAPTURE(f[0]);
      CHECK(edge_budget(n, static_cast<double>(f[0]) / f[1]) == rational_budget(n, f[0], f[1]));
    }
}

TEST_CASE("init_graph") {
  const auto a = init_graph(4, 0.5, 9);
  const auto b = init_graph(4, 0.5, 9);
  CHECK(a.logits == b.logits);
  CHECK(a.logits != init_graph(4, 0.5, 10).logits);
  CHECK(a.temperature == 1.0);
  CHECK(a.logits.diagonal().isZero());
  CHECK(a.logits.cwiseAbs().maxCoeff() < 0.1);
  CHECK_THROWS_AS(init_graph(3, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(init_graph(3, 1.5, 1), ConfigError);
  CHECK_THROWS_AS(init_graph(0, 0.5, 1), ConfigError);

  const auto one = init_graph(1, 0.7, 3);
  CHECK(eval_mask(one) == identity_mask(1));
}

TEST_CASE("every sampled mask spends exactly the budget") {
  const double sparsities[] = {0.1, 0.25, 0.5, 1.0};
  const int rationals[][2] = {{1, 10}, {1, 4}, {1, 2}, {1, 1}};
  for (int n = 2; n <= 8; ++n)
    for (int si = 0; si < 4; ++si)
      for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto g = init_graph(n, sparsities[si], seed, 1.0);
        g.temperature = 0.1 + 0.01 * static_cast<double>(seed);
        Rng rng(seed);
        const auto s = sample_mask(g, MaskMode::Train, rng);
        const int k = rational_budget(n, rationals[si][0], rationals[si][1]);
        REQUIRE(off_diagonal_count(s.mask) == k);
        REQUIRE(s.mask.diagonal().isOnes());
        REQUIRE(off_diagonal_count(eval_mask(g)) == k);
      }
}

TEST_CASE("full sparsity gives the complete graph") {
  auto g = init_graph(5, 1.0, 2);
  Rng rng(1);
  CHECK(sample_mask(g, MaskMode::Train, rng).mask == complete_mask(5));
  CHECK(eval_mask(g) == complete_mask(5));
}

TEST_CASE("eval mask is a pure function of the logits with row-major ties") {
  auto g = init_graph(3, 0.5, 4);
  Rng r1(1), r2(2);
  CHECK(sample_mask(g, MaskMode::Eval, r1).mask == sample_mask(g, MaskMode::Eval, r2).mask);

  g.logits.setZero();
  Matrix expected = identity_mask(3);
  // Five edges in (row, col) order: (0,1) (0,2) (1,0) (1,2) (2,0).
  expected(0, 1) = expected(0, 2) = expected(1, 0) = expected(1, 2) = expected(2, 0) = 1;
  CHECK(eval_mask(g) == expected);

  g.logits(2, 1) = 5.0;
  g.logits(0, 1) = -5.0;
  const auto m = eval_mask(g);
  CHECK(m(2, 1) == 1.0);
  CHECK(m(0, 1) == 0.0);
}

TEST_CASE("train-mode sampling is seeded") {
  auto g = init_graph(6, 0.25, 8);
  Rng a(5), b(5), c(6);
  const auto ma = sample_mask(g, MaskMode::Train, a).mask;
  CHECK(ma == sample_mask(g, MaskMode::Train, b).mask);
  bool differs = false;
  for (int i = 0; i < 20 && !differs; ++i) differs = sample_mask(g, MaskMode::Train, c).mask != ma;
  CHECK(differs);
}

TEST_CASE("threshold separates selected from unselected entries") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto g = init_graph(5, 0.25, seed, 1.0);
    Rng rng(seed);
    const auto s = sample_mask(g, MaskMode::Train, rng);
    const auto r = relaxed_scores(s);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        if (i == j) continue;
        if (s.mask(i, j) == 1.0)
          CHECK(r(i, j) >= 0.5);
        else
          CHECK(r(i, j) <= 0.5);
      }
  }
}

TEST_CASE("straight-through gradient matches finite differences of the relaxed score") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto g = init_graph(4, 0.5, seed, 1.0);
    g.temperature = 0.5;
    Rng rng(seed);
    const auto s = sample_mask(g, MaskMode::Train, rng);
    Rng grng(seed + 100);
    Matrix upstream(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) upstream(i, j) = grng.normal();
    const Matrix analytic = straight_through_grad(s, upstream);
    CHECK(analytic.diagonal().isZero());

    const double eps = 1e-6;
    double worst = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        if (i == j) continue;
        auto plus = s, minus = s;
        plus.perturbed(i, j) += eps;
        minus.perturbed(i, j) -= eps;
        const double f_plus = (relaxed_scores(plus).array() * upstream.array()).sum();
        const double f_minus = (relaxed_scores(minus).array() * upstream.array()).sum();
        const double numeric = (f_plus - f_minus) / (2 * eps);
        const double denom = std::max({std::abs(numeric), std::abs(analytic(i, j)), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic(i, j)) / denom);
      }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("edge_update") {
  SUBCASE("zero gradient leaves logits unchanged") {
    auto g = init_graph(3, 0.5, 1);
    const Matrix before = g.logits;
    Rng rng(1);
    const auto s = sample_mask(g, MaskMode::Train, rng);
    CHECK(edge_update(g, s, Matrix::Zero(3, 3), 0.01));
    CHECK(g.logits == before);
  }
  SUBCASE("positive gradient on a selected edge raises its logit monotonically") {
    auto g = init_graph(3, 0.5, 1);
    Rng rng(2);
    int row = -1, col = -1;
    double last = 0.0;
    for (int step = 0; step < 200; ++step) {
      const auto s = sample_mask(g, MaskMode::Eval, rng);
      if (row < 0) {
        for (int i = 0; i < 3 && row < 0; ++i)
          for (int j = 0; j < 3; ++j)
            if (i != j && s.mask(i, j) == 1.0) {
              row = i;
              col = j;
              break;
            }
        last = g.logits(row, col);
      }
      Matrix grad = Matrix::Zero(3, 3);
      grad(row, col) = 1.0;
      grad(col, col) = 100.0;  // diagonal entries are discarded
      REQUIRE(edge_update(g, s, grad, 0.01));
      CHECK(g.logits(row, col) > last);
      CHECK(g.logits.diagonal().isZero());
      last = g.logits(row, col);
    }
  }
  SUBCASE("non-finite gradient is skipped and counted") {
    auto g = init_graph(3, 0.5, 1);
    const Matrix before = g.logits;
    Matrix grad = Matrix::Zero(3, 3);
    grad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(apply_logit_gradient(g, grad, 0.01));
    CHECK(g.skipped_updates == 1);
    CHECK(g.logits == before);
    CHECK_THROWS_AS(apply_logit_gradient(g, Matrix::Zero(2, 2), 0.01), ContractViolation);
  }
}

TEST_CASE("temperature annealing is geometric") {
  CHECK(annealed_temperature(1.0, 0.1, 0.0) == doctest::Approx(1.0));
  CHECK(annealed_temperature(1.0, 0.1, 1.0) == doctest::Approx(0.1));
  CHECK(annealed_temperature(1.0, 0.1, 0.5) == doctest::Approx(std::sqrt(0.1)));
  CHECK(annealed_temperature(1.0, 0.1, 2.0) == doctest::Approx(0.1));
}

TEST_CASE("matrix log lines") {
  CHECK(serialize_matrix(0, identity_mask(2)) == "0 | 1 0 / 0 1");
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const int n = 1 + static_cast<int>(rng.below(8));
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const auto [ep, parsed] = parse_matrix_line(serialize_matrix(static_cast<long long>(seed), m));
    CHECK(ep == static_cast<long long>(seed));
    CHECK(parsed == m);
  }
  CHECK_THROWS_AS(parse_matrix_line("3 1 0 / 0 1"), ConfigError);
  CHECK_THROWS_AS(parse_matrix_line("x | 1 0 / 0 1"), ConfigError);
  CHECK_THROWS_AS(parse_matrix_line("3 | 1 0 / 0"), ConfigError);
  CHECK_THROWS_AS(parse_matrix_line("3 | 1 2 / 0 1"), ConfigError);
}

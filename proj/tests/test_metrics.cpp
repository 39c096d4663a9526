#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "essaynet/errors.hpp"
#include "essaynet/metrics.hpp"
#include "essaynet/rng.hpp"
#include "oracles.hpp"

using namespace essaynet;

TEST_CASE("F0.5 reproduces the reported detection rows") {
  CHECK(std::fabs(f_half_score(0.543, 0.265) - 0.449) <= 0.001);
  CHECK(std::fabs(f_half_score(0.588, 0.221) - 0.442) <= 0.001);
}

TEST_CASE("F0.5 equals P when P == R") {
  CHECK(f_half_score(0.5, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(f_half_score(0.3, 0.3) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("zero predicted positives give P=0 and F0.5=0 without division errors") {
  const std::vector<Label> pred(5, Label::kCorrect);
  const std::vector<Label> gold = {Label::kIncorrect, Label::kCorrect, Label::kIncorrect,
                                   Label::kCorrect, Label::kCorrect};
  const Prf r = token_prf(pred, gold);
  CHECK(r.precision == 0.0);
  CHECK(r.f_half == 0.0);
}

TEST_CASE("token counting treats incorrect as the positive class") {
  const std::vector<Label> pred = {Label::kIncorrect, Label::kIncorrect, Label::kCorrect};
  const std::vector<Label> gold = {Label::kIncorrect, Label::kCorrect, Label::kIncorrect};
  const PrfCounts c = count_token_errors(pred, gold);
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
}

TEST_CASE("token counting rejects length mismatches") {
  CHECK_THROWS_AS(count_token_errors({Label::kCorrect}, {}), DataError);
}

TEST_CASE("F0.5 lies between the harmonic mean and precision") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double p = 0.01 + rng.uniform() * 0.99;
    const double r = 0.01 + rng.uniform() * 0.99;
    const double f = f_half_score(p, r);
    const double harmonic = 2.0 * p * r / (p + r);
    CHECK(f <= std::max(p, r) + 1e-12);
    const double lo = std::min(harmonic, p) - 1e-12;
    const double hi = std::max(harmonic, p) + 1e-12;
    CHECK(f >= lo);
    CHECK(f <= hi);
  }
}

TEST_CASE("perfect agreement gives QWK 1") {
  const std::vector<int> gold = {3, 7, 12, 19, 5, 5};
  const auto k = qwk(gold, gold, 1, 20);
  REQUIRE(k.has_value());
  CHECK(*k == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("maximal disagreement gives negative QWK") {
  const auto k = qwk({20, 1}, {1, 20}, 1, 20);
  REQUIRE(k.has_value());
  CHECK(*k < 0.0);
  CHECK(*k == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("QWK undefined when both sides are constant") {
  CHECK_FALSE(qwk({4, 4, 4}, {4, 4, 4}, 1, 20).has_value());
  // one constant side with a varying other side is still defined
  CHECK(qwk({4, 4, 4}, {4, 5, 6}, 1, 20).has_value());
}

TEST_CASE("QWK matches the contingency-matrix oracle on 100 random instances") {
  Rng rng(11);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + rng.uniform_index(29);
    std::vector<int> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.uniform_int(1, 20);
      gold[i] = rng.uniform_int(1, 20);
    }
    const auto fast = qwk(pred, gold, 1, 20);
    if (!fast) continue;  // both constant
    const double slow = oracles::qwk_from_definition(pred, gold, 1, 20);
    CHECK(std::fabs(*fast - slow) <= 1e-10);
  }
}

TEST_CASE("QWK is symmetric and permutation invariant") {
  Rng rng(13);
  std::vector<int> pred(15), gold(15);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = rng.uniform_int(1, 20);
    gold[i] = rng.uniform_int(1, 20);
  }
  const auto a = qwk(pred, gold, 1, 20);
  const auto b = qwk(gold, pred, 1, 20);
  REQUIRE(a.has_value());
  CHECK(*a == doctest::Approx(*b).epsilon(1e-12));

  std::vector<std::size_t> perm(pred.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<int> pred_p(pred.size()), gold_p(gold.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    pred_p[i] = pred[perm[i]];
    gold_p[i] = gold[perm[i]];
  }
  const auto c = qwk(pred_p, gold_p, 1, 20);
  CHECK(*a == doctest::Approx(*c).epsilon(1e-12));
}

TEST_CASE("spearman on strictly monotone pairs") {
  CHECK(*spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*spearman({1, 2, 3, 4}, {40, 30, 20, 10}) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("tie-heavy spearman matches the brute-force rank oracle") {
  const std::vector<double> a = {1, 1, 2};
  const std::vector<double> b = {1, 2, 2};
  const auto fast = spearman(a, b);
  REQUIRE(fast.has_value());
  CHECK(std::fabs(*fast - oracles::spearman_from_definition(a, b)) <= 1e-12);
  CHECK(*fast == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("spearman matches the rank oracle on random tie-rich instances") {
  Rng rng(17);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + rng.uniform_index(29);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(rng.uniform_int(1, 6));  // many ties
      b[i] = static_cast<double>(rng.uniform_int(1, 6));
    }
    const auto fast = spearman(a, b);
    if (!fast) continue;  // zero variance draw
    CHECK(std::fabs(*fast - oracles::spearman_from_definition(a, b)) <= 1e-10);
  }
}

TEST_CASE("spearman undefined on zero variance") {
  CHECK_FALSE(spearman({3, 3, 3}, {1, 2, 3}).has_value());
}

TEST_CASE("spearman is invariant under strictly monotone transforms") {
  Rng rng(19);
  std::vector<double> a(20), b(20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.uniform(-3.0, 3.0);
    b[i] = rng.uniform(-3.0, 3.0);
  }
  const auto base = spearman(a, b);
  std::vector<double> a3 = a, bexp = b;
  for (double& v : a3) v = v * v * v;       // strictly increasing
  for (double& v : bexp) v = std::exp(v);   // strictly increasing
  const auto transformed = spearman(a3, bexp);
  REQUIRE(base.has_value());
  CHECK(*base == doctest::Approx(*transformed).epsilon(1e-12));
}

namespace {

const std::function<double(const std::vector<int>&, const std::vector<int>&)> qwk_metric =
    [](const std::vector<int>& sys, const std::vector<int>& gold) {
      return qwk(sys, gold, 1, 20).value_or(0.0);
    };

}  // namespace

TEST_CASE("identical systems give p = 1") {
  const std::vector<int> gold = {3, 9, 14, 18, 6, 11, 2, 16, 8, 13};
  const std::vector<int> a = {4, 8, 15, 17, 7, 10, 3, 15, 9, 12};
  CHECK(significance_test<int>(qwk_metric, a, a, gold, 1000, 5) == 1.0);
}

TEST_CASE("strongly separated systems give p < 0.01 at 10000 iterations") {
  const std::vector<int> gold = {2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  const std::vector<int> good = gold;  // perfect
  std::vector<int> bad(gold.rbegin(), gold.rend());  // reversed
  const double p = significance_test<int>(qwk_metric, good, bad, gold, 10000, 5);
  CHECK(p < 0.01);
}

TEST_CASE("significance test is deterministic under a fixed seed") {
  const std::vector<int> gold = {2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  std::vector<int> a = gold, b = gold;
  b[0] = 20;
  b[5] = 1;
  const double p1 = significance_test<int>(qwk_metric, a, b, gold, 2000, 123);
  const double p2 = significance_test<int>(qwk_metric, a, b, gold, 2000, 123);
  CHECK(p1 == p2);
}

TEST_CASE("eval report renders key=value lines") {
  EvalReport r;
  r.counts = {10, 5, 3};
  r.precision = 10.0 / 15.0;
  r.recall = 10.0 / 13.0;
  r.f_half = f_half_score(r.precision, r.recall);
  r.qwk = 0.41;
  r.spearman = 0.52;
  const std::string lines = r.to_keyvalue_lines();
  CHECK(lines.find("tp=10") != std::string::npos);
  CHECK(lines.find("f05=") != std::string::npos);
  CHECK(lines.find("qwk=0.41") != std::string::npos);
}

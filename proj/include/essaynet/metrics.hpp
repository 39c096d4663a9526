#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "essaynet/corpus.hpp"
#include "essaynet/rng.hpp"

namespace essaynet {

struct PrfCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
  PrfCounts& operator+=(const PrfCounts& o);
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f_half = 0.0;
};

// "incorrect" is the positive class. Length mismatch throws DataError.
PrfCounts count_token_errors(const std::vector<Label>& predicted,
                             const std::vector<Label>& gold);
Prf prf_from_counts(const PrfCounts& c);
Prf token_prf(const std::vector<Label>& predicted, const std::vector<Label>& gold);

// 1.25*P*R / (0.25*P + R); 0 when the denominator is 0.
double f_half_score(double precision, double recall);

// Quadratic weighted kappa over integer ratings in [score_min, score_max].
// nullopt when both sequences are constant (kappa undefined).
std::optional<double> qwk(const std::vector<int>& predicted, const std::vector<int>& gold,
                          int score_min, int score_max);

// Pearson correlation of fractional ranks, average ranks for ties.
// nullopt when either side has zero rank variance.
std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b);

// Two-sided paired approximate randomization: swap each aligned pair with
// probability 1/2, count |metric difference| >= observed.
// p = (count + 1) / (iterations + 1).
template <class Sample, class Gold>
double significance_test(
    const std::function<double(const std::vector<Sample>&, const Gold&)>& metric,
    const std::vector<Sample>& system_a, const std::vector<Sample>& system_b,
    const Gold& gold, std::size_t iterations, std::uint64_t seed) {
  if (system_a.size() != system_b.size() || system_a.empty()) {
    throw std::invalid_argument("significance_test: systems must be aligned and non-empty");
  }
  const double observed = std::fabs(metric(system_a, gold) - metric(system_b, gold));
  Rng rng(seed);
  std::vector<Sample> a = system_a;
  std::vector<Sample> b = system_b;
  std::size_t at_least = 0;
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = system_a[i];
      b[i] = system_b[i];
      if (rng.uniform() < 0.5) std::swap(a[i], b[i]);
    }
    if (std::fabs(metric(a, gold) - metric(b, gold)) >= observed) ++at_least;
  }
  return static_cast<double>(at_least + 1) / static_cast<double>(iterations + 1);
}

struct EvalReport {
  PrfCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f_half = 0.0;
  std::optional<double> spearman;
  std::optional<double> qwk;
  std::optional<double> p_value;

  std::string to_keyvalue_lines() const;
  std::string to_table() const;
};

}  // namespace essaynet

#include "essaynet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "essaynet/errors.hpp"

namespace essaynet {

PrfCounts& PrfCounts::operator+=(const PrfCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

PrfCounts count_token_errors(const std::vector<Label>& predicted,
                             const std::vector<Label>& gold) {
  if (predicted.size() != gold.size()) {
    throw DataError("token_prf: predicted/gold length mismatch (" +
                    std::to_string(predicted.size()) + " vs " + std::to_string(gold.size()) + ")");
  }
  PrfCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == Label::kIncorrect;
    const bool g = gold[i] == Label::kIncorrect;
    if (p && g) ++c.tp;
    else if (p && !g) ++c.fp;
    else if (!p && g) ++c.fn;
  }
  return c;
}

double f_half_score(double precision, double recall) {
  const double denom = 0.25 * precision + recall;
  if (denom == 0.0) return 0.0;
  return 1.25 * precision * recall / denom;
}

Prf prf_from_counts(const PrfCounts& c) {
  Prf r;
  r.precision = (c.tp + c.fp) == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  r.recall = (c.tp + c.fn) == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  r.f_half = f_half_score(r.precision, r.recall);
  return r;
}

Prf token_prf(const std::vector<Label>& predicted, const std::vector<Label>& gold) {
  return prf_from_counts(count_token_errors(predicted, gold));
}

std::optional<double> qwk(const std::vector<int>& predicted, const std::vector<int>& gold,
                          int score_min, int score_max) {
  if (predicted.size() != gold.size()) {
    throw DataError("qwk: predicted/gold length mismatch");
  }
  if (predicted.size() < 2) throw DataError("qwk: need at least 2 essays");
  const int k = score_max - score_min + 1;
  if (k < 2) throw DataError("qwk: score range must span at least 2 values");
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] < score_min || predicted[i] > score_max || gold[i] < score_min ||
        gold[i] > score_max) {
      throw DataError("qwk: score outside [" + std::to_string(score_min) + "," +
                      std::to_string(score_max) + "]");
    }
  }

  std::vector<double> row(k, 0.0), col(k, 0.0);
  const double total = static_cast<double>(predicted.size());
  double weighted_observed = 0.0;
  const double span = static_cast<double>(k - 1);
  for (std::size_t e = 0; e < predicted.size(); ++e) {
    const int i = predicted[e] - score_min;
    const int j = gold[e] - score_min;
    row[i] += 1.0;
    col[j] += 1.0;
    const double d = static_cast<double>(i - j) / span;
    weighted_observed += d * d;
  }
  double weighted_expected = 0.0;
  for (int i = 0; i < k; ++i) {
    if (row[i] == 0.0) continue;
    for (int j = 0; j < k; ++j) {
      const double d = static_cast<double>(i - j) / span;
      weighted_expected += d * d * row[i] * col[j] / total;
    }
  }
  if (weighted_expected == 0.0) return std::nullopt;  // both sides constant
  return 1.0 - weighted_observed / weighted_expected;
}

namespace {

// average ranks for ties, 1-based
std::vector<double> fractional_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t p = i; p <= j; ++p) ranks[order[p]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DataError("spearman: length mismatch");
  if (a.size() < 2) throw DataError("spearman: need at least 2 essays");
  const std::vector<double> ra = fractional_ranks(a);
  const std::vector<double> rb = fractional_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - ma;
    const double db = rb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) return std::nullopt;
  return cov / std::sqrt(va * vb);
}

namespace {

std::string opt_str(const std::optional<double>& v) {
  if (!v) return "undefined";
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << *v;
  return os.str();
}

}  // namespace

std::string EvalReport::to_keyvalue_lines() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "tp=" << counts.tp << '\n'
     << "fp=" << counts.fp << '\n'
     << "fn=" << counts.fn << '\n'
     << "precision=" << precision << '\n'
     << "recall=" << recall << '\n'
     << "f05=" << f_half << '\n'
     << "spearman=" << opt_str(spearman) << '\n'
     << "qwk=" << opt_str(qwk) << '\n';
  if (p_value) os << "p_value=" << *p_value << '\n';
  return os.str();
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "              P       R       F0.5    Spearman  QWK\n";
  os << "detection     " << precision << "  " << recall << "  " << f_half << '\n';
  os << "scoring       -       -       -       " << opt_str(spearman) << "  " << opt_str(qwk)
     << '\n';
  os << "counts        tp=" << counts.tp << " fp=" << counts.fp << " fn=" << counts.fn << '\n';
  if (p_value) os << "p_value       " << *p_value << '\n';
  return os.str();
}

}  // namespace essaynet

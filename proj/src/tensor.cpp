#include "essaynet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace essaynet {

namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), values_(product(shape_), 0.0) {
  for (std::size_t d : shape_) {
    if (d == 0) throw std::invalid_argument("Tensor: zero dimension in shape");
  }
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (product(shape_) != values_.size()) {
    throw std::invalid_argument("Tensor: shape does not match value count");
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape_); }

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor Tensor::row(std::size_t r) const {
  if (rank() != 2) throw std::invalid_argument("Tensor::row: tensor is not 2-D");
  const std::size_t cols = shape_[1];
  std::vector<double> out(values_.begin() + r * cols, values_.begin() + (r + 1) * cols);
  return Tensor({cols}, std::move(out));
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

void axpy(Tensor& dst, const Tensor& src, double scale) {
  if (!dst.same_shape(src)) {
    throw std::invalid_argument("axpy: shape mismatch " + dst.shape_str() + " vs " +
                                src.shape_str());
  }
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += scale * s[i];
}

double exactly_rounded_sum(const double* xs, std::size_t n) {
  thread_local std::vector<double> partials;
  partials.clear();
  for (std::size_t i = 0; i < n; ++i) {
    double x = xs[i];
    std::size_t used = 0;
    for (std::size_t j = 0; j < partials.size(); ++j) {
      double y = partials[j];
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[used++] = lo;
      x = hi;
    }
    partials.resize(used);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;

  // Round the exact partial representation to one double.
  std::size_t i = partials.size();
  double hi = partials[--i];
  double lo = 0.0;
  while (i > 0) {
    const double x = hi;
    const double y = partials[--i];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (i > 0 && ((lo < 0.0 && partials[i - 1] < 0.0) || (lo > 0.0 && partials[i - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

double stable_mean(const double* xs, std::size_t n) {
  if (n == 0) throw std::invalid_argument("stable_mean: empty input");
  if (n == 1) return xs[0];
  double shift = xs[0];
  for (std::size_t i = 1; i < n; ++i) shift = std::max(shift, xs[i]);
  thread_local std::vector<double> deltas;
  deltas.resize(n);
  for (std::size_t i = 0; i < n; ++i) deltas[i] = xs[i] - shift;
  return shift + exactly_rounded_sum(deltas.data(), n) / static_cast<double>(n);
}

}  // namespace essaynet

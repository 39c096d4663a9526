#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace essaynet {

// Dense real-valued tensor, row-major, always 64-bit floats.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& other);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // 2-D access, row-major
  double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double v);

  // Copy of row r of a 2-D tensor as a 1-D tensor.
  Tensor row(std::size_t r) const;

  std::string shape_str() const;  // e.g. "[2x3]"

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

// dst += scale * src (shapes must match)
void axpy(Tensor& dst, const Tensor& src, double scale = 1.0);

// Correctly rounded sum of xs (Shewchuk partials, as in Python's math.fsum).
// The result depends only on the multiset of inputs, not their order.
double exactly_rounded_sum(const double* xs, std::size_t n);

// Mean that is exact for constant inputs and order-invariant: subtracts the
// max, exactly sums the residuals, divides, adds the max back.
double stable_mean(const double* xs, std::size_t n);

}  // namespace essaynet

#include "sigma/core/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "sigma/core/errors.hpp"
#include "sigma/simd/kernels.hpp"

namespace sigma {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeMismatch("buffer of " + std::to_string(data_.size()) + " values for " +
                        std::to_string(rows) + "x" + std::to_string(cols));
  }
}

std::string Tensor::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor +=");
  simd::kernels().axpy(1.0, other.data(), data(), size());
  return *this;
}

double Tensor::sum() const {
  double acc = 0.0;
  for (double x : data_) acc += x;
  return acc;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::abs(x));
  return m;
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch(std::string(what) + ": " + a.shape_string() + " vs " + b.shape_string());
  }
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t k = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (k != kb) {
    throw ShapeMismatch("matmul inner dimension: " + a.shape_string() + " vs " +
                        b.shape_string());
  }
  Tensor out(m, n);
  simd::kernels().gemm(trans_a, trans_b, m, n, k, 1.0, a.data(), a.cols(), b.data(), b.cols(),
                       0.0, out.data(), n);
  return out;
}

}  // namespace sigma

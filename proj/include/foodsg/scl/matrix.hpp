#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "foodsg/error.hpp"

namespace foodsg::scl {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) throw Error("matrix data does not match its shape");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline void require_finite(const Matrix& m, const char* what) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) throw Error(std::string(what) + ": non-finite entry");
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Scales every row to unit Euclidean norm.
inline Matrix normalize_rows(const Matrix& m) {
  require_finite(m, "normalize_rows");
  Matrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double norm = std::sqrt(dot(m.row(r), m.row(r)));
    if (norm == 0.0) throw Error("normalize_rows: row " + std::to_string(r) + " has zero norm");
    for (double& v : out.row(r)) v /= norm;
  }
  return out;
}

// Given x, y = x/|x| and dL/dy, returns dL/dx = (dy - y (y . dy)) / |x|.
inline Matrix normalize_rows_backward(const Matrix& input, const Matrix& output, const Matrix& grad_output) {
  Matrix grad(input.rows(), input.cols());
  for (std::size_t r = 0; r < input.rows(); ++r) {
    const double norm = std::sqrt(dot(input.row(r), input.row(r)));
    const double proj = dot(output.row(r), grad_output.row(r));
    for (std::size_t c = 0; c < input.cols(); ++c) {
      grad(r, c) = (grad_output(r, c) - output(r, c) * proj) / norm;
    }
  }
  return grad;
}

}  // namespace foodsg::scl

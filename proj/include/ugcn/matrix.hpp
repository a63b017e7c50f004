#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ugcn {

/// Raised for malformed or inconsistent dataset files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when training produces a non-finite loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Largest absolute entrywise difference; throws on shape mismatch.
double max_abs_diff(const Matrix& a, const Matrix& b);

std::string shape_string(std::size_t rows, std::size_t cols);

}  // namespace ugcn

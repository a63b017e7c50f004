#include "ugcn/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace ugcn {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) {
    throw std::invalid_argument("Matrix: " + std::to_string(data.size()) +
                                " values do not fill " + shape_string(r, c));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m;
  m.rows = rows.size();
  m.cols = rows.size() == 0 ? 0 : rows.begin()->size();
  m.data.reserve(m.rows * m.cols);
  for (const auto& r : rows) {
    if (r.size() != m.cols) throw std::invalid_argument("Matrix::from_rows: ragged rows");
    m.data.insert(m.data.end(), r.begin(), r.end());
  }
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("max_abs_diff: shapes " + shape_string(a.rows, a.cols) +
                                " and " + shape_string(b.rows, b.cols) + " differ");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  }
  return worst;
}

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace ugcn

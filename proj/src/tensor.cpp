#include "ugcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace ugcn {

namespace detail {

struct TensorNode {
  Matrix value;
  Matrix grad;  // allocated lazily
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  Tensor::BackwardFn backward;

  Matrix& ensure_grad() {
    if (grad.size() != value.size() || !grad.same_shape(value)) {
      grad = Matrix(value.rows, value.cols);
    }
    return grad;
  }
};

}  // namespace detail

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::string shape_of(const Tensor& t) { return shape_string(t.rows(), t.cols()); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
}

// c (m x n) += a (m x k) * b (k x n)
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data.data() + i * n;
    const double* arow = a.data.data() + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b.data.data() + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c (m x k) += g (m x n) * b^T, b is (k x n)
void gemm_nt(const Matrix& g, const Matrix& b, Matrix& c) {
  const std::size_t m = g.rows, n = g.cols, k = b.rows;
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g.data.data() + i * n;
    double* crow = c.data.data() + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double* brow = b.data.data() + l * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      crow[l] += acc;
    }
  }
}

// c (k x n) += a^T * g, a is (m x k), g is (m x n)
void gemm_tn(const Matrix& a, const Matrix& g, Matrix& c) {
  const std::size_t m = a.rows, k = a.cols, n = g.cols;
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data.data() + i * k;
    const double* grow = g.data.data() + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      double* crow = c.data.data() + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------------

Tensor::Tensor(Matrix value, bool requires_grad)
    : node_(std::make_shared<detail::TensorNode>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor(Matrix(rows, cols), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Matrix(1, 1, v), requires_grad);
}

const detail::TensorNode& Tensor::node() const {
  if (!node_) throw std::logic_error("Tensor: use of an undefined tensor");
  return *node_;
}

std::size_t Tensor::rows() const { return node().value.rows; }
std::size_t Tensor::cols() const { return node().value.cols; }
const Matrix& Tensor::value() const { return node().value; }

Matrix& Tensor::mutable_value() {
  node();
  return node_->value;
}

double Tensor::item() const {
  require(size() == 1, "Tensor::item: tensor is " + shape_of(*this) + ", not 1x1");
  return value().data[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

const Matrix& Tensor::grad() const { return grad_buffer(); }

Matrix& Tensor::grad_buffer() const {
  node();
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  node();
  node_->grad = Matrix(node_->value.rows, node_->value.cols);
}

void Tensor::accumulate_grad(const Matrix& delta) const {
  Matrix& g = grad_buffer();
  require(g.same_shape(delta), "Tensor::accumulate_grad: shape mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += delta.data[i];
}

Tensor Tensor::detach() const { return Tensor(value(), false); }

Tensor Tensor::make_result(Matrix value, std::vector<Tensor> parents, BackwardFn fn) {
  auto node = std::make_shared<detail::TensorNode>();
  node->value = std::move(value);
  const bool needs_grad = std::any_of(parents.begin(), parents.end(),
                                      [](const Tensor& p) { return p.requires_grad(); });
  if (needs_grad) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) {
      if (p.requires_grad()) node->parents.push_back(p.node_);
    }
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  require(size() == 1, "backward: loss must be 1x1, got " + shape_of(*this));
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<detail::TensorNode*> order;
  std::unordered_set<const detail::TensorNode*> visited;
  std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::TensorNode* parent = n->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (detail::TensorNode* n : order) {
    if (n->backward) n->grad = Matrix(n->value.rows, n->value.cols);
  }
  node_->ensure_grad().data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* n = *it;
    if (n->backward) n->backward(n->ensure_grad(), n->value);
  }
}

// ---- dense algebra -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ (" + shape_of(a) + " * " +
                                    shape_of(b) + ")");
  Matrix out(a.rows(), b.cols());
  gemm_nn(a.value(), b.value(), out);
  return Tensor::make_result(std::move(out), {a, b}, [a, b](const Matrix& g, const Matrix&) {
    if (a.requires_grad()) gemm_nt(g, b.value(), a.grad_buffer());
    if (b.requires_grad()) gemm_tn(a.value(), g, b.grad_buffer());
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  return Tensor::make_result(std::move(out), {a, b}, [a, b](const Matrix& g, const Matrix&) {
    if (a.requires_grad()) a.accumulate_grad(g);
    if (b.requires_grad()) b.accumulate_grad(g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.value().data[i];
  return Tensor::make_result(std::move(out), {a, b}, [a, b](const Matrix& g, const Matrix&) {
    if (a.requires_grad()) a.accumulate_grad(g);
    if (b.requires_grad()) {
      Matrix& bg = b.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) bg.data[i] -= g.data[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  return Tensor::make_result(std::move(out), {a, b}, [a, b](const Matrix& g, const Matrix&) {
    if (a.requires_grad()) {
      Matrix& ag = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ag.data[i] += g.data[i] * b.value().data[i];
    }
    if (b.requires_grad()) {
      Matrix& bg = b.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) bg.data[i] += g.data[i] * a.value().data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  Matrix out = a.value();
  for (double& v : out.data) v *= factor;
  return Tensor::make_result(std::move(out), {a}, [a, factor](const Matrix& g, const Matrix&) {
    Matrix& ag = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ag.data[i] += factor * g.data[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require(row.rows() == 1 && row.cols() == a.cols(),
          "add_row: row " + shape_of(row) + " does not match " + shape_of(a));
  Matrix out = a.value();
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < out.rows; ++i) {
    for (std::size_t j = 0; j < n; ++j) out(i, j) += row.value().data[j];
  }
  return Tensor::make_result(std::move(out), {a, row},
                             [a, row, n](const Matrix& g, const Matrix&) {
                               if (a.requires_grad()) a.accumulate_grad(g);
                               if (row.requires_grad()) {
                                 Matrix& rg = row.grad_buffer();
                                 for (std::size_t i = 0; i < g.rows; ++i) {
                                   for (std::size_t j = 0; j < n; ++j) rg.data[j] += g(i, j);
                                 }
                               }
                             });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  require(row.rows() == 1 && row.cols() == a.cols(),
          "mul_row: row " + shape_of(row) + " does not match " + shape_of(a));
  Matrix out = a.value();
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < out.rows; ++i) {
    for (std::size_t j = 0; j < n; ++j) out(i, j) *= row.value().data[j];
  }
  return Tensor::make_result(std::move(out), {a, row},
                             [a, row, n](const Matrix& g, const Matrix&) {
                               const Matrix& av = a.value();
                               const Matrix& rv = row.value();
                               if (a.requires_grad()) {
                                 Matrix& ag = a.grad_buffer();
                                 for (std::size_t i = 0; i < g.rows; ++i) {
                                   for (std::size_t j = 0; j < n; ++j) {
                                     ag(i, j) += g(i, j) * rv.data[j];
                                   }
                                 }
                               }
                               if (row.requires_grad()) {
                                 Matrix& rg = row.grad_buffer();
                                 for (std::size_t i = 0; i < g.rows; ++i) {
                                   for (std::size_t j = 0; j < n; ++j) {
                                     rg.data[j] += g(i, j) * av(i, j);
                                   }
                                 }
                               }
                             });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
  require(col.cols() == 1 && col.rows() == a.rows(),
          "mul_col: column " + shape_of(col) + " does not match " + shape_of(a));
  Matrix out = a.value();
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < out.rows; ++i) {
    const double s = col.value().data[i];
    for (std::size_t j = 0; j < n; ++j) out(i, j) *= s;
  }
  return Tensor::make_result(std::move(out), {a, col},
                             [a, col, n](const Matrix& g, const Matrix&) {
                               const Matrix& av = a.value();
                               const Matrix& cv = col.value();
                               if (a.requires_grad()) {
                                 Matrix& ag = a.grad_buffer();
                                 for (std::size_t i = 0; i < g.rows; ++i) {
                                   for (std::size_t j = 0; j < n; ++j) {
                                     ag(i, j) += g(i, j) * cv.data[i];
                                   }
                                 }
                               }
                               if (col.requires_grad()) {
                                 Matrix& cg = col.grad_buffer();
                                 for (std::size_t i = 0; i < g.rows; ++i) {
                                   double acc = 0.0;
                                   for (std::size_t j = 0; j < n; ++j) acc += g(i, j) * av(i, j);
                                   cg.data[i] += acc;
                                 }
                               }
                             });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.value().data) total += v;
  return Tensor::make_result(Matrix(1, 1, total), {a}, [a](const Matrix& g, const Matrix&) {
    Matrix& ag = a.grad_buffer();
    for (double& v : ag.data) v += g.data[0];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require(p.rows() == m, "concat_cols: row counts differ");
    total += p.cols();
  }
  Matrix out(m, total);
  std::size_t at = 0;
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(p.value().row(i).begin(), p.cols(), out.row(i).begin() + at);
    }
    at += p.cols();
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return Tensor::make_result(std::move(out), parents, [parents](const Matrix& g, const Matrix&) {
    std::size_t at = 0;
    for (const Tensor& p : parents) {
      if (p.requires_grad()) {
        Matrix& pg = p.grad_buffer();
        for (std::size_t i = 0; i < g.rows; ++i) {
          for (std::size_t j = 0; j < p.cols(); ++j) pg(i, j) += g(i, at + j);
        }
      }
      at += p.cols();
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require(begin + count <= a.cols(), "slice_cols: range exceeds " + shape_of(a));
  Matrix out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::copy_n(a.value().row(i).begin() + static_cast<std::ptrdiff_t>(begin), count,
                out.row(i).begin());
  }
  return Tensor::make_result(std::move(out), {a}, [a, begin, count](const Matrix& g, const Matrix&) {
    Matrix& ag = a.grad_buffer();
    for (std::size_t i = 0; i < g.rows; ++i) {
      for (std::size_t j = 0; j < count; ++j) ag(i, begin + j) += g(i, j);
    }
  });
}

// ---- ragged neighborhood operations ----------------------------------------------

Tensor gather_rows(const Tensor& a, std::span<const int> index) {
  const std::size_t n = a.cols();
  Matrix out(index.size(), n);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && static_cast<std::size_t>(index[i]) < a.rows(),
            "gather_rows: index " + std::to_string(index[i]) + " out of range");
    std::copy_n(a.value().row(static_cast<std::size_t>(index[i])).begin(), n, out.row(i).begin());
  }
  std::vector<int> idx(index.begin(), index.end());
  return Tensor::make_result(std::move(out), {a},
                             [a, idx = std::move(idx), n](const Matrix& g, const Matrix&) {
                               Matrix& ag = a.grad_buffer();
                               for (std::size_t i = 0; i < idx.size(); ++i) {
                                 double* dst = ag.data.data() + static_cast<std::size_t>(idx[i]) * n;
                                 const double* src = g.data.data() + i * n;
                                 for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                               }
                             });
}

Tensor segment_sum(const Tensor& values, std::span<const int> segment, std::size_t num_segments) {
  require(segment.size() == values.rows(), "segment_sum: one segment id per row required");
  const std::size_t n = values.cols();
  Matrix out(num_segments, n);
  for (std::size_t i = 0; i < segment.size(); ++i) {
    require(segment[i] >= 0 && static_cast<std::size_t>(segment[i]) < num_segments,
            "segment_sum: segment id " + std::to_string(segment[i]) + " out of range");
    double* dst = out.data.data() + static_cast<std::size_t>(segment[i]) * n;
    const double* src = values.value().data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
  }
  std::vector<int> seg(segment.begin(), segment.end());
  return Tensor::make_result(std::move(out), {values},
                             [values, seg = std::move(seg), n](const Matrix& g, const Matrix&) {
                               Matrix& vg = values.grad_buffer();
                               for (std::size_t i = 0; i < seg.size(); ++i) {
                                 const double* src = g.data.data() + static_cast<std::size_t>(seg[i]) * n;
                                 double* dst = vg.data.data() + i * n;
                                 for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                               }
                             });
}

Tensor segment_softmax(const Tensor& scores, std::span<const int> segment,
                       std::size_t num_segments) {
  require(segment.size() == scores.rows(), "segment_softmax: one segment id per row required");
  const std::size_t n = scores.cols();
  const Matrix& s = scores.value();
  Matrix peak(num_segments, n, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> count(num_segments, 0);
  for (std::size_t i = 0; i < segment.size(); ++i) {
    require(segment[i] >= 0 && static_cast<std::size_t>(segment[i]) < num_segments,
            "segment_softmax: segment id " + std::to_string(segment[i]) + " out of range");
    const auto t = static_cast<std::size_t>(segment[i]);
    ++count[t];
    for (std::size_t j = 0; j < n; ++j) peak(t, j) = std::max(peak(t, j), s(i, j));
  }
  for (std::size_t t = 0; t < num_segments; ++t) {
    require(count[t] > 0, "segment_softmax: segment " + std::to_string(t) + " is empty");
  }
  Matrix out(s.rows, n);
  Matrix denom(num_segments, n);
  for (std::size_t i = 0; i < segment.size(); ++i) {
    const auto t = static_cast<std::size_t>(segment[i]);
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = std::exp(s(i, j) - peak(t, j));
      denom(t, j) += out(i, j);
    }
  }
  for (std::size_t i = 0; i < segment.size(); ++i) {
    const auto t = static_cast<std::size_t>(segment[i]);
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= denom(t, j);
  }
  std::vector<int> seg(segment.begin(), segment.end());
  return Tensor::make_result(
      std::move(out), {scores},
      [scores, seg = std::move(seg), n, num_segments](const Matrix& g, const Matrix& y) {
        Matrix dot(num_segments, n);
        for (std::size_t i = 0; i < seg.size(); ++i) {
          for (std::size_t j = 0; j < n; ++j) dot(seg[i], j) += y(i, j) * g(i, j);
        }
        Matrix& sg = scores.grad_buffer();
        for (std::size_t i = 0; i < seg.size(); ++i) {
          for (std::size_t j = 0; j < n; ++j) sg(i, j) += y(i, j) * (g(i, j) - dot(seg[i], j));
        }
      });
}

// ---- nonlinearities and normalization ----------------------------------------------

Tensor activation(const Tensor& x, Activation kind) {
  if (kind.kind == Activation::Kind::identity) return x;
  const double slope = kind.kind == Activation::Kind::relu ? 0.0 : kind.negative_slope;
  Matrix out = x.value();
  for (double& v : out.data) {
    if (v < 0.0) v *= slope;
  }
  return Tensor::make_result(std::move(out), {x}, [x, slope](const Matrix& g, const Matrix&) {
    const Matrix& xv = x.value();
    Matrix& xg = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      xg.data[i] += xv.data[i] >= 0.0 ? g.data[i] : slope * g.data[i];
    }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  Mode mode) {
  const std::size_t m = x.rows(), n = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == n && beta.rows() == 1 && beta.cols() == n,
          "batch_norm: gamma/beta must be 1x" + std::to_string(n));
  require(state.running_mean.size() == n && state.running_var.size() == n,
          "batch_norm: running statistics have the wrong width");
  const Matrix& xv = x.value();
  std::vector<double> mean(n, 0.0), inv_std(n, 0.0);

  if (mode == Mode::train) {
    require(m >= 2, "batch_norm: train mode needs at least 2 rows, got " + std::to_string(m));
    std::vector<double> var(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) mean[j] += xv(i, j);
    }
    for (double& v : mean) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double d = xv(i, j) - mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double biased = var[j] / static_cast<double>(m);
      inv_std[j] = 1.0 / std::sqrt(biased + state.eps);
      const double unbiased = var[j] / static_cast<double>(m - 1);
      state.running_mean[j] =
          (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mean[j];
      state.running_var[j] =
          (1.0 - state.momentum) * state.running_var[j] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      mean[j] = state.running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(state.running_var[j] + state.eps);
    }
  }

  Matrix xhat(m, n);
  Matrix out(m, n);
  const Matrix& gv = gamma.value();
  const Matrix& bv = beta.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = (xv(i, j) - mean[j]) * inv_std[j];
      out(i, j) = gv.data[j] * xhat(i, j) + bv.data[j];
    }
  }

  const bool batch_stats = mode == Mode::train;
  return Tensor::make_result(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), batch_stats, m,
       n](const Matrix& g, const Matrix&) {
        std::vector<double> sum_g(n, 0.0), sum_gx(n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            sum_g[j] += g(i, j);
            sum_gx[j] += g(i, j) * xhat(i, j);
          }
        }
        if (gamma.requires_grad()) {
          Matrix& gg = gamma.grad_buffer();
          for (std::size_t j = 0; j < n; ++j) gg.data[j] += sum_gx[j];
        }
        if (beta.requires_grad()) {
          Matrix& bg = beta.grad_buffer();
          for (std::size_t j = 0; j < n; ++j) bg.data[j] += sum_g[j];
        }
        if (!x.requires_grad()) return;
        const Matrix& gv = gamma.value();
        Matrix& xg = x.grad_buffer();
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double scale_j = gv.data[j] * inv_std[j];
            if (batch_stats) {
              xg(i, j) += scale_j * (g(i, j) - inv_m * sum_g[j] - xhat(i, j) * inv_m * sum_gx[j]);
            } else {
              xg(i, j) += scale_j * g(i, j);
            }
          }
        }
      });
}

Tensor dropout(const Tensor& x, double rate, Mode mode, std::mt19937_64& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must lie in [0, 1)");
  if (mode == Mode::eval || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  Matrix mask(x.rows(), x.cols());
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask.data[i] = drop(rng) ? 0.0 : keep_scale;
    out.data[i] *= mask.data[i];
  }
  return Tensor::make_result(std::move(out), {x}, [x, mask = std::move(mask)](const Matrix& g, const Matrix&) {
    Matrix& xg = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) xg.data[i] += g.data[i] * mask.data[i];
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t m = logits.rows(), k = logits.cols();
  require(labels.size() == m, "cross_entropy: one label per row required");
  require(m > 0, "cross_entropy: empty batch");
  Matrix probs(m, k);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < k,
            "cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                std::to_string(k) + ")");
    auto row = logits.value().row(i);
    const double peak = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs(i, j) = std::exp(row[j] - peak);
      z += probs(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) probs(i, j) /= z;
    total += std::log(z) + peak - row[static_cast<std::size_t>(labels[i])];
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return Tensor::make_result(
      Matrix(1, 1, total / static_cast<double>(m)), {logits},
      [logits, probs = std::move(probs), lab = std::move(lab), m, k](const Matrix& g, const Matrix&) {
        Matrix& lg = logits.grad_buffer();
        const double s = g.data[0] / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const double onehot = static_cast<std::size_t>(lab[i]) == j ? 1.0 : 0.0;
            lg(i, j) += s * (probs(i, j) - onehot);
          }
        }
      });
}

// ---- optimizer ------------------------------------------------------------------------

AdamState::AdamState(std::span<const Tensor> params, AdamOptions opts) : options(opts) {
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const Tensor& p : params) {
    first_moment.emplace_back(p.rows(), p.cols());
    second_moment.emplace_back(p.rows(), p.cols());
  }
}

void adam_step(std::span<Tensor> params, std::span<const Matrix> grads, AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.first_moment.size(),
          "adam_step: parameter, gradient and state counts differ");
  for (std::size_t p = 0; p < params.size(); ++p) {
    require(params[p].value().same_shape(grads[p]) &&
                params[p].value().same_shape(state.first_moment[p]),
            "adam_step: shape mismatch for parameter " + std::to_string(p));
  }
  const AdamOptions& o = state.options;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correct1 = 1.0 - std::pow(o.beta1, t);
  const double correct2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& value = params[p].mutable_value();
    Matrix& m = state.first_moment[p];
    Matrix& v = state.second_moment[p];
    const Matrix& g = grads[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m.data[i] = o.beta1 * m.data[i] + (1.0 - o.beta1) * g.data[i];
      v.data[i] = o.beta2 * v.data[i] + (1.0 - o.beta2) * g.data[i] * g.data[i];
      const double m_hat = m.data[i] / correct1;
      const double v_hat = v.data[i] / correct2;
      value.data[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) grads.push_back(p.grad());
  adam_step(params, grads, state);
}

}  // namespace ugcn

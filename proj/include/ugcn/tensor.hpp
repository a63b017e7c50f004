#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "ugcn/matrix.hpp"

namespace ugcn {

namespace detail {
struct TensorNode;
}

enum class Mode { train, eval };

/// A 2-D value that records how it was computed so gradients can flow back to the
/// leaves that require them. Copies share the same underlying node.
///
/// The recorded graph is built only when at least one input requires a gradient, so
/// evaluation-time forward passes do not retain intermediate values.
class Tensor {
 public:
  using BackwardFn = std::function<void(const Matrix& out_grad, const Matrix& out_value)>;

  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }

  const Matrix& value() const;
  /// Direct write access, meant for optimizers and finite-difference probes on leaves.
  Matrix& mutable_value();
  double at(std::size_t r, std::size_t c) const { return value()(r, c); }
  double item() const;

  bool requires_grad() const;
  /// Accumulated gradient; an all-zero matrix of the value's shape if nothing flowed in.
  const Matrix& grad() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across calls;
  /// intermediate gradients are reset at the start of each sweep.
  void backward() const;

  /// Same values, detached from the recorded graph.
  Tensor detach() const;

  /// Builds an op result. `fn` receives d(loss)/d(result) and the result value, and
  /// pushes gradients into the parents through accumulate_grad() or grad_buffer().
  /// No graph is recorded when no parent requires a gradient.
  static Tensor make_result(Matrix value, std::vector<Tensor> parents, BackwardFn fn);

  /// Adds `delta` (same shape as the value) into this tensor's gradient buffer.
  void accumulate_grad(const Matrix& delta) const;
  /// Gradient buffer for in-place accumulation by op backward functions.
  Matrix& grad_buffer() const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  const detail::TensorNode& node() const;

  std::shared_ptr<detail::TensorNode> node_;
};

// ---- dense algebra -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product of same-shaped tensors.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// a (m x n) + row (1 x n), broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
/// a (m x n) * row (1 x n), broadcast over rows.
Tensor mul_row(const Tensor& a, const Tensor& row);
/// a (m x n) * col (m x 1), broadcast over columns.
Tensor mul_col(const Tensor& a, const Tensor& col);
/// Sum of all entries as a 1 x 1 tensor.
Tensor sum(const Tensor& a);
/// Horizontal concatenation.
Tensor concat_cols(std::span<const Tensor> parts);
/// Columns [begin, begin + count).
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);

// ---- ragged neighborhood operations ----------------------------------------------

/// out[i] = a[index[i]].
Tensor gather_rows(const Tensor& a, std::span<const int> index);
/// Row t of the result is the sum of the rows i of `values` with segment[i] == t.
Tensor segment_sum(const Tensor& values, std::span<const int> segment, std::size_t num_segments);
/// Softmax over the rows sharing a segment id, independently per column.
/// Every segment in [0, num_segments) must own at least one row.
Tensor segment_softmax(const Tensor& scores, std::span<const int> segment,
                       std::size_t num_segments);

// ---- nonlinearities and normalization ----------------------------------------------

struct Activation {
  enum class Kind { identity, relu, leaky_relu };
  Kind kind = Kind::identity;
  double negative_slope = 0.2;

  static Activation identity() { return {Kind::identity, 0.0}; }
  static Activation relu() { return {Kind::relu, 0.0}; }
  static Activation leaky_relu(double slope = 0.2) { return {Kind::leaky_relu, slope}; }
};

/// Elementwise activation; at exactly 0 the derivative takes the positive branch.
Tensor activation(const Tensor& x, Activation kind);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Per-column normalization. Train mode uses batch statistics (biased variance) and
/// updates the running estimates (unbiased variance); eval mode uses the running ones.
/// gamma and beta are 1 x C.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  Mode mode);

/// Inverted dropout: survivors are scaled by 1 / (1 - rate) in train mode.
Tensor dropout(const Tensor& x, double rate, Mode mode, std::mt19937_64& rng);

/// Mean negative log-likelihood of `labels` under row-wise softmax of `logits`.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// ---- optimizer ------------------------------------------------------------------------

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::int64_t step_count = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  AdamState() = default;
  AdamState(std::span<const Tensor> params, AdamOptions opts);
};

/// Bias-corrected Adam update applied in place to each parameter's value.
void adam_step(std::span<Tensor> params, std::span<const Matrix> grads, AdamState& state);
/// Same, taking the gradients accumulated on the parameters.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace ugcn

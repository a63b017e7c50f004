#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "ugcn/graph.hpp"
#include "ugcn/tensor.hpp"

namespace ugcn {

/// How learned neighborhood weights are produced from a raw score s = theta^T [x_p || x_q].
/// With `normalize` set, weights are Softmax over the neighborhood of LeakyReLU(s);
/// otherwise the raw score is used directly (batch normalization then does the scaling).
struct AttentionOptions {
  bool normalize = true;
  double negative_slope = 0.2;
};

/// Glorot-uniform initialized leaf tensor.
Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng);

// ---- graph convolution ---------------------------------------------------------------

struct GcParams {
  Tensor weight;  ///< C x D

  static GcParams init(std::size_t in_channels, std::size_t out_channels, std::mt19937_64& rng);
  std::vector<Tensor> tensors() const { return {weight}; }
  std::size_t num_parameters() const { return weight.size(); }
};

/// Z = Â X W, evaluated as Â (X W).
Tensor gc_forward(const NormalizedAdjacency& adjacency, const Tensor& x, const GcParams& params);

// ---- graph attention -----------------------------------------------------------------

/// score(p, q) = LeakyReLU(a_self^T W x_p + a_neighbor^T W x_q), normalized over 𝒩(p).
struct GatParams {
  Tensor weight;              ///< C x D
  Tensor attention_self;      ///< D x 1
  Tensor attention_neighbor;  ///< D x 1

  static GatParams init(std::size_t in_channels, std::size_t out_channels, std::mt19937_64& rng);
  std::vector<Tensor> tensors() const { return {weight, attention_self, attention_neighbor}; }
  std::size_t num_parameters() const {
    return weight.size() + attention_self.size() + attention_neighbor.size();
  }
};

/// Per-edge attention coefficients (E x 1), aligned with edges.neighbor.
Tensor gat_attention(const Tensor& x, const EdgeIndex& edges, const GatParams& params,
                     double negative_slope = 0.2);
Tensor gat_forward(const EdgeIndex& edges, const Tensor& x, const GatParams& params,
                   double negative_slope = 0.2);
/// Heads evaluated independently and concatenated along the feature axis.
Tensor gat_forward(const EdgeIndex& edges, const Tensor& x, std::span<const GatParams> heads,
                   double negative_slope = 0.2);

// ---- separable unified graph convolution (S-UGC) -----------------------------------------

/// One channel-wise filter theta_c = (theta_self[c], theta_neighbor[c]) per input channel
/// followed by a pointwise weight matrix.
struct SugcParams {
  Tensor theta_self;      ///< 1 x C
  Tensor theta_neighbor;  ///< 1 x C
  Tensor weight;          ///< C x D

  static SugcParams init(std::size_t in_channels, std::size_t out_channels, std::mt19937_64& rng);
  std::vector<Tensor> tensors() const { return {theta_self, theta_neighbor, weight}; }
  std::size_t num_parameters() const {
    return theta_self.size() + theta_neighbor.size() + weight.size();
  }
};

/// Per-edge, per-channel depthwise weights alpha (E x C), aligned with edges.neighbor.
Tensor sugc_attention(const Tensor& x, const EdgeIndex& edges, const Tensor& theta_self,
                      const Tensor& theta_neighbor, AttentionOptions options);
/// Depthwise step: Y[p, c] = sum over q in 𝒩(p) of alpha[p, q, c] * X[q, c].
Tensor sugc_dconv(const Tensor& x, const EdgeIndex& edges, const Tensor& theta_self,
                  const Tensor& theta_neighbor, AttentionOptions options);
/// Depthwise then pointwise per head; heads concatenated (N x sum of head widths).
Tensor sugc_forward(const EdgeIndex& edges, const Tensor& x, std::span<const SugcParams> heads,
                    AttentionOptions options);

// ---- general unified graph convolution (G-UGC) -------------------------------------------

/// D independent filters, each holding one 2-vector per input channel. No weight matrix.
struct GugcParams {
  Tensor theta_self;      ///< D x C
  Tensor theta_neighbor;  ///< D x C

  static GugcParams init(std::size_t in_channels, std::size_t out_channels, std::mt19937_64& rng);
  std::vector<Tensor> tensors() const { return {theta_self, theta_neighbor}; }
  std::size_t num_parameters() const { return theta_self.size() + theta_neighbor.size(); }
};

/// Z[p, d] = sum_c sum_{q in 𝒩(p)} alpha_d[p, q, c] * X[q, c].
Tensor gugc_forward(const EdgeIndex& edges, const Tensor& x, const GugcParams& params,
                    AttentionOptions options);
/// alpha_d as E x C matrices, one per filter (inspection only, no gradient).
std::vector<Matrix> gugc_attention(const Matrix& x, const EdgeIndex& edges, const GugcParams& params,
                                   AttentionOptions options);

/// Fused per-channel attention aggregation with K filter banks (theta_* are K x C).
/// Without `sum_channels` the result is N x (K*C) with column k*C + c holding
/// sum_q alpha_k[p, q, c] X[q, c]; with it the result is N x K, summed over c.
Tensor channel_attention_aggregate(const Tensor& x, const EdgeIndex& edges, const Tensor& theta_self,
                                   const Tensor& theta_neighbor, AttentionOptions options,
                                   bool sum_channels);

}  // namespace ugcn

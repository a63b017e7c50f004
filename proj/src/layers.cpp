#include "ugcn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ugcn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void check_input(const Tensor& x, const EdgeIndex& edges, const char* op) {
  require(x.rows() == static_cast<std::size_t>(edges.num_nodes),
          std::string(op) + ": features have " + std::to_string(x.rows()) + " rows for " +
              std::to_string(edges.num_nodes) + " nodes");
}

void check_theta_rows(const Tensor& theta_self, const Tensor& theta_neighbor, std::size_t channels,
                      const char* op) {
  require(theta_self.cols() == channels && theta_neighbor.cols() == channels &&
              theta_self.rows() == theta_neighbor.rows(),
          std::string(op) + ": expected one theta pair per input channel (" +
              std::to_string(channels) + "), got " +
              shape_string(theta_self.rows(), theta_self.cols()) + " and " +
              shape_string(theta_neighbor.rows(), theta_neighbor.cols()));
}

}  // namespace

Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (double& v : m.data) v = dist(rng);
  return Tensor(std::move(m), true);
}

// ---- graph convolution ---------------------------------------------------------------

GcParams GcParams::init(std::size_t in_channels, std::size_t out_channels, std::mt19937_64& rng) {
  return {glorot_uniform(in_channels, out_channels, in_channels, out_channels, rng)};
}

Tensor gc_forward(const NormalizedAdjacency& adjacency, const Tensor& x, const GcParams& params) {
  const EdgeIndex& edges = adjacency.index;
  check_input(x, edges, "gc_forward");
  require(params.weight.rows() == x.cols(), "gc_forward: weight has " +
                                                std::to_string(params.weight.rows()) +
                                                " rows for " + std::to_string(x.cols()) +
                                                " input channels");
  const Tensor xw = matmul(x, params.weight);
  const Tensor weights(Matrix(edges.num_edges(), 1, adjacency.values));
  const Tensor messages = mul_col(gather_rows(xw, edges.neighbor), weights);
  return segment_sum(messages, edges.node, static_cast<std::size_t>(edges.num_nodes));
}

// ---- graph attention -----------------------------------------------------------------

GatParams GatParams::init(std::size_t in_channels, std::size_t out_channels, std::mt19937_64& rng) {
  GatParams p;
  p.weight = glorot_uniform(in_channels, out_channels, in_channels, out_channels, rng);
  p.attention_self = glorot_uniform(out_channels, 1, 2 * out_channels, 1, rng);
  p.attention_neighbor = glorot_uniform(out_channels, 1, 2 * out_channels, 1, rng);
  return p;
}

namespace {

Tensor gat_attention_from_projection(const Tensor& projected, const EdgeIndex& edges,
                                     const GatParams& params, double negative_slope) {
  require(params.attention_self.rows() == projected.cols() &&
              params.attention_neighbor.rows() == projected.cols() &&
              params.attention_self.cols() == 1 && params.attention_neighbor.cols() == 1,
          "gat_attention: attention vectors must be D x 1 with D = " +
              std::to_string(projected.cols()));
  const Tensor self_score = matmul(projected, params.attention_self);
  const Tensor neighbor_score = matmul(projected, params.attention_neighbor);
  const Tensor scores = add(gather_rows(self_score, edges.node),
                            gather_rows(neighbor_score, edges.neighbor));
  return segment_softmax(activation(scores, Activation::leaky_relu(negative_slope)), edges.node,
                         static_cast<std::size_t>(edges.num_nodes));
}

}  // namespace

Tensor gat_attention(const Tensor& x, const EdgeIndex& edges, const GatParams& params,
                     double negative_slope) {
  check_input(x, edges, "gat_attention");
  require(params.weight.rows() == x.cols(), "gat_attention: weight rows differ from channels");
  return gat_attention_from_projection(matmul(x, params.weight), edges, params, negative_slope);
}

Tensor gat_forward(const EdgeIndex& edges, const Tensor& x, const GatParams& params,
                   double negative_slope) {
  check_input(x, edges, "gat_forward");
  require(params.weight.rows() == x.cols(), "gat_forward: weight has " +
                                                std::to_string(params.weight.rows()) +
                                                " rows for " + std::to_string(x.cols()) +
                                                " input channels");
  const Tensor xw = matmul(x, params.weight);
  const Tensor alpha = gat_attention_from_projection(xw, edges, params, negative_slope);
  return segment_sum(mul_col(gather_rows(xw, edges.neighbor), alpha), edges.node,
                     static_cast<std::size_t>(edges.num_nodes));
}

Tensor gat_forward(const EdgeIndex& edges, const Tensor& x, std::span<const GatParams> heads,
                   double negative_slope) {
  require(!heads.empty(), "gat_forward: no heads");
  if (heads.size() == 1) return gat_forward(edges, x, heads.front(), negative_slope);
  std::vector<Tensor> outs;
  outs.reserve(heads.size());
  for (const GatParams& h : heads) outs.push_back(gat_forward(edges, x, h, negative_slope));
  return concat_cols(outs);
}

// ---- S-UGC ------------------------------------------------------------------------------

SugcParams SugcParams::init(std::size_t in_channels, std::size_t out_channels,
                            std::mt19937_64& rng) {
  SugcParams p;
  p.theta_self = glorot_uniform(1, in_channels, 2, 1, rng);
  p.theta_neighbor = glorot_uniform(1, in_channels, 2, 1, rng);
  p.weight = glorot_uniform(in_channels, out_channels, in_channels, out_channels, rng);
  return p;
}

Tensor sugc_attention(const Tensor& x, const EdgeIndex& edges, const Tensor& theta_self,
                      const Tensor& theta_neighbor, AttentionOptions options) {
  check_input(x, edges, "sugc_attention");
  check_theta_rows(theta_self, theta_neighbor, x.cols(), "sugc_attention");
  require(theta_self.rows() == 1, "sugc_attention: theta must be 1 x C");
  const Tensor self_part = mul_row(gather_rows(x, edges.node), theta_self);
  const Tensor neighbor_part = mul_row(gather_rows(x, edges.neighbor), theta_neighbor);
  const Tensor scores = add(self_part, neighbor_part);
  if (!options.normalize) return scores;
  return segment_softmax(activation(scores, Activation::leaky_relu(options.negative_slope)),
                         edges.node, static_cast<std::size_t>(edges.num_nodes));
}

Tensor sugc_dconv(const Tensor& x, const EdgeIndex& edges, const Tensor& theta_self,
                  const Tensor& theta_neighbor, AttentionOptions options) {
  check_input(x, edges, "sugc_dconv");
  check_theta_rows(theta_self, theta_neighbor, x.cols(), "sugc_dconv");
  require(theta_self.rows() == 1, "sugc_dconv: theta must be 1 x C");
  return channel_attention_aggregate(x, edges, theta_self, theta_neighbor, options, false);
}

Tensor sugc_forward(const EdgeIndex& edges, const Tensor& x, std::span<const SugcParams> heads,
                    AttentionOptions options) {
  require(!heads.empty(), "sugc_forward: no heads");
  std::vector<Tensor> outs;
  outs.reserve(heads.size());
  for (const SugcParams& h : heads) {
    require(h.weight.rows() == x.cols(), "sugc_forward: weight has " +
                                             std::to_string(h.weight.rows()) + " rows for " +
                                             std::to_string(x.cols()) + " input channels");
    const Tensor depthwise = sugc_dconv(x, edges, h.theta_self, h.theta_neighbor, options);
    outs.push_back(matmul(depthwise, h.weight));
  }
  return outs.size() == 1 ? outs.front() : concat_cols(outs);
}

// ---- G-UGC ------------------------------------------------------------------------------

GugcParams GugcParams::init(std::size_t in_channels, std::size_t out_channels,
                            std::mt19937_64& rng) {
  GugcParams p;
  p.theta_self = glorot_uniform(out_channels, in_channels, 2, 1, rng);
  p.theta_neighbor = glorot_uniform(out_channels, in_channels, 2, 1, rng);
  return p;
}

namespace {

/// C x N copy of x, so one channel's values sit contiguously.
std::vector<double> channel_major(const Matrix& x) {
  std::vector<double> t(x.rows * x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) t[c * x.rows + r] = x(r, c);
  }
  return t;
}

std::size_t max_degree(const EdgeIndex& edges) {
  std::size_t d = 0;
  for (int p = 0; p < edges.num_nodes; ++p) d = std::max(d, edges.neighbors(p).size());
  return d;
}

/// alpha over one neighborhood for one channel `xc` (length N); `score` keeps raw scores.
void channel_weights(const double* xc, std::span<const int> nbrs, double xp, double ts, double tn,
                     const AttentionOptions& options, double* score, double* alpha) {
  const std::size_t deg = nbrs.size();
  for (std::size_t i = 0; i < deg; ++i) score[i] = ts * xp + tn * xc[nbrs[i]];
  if (!options.normalize) {
    if (alpha != score) std::copy(score, score + deg, alpha);
    return;
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < deg; ++i) {
    alpha[i] = score[i] >= 0.0 ? score[i] : options.negative_slope * score[i];
    peak = std::max(peak, alpha[i]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < deg; ++i) {
    alpha[i] = std::exp(alpha[i] - peak);
    total += alpha[i];
  }
  for (std::size_t i = 0; i < deg; ++i) alpha[i] /= total;
}

}  // namespace

Tensor channel_attention_aggregate(const Tensor& x, const EdgeIndex& edges, const Tensor& theta_self,
                                   const Tensor& theta_neighbor, AttentionOptions options,
                                   bool sum_channels) {
  check_input(x, edges, "channel_attention_aggregate");
  const std::size_t channels = x.cols();
  check_theta_rows(theta_self, theta_neighbor, channels, "channel_attention_aggregate");
  for (int p = 0; p < edges.num_nodes; ++p) {
    if (edges.neighbors(p).empty()) {
      throw std::invalid_argument("channel_attention_aggregate: node " + std::to_string(p) +
                                  " has no neighbors");
    }
  }
  const std::size_t filters = theta_self.rows();
  const std::size_t width = sum_channels ? filters : filters * channels;
  const auto n = static_cast<std::size_t>(edges.num_nodes);

  const std::vector<double> xt = channel_major(x.value());
  const Matrix& tsv = theta_self.value();
  const Matrix& tnv = theta_neighbor.value();
  Matrix out(n, width);
  // Softmax weights are kept for the backward pass (exp dominates the cost); raw scores are
  // cheap enough to recompute.
  const std::size_t num_edges = edges.neighbor.size();
  auto saved = std::make_shared<std::vector<double>>(options.normalize ? filters * channels * num_edges : 0);
  std::vector<double> score(max_degree(edges));
  for (std::size_t k = 0; k < filters; ++k) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* xc = xt.data() + c * n;
      const std::size_t col = sum_channels ? k : k * channels + c;
      double* alpha_kc = options.normalize ? saved->data() + (k * channels + c) * num_edges : nullptr;
      for (std::size_t p = 0; p < n; ++p) {
        const auto nbrs = edges.neighbors(static_cast<int>(p));
        double* alpha = options.normalize ? alpha_kc + edges.offsets[p] : score.data();
        channel_weights(xc, nbrs, xc[p], tsv(k, c), tnv(k, c), options, score.data(), alpha);
        double y = 0.0;
        for (std::size_t i = 0; i < nbrs.size(); ++i) y += alpha[i] * xc[nbrs[i]];
        out(p, col) += y;
      }
    }
  }

  return Tensor::make_result(
      std::move(out), {x, theta_self, theta_neighbor},
      [x, edges, theta_self, theta_neighbor, options, sum_channels, filters, channels, num_edges,
       saved](const Matrix& g, const Matrix&) {
        const auto n = static_cast<std::size_t>(edges.num_nodes);
        const std::vector<double> xt = channel_major(x.value());
        const Matrix& tsv = theta_self.value();
        const Matrix& tnv = theta_neighbor.value();
        std::vector<double> dxt(n * channels, 0.0);
        Matrix dts(filters, channels), dtn(filters, channels);
        std::vector<double> score(max_degree(edges)), d_alpha(score.size());
        for (std::size_t k = 0; k < filters; ++k) {
          for (std::size_t c = 0; c < channels; ++c) {
            const double* xc = xt.data() + c * n;
            double* dxc = dxt.data() + c * n;
            const std::size_t col = sum_channels ? k : k * channels + c;
            const double ts = tsv(k, c), tn = tnv(k, c);
            double dts_kc = 0.0, dtn_kc = 0.0;
            for (std::size_t p = 0; p < n; ++p) {
              const double go = g(p, col);
              if (go == 0.0) continue;
              const auto nbrs = edges.neighbors(static_cast<int>(p));
              const double xp = xc[p];
              const double* alpha = score.data();
              for (std::size_t i = 0; i < nbrs.size(); ++i) score[i] = ts * xp + tn * xc[nbrs[i]];
              if (options.normalize) alpha = saved->data() + (k * channels + c) * num_edges + edges.offsets[p];
              double dot = 0.0;
              for (std::size_t i = 0; i < nbrs.size(); ++i) {
                d_alpha[i] = go * xc[nbrs[i]];
                dxc[nbrs[i]] += go * alpha[i];
                dot += alpha[i] * d_alpha[i];
              }
              for (std::size_t i = 0; i < nbrs.size(); ++i) {
                const auto q = static_cast<std::size_t>(nbrs[i]);
                double ds = d_alpha[i];
                if (options.normalize) {
                  ds = alpha[i] * (d_alpha[i] - dot);
                  if (score[i] < 0.0) ds *= options.negative_slope;
                }
                dts_kc += ds * xp;
                dtn_kc += ds * xc[q];
                dxc[p] += ds * ts;
                dxc[q] += ds * tn;
              }
            }
            dts(k, c) = dts_kc;
            dtn(k, c) = dtn_kc;
          }
        }
        if (x.requires_grad()) {
          Matrix& dx = x.grad_buffer();
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < channels; ++c) dx(r, c) += dxt[c * n + r];
          }
        }
        if (theta_self.requires_grad()) theta_self.accumulate_grad(dts);
        if (theta_neighbor.requires_grad()) theta_neighbor.accumulate_grad(dtn);
      });
}

Tensor gugc_forward(const EdgeIndex& edges, const Tensor& x, const GugcParams& params,
                    AttentionOptions options) {
  check_input(x, edges, "gugc_forward");
  check_theta_rows(params.theta_self, params.theta_neighbor, x.cols(), "gugc_forward");
  return channel_attention_aggregate(x, edges, params.theta_self, params.theta_neighbor, options,
                                     true);
}

std::vector<Matrix> gugc_attention(const Matrix& x, const EdgeIndex& edges, const GugcParams& params,
                                   AttentionOptions options) {
  const std::size_t channels = x.cols;
  const Tensor xv(x);
  check_input(xv, edges, "gugc_attention");
  check_theta_rows(params.theta_self, params.theta_neighbor, channels, "gugc_attention");
  const auto n = static_cast<std::size_t>(edges.num_nodes);
  const std::vector<double> xt = channel_major(x);
  std::vector<double> score(max_degree(edges)), alpha(score.size());
  std::vector<Matrix> result;
  for (std::size_t k = 0; k < params.theta_self.rows(); ++k) {
    Matrix a(edges.num_edges(), channels);
    for (std::size_t c = 0; c < channels; ++c) {
      const double* xc = xt.data() + c * n;
      for (std::size_t p = 0; p < n; ++p) {
        const auto nbrs = edges.neighbors(static_cast<int>(p));
        channel_weights(xc, nbrs, xc[p], params.theta_self.at(k, c), params.theta_neighbor.at(k, c),
                        options, score.data(), alpha.data());
        for (std::size_t i = 0; i < nbrs.size(); ++i) {
          a(edges.offsets[p] + i, c) = alpha[i];
        }
      }
    }
    result.push_back(std::move(a));
  }
  return result;
}

}  // namespace ugcn

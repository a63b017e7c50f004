#pragma once

// Reference implementations of depthwise/pointwise convolution on graphs and on regular
// grids, plus checks that the GC and GAT layers factor into a depthwise step followed by
// pointwise steps. Everything here favors clarity over speed and materializes dense arrays.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ugcn/graph.hpp"
#include "ugcn/matrix.hpp"

namespace ugcn::oracle {

/// K(p, q, c), defined only on the (p, q) pairs that were set.
class DepthwiseKernel {
 public:
  DepthwiseKernel(int num_nodes, std::size_t channels);

  void set(int p, int q, std::size_t c, double w);
  bool has(int p, int q) const { return defined_[index(p, q)]; }
  double at(int p, int q, std::size_t c) const { return weights_[index(p, q) * channels_ + c]; }

  int num_nodes() const { return num_nodes_; }
  std::size_t channels() const { return channels_; }

 private:
  std::size_t index(int p, int q) const {
    return static_cast<std::size_t>(p) * static_cast<std::size_t>(num_nodes_) +
           static_cast<std::size_t>(q);
  }

  int num_nodes_;
  std::size_t channels_;
  std::vector<double> weights_;
  std::vector<bool> defined_;
};

/// D pointwise kernels kappa^(d), each of length C.
struct PointwiseKernelSet {
  std::vector<std::vector<double>> kernels;

  /// kappa^(d)(c) = w(c, d).
  static PointwiseKernelSet from_weight(const Matrix& w);
  std::size_t count() const { return kernels.size(); }
  std::size_t channels() const { return kernels.empty() ? 0 : kernels.front().size(); }
};

/// Y[p, c] = sum_{q in 𝒩(p)} K(p, q, c) X[q, c]. Throws if K lacks a neighborhood pair.
Matrix dconv_generic(const Matrix& x, const EdgeIndex& neighborhoods, const DepthwiseKernel& kernel);
/// Z[p, d] = sum_c kappa^(d)(c) Y[p, c].
Matrix pconv_generic(const Matrix& y, const PointwiseKernelSet& kernels);

/// K(p, q, :) = [Â(p, q), ..., Â(p, q)].
DepthwiseKernel gc_kernel(const NormalizedAdjacency& adjacency, std::size_t channels);
/// K(p, q, :) = [alpha(p, q), ..., alpha(p, q)]; `alpha` is aligned with edges.neighbor.
DepthwiseKernel gat_kernel(const EdgeIndex& edges, std::span<const double> alpha,
                           std::size_t channels);

/// Largest max-minus-min across the channel axis over all defined kernel pairs; zero
/// exactly when every pair carries one shared weight.
double channel_spread(const DepthwiseKernel& kernel, const EdgeIndex& neighborhoods);

/// max |gc_forward - pconv(dconv(X, gc_kernel), W)| on the self-looped graph.
/// `perturbation` is added to every entry of W on the factored path only.
double verify_gc_decomposition(const Graph& graph, const Matrix& x, const Matrix& w,
                               double perturbation = 0.0);

struct GatWeights {
  Matrix weight;              ///< C x D
  Matrix attention_self;      ///< D x 1
  Matrix attention_neighbor;  ///< D x 1
};

/// Same check for the attention layer, with the kernel built from its learned alpha.
double verify_gat_decomposition(const Graph& graph, const Matrix& x, const GatWeights& params,
                                double perturbation = 0.0);

// ---- regular grids ---------------------------------------------------------------------

/// H x W x C array, channel fastest.
struct GridTensor {
  std::size_t height = 0, width = 0, channels = 0;
  std::vector<double> data;

  GridTensor() = default;
  GridTensor(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}
  double& at(std::size_t i, std::size_t j, std::size_t c) { return data[(i * width + j) * channels + c]; }
  double at(std::size_t i, std::size_t j, std::size_t c) const {
    return data[(i * width + j) * channels + c];
  }
};

/// Square K x K x C window; K must be odd so the window is centered.
struct GridKernel {
  std::size_t size = 1, channels = 0;
  std::vector<double> data;

  GridKernel() = default;
  GridKernel(std::size_t k, std::size_t c, double fill = 0.0)
      : size(k), channels(c), data(k * k * c, fill) {}
  double& at(std::size_t a, std::size_t b, std::size_t c) { return data[(a * size + b) * channels + c]; }
  double at(std::size_t a, std::size_t b, std::size_t c) const {
    return data[(a * size + b) * channels + c];
  }
};

/// Standard convolution with D kernels and zero padding; output is H x W x D.
GridTensor grid_conv(const GridTensor& x, std::span<const GridKernel> kernels);
/// Depthwise step only (no channel summation); output is H x W x C.
GridTensor grid_dconv(const GridTensor& x, const GridKernel& depth_kernel);
/// Depthwise then pointwise.
GridTensor grid_dsconv(const GridTensor& x, const GridKernel& depth_kernel,
                       const PointwiseKernelSet& point_kernels);

double max_abs_diff(const GridTensor& a, const GridTensor& b);

// ---- random instances and the full suite ----------------------------------------------------

struct RandomInstance {
  Graph graph;  ///< without self-loops; features hold X
  Matrix weight;
  Matrix attention_self;
  Matrix attention_neighbor;
};

/// Erdős–Rényi graph (edge probability 0.4) with N in [1, max_nodes], C in [1, max_channels],
/// D in [1, max_out]; every value uniform in [-1, 1].
RandomInstance random_instance(std::mt19937_64& rng, int max_nodes = 20, int max_channels = 8,
                               int max_out = 4);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  /// true: pass when value <= threshold. false: pass when value > threshold.
  bool upper_bound = true;
  bool passed = false;
};

/// GC/GAT factorization (with negative controls), grid rank-1 identity, and kernel
/// channel-constancy over `trials` random instances.
std::vector<CheckResult> run_oracle_suite(int trials = 100, std::uint64_t seed = 42);

}  // namespace ugcn::oracle

#include "ugcn/dsconv_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ugcn/layers.hpp"
#include "ugcn/tensor.hpp"

namespace ugcn::oracle {

DepthwiseKernel::DepthwiseKernel(int num_nodes, std::size_t channels)
    : num_nodes_(num_nodes),
      channels_(channels),
      weights_(static_cast<std::size_t>(num_nodes) * static_cast<std::size_t>(num_nodes) * channels,
               0.0),
      defined_(static_cast<std::size_t>(num_nodes) * static_cast<std::size_t>(num_nodes), false) {}

void DepthwiseKernel::set(int p, int q, std::size_t c, double w) {
  if (p < 0 || q < 0 || p >= num_nodes_ || q >= num_nodes_ || c >= channels_) {
    throw std::out_of_range("DepthwiseKernel::set: index out of range");
  }
  defined_[index(p, q)] = true;
  weights_[index(p, q) * channels_ + c] = w;
}

PointwiseKernelSet PointwiseKernelSet::from_weight(const Matrix& w) {
  PointwiseKernelSet set;
  set.kernels.assign(w.cols, std::vector<double>(w.rows));
  for (std::size_t c = 0; c < w.rows; ++c) {
    for (std::size_t d = 0; d < w.cols; ++d) set.kernels[d][c] = w(c, d);
  }
  return set;
}

Matrix dconv_generic(const Matrix& x, const EdgeIndex& neighborhoods, const DepthwiseKernel& kernel) {
  if (x.rows != static_cast<std::size_t>(neighborhoods.num_nodes) ||
      kernel.num_nodes() != neighborhoods.num_nodes || kernel.channels() != x.cols) {
    throw std::invalid_argument("dconv_generic: kernel, graph and features disagree in shape");
  }
  Matrix y(x.rows, x.cols);
  for (int p = 0; p < neighborhoods.num_nodes; ++p) {
    for (int q : neighborhoods.neighbors(p)) {
      if (!kernel.has(p, q)) {
        throw std::invalid_argument("dconv_generic: kernel undefined for pair (" +
                                    std::to_string(p) + ", " + std::to_string(q) + ")");
      }
      for (std::size_t c = 0; c < x.cols; ++c) y(p, c) += kernel.at(p, q, c) * x(q, c);
    }
  }
  return y;
}

Matrix pconv_generic(const Matrix& y, const PointwiseKernelSet& kernels) {
  for (const auto& k : kernels.kernels) {
    if (k.size() != y.cols) {
      throw std::invalid_argument("pconv_generic: kernel length " + std::to_string(k.size()) +
                                  " differs from " + std::to_string(y.cols) + " channels");
    }
  }
  Matrix z(y.rows, kernels.count());
  for (std::size_t p = 0; p < y.rows; ++p) {
    for (std::size_t d = 0; d < kernels.count(); ++d) {
      double acc = 0.0;
      for (std::size_t c = 0; c < y.cols; ++c) acc += kernels.kernels[d][c] * y(p, c);
      z(p, d) = acc;
    }
  }
  return z;
}

DepthwiseKernel gc_kernel(const NormalizedAdjacency& adjacency, std::size_t channels) {
  const EdgeIndex& idx = adjacency.index;
  DepthwiseKernel k(idx.num_nodes, channels);
  for (std::size_t e = 0; e < idx.num_edges(); ++e) {
    for (std::size_t c = 0; c < channels; ++c) k.set(idx.node[e], idx.neighbor[e], c, adjacency.values[e]);
  }
  return k;
}

DepthwiseKernel gat_kernel(const EdgeIndex& edges, std::span<const double> alpha,
                           std::size_t channels) {
  if (alpha.size() != edges.num_edges()) {
    throw std::invalid_argument("gat_kernel: one coefficient per edge required");
  }
  DepthwiseKernel k(edges.num_nodes, channels);
  for (std::size_t e = 0; e < edges.num_edges(); ++e) {
    for (std::size_t c = 0; c < channels; ++c) k.set(edges.node[e], edges.neighbor[e], c, alpha[e]);
  }
  return k;
}

double channel_spread(const DepthwiseKernel& kernel, const EdgeIndex& neighborhoods) {
  double worst = 0.0;
  const std::size_t channels = kernel.channels();
  for (int p = 0; p < neighborhoods.num_nodes; ++p) {
    for (int q : neighborhoods.neighbors(p)) {
      double lo = kernel.at(p, q, 0), hi = lo;
      for (std::size_t c = 1; c < channels; ++c) {
        lo = std::min(lo, kernel.at(p, q, c));
        hi = std::max(hi, kernel.at(p, q, c));
      }
      worst = std::max(worst, hi - lo);
    }
  }
  return worst;
}

namespace {

Matrix perturbed(const Matrix& w, double perturbation) {
  Matrix out = w;
  for (double& v : out.data) v += perturbation;
  return out;
}

}  // namespace

double verify_gc_decomposition(const Graph& graph, const Matrix& x, const Matrix& w,
                               double perturbation) {
  const Graph looped = add_self_loops(graph);
  const NormalizedAdjacency adj = normalize_adjacency(looped);
  const Matrix direct = gc_forward(adj, Tensor(x), GcParams{Tensor(w)}).value();
  const Matrix depthwise = dconv_generic(x, adj.index, gc_kernel(adj, x.cols));
  const Matrix factored =
      pconv_generic(depthwise, PointwiseKernelSet::from_weight(perturbed(w, perturbation)));
  return ugcn::max_abs_diff(direct, factored);
}

double verify_gat_decomposition(const Graph& graph, const Matrix& x, const GatWeights& params,
                                double perturbation) {
  const Graph looped = add_self_loops(graph);
  const EdgeIndex edges = EdgeIndex::from_sorted(looped.num_nodes, looped.edges);
  const GatParams layer{Tensor(params.weight), Tensor(params.attention_self),
                        Tensor(params.attention_neighbor)};
  const Matrix direct = gat_forward(edges, Tensor(x), layer).value();
  const Matrix alpha = gat_attention(Tensor(x), edges, layer).value();
  const Matrix depthwise = dconv_generic(x, edges, gat_kernel(edges, alpha.data, x.cols));
  const Matrix factored = pconv_generic(
      depthwise, PointwiseKernelSet::from_weight(perturbed(params.weight, perturbation)));
  return ugcn::max_abs_diff(direct, factored);
}

// ---- regular grids ---------------------------------------------------------------------

namespace {

void check_kernel(const GridTensor& x, const GridKernel& k, const char* op) {
  if (k.size % 2 == 0) {
    throw std::invalid_argument(std::string(op) + ": kernel size " + std::to_string(k.size) +
                                " is even; a centered window needs an odd size");
  }
  if (k.channels != x.channels) {
    throw std::invalid_argument(std::string(op) + ": kernel channels differ from input channels");
  }
}

/// Visits every in-bounds window offset of position (i, j); zero padding elsewhere.
template <typename Fn>
void for_window(const GridTensor& x, std::size_t k, std::size_t i, std::size_t j, Fn&& fn) {
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(k); ++a) {
    const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i) + a - half;
    if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(x.height)) continue;
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(k); ++b) {
      const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j) + b - half;
      if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(x.width)) continue;
      fn(static_cast<std::size_t>(a), static_cast<std::size_t>(b), static_cast<std::size_t>(ii),
         static_cast<std::size_t>(jj));
    }
  }
}

}  // namespace

GridTensor grid_conv(const GridTensor& x, std::span<const GridKernel> kernels) {
  for (const GridKernel& k : kernels) check_kernel(x, k, "grid_conv");
  GridTensor z(x.height, x.width, kernels.size());
  for (std::size_t i = 0; i < x.height; ++i) {
    for (std::size_t j = 0; j < x.width; ++j) {
      for (std::size_t d = 0; d < kernels.size(); ++d) {
        const GridKernel& k = kernels[d];
        double acc = 0.0;
        for_window(x, k.size, i, j, [&](std::size_t a, std::size_t b, std::size_t ii, std::size_t jj) {
          for (std::size_t c = 0; c < x.channels; ++c) acc += k.at(a, b, c) * x.at(ii, jj, c);
        });
        z.at(i, j, d) = acc;
      }
    }
  }
  return z;
}

GridTensor grid_dconv(const GridTensor& x, const GridKernel& depth_kernel) {
  check_kernel(x, depth_kernel, "grid_dconv");
  GridTensor y(x.height, x.width, x.channels);
  for (std::size_t i = 0; i < x.height; ++i) {
    for (std::size_t j = 0; j < x.width; ++j) {
      for_window(x, depth_kernel.size, i, j,
                 [&](std::size_t a, std::size_t b, std::size_t ii, std::size_t jj) {
                   for (std::size_t c = 0; c < x.channels; ++c) {
                     y.at(i, j, c) += depth_kernel.at(a, b, c) * x.at(ii, jj, c);
                   }
                 });
    }
  }
  return y;
}

GridTensor grid_dsconv(const GridTensor& x, const GridKernel& depth_kernel,
                       const PointwiseKernelSet& point_kernels) {
  const GridTensor y = grid_dconv(x, depth_kernel);
  if (point_kernels.channels() != x.channels) {
    throw std::invalid_argument("grid_dsconv: pointwise kernel length differs from channels");
  }
  GridTensor z(x.height, x.width, point_kernels.count());
  for (std::size_t i = 0; i < x.height; ++i) {
    for (std::size_t j = 0; j < x.width; ++j) {
      for (std::size_t d = 0; d < point_kernels.count(); ++d) {
        double acc = 0.0;
        for (std::size_t c = 0; c < x.channels; ++c) acc += point_kernels.kernels[d][c] * y.at(i, j, c);
        z.at(i, j, d) = acc;
      }
    }
  }
  return z;
}

double max_abs_diff(const GridTensor& a, const GridTensor& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw std::invalid_argument("max_abs_diff: grid shapes differ");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  }
  return worst;
}

// ---- random instances and the full suite ----------------------------------------------------

namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data) v = dist(rng);
  return m;
}

}  // namespace

RandomInstance random_instance(std::mt19937_64& rng, int max_nodes, int max_channels, int max_out) {
  std::uniform_int_distribution<int> nodes(1, max_nodes);
  std::uniform_int_distribution<int> channels(1, max_channels);
  std::uniform_int_distribution<int> outs(1, max_out);
  std::bernoulli_distribution link(0.4);
  const int n = nodes(rng);
  const auto c = static_cast<std::size_t>(channels(rng));
  const auto d = static_cast<std::size_t>(outs(rng));
  std::vector<Edge> edges;
  for (int p = 0; p < n; ++p) {
    for (int q = p + 1; q < n; ++q) {
      if (link(rng)) edges.push_back({p, q});
    }
  }
  RandomInstance inst;
  inst.graph = Graph::undirected(n, edges, uniform_matrix(static_cast<std::size_t>(n), c, rng));
  inst.weight = uniform_matrix(c, d, rng);
  inst.attention_self = uniform_matrix(d, 1, rng);
  inst.attention_neighbor = uniform_matrix(d, 1, rng);
  return inst;
}

std::vector<CheckResult> run_oracle_suite(int trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("run_oracle_suite: trials must be positive");
  std::mt19937_64 rng(seed);
  double gc_dev = 0.0, gat_dev = 0.0, gc_spread = 0.0, gat_spread = 0.0;
  double gc_control = std::numeric_limits<double>::infinity();
  double gat_control = std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    const RandomInstance inst = random_instance(rng);
    const Matrix& x = inst.graph.node_features;
    const GatWeights gat{inst.weight, inst.attention_self, inst.attention_neighbor};
    gc_dev = std::max(gc_dev, verify_gc_decomposition(inst.graph, x, inst.weight));
    gat_dev = std::max(gat_dev, verify_gat_decomposition(inst.graph, x, gat));
    gc_control = std::min(gc_control, verify_gc_decomposition(inst.graph, x, inst.weight, 1.0));
    gat_control = std::min(gat_control, verify_gat_decomposition(inst.graph, x, gat, 1.0));

    const Graph looped = add_self_loops(inst.graph);
    const NormalizedAdjacency adj = normalize_adjacency(looped);
    gc_spread = std::max(gc_spread, channel_spread(gc_kernel(adj, x.cols), adj.index));
    const GatParams layer{Tensor(inst.weight), Tensor(inst.attention_self),
                          Tensor(inst.attention_neighbor)};
    const Matrix alpha = gat_attention(Tensor(x), adj.index, layer).value();
    gat_spread = std::max(
        gat_spread, channel_spread(gat_kernel(adj.index, alpha.data, x.cols), adj.index));
  }

  // Grid: kernels K^(d)[k, c] = Khat[k, c] * kappa^(d)(c) factor exactly into DConv then PConv.
  double grid_dev = 0.0;
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    GridTensor x(6, 6, 3);
    for (double& v : x.data) v = dist(rng);
    GridKernel depth(3, 3);
    for (double& v : depth.data) v = dist(rng);
    PointwiseKernelSet point;
    point.kernels.assign(4, std::vector<double>(3));
    for (auto& k : point.kernels) {
      for (double& v : k) v = dist(rng);
    }
    std::vector<GridKernel> full(point.count(), GridKernel(3, 3));
    for (std::size_t d = 0; d < point.count(); ++d) {
      for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) {
          for (std::size_t c = 0; c < 3; ++c) {
            full[d].at(a, b, c) = depth.at(a, b, c) * point.kernels[d][c];
          }
        }
      }
    }
    grid_dev = std::max(grid_dev, max_abs_diff(grid_conv(x, full), grid_dsconv(x, depth, point)));
  }

  std::vector<CheckResult> results = {
      {"gc_decomposition", gc_dev, 1e-10, true},
      {"gc_negative_control", gc_control, 1e-3, false},
      {"gat_decomposition", gat_dev, 1e-10, true},
      {"gat_negative_control", gat_control, 1e-3, false},
      {"grid_rank1_identity", grid_dev, 1e-12, true},
      {"gc_kernel_channel_spread", gc_spread, 0.0, true},
      {"gat_kernel_channel_spread", gat_spread, 0.0, true},
  };
  for (CheckResult& r : results) {
    r.passed = r.upper_bound ? r.value <= r.threshold : r.value > r.threshold;
  }
  return results;
}

}  // namespace ugcn::oracle

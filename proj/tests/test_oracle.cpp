#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "ugcn/dsconv_oracle.hpp"
#include "ugcn/layers.hpp"

using namespace ugcn;
using namespace ugcn::oracle;
using ugcn::testing::random_graph;
using ugcn::testing::random_int;
using ugcn::testing::random_matrix;

namespace {

NormalizedAdjacency looped_adjacency(const Graph& g) { return normalize_adjacency(add_self_loops(g)); }

GridTensor random_grid(std::size_t h, std::size_t w, std::size_t c, std::mt19937_64& rng) {
  GridTensor t(h, w, c);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : t.data) v = dist(rng);
  return t;
}

GridKernel random_kernel(std::size_t k, std::size_t c, std::mt19937_64& rng) {
  GridKernel t(k, c);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : t.data) v = dist(rng);
  return t;
}

/// Six nested loops, independent of the library's indexing helpers.
GridTensor grid_conv_loop(const GridTensor& x, const std::vector<GridKernel>& ks) {
  const auto h = static_cast<long>(x.height), w = static_cast<long>(x.width);
  GridTensor z(x.height, x.width, ks.size());
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      for (std::size_t d = 0; d < ks.size(); ++d) {
        const long half = static_cast<long>(ks[d].size / 2);
        double acc = 0.0;
        for (long a = -half; a <= half; ++a) {
          for (long b = -half; b <= half; ++b) {
            if (i + a < 0 || i + a >= h || j + b < 0 || j + b >= w) continue;
            for (std::size_t c = 0; c < x.channels; ++c) {
              acc += ks[d].at(a + half, b + half, c) * x.at(i + a, j + b, c);
            }
          }
        }
        z.at(i, j, d) = acc;
      }
    }
  }
  return z;
}

}  // namespace

TEST_CASE("dconv_generic") {
  std::mt19937_64 rng(40);
  const Graph g = random_graph(rng, 8, 3);
  const NormalizedAdjacency adj = looped_adjacency(g);
  const EdgeIndex& e = adj.index;

  DepthwiseKernel identity(8, 3);
  for (int p = 0; p < 8; ++p) {
    for (int q : e.neighbors(p)) {
      for (std::size_t c = 0; c < 3; ++c) identity.set(p, q, c, p == q ? 1.0 : 0.0);
    }
  }
  CHECK(dconv_generic(g.node_features, e, identity) == g.node_features);

  DepthwiseKernel uniform(8, 3);
  for (int p = 0; p < 8; ++p) {
    const double w = 1.0 / static_cast<double>(e.neighbors(p).size());
    for (int q : e.neighbors(p)) {
      for (std::size_t c = 0; c < 3; ++c) uniform.set(p, q, c, w);
    }
  }
  const Matrix mean = dconv_generic(g.node_features, e, uniform);
  for (int p = 0; p < 8; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0;
      for (int q : e.neighbors(p)) m += g.node_features(q, c) / static_cast<double>(e.neighbors(p).size());
      CHECK(std::abs(mean(p, c) - m) <= 1e-12);
    }
  }

  DepthwiseKernel random(8, 3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int p = 0; p < 8; ++p) {
    for (int q : e.neighbors(p)) {
      for (std::size_t c = 0; c < 3; ++c) random.set(p, q, c, dist(rng));
    }
  }
  const Matrix y = dconv_generic(g.node_features, e, random);
  Matrix loop(8, 3);
  for (int p = 0; p < 8; ++p) {
    for (int q = 0; q < 8; ++q) {
      if (!random.has(p, q)) continue;
      for (std::size_t c = 0; c < 3; ++c) loop(p, c) += random.at(p, q, c) * g.node_features(q, c);
    }
  }
  CHECK(max_abs_diff(y, loop) <= 1e-12);

  DepthwiseKernel missing(8, 3);
  CHECK_THROWS_AS(dconv_generic(g.node_features, e, missing), std::invalid_argument);
}

TEST_CASE("pconv_generic") {
  std::mt19937_64 rng(41);
  const Matrix y = random_matrix(6, 4, rng);
  Matrix eye(4, 4);
  for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
  CHECK(pconv_generic(y, PointwiseKernelSet::from_weight(eye)) == y);

  const Matrix ones(4, 1, 1.0);
  const Matrix rs = pconv_generic(y, PointwiseKernelSet::from_weight(ones));
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (double v : y.row(r)) s += v;
    CHECK(std::abs(rs(r, 0) - s) <= 1e-12);
  }

  const Matrix w = random_matrix(4, 3, rng);
  CHECK(max_abs_diff(pconv_generic(y, PointwiseKernelSet::from_weight(w)), matmul(Tensor(y), Tensor(w)).value()) <= 1e-12);
  CHECK_THROWS_AS(pconv_generic(y, PointwiseKernelSet::from_weight(random_matrix(3, 2, rng))), std::invalid_argument);
}

TEST_CASE("gc_kernel and gat_kernel") {
  const Graph k3 = Graph::undirected(3, std::vector<Edge>{{0, 1}, {1, 2}, {0, 2}}, Matrix(3, 2, 1.0));
  const NormalizedAdjacency a3 = looped_adjacency(k3);
  const DepthwiseKernel k = gc_kernel(a3, 2);
  for (int p = 0; p < 3; ++p) {
    for (int q = 0; q < 3; ++q) {
      for (std::size_t c = 0; c < 2; ++c) CHECK(k.at(p, q, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
  }
  CHECK(channel_spread(k, a3.index) == 0.0);

  std::mt19937_64 rng(42);
  const Graph g = random_graph(rng, 9, 3);
  const NormalizedAdjacency a = looped_adjacency(g);
  const DepthwiseKernel k1 = gc_kernel(a, 1);
  for (int p = 0; p < 9; ++p) {
    for (int q = 0; q < 9; ++q) {
      CHECK(k1.has(p, q) == (a.at(p, q) != 0.0));
      if (k1.has(p, q)) CHECK(k1.at(p, q, 0) == a.at(p, q));
    }
  }

  GatParams zero = GatParams::init(3, 2, rng);
  zero.attention_self = Tensor(Matrix(2, 1));
  zero.attention_neighbor = Tensor(Matrix(2, 1));
  const Matrix alpha0 = gat_attention(Tensor(g.node_features), a.index, zero).value();
  const DepthwiseKernel kz = gat_kernel(a.index, alpha0.data, 3);
  for (int p = 0; p < 9; ++p) {
    for (int q : a.index.neighbors(p)) {
      CHECK(kz.at(p, q, 1) == doctest::Approx(1.0 / static_cast<double>(a.index.neighbors(p).size())));
    }
  }

  const GatParams gp = GatParams::init(3, 2, rng);
  const Matrix alpha = gat_attention(Tensor(g.node_features), a.index, gp).value();
  const DepthwiseKernel kg = gat_kernel(a.index, alpha.data, 3);
  CHECK(channel_spread(kg, a.index) == 0.0);
  for (int p = 0; p < 9; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      double total = 0.0;
      for (int q : a.index.neighbors(p)) total += kg.at(p, q, c);
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("decomposition verifiers") {
  std::mt19937_64 rng(43);
  const Graph one = Graph::undirected(1, {}, random_matrix(1, 3, rng));
  const Matrix w = random_matrix(3, 2, rng);
  CHECK(verify_gc_decomposition(one, one.node_features, w) == 0.0);
  const GatWeights gw{w, random_matrix(2, 1, rng), random_matrix(2, 1, rng)};
  CHECK(verify_gat_decomposition(one, one.node_features, gw) == 0.0);

  for (int t = 0; t < 20; ++t) {
    const auto inst = random_instance(rng);
    const Matrix& x = inst.graph.node_features;
    CHECK(verify_gc_decomposition(inst.graph, x, inst.weight) <= 1e-10);
    const GatWeights p{inst.weight, inst.attention_self, inst.attention_neighbor};
    CHECK(verify_gat_decomposition(inst.graph, x, p) <= 1e-10);
    CHECK(verify_gc_decomposition(inst.graph, x, inst.weight, 0.5) > 0.0);
  }

  // With zero attention the GAT path is a mean aggregation, i.e. GC with row-normalized weights.
  const Graph g = random_graph(rng, 7, 2);
  const GatWeights flat{random_matrix(2, 3, rng), Matrix(3, 1), Matrix(3, 1)};
  const NormalizedAdjacency adj = looped_adjacency(g);
  const Matrix alpha = gat_attention(Tensor(g.node_features), adj.index,
                                     GatParams{Tensor(flat.weight), Tensor(flat.attention_self),
                                               Tensor(flat.attention_neighbor)})
                           .value();
  const Matrix via_kernel =
      pconv_generic(dconv_generic(g.node_features, adj.index, gat_kernel(adj.index, alpha.data, 2)),
                    PointwiseKernelSet::from_weight(flat.weight));
  DepthwiseKernel mean(7, 2);
  for (int p = 0; p < 7; ++p) {
    for (int q : adj.index.neighbors(p)) {
      for (std::size_t c = 0; c < 2; ++c) mean.set(p, q, c, 1.0 / static_cast<double>(adj.index.neighbors(p).size()));
    }
  }
  const Matrix via_mean =
      pconv_generic(dconv_generic(g.node_features, adj.index, mean), PointwiseKernelSet::from_weight(flat.weight));
  CHECK(max_abs_diff(via_kernel, via_mean) <= 1e-12);
  CHECK(verify_gat_decomposition(g, g.node_features, flat) <= 1e-12);
}

TEST_CASE("grid convolution") {
  GridTensor x(4, 4, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      x.at(i, j, 0) = static_cast<double>(i * 4 + j);
      x.at(i, j, 1) = -static_cast<double>(j);
    }
  }
  std::vector<GridKernel> selectors(2, GridKernel(1, 2));
  selectors[0].at(0, 0, 0) = 1.0;
  selectors[1].at(0, 0, 1) = 1.0;
  CHECK(max_abs_diff(grid_conv(x, selectors), x) == 0.0);

  GridTensor ones(5, 5, 1, 1.0);
  const std::vector<GridKernel> box{GridKernel(3, 1, 1.0)};
  const GridTensor counted = grid_conv(ones, box);
  CHECK(counted.at(2, 2, 0) == 9.0);
  CHECK(counted.at(0, 0, 0) == 4.0);
  CHECK(counted.at(0, 2, 0) == 6.0);

  CHECK_THROWS_AS(grid_conv(ones, std::vector<GridKernel>{GridKernel(2, 1)}), std::invalid_argument);
  CHECK_THROWS_AS(grid_dconv(ones, GridKernel(4, 1)), std::invalid_argument);

  std::mt19937_64 rng(44);
  const GridTensor r = random_grid(6, 6, 3, rng);
  std::vector<GridKernel> ks;
  for (int d = 0; d < 4; ++d) ks.push_back(random_kernel(3, 3, rng));
  CHECK(max_abs_diff(grid_conv(r, ks), grid_conv_loop(r, ks)) <= 1e-12);
}

TEST_CASE("grid depthwise separable convolution") {
  std::mt19937_64 rng(45);
  const GridTensor x = random_grid(6, 6, 3, rng);
  const Matrix w = random_matrix(3, 4, rng);
  const PointwiseKernelSet point = PointwiseKernelSet::from_weight(w);

  // Centered delta: only the pointwise step remains.
  GridKernel delta(3, 3);
  for (std::size_t c = 0; c < 3; ++c) delta.at(1, 1, c) = 1.0;
  const GridTensor pure_p = grid_dsconv(x, delta, point);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      for (std::size_t d = 0; d < 4; ++d) {
        double acc = 0.0;
        for (std::size_t c = 0; c < 3; ++c) acc += w(c, d) * x.at(i, j, c);
        CHECK(std::abs(pure_p.at(i, j, d) - acc) <= 1e-12);
      }
    }
  }

  // Channel selectors: only the depthwise step remains.
  const GridKernel depth = random_kernel(3, 3, rng);
  Matrix eye(3, 3);
  for (std::size_t c = 0; c < 3; ++c) eye(c, c) = 1.0;
  CHECK(max_abs_diff(grid_dsconv(x, depth, PointwiseKernelSet::from_weight(eye)), grid_dconv(x, depth)) <= 1e-12);

  // Depthwise loop composed with pointwise loop.
  const GridTensor y = grid_dconv(x, depth);
  GridTensor y_loop(6, 6, 3);
  for (long i = 0; i < 6; ++i) {
    for (long j = 0; j < 6; ++j) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (long a = -1; a <= 1; ++a) {
          for (long b = -1; b <= 1; ++b) {
            if (i + a < 0 || i + a > 5 || j + b < 0 || j + b > 5) continue;
            acc += depth.at(a + 1, b + 1, c) * x.at(i + a, j + b, c);
          }
        }
        y_loop.at(i, j, c) = acc;
      }
    }
  }
  CHECK(max_abs_diff(y, y_loop) <= 1e-12);
  const GridTensor z = grid_dsconv(x, depth, point);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      for (std::size_t d = 0; d < 4; ++d) {
        double acc = 0.0;
        for (std::size_t c = 0; c < 3; ++c) acc += w(c, d) * y_loop.at(i, j, c);
        CHECK(std::abs(z.at(i, j, d) - acc) <= 1e-12);
      }
    }
  }
}

TEST_CASE("oracle suite passes with its negative controls") {
  const auto checks = run_oracle_suite(100, 42);
  REQUIRE(checks.size() >= 7);
  for (const auto& c : checks) {
    INFO(c.name, " = ", c.value);
    CHECK(c.passed);
  }
}

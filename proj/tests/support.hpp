#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ugcn/graph.hpp"
#include "ugcn/tensor.hpp"

namespace ugcn::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.data) v = dist(rng);
  return m;
}

/// Erdős–Rényi graph with random features; no self-loops.
inline Graph random_graph(std::mt19937_64& rng, int n, std::size_t channels, double p = 0.4, int label = 0) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> edges;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (coin(rng)) edges.push_back({a, b});
    }
  }
  return Graph::undirected(n, edges, random_matrix(static_cast<std::size_t>(n), channels, rng), label);
}

inline int random_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Relabels nodes: node p of `g` becomes perm[p].
inline Graph permute_graph(const Graph& g, const std::vector<int>& perm) {
  std::vector<Edge> edges;
  for (const Edge& e : g.edges) edges.push_back({perm[e.node], perm[e.neighbor]});
  Matrix x(g.node_features.rows, g.node_features.cols);
  for (int p = 0; p < g.num_nodes; ++p) {
    for (std::size_t c = 0; c < x.cols; ++c) x(perm[p], c) = g.node_features(p, c);
  }
  return Graph::undirected(g.num_nodes, edges, std::move(x), g.label);
}

/// Scalar probe loss sum(out ⊙ R) for a fixed random R, so every output entry matters.
inline Tensor probe_loss(const Tensor& out, const Matrix& r) { return sum(mul(out, Tensor(r))); }

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Central differences on every entry of every leaf against the recorded gradient.
/// rel = |analytic - numeric| / max(|analytic|, |numeric|, floor).
/// With skip_kinks, entries whose forward and backward one-sided slopes disagree by more
/// than kink_tol (relative) sit within h of a ReLU kink and are counted as skipped.
inline GradCheck finite_difference_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> leaves,
                                         double h = 1e-5, double floor = 1e-5, bool skip_kinks = false,
                                         double kink_tol = 1e-2) {
  for (Tensor& t : leaves) t.zero_grad();
  const Tensor base = loss_fn();
  base.backward();
  const double center = base.item();
  std::vector<Matrix> analytic;
  for (const Tensor& t : leaves) analytic.push_back(t.grad());

  GradCheck result;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    Matrix& v = leaves[i].mutable_value();
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double saved = v.data[k];
      v.data[k] = saved + h;
      const double up = loss_fn().item();
      v.data[k] = saved - h;
      const double down = loss_fn().item();
      v.data[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      if (skip_kinks) {
        const double fwd = (up - center) / h, bwd = (center - down) / h;
        if (std::abs(fwd - bwd) > kink_tol * std::max({std::abs(fwd), std::abs(bwd), floor})) {
          ++result.skipped;
          continue;
        }
      }
      const double a = analytic[i].data[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace ugcn::testing

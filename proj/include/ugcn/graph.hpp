#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <vector>

#include "ugcn/matrix.hpp"

namespace ugcn {

/// Directed incidence (node, neighbor): `neighbor` belongs to the neighborhood of `node`
/// and sends its features to `node` during aggregation.
struct Edge {
  int node = 0;
  int neighbor = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// One undirected sample. Edges are stored sorted by (node, neighbor), unique, and
/// symmetric; node_features is num_nodes x C.
struct Graph {
  int num_nodes = 0;
  std::vector<Edge> edges;
  Matrix node_features;
  int label = 0;
  /// Raw categorical node labels from the source file (empty when the dataset has none).
  std::vector<int> node_labels;

  /// Builds a graph from an undirected edge list: reverse edges are added, duplicates
  /// removed, and the invariants checked. Throws std::invalid_argument on violation.
  static Graph undirected(int num_nodes, std::span<const Edge> edges, Matrix node_features,
                          int label = 0);

  std::size_t num_channels() const { return node_features.cols; }
  bool has_self_loop(int p) const;

  /// Throws std::invalid_argument if an invariant is violated.
  void validate() const;
};

/// Compressed neighbor lists: the neighbors of node p occupy [offsets[p], offsets[p+1]) of
/// `neighbor`, and `node[e]` repeats p for each of those positions.
struct EdgeIndex {
  int num_nodes = 0;
  std::vector<int> node;
  std::vector<int> neighbor;
  std::vector<std::size_t> offsets;

  /// `edges` must be sorted by node; throws on out-of-range endpoints.
  static EdgeIndex from_sorted(int num_nodes, std::span<const Edge> edges);

  std::size_t num_edges() const { return neighbor.size(); }
  std::span<const int> neighbors(int p) const {
    return {neighbor.data() + offsets[p], offsets[p + 1] - offsets[p]};
  }
};

/// D^{-1/2} (A + I) D^{-1/2} stored per edge of the self-looped graph.
struct NormalizedAdjacency {
  EdgeIndex index;
  std::vector<double> values;   ///< aligned with index.neighbor
  std::vector<double> degree;   ///< D_pp, one per node

  /// Weight of (p, q), or 0 when q is not a neighbor of p.
  double at(int p, int q) const;
  Matrix dense() const;
};

/// Block-diagonal packing of several graphs. Self-loops are present on every node.
struct GraphBatch {
  Matrix node_features;
  std::vector<Edge> edges;
  NormalizedAdjacency adjacency;
  std::vector<int> graph_indicator;
  std::vector<int> labels;
  std::vector<int> node_offsets;  ///< first global node id of each graph

  int num_graphs() const { return static_cast<int>(labels.size()); }
  int num_nodes() const { return static_cast<int>(graph_indicator.size()); }
  const EdgeIndex& index() const { return adjacency.index; }
};

/// Adds (p, p) for every node; existing self-loops are kept once. Idempotent.
Graph add_self_loops(const Graph& g);

/// Requires every node to have positive degree in the edge list (self-loops included).
NormalizedAdjacency normalize_adjacency(int num_nodes, std::span<const Edge> sorted_edges);
NormalizedAdjacency normalize_adjacency(const Graph& g);

/// Stacks graphs into one batch, adding self-loops. Throws on an empty list or a
/// channel-count mismatch.
GraphBatch batch_graphs(std::span<const Graph> graphs);
GraphBatch batch_graphs(std::span<const Graph* const> graphs);

/// One-hot min(degree, max_degree) per node, counting neighbors other than the node
/// itself. Result is num_nodes x (max_degree + 1).
Matrix degree_features(const Graph& g, int max_degree);

}  // namespace ugcn

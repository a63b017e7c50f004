#include "ugcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ugcn {

namespace {

void sort_unique(std::vector<Edge>& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

}  // namespace

Graph Graph::undirected(int num_nodes, std::span<const Edge> edges, Matrix node_features,
                        int label) {
  Graph g;
  g.num_nodes = num_nodes;
  g.label = label;
  g.node_features = std::move(node_features);
  g.edges.reserve(edges.size() * 2);
  for (const Edge& e : edges) {
    g.edges.push_back(e);
    g.edges.push_back({e.neighbor, e.node});
  }
  sort_unique(g.edges);
  g.validate();
  return g;
}

bool Graph::has_self_loop(int p) const {
  return std::binary_search(edges.begin(), edges.end(), Edge{p, p});
}

void Graph::validate() const {
  if (num_nodes <= 0) throw std::invalid_argument("Graph: num_nodes must be positive");
  if (label < 0) throw std::invalid_argument("Graph: negative class label");
  if (node_features.rows != static_cast<std::size_t>(num_nodes) || node_features.cols < 1) {
    throw std::invalid_argument("Graph: node_features is " +
                                shape_string(node_features.rows, node_features.cols) +
                                " for " + std::to_string(num_nodes) + " nodes");
  }
  if (!node_labels.empty() && node_labels.size() != static_cast<std::size_t>(num_nodes)) {
    throw std::invalid_argument("Graph: node_labels length differs from num_nodes");
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge& e = edges[i];
    if (e.node < 0 || e.node >= num_nodes || e.neighbor < 0 || e.neighbor >= num_nodes) {
      throw std::invalid_argument("Graph: edge (" + std::to_string(e.node) + ", " +
                                  std::to_string(e.neighbor) + ") out of range");
    }
    if (i > 0 && !(edges[i - 1] < e)) {
      throw std::invalid_argument("Graph: edges not sorted and unique");
    }
  }
  for (const Edge& e : edges) {
    if (!std::binary_search(edges.begin(), edges.end(), Edge{e.neighbor, e.node})) {
      throw std::invalid_argument("Graph: edge list is not symmetric");
    }
  }
}

EdgeIndex EdgeIndex::from_sorted(int num_nodes, std::span<const Edge> edges) {
  EdgeIndex idx;
  idx.num_nodes = num_nodes;
  idx.node.reserve(edges.size());
  idx.neighbor.reserve(edges.size());
  idx.offsets.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  int prev = 0;
  for (const Edge& e : edges) {
    if (e.node < 0 || e.node >= num_nodes || e.neighbor < 0 || e.neighbor >= num_nodes) {
      throw std::invalid_argument("EdgeIndex: edge endpoint out of range");
    }
    if (e.node < prev) throw std::invalid_argument("EdgeIndex: edges not sorted by node");
    prev = e.node;
    idx.node.push_back(e.node);
    idx.neighbor.push_back(e.neighbor);
    ++idx.offsets[static_cast<std::size_t>(e.node) + 1];
  }
  for (std::size_t p = 0; p < static_cast<std::size_t>(num_nodes); ++p) {
    idx.offsets[p + 1] += idx.offsets[p];
  }
  return idx;
}

double NormalizedAdjacency::at(int p, int q) const {
  auto nbrs = index.neighbors(p);
  auto it = std::lower_bound(nbrs.begin(), nbrs.end(), q);
  if (it == nbrs.end() || *it != q) return 0.0;
  return values[index.offsets[p] + static_cast<std::size_t>(it - nbrs.begin())];
}

Matrix NormalizedAdjacency::dense() const {
  const auto n = static_cast<std::size_t>(index.num_nodes);
  Matrix m(n, n);
  for (std::size_t e = 0; e < index.num_edges(); ++e) {
    m(index.node[e], index.neighbor[e]) = values[e];
  }
  return m;
}

Graph add_self_loops(const Graph& g) {
  Graph out = g;
  out.edges.reserve(g.edges.size() + static_cast<std::size_t>(g.num_nodes));
  for (int p = 0; p < g.num_nodes; ++p) out.edges.push_back({p, p});
  sort_unique(out.edges);
  return out;
}

NormalizedAdjacency normalize_adjacency(int num_nodes, std::span<const Edge> sorted_edges) {
  NormalizedAdjacency adj;
  adj.index = EdgeIndex::from_sorted(num_nodes, sorted_edges);
  adj.degree.assign(static_cast<std::size_t>(num_nodes), 0.0);
  for (int p = 0; p < num_nodes; ++p) {
    adj.degree[p] = static_cast<double>(adj.index.neighbors(p).size());
    if (adj.degree[p] == 0.0) {
      throw std::invalid_argument("normalize_adjacency: node " + std::to_string(p) +
                                  " has degree 0 (missing self-loop)");
    }
  }
  adj.values.resize(adj.index.num_edges());
  for (std::size_t e = 0; e < adj.index.num_edges(); ++e) {
    adj.values[e] = 1.0 / std::sqrt(adj.degree[adj.index.node[e]] *
                                    adj.degree[adj.index.neighbor[e]]);
  }
  return adj;
}

NormalizedAdjacency normalize_adjacency(const Graph& g) {
  return normalize_adjacency(g.num_nodes, g.edges);
}

GraphBatch batch_graphs(std::span<const Graph* const> graphs) {
  if (graphs.empty()) throw std::invalid_argument("batch_graphs: empty graph list");
  const std::size_t channels = graphs.front()->num_channels();
  std::size_t total_nodes = 0;
  std::size_t total_edges = 0;
  for (const Graph* g : graphs) {
    if (g->num_channels() != channels) {
      throw std::invalid_argument("batch_graphs: feature dimension mismatch (" +
                                  std::to_string(g->num_channels()) + " vs " +
                                  std::to_string(channels) + ")");
    }
    total_nodes += static_cast<std::size_t>(g->num_nodes);
    total_edges += g->edges.size() + static_cast<std::size_t>(g->num_nodes);
  }

  GraphBatch batch;
  batch.node_features = Matrix(total_nodes, channels);
  batch.edges.reserve(total_edges);
  batch.graph_indicator.reserve(total_nodes);
  batch.labels.reserve(graphs.size());
  batch.node_offsets.reserve(graphs.size());

  int offset = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph looped = add_self_loops(*graphs[gi]);
    batch.node_offsets.push_back(offset);
    batch.labels.push_back(looped.label);
    std::copy(looped.node_features.data.begin(), looped.node_features.data.end(),
              batch.node_features.data.begin() + static_cast<std::ptrdiff_t>(offset) *
                                                     static_cast<std::ptrdiff_t>(channels));
    for (int p = 0; p < looped.num_nodes; ++p) {
      batch.graph_indicator.push_back(static_cast<int>(gi));
    }
    for (const Edge& e : looped.edges) {
      batch.edges.push_back({e.node + offset, e.neighbor + offset});
    }
    offset += looped.num_nodes;
  }
  // Graphs occupy increasing node ranges, so the concatenated list stays sorted.
  batch.adjacency = normalize_adjacency(offset, batch.edges);
  return batch;
}

GraphBatch batch_graphs(std::span<const Graph> graphs) {
  std::vector<const Graph*> ptrs;
  ptrs.reserve(graphs.size());
  for (const Graph& g : graphs) ptrs.push_back(&g);
  return batch_graphs(std::span<const Graph* const>(ptrs));
}

Matrix degree_features(const Graph& g, int max_degree) {
  if (max_degree < 0) throw std::invalid_argument("degree_features: negative max_degree");
  Matrix out(static_cast<std::size_t>(g.num_nodes), static_cast<std::size_t>(max_degree) + 1);
  std::vector<int> degree(static_cast<std::size_t>(g.num_nodes), 0);
  for (const Edge& e : g.edges) {
    if (e.node != e.neighbor) ++degree[e.node];
  }
  for (int p = 0; p < g.num_nodes; ++p) {
    out(p, std::min(degree[p], max_degree)) = 1.0;
  }
  return out;
}

}  // namespace ugcn

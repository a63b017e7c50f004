#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "ugcn/data_io.hpp"
#include "ugcn/dsconv_oracle.hpp"
#include "ugcn/layers.hpp"
#include "ugcn/train.hpp"

namespace py = pybind11;
using namespace ugcn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a, const char* what) {
  if (a.ndim() != 2) throw std::invalid_argument(std::string(what) + " must be 2-D");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

Array to_numpy(const Matrix& m) {
  Array a({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), a.mutable_data());
  return a;
}

/// Single-graph batch (self-loops added) from an undirected E x 2 edge array.
GraphBatch single_graph(int num_nodes, const IntArray& edges, const Array& x) {
  if (edges.ndim() != 2 || (edges.size() > 0 && edges.shape(1) != 2))
    throw std::invalid_argument("edges must have shape (E, 2)");
  std::vector<Edge> list;
  for (py::ssize_t i = 0; i < edges.shape(0); ++i) list.push_back({edges.at(i, 0), edges.at(i, 1)});
  const Graph g = Graph::undirected(num_nodes, list, to_matrix(x, "x"));
  return batch_graphs(std::span<const Graph>(&g, 1));
}

Tensor leaf(const Array& a, const char* what) { return Tensor(to_matrix(a, what)); }

std::string train(const std::string& dataset_dir, const std::string& name, const std::string& model, int epochs,
                  int folds, std::uint64_t seed, int hidden, int blocks, int heads, int batch_size, double dropout,
                  double lr, bool softmax, int degree_cap) {
  RunConfig c;
  c.dataset_dir = dataset_dir;
  c.dataset_name = name;
  c.model = parse_model_kind(model);
  c.epochs = epochs;
  c.folds = folds;
  c.seed = seed;
  c.hidden = hidden;
  c.blocks = blocks;
  c.heads = heads;
  c.batch_size = batch_size;
  c.dropout = dropout;
  c.lr = lr;
  c.normalize_attention = softmax;
  c.degree_cap = degree_cap;
  Dataset ds = parse_tu_dataset(c.dataset_dir, name);
  build_features(ds, degree_cap);
  py::gil_scoped_release release;
  return to_json(run_cv(c, ds)).dump();
}

}  // namespace

PYBIND11_MODULE(_ugcn, m) {
  m.doc() = "Depthwise-separable graph convolutions: layers, oracles and training";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def(
      "gc_conv",
      [](int n, const IntArray& edges, const Array& x, const Array& weight) {
        const GraphBatch b = single_graph(n, edges, x);
        return to_numpy(gc_forward(b.adjacency, Tensor(b.node_features), GcParams{leaf(weight, "weight")}).value());
      },
      py::arg("num_nodes"), py::arg("edges"), py::arg("x"), py::arg("weight"));

  m.def(
      "gat_conv",
      [](int n, const IntArray& edges, const Array& x, const Array& weight, const Array& a_self,
         const Array& a_neighbor) {
        const GraphBatch b = single_graph(n, edges, x);
        const GatParams p{leaf(weight, "weight"), leaf(a_self, "attention_self"),
                          leaf(a_neighbor, "attention_neighbor")};
        return to_numpy(gat_forward(b.index(), Tensor(b.node_features), p).value());
      },
      py::arg("num_nodes"), py::arg("edges"), py::arg("x"), py::arg("weight"), py::arg("attention_self"),
      py::arg("attention_neighbor"));

  m.def(
      "sugc_conv",
      [](int n, const IntArray& edges, const Array& x, const Array& theta_self, const Array& theta_neighbor,
         const Array& weight, bool softmax) {
        const GraphBatch b = single_graph(n, edges, x);
        const std::vector<SugcParams> heads{
            {leaf(theta_self, "theta_self"), leaf(theta_neighbor, "theta_neighbor"), leaf(weight, "weight")}};
        return to_numpy(sugc_forward(b.index(), Tensor(b.node_features), heads, {softmax, 0.2}).value());
      },
      py::arg("num_nodes"), py::arg("edges"), py::arg("x"), py::arg("theta_self"), py::arg("theta_neighbor"),
      py::arg("weight"), py::arg("softmax") = true);

  m.def(
      "gugc_conv",
      [](int n, const IntArray& edges, const Array& x, const Array& theta_self, const Array& theta_neighbor,
         bool softmax) {
        const GraphBatch b = single_graph(n, edges, x);
        const GugcParams p{leaf(theta_self, "theta_self"), leaf(theta_neighbor, "theta_neighbor")};
        return to_numpy(gugc_forward(b.index(), Tensor(b.node_features), p, {softmax, 0.2}).value());
      },
      py::arg("num_nodes"), py::arg("edges"), py::arg("x"), py::arg("theta_self"), py::arg("theta_neighbor"),
      py::arg("softmax") = true);

  m.def(
      "verify",
      [](int trials, std::uint64_t seed) {
        py::list out;
        for (const auto& r : oracle::run_oracle_suite(trials, seed)) {
          py::dict d;
          d["name"] = r.name;
          d["value"] = r.value;
          d["threshold"] = r.threshold;
          d["upper_bound"] = r.upper_bound;
          d["passed"] = r.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("trials") = 100, py::arg("seed") = 42);

  m.def(
      "load_dataset",
      [](const std::filesystem::path& directory, const std::string& name, int degree_cap) {
        Dataset ds = parse_tu_dataset(directory, name);
        build_features(ds, degree_cap);
        py::dict d;
        d["name"] = ds.meta.name;
        d["num_graphs"] = ds.meta.num_graphs;
        d["num_classes"] = ds.meta.num_classes;
        d["avg_nodes"] = ds.meta.avg_nodes;
        d["max_nodes"] = ds.meta.max_nodes;
        d["has_node_labels"] = ds.meta.has_node_labels;
        d["num_features"] = ds.graphs.front().num_channels();
        std::vector<int> labels, sizes;
        for (const Graph& g : ds.graphs) {
          labels.push_back(g.label);
          sizes.push_back(g.num_nodes);
        }
        d["labels"] = labels;
        d["num_nodes"] = sizes;
        return d;
      },
      py::arg("directory"), py::arg("name"), py::arg("degree_cap") = 136);

  m.def(
      "stratified_kfold",
      [](const std::vector<int>& labels, int k, std::uint64_t seed) { return stratified_kfold(labels, k, seed).folds; },
      py::arg("labels"), py::arg("k"), py::arg("seed"));

  m.def("_train_json", &train, py::arg("dataset_dir"), py::arg("name"), py::arg("model"), py::arg("epochs"),
        py::arg("folds"), py::arg("seed"), py::arg("hidden"), py::arg("blocks"), py::arg("heads"),
        py::arg("batch_size"), py::arg("dropout"), py::arg("lr"), py::arg("softmax"), py::arg("degree_cap"));
}

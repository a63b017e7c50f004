#include "ugcn/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace ugcn {

namespace fs = std::filesystem;

namespace {

/// Integers separated by whitespace and/or commas.
std::vector<long long> read_integers(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<long long> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream tokens(line);
    std::string token;
    while (tokens >> token) {
      long long v = 0;
      const auto* end = token.data() + token.size();
      const auto [ptr, ec] = std::from_chars(token.data(), end, v);
      if (ec != std::errc() || ptr != end) {
        throw DataError(path.filename().string() + ":" + std::to_string(line_no) +
                        ": non-integer token '" + token + "'");
      }
      values.push_back(v);
    }
  }
  return values;
}

fs::path require_file(const fs::path& dir, const std::string& name, const char* suffix) {
  fs::path p = dir / (name + suffix);
  if (!fs::exists(p)) throw DataError("missing dataset file " + p.string());
  return p;
}

std::vector<int> remap_sorted(const std::vector<long long>& raw, std::vector<long long>* distinct_out) {
  std::vector<long long> distinct = raw;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<int> mapped(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    mapped[i] = static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), raw[i]) -
                                 distinct.begin());
  }
  if (distinct_out) *distinct_out = std::move(distinct);
  return mapped;
}

}  // namespace

Dataset parse_tu_dataset(const fs::path& directory, const std::string& name) {
  const auto adjacency = read_integers(require_file(directory, name, "_A.txt"));
  const auto indicator = read_integers(require_file(directory, name, "_graph_indicator.txt"));
  const auto graph_labels = read_integers(require_file(directory, name, "_graph_labels.txt"));
  const fs::path node_label_path = directory / (name + "_node_labels.txt");
  const bool has_node_labels = fs::exists(node_label_path);
  std::vector<long long> node_labels;
  if (has_node_labels) {
    node_labels = read_integers(node_label_path);
    if (node_labels.size() != indicator.size()) {
      throw DataError(name + ": node label count " + std::to_string(node_labels.size()) +
                      " differs from node count " + std::to_string(indicator.size()));
    }
  }
  if (adjacency.size() % 2 != 0) throw DataError(name + "_A.txt: odd number of endpoints");

  const auto num_graphs = static_cast<long long>(graph_labels.size());
  if (num_graphs == 0) throw DataError(name + ": no graphs");

  // Global node n (0-based) -> (graph, local index).
  std::vector<int> local(indicator.size());
  std::vector<int> sizes(static_cast<std::size_t>(num_graphs), 0);
  for (std::size_t n = 0; n < indicator.size(); ++n) {
    const long long g = indicator[n];
    if (g < 1 || g > num_graphs) {
      throw DataError(name + "_graph_indicator.txt: node " + std::to_string(n + 1) +
                      " references unknown graph " + std::to_string(g));
    }
    local[n] = sizes[static_cast<std::size_t>(g - 1)]++;
  }
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    if (sizes[g] == 0) throw DataError(name + ": graph " + std::to_string(g + 1) + " has no nodes");
  }

  std::vector<std::vector<Edge>> edges(static_cast<std::size_t>(num_graphs));
  const auto total_nodes = static_cast<long long>(indicator.size());
  for (std::size_t i = 0; i < adjacency.size(); i += 2) {
    const long long a = adjacency[i], b = adjacency[i + 1];
    if (a < 1 || a > total_nodes || b < 1 || b > total_nodes) {
      throw DataError(name + "_A.txt: edge (" + std::to_string(a) + ", " + std::to_string(b) +
                      ") references an unknown node");
    }
    const long long ga = indicator[static_cast<std::size_t>(a - 1)];
    const long long gb = indicator[static_cast<std::size_t>(b - 1)];
    if (ga != gb) {
      throw DataError(name + "_A.txt: edge (" + std::to_string(a) + ", " + std::to_string(b) +
                      ") crosses graphs " + std::to_string(ga) + " and " + std::to_string(gb));
    }
    edges[static_cast<std::size_t>(ga - 1)].push_back(
        {local[static_cast<std::size_t>(a - 1)], local[static_cast<std::size_t>(b - 1)]});
  }

  Dataset ds;
  const std::vector<int> labels = remap_sorted(graph_labels, &ds.class_values);
  std::vector<std::vector<int>> per_graph_node_labels(static_cast<std::size_t>(num_graphs));
  if (has_node_labels) {
    for (std::size_t g = 0; g < sizes.size(); ++g) per_graph_node_labels[g].resize(sizes[g]);
    for (std::size_t n = 0; n < indicator.size(); ++n) {
      per_graph_node_labels[static_cast<std::size_t>(indicator[n] - 1)][local[n]] =
          static_cast<int>(node_labels[n]);
    }
  }

  ds.graphs.reserve(static_cast<std::size_t>(num_graphs));
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    Graph graph = Graph::undirected(sizes[g], edges[g], Matrix(sizes[g], 1, 1.0), labels[g]);
    graph.node_labels = std::move(per_graph_node_labels[g]);
    ds.graphs.push_back(std::move(graph));
  }

  ds.meta.name = name;
  ds.meta.num_graphs = static_cast<int>(num_graphs);
  ds.meta.num_classes = static_cast<int>(ds.class_values.size());
  ds.meta.max_nodes = *std::max_element(sizes.begin(), sizes.end());
  ds.meta.avg_nodes = static_cast<double>(indicator.size()) / static_cast<double>(num_graphs);
  ds.meta.has_node_labels = has_node_labels;
  return ds;
}

void build_features(Dataset& dataset, int max_degree_cap) {
  if (dataset.meta.has_node_labels) {
    std::vector<int> distinct;
    for (const Graph& g : dataset.graphs) distinct.insert(distinct.end(), g.node_labels.begin(), g.node_labels.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (Graph& g : dataset.graphs) {
      Matrix f(static_cast<std::size_t>(g.num_nodes), distinct.size());
      for (int p = 0; p < g.num_nodes; ++p) {
        const auto slot = std::lower_bound(distinct.begin(), distinct.end(), g.node_labels[p]) - distinct.begin();
        f(p, static_cast<std::size_t>(slot)) = 1.0;
      }
      g.node_features = std::move(f);
    }
    return;
  }
  for (Graph& g : dataset.graphs) g.node_features = degree_features(g, max_degree_cap);
}

std::vector<int> FoldPlan::train_indices(std::size_t k) const {
  std::vector<int> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (f != k) out.insert(out.end(), folds[f].begin(), folds[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FoldPlan stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be at least 2");
  if (static_cast<std::size_t>(k) > labels.size()) {
    throw std::invalid_argument("stratified_kfold: k = " + std::to_string(k) + " exceeds " +
                                std::to_string(labels.size()) + " samples");
  }
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));

  FoldPlan plan;
  plan.seed = seed;
  plan.folds.resize(static_cast<std::size_t>(k));
  std::mt19937_64 rng(seed);
  // Deal each shuffled class round-robin, continuing where the previous class stopped so
  // that overall fold sizes stay balanced too.
  std::size_t next = 0;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (int idx : members) {
      plan.folds[next].push_back(idx);
      next = (next + 1) % plan.folds.size();
    }
  }
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

// ---- metrics documents ----------------------------------------------------------------

nlohmann::json to_json(const RunRecord& run) {
  nlohmann::json folds = nlohmann::json::array();
  for (const FoldRecord& f : run.folds) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const EpochRecord& e : f.epochs) {
      epochs.push_back({{"train_loss", e.train_loss}, {"train_acc", e.train_acc}, {"test_acc", e.test_acc}});
    }
    nlohmann::json fold = {{"fold", f.fold}, {"failed", f.failed}, {"epochs", std::move(epochs)}};
    if (f.failed) fold["error"] = f.error;
    folds.push_back(std::move(fold));
  }
  nlohmann::json doc = {
      {"config", run.config},
      {"folds", std::move(folds)},
      {"summary",
       {{"mean_acc", run.summary.mean_acc},
        {"std_acc", run.summary.std_acc},
        {"best_epoch", run.summary.best_epoch},
        {"epoch_mean_acc", run.summary.epoch_mean_acc},
        {"completed_folds", run.summary.completed_folds},
        {"complete", run.summary.complete}}},
      {"runtime_seconds", run.runtime_seconds},
  };
  if (!run.report.is_null()) doc["report"] = run.report;
  return doc;
}

std::string metrics_schema_error(const nlohmann::json& doc) {
  if (!doc.is_object()) return "document is not an object";
  if (!doc.contains("config") || !doc["config"].is_object()) return "missing object 'config'";
  if (!doc.contains("folds") || !doc["folds"].is_array()) return "missing array 'folds'";
  for (const auto& fold : doc["folds"]) {
    if (!fold.contains("epochs") || !fold["epochs"].is_array()) return "fold without 'epochs' array";
    for (const auto& e : fold["epochs"]) {
      for (const char* key : {"train_loss", "train_acc", "test_acc"}) {
        if (!e.contains(key) || !e[key].is_number()) return std::string("epoch without numeric '") + key + "'";
      }
    }
  }
  if (!doc.contains("summary") || !doc["summary"].is_object()) return "missing object 'summary'";
  const auto& s = doc["summary"];
  for (const char* key : {"mean_acc", "std_acc", "best_epoch"}) {
    if (!s.contains(key) || !s[key].is_number()) return std::string("summary without numeric '") + key + "'";
  }
  if (!doc.contains("runtime_seconds") || !doc["runtime_seconds"].is_number()) {
    return "missing numeric 'runtime_seconds'";
  }
  return {};
}

RunRecord run_record_from_json(const nlohmann::json& doc) {
  if (const std::string err = metrics_schema_error(doc); !err.empty()) {
    throw DataError("metrics document: " + err);
  }
  RunRecord run;
  run.config = doc["config"];
  for (const auto& f : doc["folds"]) {
    FoldRecord fold;
    fold.fold = f.value("fold", 0);
    fold.failed = f.value("failed", false);
    fold.error = f.value("error", std::string{});
    for (const auto& e : f["epochs"]) {
      fold.epochs.push_back({e["train_loss"].get<double>(), e["train_acc"].get<double>(),
                             e["test_acc"].get<double>()});
    }
    run.folds.push_back(std::move(fold));
  }
  const auto& s = doc["summary"];
  run.summary.mean_acc = s["mean_acc"].get<double>();
  run.summary.std_acc = s["std_acc"].get<double>();
  run.summary.best_epoch = s["best_epoch"].get<int>();
  run.summary.epoch_mean_acc = s.value("epoch_mean_acc", std::vector<double>{});
  run.summary.completed_folds = s.value("completed_folds", 0);
  run.summary.complete = s.value("complete", true);
  run.runtime_seconds = doc["runtime_seconds"].get<double>();
  if (doc.contains("report")) run.report = doc["report"];
  return run;
}

void export_metrics(const RunRecord& run, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics to " + path.string());
  out << to_json(run).dump(2) << '\n';
  if (!out) throw std::runtime_error("failed while writing " + path.string());
}

RunRecord parse_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("metrics file " + path.string() + ": " + e.what());
  }
  return run_record_from_json(doc);
}

}  // namespace ugcn

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ugcn/graph.hpp"

namespace ugcn {

struct DatasetMeta {
  std::string name;
  int num_graphs = 0;
  int num_classes = 0;
  double avg_nodes = 0.0;
  int max_nodes = 0;
  bool has_node_labels = false;
};

struct Dataset {
  std::vector<Graph> graphs;
  DatasetMeta meta;
  /// Original label value of each remapped class index, ascending.
  std::vector<long long> class_values;
};

/// Reads `<name>_A.txt`, `<name>_graph_indicator.txt`, `<name>_graph_labels.txt` and, when
/// present, `<name>_node_labels.txt` from `directory`. File indices are 1-based; the graphs
/// come back 0-based and symmetric, without self-loops, with a constant 1-column feature
/// placeholder until build_features() runs. Throws DataError on malformed input.
Dataset parse_tu_dataset(const std::filesystem::path& directory, const std::string& name);

/// One-hot node labels when the dataset has them, one-hot capped degree otherwise.
/// Every graph in the dataset ends up with the same channel count.
void build_features(Dataset& dataset, int max_degree_cap = 136);

struct FoldPlan {
  std::vector<std::vector<int>> folds;
  std::uint64_t seed = 0;

  std::size_t size() const { return folds.size(); }
  /// Every index outside fold `k`, ascending.
  std::vector<int> train_indices(std::size_t k) const;
};

/// Class-stratified k-fold split: within every class, fold sizes differ by at most one.
/// Deterministic in `seed`. Throws std::invalid_argument for k < 2 or k > labels.size().
FoldPlan stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed);

// ---- metrics documents ----------------------------------------------------------------

struct EpochRecord {
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct FoldRecord {
  int fold = 0;
  std::vector<EpochRecord> epochs;
  bool failed = false;
  std::string error;
};

/// Cross-validation summary: mean test accuracy across folds per epoch, the best such
/// mean, and the across-fold standard deviation at that epoch.
struct CvSummary {
  double mean_acc = 0.0;
  double std_acc = 0.0;
  int best_epoch = 0;  ///< 1-based
  std::vector<double> epoch_mean_acc;
  int completed_folds = 0;
  bool complete = true;
};

struct RunRecord {
  nlohmann::json config = nlohmann::json::object();
  std::vector<FoldRecord> folds;
  CvSummary summary;
  double runtime_seconds = 0.0;
  /// Probe-specific payload (capacity table, loss curves); omitted when null.
  nlohmann::json report;
};

nlohmann::json to_json(const RunRecord& run);
RunRecord run_record_from_json(const nlohmann::json& doc);

/// Empty string when `doc` carries the required keys with the right types, otherwise a
/// description of the first problem found.
std::string metrics_schema_error(const nlohmann::json& doc);

/// Writes the run as a JSON document. Throws std::runtime_error if the path is unwritable.
void export_metrics(const RunRecord& run, const std::filesystem::path& path);
RunRecord parse_metrics(const std::filesystem::path& path);

}  // namespace ugcn

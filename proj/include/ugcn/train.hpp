#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ugcn/data_io.hpp"
#include "ugcn/model.hpp"

namespace ugcn {

struct RunConfig {
  std::filesystem::path dataset_dir;
  std::string dataset_name;
  ModelKind model = ModelKind::sugcn;
  int hidden = 32;
  int blocks = 5;
  int heads = 4;
  int batch_size = 32;
  double dropout = 0.5;
  double lr = 0.001;
  int epochs = 500;
  int folds = 10;
  std::uint64_t seed = 0;
  bool normalize_attention = true;
  bool skip_sum = true;
  int degree_cap = 136;
  std::filesystem::path out;

  nlohmann::json to_json() const;
};

UgcnConfig model_config(const RunConfig& config, std::size_t in_channels, std::size_t num_classes);

/// Deterministic 64-bit seed for a (base, stream...) tuple.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> stream);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean cross-entropy and accuracy in eval mode, in mini-batches of `batch_size`.
Evaluation evaluate(Ugcn& model, std::span<const Graph* const> graphs, int batch_size);

/// Called after every epoch; returning false stops training early.
using EpochHook = std::function<bool(int epoch, const EpochRecord&)>;

/// Trains `model` in place for config.epochs epochs. Each epoch shuffles the training set
/// with a generator seeded by (seed, fold, epoch). train_loss/train_acc come from the
/// training passes; test_acc is measured in eval mode after the epoch. Throws NumericalError
/// naming the epoch and batch on a non-finite loss.
FoldRecord train_fold(const RunConfig& config, Ugcn& model, std::span<const Graph* const> train,
                      std::span<const Graph* const> test, int fold, const EpochHook& hook = {});

/// Cross-fold mean test accuracy per epoch over the folds that finished, its maximum, and
/// the population standard deviation across those folds at the maximizing epoch.
CvSummary summarize_cv(std::span<const FoldRecord> folds, int epochs);

/// Stratified k-fold CV on a dataset whose features are already built. A fold that fails
/// numerically is recorded with its error and the run continues.
RunRecord run_cv(const RunConfig& config, const Dataset& dataset, const EpochHook& hook = {});

/// For every (model, ratio): two blocks without skip-sum, hidden 32, lr 0.005, a single
/// head, trained on a seeded `ratio` fraction of the dataset for config.epochs epochs.
/// Reports eval-mode training accuracy after the last epoch.
RunRecord capacity_probe(const RunConfig& config, const Dataset& dataset, std::span<const double> ratios,
                         std::span<const ModelKind> models);

/// 90/10 stratified split; per model, eval-mode train and validation loss after each epoch,
/// gap = val - train, and its mean over the last 50 epochs (all epochs if fewer).
RunRecord generalization_probe(const RunConfig& config, const Dataset& dataset,
                               std::span<const ModelKind> models);

/// Indices of a seeded subset holding round(ratio * n) graphs (at least one).
std::vector<int> ratio_subset(std::size_t n, double ratio, std::uint64_t seed);

}  // namespace ugcn

#include "ugcn/train.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace ugcn {

nlohmann::json RunConfig::to_json() const {
  return {
      {"dataset_dir", dataset_dir.string()},
      {"dataset_name", dataset_name},
      {"model", to_string(model)},
      {"hidden", hidden},
      {"blocks", blocks},
      {"heads", heads},
      {"batch_size", batch_size},
      {"dropout", dropout},
      {"lr", lr},
      {"epochs", epochs},
      {"folds", folds},
      {"seed", seed},
      {"normalize_attention", normalize_attention},
      {"skip_sum", skip_sum},
      {"degree_cap", degree_cap},
  };
}

UgcnConfig model_config(const RunConfig& config, std::size_t in_channels, std::size_t num_classes) {
  UgcnConfig m;
  m.kind = config.model;
  m.in_channels = in_channels;
  m.num_classes = num_classes;
  m.hidden = config.hidden;
  m.blocks = config.blocks;
  m.heads = config.heads;
  m.dropout = config.dropout;
  m.normalize_attention = config.normalize_attention;
  m.skip_sum = config.skip_sum;
  return m;
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32)};
  for (std::uint64_t s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

int count_correct(const Matrix& logits, std::span<const int> labels) {
  int correct = 0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto row = logits.row(r);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    if (best == labels[r]) ++correct;
  }
  return correct;
}

std::vector<GraphBatch> make_batches(std::span<const Graph* const> graphs, int batch_size) {
  std::vector<GraphBatch> out;
  const auto step = static_cast<std::size_t>(batch_size);
  for (std::size_t i = 0; i < graphs.size(); i += step) {
    out.push_back(batch_graphs(graphs.subspan(i, std::min(step, graphs.size() - i))));
  }
  return out;
}

Evaluation evaluate_batches(Ugcn& model, std::span<const GraphBatch> batches) {
  std::mt19937_64 unused(0);
  double loss = 0.0;
  int correct = 0;
  std::size_t total = 0;
  for (const GraphBatch& b : batches) {
    const Tensor logits = model.forward(b, Mode::eval, unused).detach();
    loss += cross_entropy(logits, b.labels).item() * static_cast<double>(b.num_graphs());
    correct += count_correct(logits.value(), b.labels);
    total += b.num_graphs();
  }
  if (total == 0) return {};
  return {loss / static_cast<double>(total), static_cast<double>(correct) / static_cast<double>(total)};
}

void check_batch_size(int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
}

}  // namespace

Evaluation evaluate(Ugcn& model, std::span<const Graph* const> graphs, int batch_size) {
  check_batch_size(batch_size);
  const auto batches = make_batches(graphs, batch_size);
  return evaluate_batches(model, batches);
}

FoldRecord train_fold(const RunConfig& config, Ugcn& model, std::span<const Graph* const> train,
                      std::span<const Graph* const> test, int fold, const EpochHook& hook) {
  check_batch_size(config.batch_size);
  if (train.empty()) throw std::invalid_argument("train_fold: empty training set");

  FoldRecord record;
  record.fold = fold;
  std::vector<Tensor> params = model.parameters();
  AdamOptions adam;
  adam.lr = config.lr;
  AdamState optimizer(params, adam);
  std::mt19937_64 dropout_rng(derive_seed(config.seed, {static_cast<std::uint64_t>(fold), 0xd20u}));
  const std::vector<GraphBatch> test_batches = make_batches(test, config.batch_size);

  std::vector<const Graph*> order(train.begin(), train.end());
  const auto step = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(
        derive_seed(config.seed, {static_cast<std::uint64_t>(fold), static_cast<std::uint64_t>(epoch)}));
    std::copy(train.begin(), train.end(), order.begin());
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    int correct = 0;
    int batch_index = 0;
    for (std::size_t i = 0; i < order.size(); i += step, ++batch_index) {
      const std::span<const Graph* const> slice(order.data() + i, std::min(step, order.size() - i));
      const GraphBatch batch = batch_graphs(slice);
      const Tensor logits = model.forward(batch, Mode::train, dropout_rng);
      const Tensor loss = cross_entropy(logits, batch.labels);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericalError("fold " + std::to_string(fold) + ", epoch " + std::to_string(epoch + 1) +
                             ", batch " + std::to_string(batch_index) + ": non-finite loss " +
                             std::to_string(value));
      }
      for (Tensor& p : params) p.zero_grad();
      loss.backward();
      adam_step(params, optimizer);
      loss_sum += value * static_cast<double>(batch.num_graphs());
      correct += count_correct(logits.value(), batch.labels);
    }

    EpochRecord e;
    e.train_loss = loss_sum / static_cast<double>(order.size());
    e.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    e.test_acc = test_batches.empty() ? 0.0 : evaluate_batches(model, test_batches).accuracy;
    record.epochs.push_back(e);
    if (hook && !hook(epoch + 1, e)) break;
  }
  return record;
}

CvSummary summarize_cv(std::span<const FoldRecord> folds, int epochs) {
  CvSummary s;
  std::vector<const FoldRecord*> done;
  for (const FoldRecord& f : folds) {
    if (!f.failed && static_cast<int>(f.epochs.size()) >= epochs) done.push_back(&f);
  }
  s.completed_folds = static_cast<int>(done.size());
  s.complete = !folds.empty() && done.size() == folds.size();
  if (done.empty() || epochs < 1) return s;

  const auto n = static_cast<double>(done.size());
  s.epoch_mean_acc.assign(static_cast<std::size_t>(epochs), 0.0);
  for (int e = 0; e < epochs; ++e) {
    double total = 0.0;
    for (const FoldRecord* f : done) total += f->epochs[static_cast<std::size_t>(e)].test_acc;
    s.epoch_mean_acc[static_cast<std::size_t>(e)] = total / n;
  }
  const auto best = std::max_element(s.epoch_mean_acc.begin(), s.epoch_mean_acc.end());
  const auto best_index = static_cast<std::size_t>(best - s.epoch_mean_acc.begin());
  s.best_epoch = static_cast<int>(best_index) + 1;
  s.mean_acc = *best;
  double var = 0.0;
  for (const FoldRecord* f : done) {
    const double d = f->epochs[best_index].test_acc - s.mean_acc;
    var += d * d;
  }
  s.std_acc = std::sqrt(var / n);
  return s;
}

RunRecord run_cv(const RunConfig& config, const Dataset& dataset, const EpochHook& hook) {
  const auto started = std::chrono::steady_clock::now();
  if (dataset.graphs.empty()) throw DataError("run_cv: dataset has no graphs");

  std::vector<int> labels;
  for (const Graph& g : dataset.graphs) labels.push_back(g.label);
  const FoldPlan plan = stratified_kfold(labels, config.folds, config.seed);
  const UgcnConfig mc = model_config(config, dataset.graphs.front().num_channels(),
                                     static_cast<std::size_t>(dataset.meta.num_classes));

  RunRecord run;
  run.config = config.to_json();
  for (std::size_t k = 0; k < plan.size(); ++k) {
    std::vector<const Graph*> train, test;
    for (int i : plan.train_indices(k)) train.push_back(&dataset.graphs[static_cast<std::size_t>(i)]);
    for (int i : plan.folds[k]) test.push_back(&dataset.graphs[static_cast<std::size_t>(i)]);

    Ugcn model(mc, derive_seed(config.seed, {0x1417u, k}));
    try {
      run.folds.push_back(train_fold(config, model, train, test, static_cast<int>(k), hook));
    } catch (const NumericalError& e) {
      FoldRecord failed;
      failed.fold = static_cast<int>(k);
      failed.failed = true;
      failed.error = e.what();
      run.folds.push_back(std::move(failed));
    }
  }
  run.summary = summarize_cv(run.folds, config.epochs);
  run.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

std::vector<int> ratio_subset(std::size_t n, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("ratio must lie in (0, 1]");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(ratio * static_cast<double>(n))));
  idx.resize(std::min(keep, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

RunRecord capacity_probe(const RunConfig& config, const Dataset& dataset, std::span<const double> ratios,
                         std::span<const ModelKind> models) {
  const auto started = std::chrono::steady_clock::now();
  if (dataset.graphs.empty()) throw DataError("capacity_probe: dataset has no graphs");
  RunConfig probe = config;
  probe.blocks = 2;
  probe.skip_sum = false;
  probe.hidden = 32;
  probe.lr = 0.005;
  probe.heads = 1;

  RunRecord run;
  run.config = probe.to_json();
  nlohmann::json rows = nlohmann::json::array();
  int fold = 0;
  for (ModelKind kind : models) {
    probe.model = kind;
    const UgcnConfig mc = model_config(probe, dataset.graphs.front().num_channels(),
                                       static_cast<std::size_t>(dataset.meta.num_classes));
    for (double ratio : ratios) {
      std::vector<const Graph*> train;
      for (int i : ratio_subset(dataset.graphs.size(), ratio, derive_seed(config.seed, {0xca9u})))
        train.push_back(&dataset.graphs[static_cast<std::size_t>(i)]);
      Ugcn model(mc, derive_seed(config.seed, {0x1417u, 0}));
      FoldRecord record = train_fold(probe, model, train, {}, fold++);
      const Evaluation final_fit = evaluate(model, train, probe.batch_size);
      rows.push_back({{"model", to_string(kind)},
                      {"ratio", ratio},
                      {"num_train", train.size()},
                      {"final_train_acc", final_fit.accuracy},
                      {"final_train_loss", final_fit.loss}});
      run.folds.push_back(std::move(record));
    }
  }
  run.report = {{"kind", "capacity"}, {"seed", config.seed}, {"rows", std::move(rows)}};
  run.summary.complete = true;
  run.summary.completed_folds = static_cast<int>(run.folds.size());
  run.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

RunRecord generalization_probe(const RunConfig& config, const Dataset& dataset,
                               std::span<const ModelKind> models) {
  const auto started = std::chrono::steady_clock::now();
  if (dataset.graphs.size() < 10) throw DataError("generalization_probe: need at least 10 graphs");
  std::vector<int> labels;
  for (const Graph& g : dataset.graphs) labels.push_back(g.label);
  // One fold of a stratified 10-way split is the 10% validation set.
  const FoldPlan plan = stratified_kfold(labels, 10, derive_seed(config.seed, {0x9a9u}));
  std::vector<const Graph*> train, val;
  for (int i : plan.train_indices(0)) train.push_back(&dataset.graphs[static_cast<std::size_t>(i)]);
  for (int i : plan.folds[0]) val.push_back(&dataset.graphs[static_cast<std::size_t>(i)]);

  RunRecord run;
  run.config = config.to_json();
  nlohmann::json curves = nlohmann::json::array();
  int fold = 0;
  for (ModelKind kind : models) {
    RunConfig probe = config;
    probe.model = kind;
    const UgcnConfig mc = model_config(probe, dataset.graphs.front().num_channels(),
                                       static_cast<std::size_t>(dataset.meta.num_classes));
    Ugcn model(mc, derive_seed(config.seed, {0x1417u, 0}));
    std::vector<double> train_loss, val_loss, gap;
    const EpochHook record_losses = [&](int, const EpochRecord&) {
      const double t = evaluate(model, train, probe.batch_size).loss;
      const double v = evaluate(model, val, probe.batch_size).loss;
      train_loss.push_back(t);
      val_loss.push_back(v);
      gap.push_back(v - t);
      return true;
    };
    run.folds.push_back(train_fold(probe, model, train, val, fold++, record_losses));
    const std::size_t tail = std::min<std::size_t>(50, gap.size());
    const double tail_gap =
        tail == 0 ? 0.0 : std::accumulate(gap.end() - static_cast<std::ptrdiff_t>(tail), gap.end(), 0.0) /
                              static_cast<double>(tail);
    curves.push_back({{"model", to_string(kind)},
                      {"train_loss", train_loss},
                      {"val_loss", val_loss},
                      {"gap", gap},
                      {"mean_gap_last_50", tail_gap}});
  }
  run.report = {{"kind", "generalization"},
                {"seed", config.seed},
                {"num_train", train.size()},
                {"num_val", val.size()},
                {"curves", std::move(curves)}};
  run.summary.complete = true;
  run.summary.completed_folds = static_cast<int>(run.folds.size());
  run.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

}  // namespace ugcn

// ugcn: train and probe graph classifiers on TU-format datasets, and run the
// depthwise-separable decomposition checks.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ugcn/data_io.hpp"
#include "ugcn/dsconv_oracle.hpp"
#include "ugcn/train.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

void add_dataset_options(CLI::App* cmd, ugcn::RunConfig& c) {
  cmd->add_option("--dataset", c.dataset_dir, "Directory holding the TU files")->required();
  cmd->add_option("--name", c.dataset_name, "Dataset name, the TU file prefix")->required();
  cmd->add_option("--degree-cap", c.degree_cap, "Top degree bucket for label-free datasets")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "Seed for folds, initialization and shuffling");
}

void add_model_options(CLI::App* cmd, ugcn::RunConfig& c, std::string* model) {
  if (model) {
    cmd->add_option("--model", *model, "gcn | gat | sugcn | gugcn")
        ->check(CLI::IsMember({"gcn", "gat", "sugcn", "gugcn"}));
  }
  cmd->add_option("--hidden", c.hidden)->check(CLI::PositiveNumber);
  cmd->add_option("--blocks", c.blocks)->check(CLI::PositiveNumber);
  cmd->add_option("--heads", c.heads, "S-UGC heads")->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", c.batch_size)->check(CLI::PositiveNumber);
  cmd->add_option("--dropout", c.dropout)->check(CLI::Range(0.0, 0.999));
  cmd->add_option("--lr", c.lr)->check(CLI::NonNegativeNumber);
  cmd->add_option("--epochs", c.epochs)->check(CLI::PositiveNumber);
  cmd->add_flag("--softmax,!--no-softmax", c.normalize_attention,
                "Softmax-normalize the channel-wise attention (on by default)");
}

ugcn::Dataset load(const ugcn::RunConfig& c) {
  ugcn::Dataset ds = ugcn::parse_tu_dataset(c.dataset_dir, c.dataset_name);
  ugcn::build_features(ds, c.degree_cap);
  std::fprintf(stderr, "%s: %d graphs, %d classes, max %d nodes, %zu input channels\n",
               ds.meta.name.c_str(), ds.meta.num_graphs, ds.meta.num_classes, ds.meta.max_nodes,
               ds.graphs.front().num_channels());
  return ds;
}

std::vector<ugcn::ModelKind> parse_models(const std::vector<std::string>& names) {
  std::vector<ugcn::ModelKind> kinds;
  for (const auto& n : names) kinds.push_back(ugcn::parse_model_kind(n));
  return kinds;
}

int cmd_train(ugcn::RunConfig c, const std::string& model, bool verbose) {
  c.model = ugcn::parse_model_kind(model);
  const ugcn::Dataset ds = load(c);
  ugcn::EpochHook progress;
  if (verbose) {
    progress = [](int epoch, const ugcn::EpochRecord& e) {
      std::fprintf(stderr, "  epoch %4d  loss %.4f  train %.4f  test %.4f\n", epoch, e.train_loss,
                   e.train_acc, e.test_acc);
      return true;
    };
  }
  const ugcn::RunRecord run = ugcn::run_cv(c, ds, progress);
  ugcn::export_metrics(run, c.out);
  for (const auto& f : run.folds) {
    if (f.failed) std::fprintf(stderr, "fold %d failed: %s\n", f.fold, f.error.c_str());
  }
  std::printf("%s %s: accuracy %.4f +- %.4f at epoch %d (%d/%zu folds, %.1f s)\n",
              ds.meta.name.c_str(), model.c_str(), run.summary.mean_acc, run.summary.std_acc,
              run.summary.best_epoch, run.summary.completed_folds, run.folds.size(),
              run.runtime_seconds);
  return run.summary.complete ? kOk : kNumerical;
}

int cmd_verify(int trials, std::uint64_t seed) {
  const auto checks = ugcn::oracle::run_oracle_suite(trials, seed);
  bool ok = true;
  for (const auto& r : checks) {
    std::printf("%-28s %s %.3e (%s %.0e)\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.value,
                r.upper_bound ? "<=" : ">", r.threshold);
    ok = ok && r.passed;
  }
  return ok ? kOk : kNumerical;
}

int cmd_capacity(const ugcn::RunConfig& c, const std::vector<double>& ratios,
                 const std::vector<std::string>& models) {
  const ugcn::Dataset ds = load(c);
  const auto kinds = parse_models(models);
  const ugcn::RunRecord run = ugcn::capacity_probe(c, ds, ratios, kinds);
  ugcn::export_metrics(run, c.out);
  for (const auto& row : run.report["rows"]) {
    std::printf("%-6s ratio %.2f  n=%4d  train acc %.4f\n", row["model"].get<std::string>().c_str(),
                row["ratio"].get<double>(), row["num_train"].get<int>(), row["final_train_acc"].get<double>());
  }
  return kOk;
}

int cmd_gap(const ugcn::RunConfig& c, const std::vector<std::string>& models) {
  const ugcn::Dataset ds = load(c);
  const auto kinds = parse_models(models);
  const ugcn::RunRecord run = ugcn::generalization_probe(c, ds, kinds);
  ugcn::export_metrics(run, c.out);
  for (const auto& curve : run.report["curves"]) {
    std::printf("%-6s mean gap over last epochs %.4f\n", curve["model"].get<std::string>().c_str(),
                curve["mean_gap_last_50"].get<double>());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph classification with depthwise-separable graph convolutions"};
  app.require_subcommand(1);

  ugcn::RunConfig train_cfg;
  std::string train_model = "sugcn";
  bool verbose = false;
  auto* train = app.add_subcommand("train", "k-fold cross-validation on one dataset");
  add_dataset_options(train, train_cfg);
  add_model_options(train, train_cfg, &train_model);
  train->add_option("--folds", train_cfg.folds)->check(CLI::Range(2, 1000));
  train->add_option("--out", train_cfg.out, "Metrics JSON file")->required();
  train->add_flag("-v,--verbose", verbose, "Print per-epoch progress");

  int trials = 100;
  std::uint64_t verify_seed = 42;
  auto* verify = app.add_subcommand("verify", "Check GC/GAT against their depthwise-separable form");
  verify->add_option("--trials", trials)->check(CLI::PositiveNumber);
  verify->add_option("--seed", verify_seed);

  ugcn::RunConfig cap_cfg;
  std::vector<double> ratios{0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<std::string> cap_models{"gcn", "gat", "sugcn", "gugcn"};
  auto* capacity = app.add_subcommand("capacity", "Training accuracy versus training-set fraction");
  add_dataset_options(capacity, cap_cfg);
  capacity->add_option("--ratios", ratios)->delimiter(',')->check(CLI::Range(1e-9, 1.0));
  capacity->add_option("--models", cap_models)->delimiter(',');
  capacity->add_option("--epochs", cap_cfg.epochs)->check(CLI::PositiveNumber);
  capacity->add_option("--batch-size", cap_cfg.batch_size)->check(CLI::PositiveNumber);
  capacity->add_option("--out", cap_cfg.out)->required();

  ugcn::RunConfig gap_cfg;
  std::vector<std::string> gap_models{"gcn", "gat", "sugcn", "gugcn"};
  auto* gap = app.add_subcommand("gap", "Train/validation loss curves on a 90/10 split");
  add_dataset_options(gap, gap_cfg);
  add_model_options(gap, gap_cfg, nullptr);
  gap->add_option("--models", gap_models)->delimiter(',');
  gap->add_option("--out", gap_cfg.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(train_cfg, train_model, verbose);
    if (*verify) return cmd_verify(trials, verify_seed);
    if (*capacity) return cmd_capacity(cap_cfg, ratios, cap_models);
    if (*gap) return cmd_gap(gap_cfg, gap_models);
  } catch (const ugcn::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const ugcn::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}

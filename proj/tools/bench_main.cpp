// Benchmark CLI: trains and evaluates sparse GP / deep GP models over
// random train/test folds of a CSV dataset and writes a JSON results
// document. Flags override values from --config (a JSON file mirroring the
// flag names). Exits nonzero with a JSON error object on stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "dsdgp/errors.hpp"
#include "dsdgp/experiment.hpp"
#include "dsdgp/version.hpp"

using namespace dsdgp;
using nlohmann::json;

namespace {

void apply_config_file(const std::string& path, ExperimentConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json doc = json::parse(in, nullptr, /*allow_exceptions=*/true);
  if (doc.contains("dataset")) cfg.dataset_path = doc["dataset"].get<std::string>();
  if (doc.contains("name")) cfg.dataset_name = doc["name"].get<std::string>();
  if (doc.contains("task")) {
    const std::string t = doc["task"].get<std::string>();
    if (t == "regression")
      cfg.task = Task::kRegression;
    else if (t == "classification")
      cfg.task = Task::kBinaryClassification;
    else
      throw ConfigError("config: task must be 'regression' or 'classification'");
  }
  if (doc.contains("target_cols")) cfg.target_cols = doc["target_cols"].get<std::vector<int>>();
  if (doc.contains("header")) cfg.header = doc["header"].get<bool>();
  if (doc.contains("layers")) cfg.layers = doc["layers"].get<int>();
  if (doc.contains("inducing")) cfg.inducing = doc["inducing"].get<long>();
  if (doc.contains("iterations")) cfg.iterations = doc["iterations"].get<long>();
  if (doc.contains("minibatch")) cfg.minibatch = doc["minibatch"].get<long>();
  if (doc.contains("lr")) cfg.lr = doc["lr"].get<double>();
  if (doc.contains("folds")) cfg.folds = doc["folds"].get<int>();
  if (doc.contains("test_fraction")) cfg.test_fraction = doc["test_fraction"].get<double>();
  if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("samples_pred")) cfg.samples_pred = doc["samples_pred"].get<int>();
  if (doc.contains("out")) cfg.out_path = doc["out"].get<std::string>();
  if (doc.contains("trace_dir")) cfg.trace_dir = doc["trace_dir"].get<std::string>();
  if (doc.contains("checkpoint_dir")) cfg.checkpoint_dir = doc["checkpoint_dir"].get<std::string>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse and deep GP benchmark runner"};
  app.set_version_flag("--version", std::string(kVersion));

  std::string config_path;
  std::string dataset, name, task = "regression", out, trace_dir, checkpoint_dir;
  std::vector<int> target_cols;
  bool header = false, quiet = false;
  int layers = -1, folds = -1, samples_pred = -1;
  long inducing = -1, iterations = -1, minibatch = -1;
  double lr = -1.0, test_fraction = -1.0;
  std::int64_t seed = -1;

  app.add_option("--config", config_path, "JSON config file; flags override its values");
  app.add_option("--dataset", dataset, "CSV file with features and target columns");
  app.add_option("--name", name, "dataset name used in the results document");
  app.add_option("--task", task, "regression | classification")
      ->check(CLI::IsMember({"regression", "classification"}));
  app.add_option("--target-col", target_cols, "0-based target column(s); default: last");
  app.add_flag("--header", header, "skip the first CSV row");
  app.add_option("--layers", layers, "GP layers; 1 = sparse GP baseline");
  app.add_option("--inducing", inducing, "inducing points per layer");
  app.add_option("--iterations", iterations, "optimizer steps per fold");
  app.add_option("--minibatch", minibatch, "minibatch size (capped at the training set size)");
  app.add_option("--lr", lr, "Adam learning rate");
  app.add_option("--folds", folds, "number of random train/test folds");
  app.add_option("--test-fraction", test_fraction, "held-out fraction per fold");
  app.add_option("--seed", seed, "base seed for splits, init and sampling");
  app.add_option("--samples-pred", samples_pred, "mixture components at prediction time");
  app.add_option("--out", out, "results JSON path");
  app.add_option("--trace-dir", trace_dir, "directory for per-fold loss traces");
  app.add_option("--checkpoint-dir", checkpoint_dir, "directory for per-fold checkpoints");
  app.add_flag("--quiet", quiet, "suppress progress output");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg;
    if (!config_path.empty()) apply_config_file(config_path, cfg);
    if (!dataset.empty()) cfg.dataset_path = dataset;
    if (!name.empty()) cfg.dataset_name = name;
    if (app.count("--task")) cfg.task = task == "classification" ? Task::kBinaryClassification
                                                                 : Task::kRegression;
    if (!target_cols.empty()) cfg.target_cols = target_cols;
    if (app.count("--header")) cfg.header = header;
    if (layers > 0) cfg.layers = layers;
    if (inducing > 0) cfg.inducing = inducing;
    if (iterations > 0) cfg.iterations = iterations;
    if (minibatch > 0) cfg.minibatch = minibatch;
    if (lr > 0) cfg.lr = lr;
    if (folds > 0) cfg.folds = folds;
    if (test_fraction > 0) cfg.test_fraction = test_fraction;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (samples_pred > 0) cfg.samples_pred = samples_pred;
    if (!out.empty()) cfg.out_path = out;
    if (!trace_dir.empty()) cfg.trace_dir = trace_dir;
    if (!checkpoint_dir.empty()) cfg.checkpoint_dir = checkpoint_dir;

    if (cfg.dataset_path.empty()) throw ConfigError("dataset: no CSV path given");
    if (!quiet)
      cfg.on_fold_done = [&](const FoldMetrics& f) {
        if (cfg.task == Task::kRegression)
          std::fprintf(stderr, "fold %d: test ll %.4f, rmse %.4f (%.1f s)\n", f.fold,
                       f.test_loglik, f.test_rmse, f.wall_seconds);
        else
          std::fprintf(stderr, "fold %d: test ll %.4f, accuracy %.4f (%.1f s)\n", f.fold,
                       f.test_loglik, f.accuracy, f.wall_seconds);
      };

    RunResult result = run_experiment(cfg);

    if (!quiet) {
      std::fprintf(stderr, "aggregate test log-likelihood: %.4f +- %.4f\n",
                   result.test_loglik.mean, result.test_loglik.stderr_);
      if (cfg.task == Task::kRegression)
        std::fprintf(stderr, "aggregate test RMSE: %.4f +- %.4f\n", result.test_rmse.mean,
                     result.test_rmse.stderr_);
      else
        std::fprintf(stderr, "aggregate accuracy: %.4f +- %.4f\n", result.accuracy.mean,
                     result.accuracy.stderr_);
    }
    if (cfg.out_path.empty()) std::cout << run_result_to_json(result) << std::endl;
    return 0;
  } catch (const ParseError& e) {
    json err{{"error", {{"type", "parse"}, {"message", e.what()}, {"line", e.line}}}};
    std::cerr << err.dump() << std::endl;
    return 1;
  } catch (const ConfigError& e) {
    json err{{"error", {{"type", "config"}, {"message", e.what()}}}};
    std::cerr << err.dump() << std::endl;
    return 2;
  } catch (const Error& e) {
    json err{{"error", {{"type", "runtime"}, {"message", e.what()}}}};
    std::cerr << err.dump() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    json err{{"error", {{"type", "internal"}, {"message", e.what()}}}};
    std::cerr << err.dump() << std::endl;
    return 4;
  }
}

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dsdgp/dataset.hpp"
#include "dsdgp/model.hpp"
#include "dsdgp/trainer.hpp"

namespace dsdgp {

struct FoldMetrics {
  int fold = 0;
  double test_loglik = 0.0;  // mean per-point, in original output units
  double test_rmse = 0.0;    // regression only
  double accuracy = 0.0;     // classification only
  double final_elbo = 0.0;
  double wall_seconds = 0.0;
};

struct ExperimentConfig {
  std::string dataset_path;
  std::string dataset_name;
  Task task = Task::kRegression;
  std::vector<int> target_cols;  // empty selects the last column
  bool header = false;

  int layers = 1;  // 1 is the sparse GP baseline, L > 1 the deep model
  Eigen::Index inducing = 100;
  long iterations = 20000;
  Eigen::Index minibatch = 10000;
  double lr = 0.01;
  int folds = 20;
  double test_fraction = 0.10;
  std::uint64_t seed = 0;
  int samples_pred = 100;
  int trace_every = 100;

  std::string out_path;         // results JSON; empty skips the write
  std::string trace_dir;        // per-fold loss trace CSVs; empty skips
  std::string checkpoint_dir;   // per-fold model checkpoints; empty skips

  std::function<void(const FoldMetrics&)> on_fold_done;  // progress hook
};

struct Aggregate {
  double mean = 0.0;
  double stderr_ = 0.0;  // sample stddev / sqrt(folds)
};

struct RunResult {
  ExperimentConfig config;
  std::vector<FoldMetrics> folds;
  Aggregate test_loglik, test_rmse, accuracy;
  std::string library_version;
};

/// Test metrics of a trained model on one fold: mean per-point log
/// predictive density (computed in normalized space, shifted by
/// -sum(log output std) back to original units), RMSE of the de-normalized
/// mixture means, and accuracy for classification.
FoldMetrics evaluate(const DGPModel& model, const Mat& x_test_norm, const Mat& y_test_orig,
                     const NormStats& stats, Task task, int s_pred, RngStream& rng);

/// Runs every fold of the configured experiment: split, normalize on the
/// training split, initialize, train, evaluate; writes the results JSON and
/// any per-fold artifacts that were requested.
RunResult run_experiment(const ExperimentConfig& cfg);
RunResult run_experiment(const ExperimentConfig& cfg, const Dataset& data);

/// Results document; timing fields are omitted when `include_timing` is
/// false so reruns can be compared bit for bit.
std::string run_result_to_json(const RunResult& result, bool include_timing = true);

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

}  // namespace dsdgp

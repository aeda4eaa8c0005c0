#include "dsdgp/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dsdgp/checkpoint.hpp"
#include "dsdgp/errors.hpp"
#include "dsdgp/version.hpp"

namespace dsdgp {

namespace {

using nlohmann::json;

// Per-fold substream purposes, mixed with the fold index.
constexpr std::uint64_t kKmeansPurpose = 0xA110C8ULL;
constexpr std::uint64_t kTrainPurpose = 0x7E41ULL;
constexpr std::uint64_t kPredictPurpose = 0x9E6DULL;

Aggregate aggregate_of(const std::vector<double>& vals) {
  Aggregate a;
  const double n = static_cast<double>(vals.size());
  if (vals.empty()) return a;
  double sum = 0.0;
  for (double v : vals) sum += v;
  a.mean = sum / n;
  if (vals.size() > 1) {
    double ss = 0.0;
    for (double v : vals) ss += (v - a.mean) * (v - a.mean);
    a.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return a;
}

json config_to_json(const ExperimentConfig& c) {
  return json{{"dataset_path", c.dataset_path},
              {"dataset_name", c.dataset_name},
              {"task", c.task == Task::kRegression ? "regression" : "binary-classification"},
              {"target_cols", c.target_cols},
              {"header", c.header},
              {"layers", c.layers},
              {"inducing", static_cast<long>(c.inducing)},
              {"iterations", c.iterations},
              {"minibatch", static_cast<long>(c.minibatch)},
              {"lr", c.lr},
              {"folds", c.folds},
              {"test_fraction", c.test_fraction},
              {"seed", c.seed},
              {"samples_pred", c.samples_pred}};
}

}  // namespace

FoldMetrics evaluate(const DGPModel& model, const Mat& x_test_norm, const Mat& y_test_orig,
                     const NormStats& stats, Task task, int s_pred, RngStream& rng) {
  FoldMetrics m;
  if (task == Task::kRegression) {
    // Log density in normalized space, then the change of variables back to
    // original units: subtract sum over output dims of log std.
    Mat y_test_norm = y_test_orig;
    y_test_norm.rowwise() -= stats.y_mean;
    y_test_norm.array().rowwise() /= stats.y_std.array();

    RngStream density_rng = rng.substream(0);
    Vec ld = model.predict_density(x_test_norm, y_test_norm, density_rng, s_pred);
    m.test_loglik = ld.mean() - stats.log_y_std_sum();

    RngStream moments_rng = rng.substream(1);
    Mat mean_norm, var_norm;
    model.predict_moments(x_test_norm, moments_rng, s_pred, mean_norm, var_norm);
    Mat mean_orig = denormalize_y(mean_norm, stats);
    m.test_rmse = std::sqrt((mean_orig - y_test_orig).array().square().mean());
  } else {
    RngStream density_rng = rng.substream(0);
    Vec ld = model.predict_density(x_test_norm, y_test_orig, density_rng, s_pred);
    m.test_loglik = ld.mean();

    // Predicted probability of class 1 is the mixture density at y = 1;
    // a tie at exactly 0.5 counts as incorrect.
    RngStream prob_rng = rng.substream(2);
    Mat ones = Mat::Ones(x_test_norm.rows(), 1);
    Vec lp1 = model.predict_density(x_test_norm, ones, prob_rng, s_pred);
    int correct = 0;
    for (Eigen::Index i = 0; i < lp1.size(); ++i) {
      const double p1 = std::exp(lp1[i]);
      const bool predict_one = p1 > 0.5;
      if (predict_one == (y_test_orig(i, 0) > 0.5)) ++correct;
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(x_test_norm.rows());
  }
  return m;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  Dataset data = ingest_csv(cfg.dataset_path, cfg.target_cols, cfg.header, cfg.task,
                            cfg.dataset_name.empty()
                                ? std::filesystem::path(cfg.dataset_path).stem().string()
                                : cfg.dataset_name);
  return run_experiment(cfg, data);
}

RunResult run_experiment(const ExperimentConfig& cfg, const Dataset& data) {
  if (cfg.folds < 1) throw ConfigError("run_experiment: folds must be >= 1");
  if (cfg.layers < 1) throw ConfigError("run_experiment: layers must be >= 1");
  if (cfg.inducing < 1) throw ConfigError("run_experiment: inducing must be >= 1");
  if (cfg.iterations < 1) throw ConfigError("run_experiment: iterations must be >= 1");
  if (cfg.samples_pred < 1) throw ConfigError("run_experiment: samples_pred must be >= 1");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
    throw ConfigError("run_experiment: test_fraction must be in (0, 1)");

  RunResult result;
  result.config = cfg;
  result.library_version = kVersion;

  const LikelihoodKind kind = cfg.task == Task::kRegression ? LikelihoodKind::kGaussian
                                                            : LikelihoodKind::kBernoulliProbit;
  SplitSpec split_spec{cfg.folds, cfg.test_fraction, cfg.seed};

  for (int fold = 0; fold < cfg.folds; ++fold) {
    const auto t0 = std::chrono::steady_clock::now();
    FoldIndices idx = split_fold(data.n(), fold, split_spec);
    NormalizedSplit ns = normalize(take_rows(data.x, idx.train), take_rows(data.y, idx.train),
                                   take_rows(data.x, idx.test), take_rows(data.y, idx.test),
                                   cfg.task);

    RngStream fold_rng = RngStream(cfg.seed).substream(static_cast<std::uint64_t>(fold) + 1);
    RngStream kmeans_rng = fold_rng.substream(kKmeansPurpose);
    RngStream train_rng = fold_rng.substream(kTrainPurpose);
    RngStream predict_rng = fold_rng.substream(kPredictPurpose);

    DGPModel model =
        initialize(ns.x_train, ns.y_train, cfg.layers, cfg.inducing, kind, kmeans_rng);

    TrainConfig tc;
    tc.iterations = cfg.iterations;
    tc.minibatch = cfg.minibatch;
    tc.adam.lr = cfg.lr;
    tc.trace_every = cfg.trace_every;
    std::vector<TraceRow> trace = train(model, ns.x_train, ns.y_train, tc, train_rng);

    Mat y_test_orig = take_rows(data.y, idx.test);
    FoldMetrics metrics = evaluate(model, ns.x_test, y_test_orig, ns.stats, cfg.task,
                                   cfg.samples_pred, predict_rng);
    metrics.fold = fold;
    metrics.final_elbo = trace.empty() ? 0.0 : trace.back().elbo;
    metrics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.folds.push_back(metrics);
    if (cfg.on_fold_done) cfg.on_fold_done(metrics);

    if (!cfg.trace_dir.empty()) {
      std::filesystem::create_directories(cfg.trace_dir);
      write_trace_csv(trace, cfg.trace_dir + "/fold" + std::to_string(fold) + "_trace.csv");
    }
    if (!cfg.checkpoint_dir.empty()) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      save_model(model, cfg.checkpoint_dir + "/fold" + std::to_string(fold) + "_model.json");
    }
  }

  std::vector<double> lls, rmses, accs;
  for (const FoldMetrics& f : result.folds) {
    lls.push_back(f.test_loglik);
    rmses.push_back(f.test_rmse);
    accs.push_back(f.accuracy);
  }
  result.test_loglik = aggregate_of(lls);
  result.test_rmse = aggregate_of(rmses);
  result.accuracy = aggregate_of(accs);

  if (!cfg.out_path.empty()) {
    std::filesystem::path out(cfg.out_path);
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    std::ofstream f(cfg.out_path);
    if (!f) throw Error("run_experiment: cannot open '" + cfg.out_path + "' for writing");
    f << run_result_to_json(result);
  }
  return result;
}

std::string run_result_to_json(const RunResult& result, bool include_timing) {
  const bool regression = result.config.task == Task::kRegression;
  json folds = json::array();
  for (const FoldMetrics& f : result.folds) {
    json jf{{"fold", f.fold},
            {"test_loglik", f.test_loglik},
            {"final_elbo", f.final_elbo}};
    if (regression)
      jf["test_rmse"] = f.test_rmse;
    else
      jf["accuracy"] = f.accuracy;
    if (include_timing) jf["wall_seconds"] = f.wall_seconds;
    folds.push_back(std::move(jf));
  }
  json agg{{"test_loglik", {{"mean", result.test_loglik.mean}, {"stderr", result.test_loglik.stderr_}}}};
  if (regression)
    agg["test_rmse"] = {{"mean", result.test_rmse.mean}, {"stderr", result.test_rmse.stderr_}};
  else
    agg["accuracy"] = {{"mean", result.accuracy.mean}, {"stderr", result.accuracy.stderr_}};

  json doc{{"format", "dsdgp-results"},
           {"library_version", result.library_version},
           {"config", config_to_json(result.config)},
           {"normalization", {{"std_convention", "sample (N-1 divisor)"}}},
           {"folds", std::move(folds)},
           {"aggregate", std::move(agg)}};
  return doc.dump(2);
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("write_trace_csv: cannot open '" + path + "'");
  f << "step,elbo,data_fit,kl\n";
  f.precision(17);
  for (const TraceRow& r : trace)
    f << r.step << ',' << r.elbo << ',' << r.data_fit << ',' << r.kl << '\n';
}

}  // namespace dsdgp

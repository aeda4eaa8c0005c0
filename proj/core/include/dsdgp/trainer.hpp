#pragma once

#include <vector>

#include "dsdgp/model.hpp"
#include "dsdgp/rng.hpp"

namespace dsdgp {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction, stepping in the ascent direction of the
/// recorded objective.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update to every parameter. The tape must carry exactly the
  /// gradients of `params`, in order (UnregisteredParameter otherwise).
  void step(const std::vector<ParamRef>& params, const GradientTape& tape);

  long steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
  std::vector<std::string> names_;
};

struct TrainConfig {
  long iterations = 20000;
  Eigen::Index minibatch = 10000;  // effective batch is min(minibatch, N)
  AdamConfig adam;
  int mc_samples = 1;
  int trace_every = 100;
};

struct TraceRow {
  long step;
  double elbo;
  double data_fit;
  double kl;
};

/// Runs the optimization loop: reshuffled epochs of contiguous minibatches,
/// fresh sampling noise per step, Adam on all parameters jointly.
/// Deterministic given the stream. Throws NonFiniteLoss after restoring the
/// parameters of the last step whose objective was finite.
std::vector<TraceRow> train(DGPModel& model, const Mat& x_train, const Mat& y_train,
                            const TrainConfig& cfg, RngStream& rng);

/// Builds a model with the standard initialization: layer-1 inducing inputs
/// at k-means centroids of the training inputs, propagated through the
/// fixed mean maps for deeper layers; inner widths min(30, input dim);
/// kernel variance and lengthscales 2 at every layer; inter-layer noise
/// 1e-5; variational means zero; variational covariance identity (scaled by
/// 1e-5 on inner layers); Gaussian observation noise 0.01.
DGPModel initialize(const Mat& x_train, const Mat& y_train, int n_layers, Eigen::Index n_inducing,
                    LikelihoodKind likelihood_kind, RngStream& rng);

}  // namespace dsdgp

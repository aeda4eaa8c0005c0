#pragma once

#include <span>
#include <utility>
#include <vector>

#include "dsdgp/layer.hpp"
#include "dsdgp/likelihood.hpp"
#include "dsdgp/rng.hpp"
#include "dsdgp/tape.hpp"

namespace dsdgp {

/// Source of the per-point standard normal draws consumed by the
/// reparameterized sampler. `rows` carries the global index of each batch
/// row so deterministic tables can be keyed per data point.
class EpsSource {
 public:
  virtual ~EpsSource() = default;
  virtual Mat draw(int sample, int layer, std::span<const int> rows, Eigen::Index cols) = 0;
};

/// Fresh draws from a stream; ignores the index arguments.
class RngEps : public EpsSource {
 public:
  explicit RngEps(RngStream& rng) : rng_(&rng) {}
  Mat draw(int, int, std::span<const int> rows, Eigen::Index cols) override {
    return rng_->normal_matrix(static_cast<Eigen::Index>(rows.size()), cols);
  }

 private:
  RngStream* rng_;
};

/// All-zero noise: propagation composes the marginal means.
class ZeroEps : public EpsSource {
 public:
  Mat draw(int, int, std::span<const int> rows, Eigen::Index cols) override {
    return Mat::Zero(static_cast<Eigen::Index>(rows.size()), cols);
  }
};

/// Noise fixed per (sample, layer, global data index); the table hook used
/// by fixed-noise gradient checks and minibatch-unbiasedness tests.
class TableEps : public EpsSource {
 public:
  /// tables[sample][layer] holds one row per data point of the full set.
  explicit TableEps(std::vector<std::vector<Mat>> tables) : tables_(std::move(tables)) {}
  Mat draw(int sample, int layer, std::span<const int> rows, Eigen::Index cols) override;

 private:
  std::vector<std::vector<Mat>> tables_;
};

struct ElboEstimate {
  double value = 0.0;
  double data_fit = 0.0;
  double kl_sum = 0.0;
  int samples_used = 0;
};

/// log((1/n) sum exp(v_i)) with max subtraction; safe for entries of
/// magnitude up to the exponent range (|v| ~ 700 and beyond).
double log_mean_exp(const Vec& v);

/// Stack of GP layers with a likelihood on top. Inner layers carry noisy
/// kernels and fixed linear mean functions, the final layer a plain kernel
/// and zero mean; the single-layer sparse GP is the L = 1 case.
class DGPModel {
 public:
  DGPModel(std::vector<GPLayer> layers, Likelihood likelihood, Eigen::Index num_data);

  std::vector<GPLayer>& layers() { return layers_; }
  const std::vector<GPLayer>& layers() const { return layers_; }
  Likelihood& likelihood() { return likelihood_; }
  const Likelihood& likelihood() const { return likelihood_; }
  Eigen::Index num_data() const { return num_data_; }
  void set_num_data(Eigen::Index n) { num_data_ = n; }
  Eigen::Index input_dim() const { return layers_.front().d_in(); }
  Eigen::Index output_dim() const { return layers_.back().d_out(); }

  /// Canonical parameter enumeration (layer order, then likelihood).
  std::vector<ParamRef> parameters();

  /// Samples every layer in turn with fresh noise; returns the sample at
  /// each layer, the last of shape n x d_out(L).
  std::vector<Mat> propagate(const Mat& x, RngStream& rng) const;
  std::vector<Mat> propagate(const Mat& x, EpsSource& eps, std::span<const int> rows) const;

  /// Doubly stochastic evidence lower bound estimate on a batch:
  /// data_fit = (N/B) * mean over samples of the summed expected log
  /// likelihood under the final-layer marginal conditioned on the sampled
  /// hidden layers; value = data_fit - sum of per-layer KL terms.
  ElboEstimate elbo(const Mat& x_batch, const Mat& y_batch, RngStream& rng,
                    int mc_samples = 1) const;
  ElboEstimate elbo(const Mat& x_batch, const Mat& y_batch, EpsSource& eps,
                    std::span<const int> rows, int mc_samples = 1) const;

  std::pair<ElboEstimate, GradientTape> elbo_with_gradients(const Mat& x_batch,
                                                            const Mat& y_batch, EpsSource& eps,
                                                            std::span<const int> rows,
                                                            int mc_samples = 1);

  /// Per-point log predictive density of y_star under the S-component
  /// Gaussian mixture (log-mean-exp over components).
  Vec predict_density(const Mat& x_star, const Mat& y_star, RngStream& rng, int s_pred) const;
  Vec predict_density(const Mat& x_star, const Mat& y_star, EpsSource& eps, int s_pred) const;

  /// Mixture mean and variance per test point (observation noise folded in
  /// for the Gaussian likelihood).
  void predict_moments(const Mat& x_star, RngStream& rng, int s_pred, Mat& mean_out,
                       Mat& var_out) const;
  void predict_moments(const Mat& x_star, EpsSource& eps, int s_pred, Mat& mean_out,
                       Mat& var_out) const;

  /// Mixture components: S pairs of final-layer marginal (mean, variance).
  std::vector<std::pair<Mat, Mat>> predict_components(const Mat& x_star, EpsSource& eps,
                                                      int s_pred) const;

  /// Moments of an equally weighted Gaussian mixture: mean is the average
  /// of component means, variance the average of (variance + mean^2) minus
  /// the squared mixture mean. Observation noise is not included here.
  static std::pair<Mat, Mat> mixture_moments(const std::vector<std::pair<Mat, Mat>>& components);

 private:
  std::pair<ElboEstimate, Expr> build_elbo_graph(Tape& t, Binder& b, const Mat& x_batch,
                                                 const Mat& y_batch, EpsSource& eps,
                                                 std::span<const int> rows, int mc_samples) const;

  std::vector<GPLayer> layers_;
  Likelihood likelihood_;
  Eigen::Index num_data_;
};

}  // namespace dsdgp

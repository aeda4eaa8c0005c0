#pragma once

#include <string>
#include <vector>

#include "dsdgp/tape.hpp"
#include "dsdgp/types.hpp"

namespace dsdgp {

enum class LikelihoodKind { kGaussian, kBernoulliProbit };

/// Observation model for the final layer. Gaussian carries a trainable
/// noise variance (stored as a log); the Bernoulli likelihood uses a probit
/// link and has no parameters.
class Likelihood {
 public:
  static Likelihood gaussian(double noise_variance);
  static Likelihood bernoulli_probit();

  LikelihoodKind kind() const { return kind_; }
  double noise_variance() const;
  Mat& log_noise_storage() { return log_noise_; }
  const Mat& log_noise_storage() const { return log_noise_; }

  void collect_params(std::vector<ParamRef>& out);

  /// E_{f ~ N(mean, var)}[log p(y | f)] for one observation row. Gaussian:
  /// closed form. Bernoulli: Gauss-Hermite quadrature of the given order.
  double expected_log_lik(const Vec& mean, const Vec& var, const Vec& y,
                          int quad_order = kDefaultQuadOrder) const;

  /// Sum of expected log likelihoods over a batch, as a tape node.
  Expr expected_ll_sum_graph(Tape& t, Binder& b, Expr mean, Expr var, const Mat& y,
                             int quad_order = kDefaultQuadOrder) const;

  /// Per-point log p(y_i) for one Gaussian component of the predictive
  /// mixture (observation noise folded in analytically for the Gaussian
  /// likelihood; exact probit integral for the Bernoulli one).
  Vec component_log_density(const Mat& mean, const Mat& var, const Mat& y) const;

  static constexpr int kDefaultQuadOrder = 20;

 private:
  explicit Likelihood(LikelihoodKind k) : kind_(k) {}
  LikelihoodKind kind_;
  Mat log_noise_;  // 1 x 1, Gaussian only
};

}  // namespace dsdgp

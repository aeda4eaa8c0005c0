#pragma once

#include <string>
#include <vector>

#include "dsdgp/kernels.hpp"
#include "dsdgp/linalg.hpp"
#include "dsdgp/means.hpp"
#include "dsdgp/tape.hpp"
#include "dsdgp/types.hpp"

namespace dsdgp {

/// Per-point Gaussian marginals: row i depends only on input row i.
struct MarginalGaussians {
  Mat mean;      // n x d_out
  Mat variance;  // n x d_out, strictly positive
};

/// One sparse variational GP layer: M inducing inputs shared across the
/// layer's output dimensions, a free-form Gaussian over the inducing
/// function values of each dimension (mean column of q_mu, covariance
/// factor q_sqrt[d]), a kernel and a fixed mean function.
///
/// The parameterization is the unwhitened conditional: with
/// alpha(x) = k(Z,Z)^{-1} k(Z,x),
///   mean_d(x) = m_d(x) + alpha(x)^T (q_mu_d - m_d(Z))
///   var_d(x)  = k(x,x) - alpha(x)^T (k(Z,Z) - S_d) alpha(x).
/// Covariance factors are stored unconstrained (strict lower part free,
/// log diagonal), so S_d stays positive definite under gradient steps.
class GPLayer {
 public:
  GPLayer(Mat z, KernelVariant kernel, MeanFunction mean_fn, Eigen::Index d_out);

  Eigen::Index d_in() const { return z_.cols(); }
  Eigen::Index d_out() const { return d_out_; }
  Eigen::Index num_inducing() const { return z_.rows(); }

  const Mat& z() const { return z_; }
  Mat& z() { return z_; }
  const Mat& q_mu() const { return q_mu_; }
  Mat& q_mu() { return q_mu_; }
  const KernelVariant& kernel() const { return kernel_; }
  KernelVariant& kernel() { return kernel_; }
  const MeanFunction& mean_fn() const { return mean_fn_; }

  /// Constrained covariance factor of output dimension d.
  LowerTriangular q_sqrt(Eigen::Index d) const;
  /// Sets the factor; diagonal must be strictly positive.
  void set_q_sqrt(Eigen::Index d, const LowerTriangular& l);
  Mat& q_sqrt_unconstrained(Eigen::Index d) { return q_sqrt_unc_[static_cast<std::size_t>(d)]; }
  const Mat& q_sqrt_unconstrained(Eigen::Index d) const {
    return q_sqrt_unc_[static_cast<std::size_t>(d)];
  }

  void collect_params(std::vector<ParamRef>& out, const std::string& prefix);

  /// Marginal posterior mean/variance at the given inputs; O(N M^2 + M^3)
  /// plus O(N M^2) per output dimension. Never forms an N x N covariance.
  MarginalGaussians marginal_posterior(const Mat& x) const;

  /// Reparameterized draw: mean(x) + eps .* sqrt(var(x)), elementwise.
  Mat sample_through(const Mat& x_hat, const Mat& eps) const;

  /// KL[q(U) || p(U; Z)] summed over output dimensions.
  double kl_to_prior() const;

  // ---- graph builders ------------------------------------------------------

  /// Input-independent parts of one evaluation: the factorized k(Z,Z),
  /// scaled inducing inputs and bound hyperparameters. Built once and
  /// shared between the marginal and KL graphs.
  struct Ctx {
    KernelExprs kernel;
    Expr z;
    ScaledPoints zs;
    Expr chol;               // lower factor of k(Z,Z) (+ jitter)
    Expr q_mu;
    Expr mean_diff;          // q_mu - m(Z)
    std::vector<Expr> q_l;   // constrained factors, one per output dim
    double jitter = 0.0;
  };
  Ctx build_ctx(Tape& t, Binder& b) const;

  struct MarginalExprs {
    Expr mean;  // n x d_out
    Expr var;   // n x d_out
  };
  MarginalExprs marginal_graph(Tape& t, const Ctx& ctx, Expr x) const;

  Expr kl_graph(Tape& t, const Ctx& ctx) const;

  /// Jitter escalation base, relative to the mean diagonal of k(Z,Z).
  static constexpr double kBaseJitter = 1e-6;

 private:
  Mat z_;
  KernelVariant kernel_;
  MeanFunction mean_fn_;
  Eigen::Index d_out_;
  Mat q_mu_;                    // M x d_out
  std::vector<Mat> q_sqrt_unc_; // d_out matrices, M x M, log-diagonal storage
};

}  // namespace dsdgp

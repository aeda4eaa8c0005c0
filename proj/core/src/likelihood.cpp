#include "dsdgp/likelihood.hpp"

#include <cmath>
#include <numbers>

#include "dsdgp/errors.hpp"
#include "dsdgp/quadrature.hpp"

namespace dsdgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Sum over a batch of E[log p(y|f)] for the probit Bernoulli likelihood,
// by Gauss-Hermite quadrature, with optional accumulation of d/dmean and
// d/dvar.
double probit_ell_sum(const Mat& mean, const Mat& var, const Mat& y, int order, Mat* d_mean,
                      Mat* d_var) {
  const GaussHermite gh = gauss_hermite(order);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  double total = 0.0;
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    const double s = y(i, 0) > 0.5 ? 1.0 : -1.0;
    const double mu = mean(i, 0);
    const double sd2 = std::sqrt(2.0 * std::max(var(i, 0), 1e-300));
    double acc = 0.0, acc_m = 0.0, acc_v = 0.0;
    for (int k = 0; k < order; ++k) {
      const double z = s * (mu + sd2 * gh.nodes[k]);
      acc += gh.weights[k] * log_ndtr(z);
      if (d_mean) {
        const double r = normal_hazard_lower(z);
        acc_m += gh.weights[k] * r * s;
        acc_v += gh.weights[k] * r * s * gh.nodes[k] / sd2;
      }
    }
    total += inv_sqrt_pi * acc;
    if (d_mean) {
      (*d_mean)(i, 0) = inv_sqrt_pi * acc_m;
      (*d_var)(i, 0) = inv_sqrt_pi * acc_v;
    }
  }
  return total;
}

}  // namespace

Likelihood Likelihood::gaussian(double noise_variance) {
  if (!(noise_variance > 0.0))
    throw InvalidInput("Likelihood::gaussian: noise variance must be positive");
  Likelihood l(LikelihoodKind::kGaussian);
  l.log_noise_ = Mat::Constant(1, 1, std::log(noise_variance));
  return l;
}

Likelihood Likelihood::bernoulli_probit() { return Likelihood(LikelihoodKind::kBernoulliProbit); }

double Likelihood::noise_variance() const {
  if (kind_ != LikelihoodKind::kGaussian)
    throw InvalidInput("Likelihood: only the Gaussian likelihood has a noise variance");
  return std::exp(log_noise_(0, 0));
}

void Likelihood::collect_params(std::vector<ParamRef>& out) {
  if (kind_ == LikelihoodKind::kGaussian) out.push_back({"likelihood.log_variance", &log_noise_});
}

double Likelihood::expected_log_lik(const Vec& mean, const Vec& var, const Vec& y,
                                    int quad_order) const {
  if (mean.size() != var.size() || mean.size() != y.size())
    throw DimensionMismatch("expected_log_lik: row sizes differ");
  if (kind_ == LikelihoodKind::kGaussian) {
    const double s2 = noise_variance();
    double total = 0.0;
    for (Eigen::Index d = 0; d < mean.size(); ++d) {
      const double r = y[d] - mean[d];
      total += -0.5 * (kLog2Pi + std::log(s2)) - (r * r + var[d]) / (2.0 * s2);
    }
    return total;
  }
  if (mean.size() != 1)
    throw DimensionMismatch("expected_log_lik: Bernoulli expects a single latent dimension");
  Mat m(1, 1), v(1, 1), yy(1, 1);
  m(0, 0) = mean[0];
  v(0, 0) = var[0];
  yy(0, 0) = y[0];
  return probit_ell_sum(m, v, yy, quad_order, nullptr, nullptr);
}

Expr Likelihood::expected_ll_sum_graph(Tape& t, Binder& b, Expr mean, Expr var, const Mat& y,
                                       int quad_order) const {
  if (mean.rows() != y.rows() || mean.cols() != y.cols())
    throw DimensionMismatch("expected_ll_sum_graph: prediction and target shapes differ");
  if (kind_ == LikelihoodKind::kGaussian) {
    const double n_terms = static_cast<double>(y.rows() * y.cols());
    Expr u = b(&log_noise_);  // log sigma_n^2
    Expr ssum = sum(add(cw_square(sub(t.constant(y), mean)), var));
    Expr quad_term = scale(scale_by(ssum, cw_exp(neg(u))), -0.5);
    Expr log_term = scale(u, -0.5 * n_terms);
    Expr const_term = t.constant(Mat::Constant(1, 1, -0.5 * n_terms * kLog2Pi));
    return add(add(quad_term, log_term), const_term);
  }
  if (mean.cols() != 1)
    throw DimensionMismatch("expected_ll_sum_graph: Bernoulli expects a single latent dimension");
  // Fused quadrature node with hand-written adjoints for mean and var.
  const Mat& mv = mean.value();
  const Mat& vv = var.value();
  Mat d_mean(mv.rows(), 1), d_var(mv.rows(), 1);
  const double value = probit_ell_sum(mv, vv, y, quad_order, &d_mean, &d_var);
  return t.make(Mat::Constant(1, 1, value), {mean.id, var.id},
                [m = mean.id, v = var.id, d_mean, d_var](Tape& t, int self) {
                  const double g = t.grad(self)(0, 0);
                  t.acc(m, g * d_mean);
                  t.acc(v, g * d_var);
                });
}

Vec Likelihood::component_log_density(const Mat& mean, const Mat& var, const Mat& y) const {
  if (mean.rows() != y.rows() || mean.cols() != y.cols())
    throw DimensionMismatch("component_log_density: prediction and target shapes differ");
  Vec out(mean.rows());
  if (kind_ == LikelihoodKind::kGaussian) {
    const double s2 = noise_variance();
    for (Eigen::Index i = 0; i < mean.rows(); ++i) {
      double acc = 0.0;
      for (Eigen::Index d = 0; d < mean.cols(); ++d) {
        const double v = var(i, d) + s2;
        const double r = y(i, d) - mean(i, d);
        acc += -0.5 * (kLog2Pi + std::log(v)) - r * r / (2.0 * v);
      }
      out[i] = acc;
    }
    return out;
  }
  if (mean.cols() != 1)
    throw DimensionMismatch("component_log_density: Bernoulli expects a single latent dimension");
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    // E_{f ~ N(mu, v)}[Phi(f)] = Phi(mu / sqrt(1 + v)), exact for probit.
    const double s = y(i, 0) > 0.5 ? 1.0 : -1.0;
    out[i] = log_ndtr(s * mean(i, 0) / std::sqrt(1.0 + var(i, 0)));
  }
  return out;
}

}  // namespace dsdgp

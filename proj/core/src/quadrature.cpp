#include "dsdgp/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "dsdgp/errors.hpp"

namespace dsdgp {

GaussHermite gauss_hermite(int order) {
  if (order < 1) throw QuadratureOrderInvalid("gauss_hermite: order must be >= 1");
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  GaussHermite q;
  if (order == 1) {
    q.nodes = Vec::Zero(1);
    q.weights = Vec::Constant(1, sqrt_pi);
    return q;
  }
  // Jacobi matrix of the Hermite recurrence: zero diagonal, off-diagonal
  // sqrt(k/2); nodes are its eigenvalues, weights sqrt(pi) * v0k^2.
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(k / 2.0);
    j(k, k - 1) = b;
    j(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  q.nodes = es.eigenvalues();
  q.weights = sqrt_pi * es.eigenvectors().row(0).transpose().array().square();
  return q;
}

double ndtr(double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }

double log_ndtr(double z) {
  if (z > -1.0) return std::log1p(-0.5 * std::erfc(z * std::numbers::sqrt2 / 2.0));
  if (z > -25.0) return std::log(0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0));
  // Asymptotic lower tail: log Phi(z) = -z^2/2 - log(-z sqrt(2 pi)) +
  // log(1 - 1/z^2 + 3/z^4 - 15/z^6).
  const double zi = 1.0 / (z * z);
  const double series = 1.0 - zi * (1.0 - 3.0 * zi * (1.0 - 5.0 * zi));
  return -0.5 * z * z - std::log(-z * std::sqrt(2.0 * std::numbers::pi)) + std::log(series);
}

double normal_hazard_lower(double z) {
  const double log_pdf = -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
  return std::exp(log_pdf - log_ndtr(z));
}

}  // namespace dsdgp

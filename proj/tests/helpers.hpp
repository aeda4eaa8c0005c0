#pragma once

#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "dsdgp/linalg.hpp"
#include "dsdgp/rng.hpp"
#include "dsdgp/tape.hpp"
#include "dsdgp/types.hpp"

namespace testutil {

using dsdgp::Mat;
using dsdgp::Vec;

// Independent RBF-ARD Gram evaluation: direct per-entry formula, no shared
// code with the library path.
inline Mat rbf_gram_oracle(const Mat& a, const Mat& b, double variance, const Vec& lengthscales) {
  Mat g(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      double q = 0.0;
      for (Eigen::Index d = 0; d < a.cols(); ++d) {
        const double r = (a(i, d) - b(j, d)) / lengthscales[d];
        q += r * r;
      }
      g(i, j) = variance * std::exp(-0.5 * q);
    }
  return g;
}

// Exact GP log marginal likelihood with zero mean and Gaussian noise,
// summed over output columns; Cholesky route independent of the model code.
inline double exact_gp_lml(const Mat& x, const Mat& y, double variance, const Vec& lengthscales,
                           double noise_var) {
  const Eigen::Index n = x.rows();
  Mat k = rbf_gram_oracle(x, x, variance, lengthscales);
  k.diagonal().array() += noise_var;
  Eigen::LLT<Mat> llt(k);
  REQUIRE(llt.info() == Eigen::Success);
  Mat l = llt.matrixL();
  double lml = 0.0;
  for (Eigen::Index d = 0; d < y.cols(); ++d) {
    Vec alpha = l.triangularView<Eigen::Lower>().solve(y.col(d));
    lml += -0.5 * alpha.squaredNorm() - l.diagonal().array().log().sum() -
           0.5 * n * std::log(2.0 * std::numbers::pi);
  }
  return lml;
}

inline Mat random_spd(Eigen::Index n, dsdgp::RngStream& rng, double diag_boost = 0.5) {
  Mat a = rng.normal_matrix(n, n);
  Mat spd = a * a.transpose() / static_cast<double>(n);
  spd.diagonal().array() += diag_boost;
  return spd;
}

// Central finite differences over every entry of every parameter, compared
// against the recorded gradients at |ad - fd| <= tol * max(1, |ad|).
inline void check_gradients(const std::vector<dsdgp::ParamRef>& params,
                            const std::function<double()>& objective,
                            const dsdgp::GradientTape& tape, double step = 1e-5,
                            double tol = 1e-4) {
  REQUIRE(tape.grads.size() == params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    Mat& value = *params[p].value;
    REQUIRE(tape.grads[p].rows() == value.rows());
    REQUIRE(tape.grads[p].cols() == value.cols());
    for (Eigen::Index i = 0; i < value.rows(); ++i)
      for (Eigen::Index j = 0; j < value.cols(); ++j) {
        const double orig = value(i, j);
        value(i, j) = orig + step;
        const double fp = objective();
        value(i, j) = orig - step;
        const double fm = objective();
        value(i, j) = orig;
        const double fd = (fp - fm) / (2.0 * step);
        const double ad = tape.grads[p](i, j);
        INFO("param ", params[p].name, " entry (", i, ",", j, "): ad=", ad, " fd=", fd);
        CHECK(std::abs(ad - fd) <= tol * std::max(1.0, std::abs(ad)));
      }
  }
}

}  // namespace testutil

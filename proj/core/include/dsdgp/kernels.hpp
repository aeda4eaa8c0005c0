#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "dsdgp/tape.hpp"
#include "dsdgp/types.hpp"

namespace dsdgp {

/// Squared-exponential kernel with one lengthscale per input dimension.
/// Hyperparameters are stored unconstrained (as logarithms) so gradient
/// steps preserve positivity.
struct RbfArdKernel {
  Mat log_variance;      // 1 x 1
  Mat log_lengthscales;  // 1 x d

  static RbfArdKernel create(double variance, const Vec& lengthscales);
  static RbfArdKernel create(double variance, double lengthscale, Eigen::Index d);

  double variance() const { return std::exp(log_variance(0, 0)); }
  Vec lengthscales() const { return log_lengthscales.row(0).array().exp().transpose(); }
  Eigen::Index input_dim() const { return log_lengthscales.cols(); }
};

/// RBF-ARD kernel with i.i.d. noise absorbed into same-set diagonals:
/// k(x_i, x_j) + sigma^2 * delta_ij, the delta applying only when i and j
/// index the same point of the same point set.
struct NoisyKernel {
  RbfArdKernel base;
  Mat log_noise;  // 1 x 1

  static NoisyKernel create(RbfArdKernel base, double noise_variance);
  double noise_variance() const { return std::exp(log_noise(0, 0)); }
  Eigen::Index input_dim() const { return base.input_dim(); }
};

using KernelVariant = std::variant<RbfArdKernel, NoisyKernel>;

Eigen::Index kernel_input_dim(const KernelVariant& k);
const RbfArdKernel& kernel_base(const KernelVariant& k);
bool kernel_is_noisy(const KernelVariant& k);

/// Gram matrix [k(a_i, b_j)]. `same_set` asserts that `a` and `b` are the
/// same point set, which switches on the noise term of a NoisyKernel along
/// the diagonal.
Mat gram(const KernelVariant& kernel, const Mat& a, const Mat& b, bool same_set);

/// Diagonal of gram(kernel, a, a, same_set) at O(N) cost.
Vec gram_diag(const KernelVariant& kernel, const Mat& a, bool same_set);

// ---- tape builders ---------------------------------------------------------

/// Kernel hyperparameters bound to a tape (constrained nodes).
struct KernelExprs {
  Expr variance;             // 1 x 1
  Expr inv_lengthscales;     // 1 x d
  std::optional<Expr> noise; // 1 x 1 when the kernel carries noise
};

class Binder;
KernelExprs bind_kernel(Tape& t, Binder& b, const KernelVariant& kernel);

/// Points scaled by inverse lengthscales plus their cached row norms;
/// shared between the Gram blocks of one layer evaluation.
struct ScaledPoints {
  Expr scaled;   // n x d
  Expr sqnorms;  // n x 1
};
ScaledPoints scale_points(Tape& t, const KernelExprs& k, Expr points);

/// Gram block between two scaled point sets. Noise is added only when
/// `same_set` is true and the kernel carries noise.
Expr gram_graph(Tape& t, const KernelExprs& k, const ScaledPoints& a, const ScaledPoints& b,
                bool same_set);

/// 1 x n row of k(a_i, a_i) values.
Expr gram_diag_row_graph(Tape& t, const KernelExprs& k, Eigen::Index n, bool same_set);

}  // namespace dsdgp

#pragma once

#include "dsdgp/types.hpp"

namespace dsdgp {

/// Gauss-Hermite rule in the physicists' convention:
/// integral of exp(-x^2) f(x) dx ~= sum_i weights[i] * f(nodes[i]).
/// Nodes ascend. Computed by the Golub-Welsch eigen decomposition of the
/// Hermite Jacobi matrix. Throws QuadratureOrderInvalid for order < 1.
struct GaussHermite {
  Vec nodes;
  Vec weights;
};
GaussHermite gauss_hermite(int order);

/// Standard normal CDF.
double ndtr(double z);

/// log of the standard normal CDF, stable for large negative z (direct
/// erfc evaluation switches to the asymptotic series near the double
/// underflow threshold).
double log_ndtr(double z);

/// phi(z) / Phi(z), the inverse Mills ratio of the lower tail.
double normal_hazard_lower(double z);

}  // namespace dsdgp

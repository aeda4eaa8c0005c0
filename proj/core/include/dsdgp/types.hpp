#pragma once

#include <Eigen/Dense>

namespace dsdgp {

// Row-major dense matrix of doubles; the numeric carrier used throughout.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace dsdgp

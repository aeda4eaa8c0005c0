#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsdgp/types.hpp"

namespace dsdgp {

enum class Task { kRegression, kBinaryClassification };

struct Dataset {
  Mat x;
  Mat y;
  std::string name;
  Task task = Task::kRegression;
  Eigen::Index n() const { return x.rows(); }
  Eigen::Index d() const { return x.cols(); }
};

/// Reads a comma-separated file of reals ('.' decimal, optional header
/// row). `target_cols` selects the target columns (0-based); empty selects
/// the last column. Row order is preserved. Throws ParseError with the
/// 1-based line number on malformed input and EmptyDataset when no data
/// rows remain.
Dataset ingest_csv(const std::string& path, const std::vector<int>& target_cols, bool header,
                   Task task, const std::string& name);

/// Column statistics of the training split. Standard deviations use the
/// sample convention (N-1 divisor); zero-variance columns map with a unit
/// divisor.
struct NormStats {
  Eigen::RowVectorXd x_mean, x_std, y_mean, y_std;
  double log_y_std_sum() const { return y_std.array().log().sum(); }
};

struct NormalizedSplit {
  Mat x_train, y_train, x_test, y_test;
  NormStats stats;
};

/// Standardizes inputs and (for regression) outputs to zero mean and unit
/// standard deviation, with statistics computed on the training split only
/// and applied to both. Classification targets pass through unchanged.
NormalizedSplit normalize(const Mat& x_train, const Mat& y_train, const Mat& x_test,
                          const Mat& y_test, Task task);

Mat denormalize_y(const Mat& y_norm, const NormStats& stats);

struct SplitSpec {
  int folds = 20;
  double test_fraction = 0.10;
  std::uint64_t seed = 0;
};

struct FoldIndices {
  std::vector<int> train, test;
};

/// Independent random split for one fold: a seeded permutation of 0..n-1,
/// the first floor((1 - test_fraction) n) indices training, the rest test.
/// Folds are independent splits, not a partition of the data.
FoldIndices split_fold(Eigen::Index n, int fold, const SplitSpec& spec);

Mat take_rows(const Mat& m, const std::vector<int>& rows);

}  // namespace dsdgp

#include "dsdgp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dsdgp/errors.hpp"
#include "dsdgp/rng.hpp"

namespace dsdgp {

namespace {

std::vector<double> parse_row(const std::string& line, long line_no) {
  std::vector<double> vals;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    std::size_t end = comma == std::string::npos ? line.size() : comma;
    // trim surrounding whitespace
    std::size_t a = start, b = end;
    while (a < b && std::isspace(static_cast<unsigned char>(line[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(line[b - 1]))) --b;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(line.data() + a, line.data() + b, v);
    if (ec != std::errc() || ptr != line.data() + b)
      throw ParseError("ingest_csv: cannot parse field " + std::to_string(vals.size() + 1) +
                           " ('" + line.substr(a, b - a) + "') on line " + std::to_string(line_no),
                       line_no);
    vals.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return vals;
}

}  // namespace

Dataset ingest_csv(const std::string& path, const std::vector<int>& target_cols, bool header,
                   Task task, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw Error("ingest_csv: cannot open '" + path + "'");

  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header && line_no == 1) continue;
    if (line.empty()) continue;
    auto vals = parse_row(line, line_no);
    if (width == 0)
      width = vals.size();
    else if (vals.size() != width)
      throw ParseError("ingest_csv: expected " + std::to_string(width) + " fields but found " +
                           std::to_string(vals.size()) + " on line " + std::to_string(line_no),
                       line_no);
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw EmptyDataset("ingest_csv: no data rows in '" + path + "'");

  std::vector<int> targets = target_cols;
  if (targets.empty()) targets.push_back(static_cast<int>(width) - 1);
  for (int tcol : targets)
    if (tcol < 0 || tcol >= static_cast<int>(width))
      throw ConfigError("ingest_csv: target column " + std::to_string(tcol) + " out of range");

  std::vector<int> feature_cols;
  for (int c = 0; c < static_cast<int>(width); ++c)
    if (std::find(targets.begin(), targets.end(), c) == targets.end()) feature_cols.push_back(c);
  if (feature_cols.empty()) throw ConfigError("ingest_csv: no feature columns remain");

  Dataset ds;
  ds.name = name;
  ds.task = task;
  ds.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(feature_cols.size()));
  ds.y.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(targets.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < feature_cols.size(); ++j)
      ds.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][static_cast<std::size_t>(feature_cols[j])];
    for (std::size_t j = 0; j < targets.size(); ++j)
      ds.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][static_cast<std::size_t>(targets[j])];
  }
  if (task == Task::kBinaryClassification)
    for (Eigen::Index i = 0; i < ds.y.rows(); ++i)
      if (ds.y(i, 0) != 0.0 && ds.y(i, 0) != 1.0)
        throw ParseError("ingest_csv: binary targets must be 0 or 1 (row " + std::to_string(i + 1) +
                             ")",
                         i + 1);
  return ds;
}

namespace {

void column_stats(const Mat& m, Eigen::RowVectorXd& mean, Eigen::RowVectorXd& std) {
  const double n = static_cast<double>(m.rows());
  mean = m.colwise().mean();
  std.resize(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (m.rows() < 2) {
      std[j] = 1.0;
      continue;
    }
    const double ss = (m.col(j).array() - mean[j]).square().sum();
    const double s = std::sqrt(ss / (n - 1.0));
    std[j] = s > 0.0 ? s : 1.0;  // zero-variance guard
  }
}

Mat apply_norm(const Mat& m, const Eigen::RowVectorXd& mean, const Eigen::RowVectorXd& std) {
  Mat out = m;
  out.rowwise() -= mean;
  out.array().rowwise() /= std.array();
  return out;
}

}  // namespace

NormalizedSplit normalize(const Mat& x_train, const Mat& y_train, const Mat& x_test,
                          const Mat& y_test, Task task) {
  if (x_train.rows() == 0) throw EmptyDataset("normalize: empty training split");
  NormalizedSplit out;
  column_stats(x_train, out.stats.x_mean, out.stats.x_std);
  out.x_train = apply_norm(x_train, out.stats.x_mean, out.stats.x_std);
  out.x_test = x_test.rows() > 0 ? apply_norm(x_test, out.stats.x_mean, out.stats.x_std) : x_test;
  if (task == Task::kRegression) {
    column_stats(y_train, out.stats.y_mean, out.stats.y_std);
    out.y_train = apply_norm(y_train, out.stats.y_mean, out.stats.y_std);
    out.y_test = y_test.rows() > 0 ? apply_norm(y_test, out.stats.y_mean, out.stats.y_std) : y_test;
  } else {
    out.stats.y_mean = Eigen::RowVectorXd::Zero(y_train.cols());
    out.stats.y_std = Eigen::RowVectorXd::Ones(y_train.cols());
    out.y_train = y_train;
    out.y_test = y_test;
  }
  return out;
}

Mat denormalize_y(const Mat& y_norm, const NormStats& stats) {
  Mat out = y_norm;
  out.array().rowwise() *= stats.y_std.array();
  out.rowwise() += stats.y_mean;
  return out;
}

FoldIndices split_fold(Eigen::Index n, int fold, const SplitSpec& spec) {
  if (fold < 0 || fold >= spec.folds) throw ConfigError("split_fold: fold index out of range");
  if (n < 2) throw EmptyDataset("split_fold: need at least two rows");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  RngStream stream = RngStream(spec.seed).substream(0x5B17ULL).substream(static_cast<std::uint64_t>(fold));
  stream.shuffle(perm);
  const Eigen::Index n_train =
      static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * (1.0 - spec.test_fraction)));
  FoldIndices idx;
  idx.train.assign(perm.begin(), perm.begin() + n_train);
  idx.test.assign(perm.begin() + n_train, perm.end());
  std::sort(idx.train.begin(), idx.train.end());
  std::sort(idx.test.begin(), idx.test.end());
  return idx;
}

Mat take_rows(const Mat& m, const std::vector<int>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace dsdgp

#include "dsdgp/kmeans.hpp"

#include <limits>
#include <vector>

#include "dsdgp/errors.hpp"

namespace dsdgp {

namespace {

Mat distinct_rows_fallback(const Mat& x, Eigen::Index k) {
  std::vector<Eigen::Index> picked;
  for (Eigen::Index i = 0; i < x.rows() && static_cast<Eigen::Index>(picked.size()) < k; ++i) {
    bool duplicate = false;
    for (Eigen::Index j : picked)
      if ((x.row(i) - x.row(j)).cwiseAbs().maxCoeff() == 0.0) {
        duplicate = true;
        break;
      }
    if (!duplicate) picked.push_back(i);
  }
  if (static_cast<Eigen::Index>(picked.size()) < k)
    throw DegenerateData("kmeans: fewer than k distinct data rows");
  Mat c(k, x.cols());
  for (Eigen::Index i = 0; i < k; ++i) c.row(i) = x.row(picked[static_cast<std::size_t>(i)]);
  return c;
}

bool has_duplicate_rows(const Mat& c) {
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = i + 1; j < c.rows(); ++j)
      if ((c.row(i) - c.row(j)).cwiseAbs().maxCoeff() == 0.0) return true;
  return false;
}

}  // namespace

Mat kmeans(const Mat& x, Eigen::Index k, RngStream& rng, int max_iter) {
  const Eigen::Index n = x.rows();
  if (k < 1) throw InvalidInput("kmeans: k must be >= 1");
  if (n < k) return distinct_rows_fallback(x, k);  // throws DegenerateData

  // ++-style seeding: first centroid uniform, then D^2 sampling.
  Mat centroids(k, x.cols());
  Vec d2 = Vec::Constant(n, std::numeric_limits<double>::infinity());
  centroids.row(0) = x.row(static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(n))));
  for (Eigen::Index c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (x.row(i) - centroids.row(c - 1)).squaredNorm());
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = rng.next_uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = x.row(pick);
  }

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      double best_d = (x.row(i) - centroids.row(0)).squaredNorm();
      for (Eigen::Index c = 1; c < k; ++c) {
        const double d = (x.row(i) - centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    Mat sums = Mat::Zero(k, x.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
      counts[assign[static_cast<std::size_t>(i)]] += 1;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centroids.row(c) = sums.row(c) / counts[c];
      } else {
        // Re-seed an emptied cluster at the point farthest from its own
        // centroid (lowest index on ties).
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d = (x.row(i) - centroids.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centroids.row(c) = x.row(far);
        assign[static_cast<std::size_t>(far)] = c;
      }
    }
  }

  if (has_duplicate_rows(centroids)) return distinct_rows_fallback(x, k);
  return centroids;
}

}  // namespace dsdgp

#pragma once

#include "dsdgp/rng.hpp"
#include "dsdgp/types.hpp"

namespace dsdgp {

/// Lloyd's algorithm with ++-style seeding, at most `max_iter` sweeps.
/// Deterministic given the stream: ties break on the lowest index and an
/// emptied cluster is re-seeded at the point farthest from its assigned
/// centroid. If the result contains duplicate centroids the call falls
/// back to the first k distinct data rows; when fewer than k distinct rows
/// exist it throws DegenerateData.
Mat kmeans(const Mat& x, Eigen::Index k, RngStream& rng, int max_iter = 20);

}  // namespace dsdgp

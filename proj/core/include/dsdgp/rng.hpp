#pragma once

#include <cstdint>
#include <span>

#include "dsdgp/types.hpp"

namespace dsdgp {

/// Counter-based deterministic random stream (Philox4x32-10).
///
/// The integer output sequence is a pure function of the seed, so runs are
/// reproducible across executions and platforms. Normal variates use the
/// Marsaglia polar method with one cached spare; because the polar method is
/// rejection-based, the number of uniforms consumed per normal varies, and
/// reproducibility is guaranteed at the level of the whole stream rather
/// than per-draw offsets.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  /// Independent stream derived from (seed, stream_id); used to isolate
  /// stochasticity sources (sampling noise, minibatch shuffling, k-means,
  /// per-fold streams) from one another.
  RngStream substream(std::uint64_t stream_id) const;

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double next_uniform();

  /// Standard normal draw (polar method).
  double next_normal();

  /// r x c matrix of i.i.d. standard normals, filled row by row.
  Mat normal_matrix(Eigen::Index r, Eigen::Index c);

  /// Uniform integer in [0, n); rejection sampling, no modulo bias.
  std::uint64_t next_below(std::uint64_t n);

  /// In-place Fisher-Yates shuffle.
  void shuffle(std::span<int> values);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint32_t key_[2];
  std::uint64_t counter_ = 0;  // block counter
  std::uint64_t buf_[2];
  int buf_pos_ = 2;  // empty
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// n i.i.d. standard normal draws from the stream (spec surface for the
/// per-layer noise of the reparameterized sampler).
Vec standard_normal(RngStream& rng, Eigen::Index n);

}  // namespace dsdgp

#include "dsdgp/rng.hpp"

#include <cmath>

#include "dsdgp/errors.hpp"

namespace dsdgp {

namespace {

// SplitMix64 finalizer, used for seeding and substream derivation.
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
  std::uint64_t k = splitmix64(seed);
  key_[0] = static_cast<std::uint32_t>(k);
  key_[1] = static_cast<std::uint32_t>(k >> 32);
}

RngStream RngStream::substream(std::uint64_t stream_id) const {
  return RngStream(splitmix64(seed_ ^ splitmix64(stream_id)));
}

void RngStream::refill() {
  // Philox4x32-10: ten rounds over a 128-bit counter with a 64-bit key.
  std::uint32_t c0 = static_cast<std::uint32_t>(counter_);
  std::uint32_t c1 = static_cast<std::uint32_t>(counter_ >> 32);
  std::uint32_t x0 = c0, x1 = c1, x2 = 0, x3 = 0;
  std::uint32_t k0 = key_[0], k1 = key_[1];
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo32(0xD2511F53u, x0, hi0, lo0);
    mulhilo32(0xCD9E8D57u, x2, hi1, lo1);
    std::uint32_t y0 = hi1 ^ x1 ^ k0;
    std::uint32_t y1 = lo1;
    std::uint32_t y2 = hi0 ^ x3 ^ k1;
    std::uint32_t y3 = lo0;
    x0 = y0; x1 = y1; x2 = y2; x3 = y3;
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  ++counter_;
  buf_[0] = (static_cast<std::uint64_t>(x0) << 32) | x1;
  buf_[1] = (static_cast<std::uint64_t>(x2) << 32) | x3;
  buf_pos_ = 0;
}

std::uint64_t RngStream::next_u64() {
  if (buf_pos_ >= 2) refill();
  return buf_[buf_pos_++];
}

double RngStream::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u, v, s;
  do {
    u = 2.0 * next_uniform() - 1.0;
    v = 2.0 * next_uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * f;
  has_spare_ = true;
  return u * f;
}

Mat RngStream::normal_matrix(Eigen::Index r, Eigen::Index c) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = next_normal();
  return m;
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
  if (n == 0) throw InvalidInput("next_below: n must be positive");
  std::uint64_t limit = (UINT64_MAX / n) * n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

void RngStream::shuffle(std::span<int> values) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(next_below(i));
    std::swap(values[i - 1], values[j]);
  }
}

Vec standard_normal(RngStream& rng, Eigen::Index n) {
  if (n < 1) throw InvalidInput("standard_normal: n must be >= 1");
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.next_normal();
  return v;
}

}  // namespace dsdgp

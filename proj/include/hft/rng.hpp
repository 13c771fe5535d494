#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace hft {

// Counter-based seeded stream. A run seed plus a round index (and an
// optional salt) are mixed through splitmix64 into an internal state,
// so distinct rounds draw independent sequences. All derived draws use
// explicit algorithms (no std distributions) so sequences are identical
// across platforms and standard libraries.
class Stream {
 public:
  explicit Stream(std::uint64_t seed, std::uint64_t round = 0,
                  std::uint64_t salt = 0) {
    state_ = mix(mix(mix(0x9e3779b97f4a7c15ull ^ seed) + round) + salt);
  }

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
  }

  // Uniform in [0, 1).
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (one value per call; the pair's
  // second member is discarded for simplicity).
  double normal() {
    double u1 = unit();
    while (u1 == 0.0) u1 = unit();
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  bool coin() { return (next() & 1u) != 0; }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // k distinct indices from [0, n), in draw order.
  std::vector<int> sample_indices(int n, int k) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> out;
    out.reserve(k);
    for (int i = 0; i < k && i < n; ++i) {
      const int j = i + static_cast<int>(below(n - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_ = 0;
};

}  // namespace hft

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace duplex {

namespace detail {
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Deterministic RNG. The engine (mt19937_64) is fully specified by the
// standard; the distributions here are hand-rolled so the draw sequence does
// not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, n). Modulo reduction; bias is negligible for desk-scale n.
  uint64_t below(uint64_t n) { return next_u64() % n; }

  int below_int(int n) { return static_cast<int>(below(static_cast<uint64_t>(n))); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Box-Muller, one value per call (the sine branch is discarded).
  double normal(double mean = 0.0, double stddev = 1.0) {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Independent stream derived from this rng's seed and a stream id.
  Rng derive(uint64_t stream) const {
    uint64_t s = seed_ ^ (0xA0761D6478BD642FULL * (stream + 1));
    detail::splitmix64(s);
    return Rng(detail::splitmix64(s));
  }

  // k distinct values drawn from pool, returned sorted ascending.
  std::vector<int> sample_values(std::vector<int> pool, int k) {
    const int n = static_cast<int>(pool.size());
    if (k > n) k = n;
    for (int i = 0; i < k; ++i) {
      const int j = i + below_int(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  // k distinct indices from [0, n), sorted ascending.
  std::vector<int> sample_indices(int n, int k) {
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    return sample_values(std::move(pool), k);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[below_int(i + 1)]);
    }
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace duplex

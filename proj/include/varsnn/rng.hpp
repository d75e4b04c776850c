#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace varsnn {

// Deterministic random source. Every stochastic choice in the project
// (weight init, batch sampling, token permutations, probe roles) draws from
// one of these, so a run is fully reproducible from its seed. We avoid
// std::uniform_*_distribution because the standard does not pin their
// algorithms; mt19937_64 itself is specified exactly.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased uniform integer in [0, n).
  int below(int n) {
    if (n <= 0) throw std::invalid_argument("Rng::below: n must be positive");
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t bound = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= bound);
    return static_cast<int>(x % un);
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[below(i + 1)]);
    }
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    shuffle(p);
    return p;
  }

  // k distinct values from [0, n), order random (partial Fisher-Yates).
  std::vector<int> sample_distinct(int k, int n) {
    if (k > n) throw std::invalid_argument("Rng::sample_distinct: k > n");
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (int i = 0; i < k; ++i) {
      std::swap(p[i], p[i + below(n - i)]);
    }
    p.resize(k);
    return p;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace varsnn

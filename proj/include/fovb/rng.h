#ifndef FOVB_RNG_H_
#define FOVB_RNG_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "fovb/tensor.h"

namespace fovb {

// Seeded pseudo-random source. Every stochastic step in the project draws
// from an explicit Rng so runs are reproducible bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double Uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double Normal(double mean = 0.0, double stddev = 1.0) {
    return normal_(engine_) * stddev + mean;
  }
  // Uniform integer in [0, n).
  std::size_t Index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t NextU64() { return engine_(); }

  // Independent child stream; deterministic in the parent's state.
  Rng Split() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ULL); }

  std::vector<double> NormalVector(std::size_t n, double stddev = 1.0);
  Tensor NormalTensor(const Shape& shape, double stddev = 1.0,
                      bool requires_grad = false);
  Tensor UniformTensor(const Shape& shape, double lo, double hi,
                       bool requires_grad = false);

  template <typename T>
  void Shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[Index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace fovb

#endif  // FOVB_RNG_H_

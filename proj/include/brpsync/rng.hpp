#pragma once

#include <cstdint>
#include <random>

#include "brpsync/common.hpp"

namespace brpsync {

// Mixes a parent seed with stream indices so that every Monte Carlo trial owns
// an independent generator regardless of how trials are scheduled.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }

  // Circularly-symmetric complex Gaussian with E|z|^2 = variance.
  Complex complex_normal(double variance = 1.0);

  std::uint64_t next_u64() { return engine_(); }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

CVec complex_normal_vector(Rng& rng, Eigen::Index n, double variance = 1.0);

}  // namespace brpsync

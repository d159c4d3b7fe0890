#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pd {

// All randomness in a run flows from one master seed through named streams,
// one stream per purpose (init / sampling / augmentation / ...). Varying one
// experiment axis therefore never perturbs another axis's draws.

uint64_t splitmix64(uint64_t& state);
uint64_t fnv1a64(std::string_view s);

// Deterministic sub-seed for a named stream of a master seed.
uint64_t derive_seed(uint64_t master, std::string_view stream_name);

class RngStream {
 public:
  RngStream(uint64_t master, std::string_view stream_name)
      : eng_(derive_seed(master, stream_name)) {}
  explicit RngStream(uint64_t raw_seed) : eng_(raw_seed) {}

  double normal(double mean, double stddev) {
    std::normal_distribution<double> d(mean, stddev);
    return d(eng_);
  }

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(eng_);
  }

  // Unbiased draw in [0, n).
  uint64_t below(uint64_t n);

  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n);

  void fill_normal(std::vector<float>& out, double mean, double stddev);
  void fill_uniform(std::vector<float>& out, double lo, double hi);

  uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace pd

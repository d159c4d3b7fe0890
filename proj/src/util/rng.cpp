#include "util/rng.hpp"

namespace pd {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t derive_seed(uint64_t master, std::string_view stream_name) {
  uint64_t state = master ^ fnv1a64(stream_name);
  // A couple of mixing rounds so nearby master seeds decorrelate.
  uint64_t a = splitmix64(state);
  uint64_t b = splitmix64(state);
  return a ^ (b << 1);
}

uint64_t RngStream::below(uint64_t n) {
  if (n == 0) return 0;
  // Rejection sampling to avoid modulo bias.
  const uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  uint64_t x;
  do {
    x = eng_();
  } while (x >= limit);
  return x % n;
}

std::vector<int> RngStream::permutation(int n) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(below(static_cast<uint64_t>(i) + 1));
    std::swap(p[i], p[j]);
  }
  return p;
}

void RngStream::fill_normal(std::vector<float>& out, double mean, double stddev) {
  std::normal_distribution<double> d(mean, stddev);
  for (auto& v : out) v = static_cast<float>(d(eng_));
}

void RngStream::fill_uniform(std::vector<float>& out, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : out) v = static_cast<float>(d(eng_));
}

}  // namespace pd

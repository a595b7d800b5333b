#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tgan {

// Validation failures (bad shapes, bad configs, bad files). CLI exit code 1.
struct ValueError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failures (divergence, non-finite values). CLI exit code 2.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DType : uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline void check_shape(const Shape& s) {
  if (s.empty()) throw ValueError("shape must be non-empty");
  for (int64_t e : s)
    if (e < 1) throw ValueError("shape extent must be >= 1, got " + shape_str(s));
}

using Rng = std::mt19937_64;

// Stable per-item seed derivation (splitmix64 on the pair).
inline uint64_t derive_seed(uint64_t seed, uint64_t index) {
  uint64_t x = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace tgan

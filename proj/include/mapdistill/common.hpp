#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mapdistill {

// Error taxonomy. The CLI maps these onto stable exit codes:
// config/usage -> 1, numeric -> 2, I/O -> 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : ConfigError {
  using ConfigError::ConfigError;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GeometryError : NumericError {
  using NumericError::NumericError;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : IoError {
  using IoError::IoError;
};

// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
// streams do not depend on the standard library's <random> implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(eng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  // Box-Muller, no cached spare.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::mt19937_64 eng_;
};

// FNV-1a over bytes, used for config and checkpoint hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
  return fnv1a(s.data(), s.size(), h);
}

// String literals would otherwise decay to const void* and hit the raw-byte
// overload with a bogus length.
inline std::uint64_t fnv1a(const char* s, std::uint64_t h = 1469598103934665603ull) {
  std::size_t n = 0;
  while (s[n] != '\0') ++n;
  return fnv1a(s, n, h);
}

}  // namespace mapdistill

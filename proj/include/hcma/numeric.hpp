#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace hcma {

// Shortest decimal text that parses back to the identical double
// (std::to_chars round-trip guarantee). All CSV/JSON numeric output goes
// through this so files are bit-exact across runs.
std::string format_double(double value);

// Strict full-string parse; throws ParseError on trailing garbage.
double parse_double(std::string_view text);
std::int64_t parse_int(std::string_view text);

inline double sigmoid(double z) {
  // Split on sign so exp never overflows.
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// SplitMix64 finalizer; used to derive independent per-task seeds from a
// user seed so parallel work is reproducible for any thread count.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace hcma

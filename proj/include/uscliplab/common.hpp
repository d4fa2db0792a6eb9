#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace usclip {

inline constexpr const char* kVersion = "uscliplab 0.1.0";

// Validation problems (bad config, bad arguments) map to CLI exit code 1;
// everything else derived from std::exception maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// -------------------- hashing --------------------

constexpr uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t fnv1a64_bytes(const void* data, size_t n, uint64_t h = 1469598103934665603ull);

std::string hex64(uint64_t v);

// splitmix64 finalizer; used to derive independent seed streams.
constexpr uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic stream derivation from a base seed, a role tag and up to
// three indices. Streams with distinct (tag, indices) are independent.
uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t a = 0,
                     uint64_t b = 0, uint64_t c = 0);

// -------------------- rng --------------------

// Wraps mt19937_64 with explicitly specified draw helpers so results are
// identical across standard library implementations (uniform_int_distribution
// and std::shuffle are not portable).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next() { return gen_(); }

  // [0,1) with 53-bit resolution
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased draw from [0,n)
  uint64_t below(uint64_t n);

  bool coin() { return (next() & 1ull) != 0; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// -------------------- strings --------------------

std::string to_lower(std::string s);
std::string trim(const std::string& s);
bool contains_ci(const std::string& haystack, const std::string& needle);
std::string replace_all(std::string s, const std::string& from, const std::string& to);
std::vector<std::string> split_lines(const std::string& s);

}  // namespace usclip

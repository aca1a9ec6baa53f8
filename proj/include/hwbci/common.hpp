#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hwbci {

class PipelineError : public std::runtime_error {
public:
  explicit PipelineError(const std::string& what) : std::runtime_error(what) {}
};

// FNV-1a, used for config fingerprints and derived seeds.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 14695981039346656037ull) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Derives an independent per-job seed so parallel jobs cannot reorder randomness.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view job_descriptor) {
  std::uint64_t h = fnv1a(job_descriptor);
  h ^= master_seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

using Rng = std::mt19937_64;

}  // namespace hwbci

#pragma once

#include <cstdint>

namespace durm {

// splitmix64 step (Steele, Lea, Flood / Vigna's public-domain mixer).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a master seed and a stream tag.
// Each consumer of randomness inside a run (weight init, epoch shuffling,
// mixup, ...) draws from its own stream so that enabling one feature cannot
// perturb the draws of another.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t tag) {
  std::uint64_t state = master ^ (tag * 0xD1B54A32D192ED03ULL);
  splitmix64(state);
  return splitmix64(state);
}

inline constexpr std::uint64_t kStreamInit = 1;
inline constexpr std::uint64_t kStreamShuffle = 2;
inline constexpr std::uint64_t kStreamMixup = 3;
inline constexpr std::uint64_t kStreamLongtail = 4;
inline constexpr std::uint64_t kStreamBlobs = 5;
inline constexpr std::uint64_t kStreamSplit = 6;
inline constexpr std::uint64_t kStreamTestSplit = 7;
inline constexpr std::uint64_t kStreamProbeHessian = 8;
inline constexpr std::uint64_t kStreamProbeFlatness = 9;
// Monte Carlo chunks use kStreamMonteCarlo + chunk_index.
inline constexpr std::uint64_t kStreamMonteCarlo = 1000;

}  // namespace durm

// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace bagrad {

// Counter-based PRNG (Philox4x32-10). Streams are addressed by a 64-bit
// (seed) key and a 64-bit stream id placed in the upper counter words, so
// any (seed, stream) pair yields an independent, reproducible sequence
// without shared state. Stream ids are derived with stream_id() below:
// purpose-tagged, then scene id, then entity id, so e.g. edge noise in
// scene 7 reads stream_id(Stream::kEdgeNoise, 7, edge).
class Philox {
 public:
  Philox(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        ctr_{0u, 0u, static_cast<std::uint32_t>(stream),
             static_cast<std::uint32_t>(stream >> 32)} {}

  std::uint32_t next_u32() {
    if (buf_pos_ == 4) refill();
    return buf_[buf_pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  void refill() {
    std::array<std::uint32_t, 4> c = ctr_;
    std::array<std::uint32_t, 2> k = key_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
      k[0] += kWeyl0;
      k[1] += kWeyl1;
    }
    buf_ = c;
    buf_pos_ = 0;
    if (++ctr_[0] == 0u) ++ctr_[1];
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> buf_{};
  int buf_pos_ = 4;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// Purpose tags for stream derivation. Keep values stable: they are part of
// the reproducibility contract of every shipped config.
enum class Stream : std::uint64_t {
  kTrajectory = 1,
  kPatches = 2,
  kEdgeNoise = 3,
  kDepthPerturb = 4,
  kPosePerturb = 5,
  kPredictorInit = 6,
  kInnerInit = 7,
  kToyBias = 8,
  kExperiment = 9,
};

inline std::uint64_t stream_id(Stream purpose, std::uint64_t a = 0,
                               std::uint64_t b = 0) {
  return (static_cast<std::uint64_t>(purpose) << 56) ^ (a << 28) ^ b;
}

}  // namespace bagrad

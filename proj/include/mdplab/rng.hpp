/*
   Copyright 2026 The mdplab Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace mdplab {

// Philox4x32-10 (Salmon et al., SC'11). Stateless: every draw is a pure
// function of (key, counter), so parallel schedules cannot reorder noise.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

// SplitMix64 finalizer; used to derive independent sub-seeds per purpose.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ mix64(tag));
}

// Purpose tags for derive_seed. Distinct purposes never share a Philox key.
namespace stream_tag {
inline constexpr std::uint64_t kInitialCloud = 0x1001;
inline constexpr std::uint64_t kParticles = 0x1002;
inline constexpr std::uint64_t kReference = 0x1003;
inline constexpr std::uint64_t kReplicas = 0x1004;
inline constexpr std::uint64_t kLawProxy = 0x1005;
inline constexpr std::uint64_t kHypothesis = 0x1006;
inline constexpr std::uint64_t kObservable = 0x1007;
inline constexpr std::uint64_t kSampling = 0x1008;
}  // namespace stream_tag

/// Identifies one noise stream: a Philox key (from `seed`) plus a stream
/// word placed in the counter. Draws are addressed by (step, particle, block).
struct NoiseKey {
  std::uint64_t seed = 0;
  std::uint32_t stream = 0;

  friend bool operator==(const NoiseKey&, const NoiseKey&) = default;
};

class NoiseSource {
 public:
  explicit constexpr NoiseSource(NoiseKey key) : key_(key) {}

  constexpr NoiseKey key() const { return key_; }

  Philox4x32::Counter raw(std::uint32_t step, std::uint32_t particle, std::uint32_t block) const {
    const Philox4x32::Key k = {static_cast<std::uint32_t>(key_.seed),
                               static_cast<std::uint32_t>(key_.seed >> 32)};
    return Philox4x32::generate({step, particle, key_.stream, block}, k);
  }

  // Two uniforms on the open interval (0, 1) with 53-bit resolution.
  std::array<double, 2> uniform_pair(std::uint32_t step, std::uint32_t particle,
                                     std::uint32_t block) const {
    const auto r = raw(step, particle, block);
    return {to_unit(r[0], r[1]), to_unit(r[2], r[3])};
  }

  // Two independent standard normals (Box-Muller).
  std::array<double, 2> normal_pair(std::uint32_t step, std::uint32_t particle,
                                    std::uint32_t block) const {
    const auto u = uniform_pair(step, particle, block);
    const double radius = std::sqrt(-2.0 * std::log(u[0]));
    const double angle = 2.0 * std::numbers::pi * u[1];
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  // Fills `out` with standard normals for (step, particle).
  void normals(std::uint32_t step, std::uint32_t particle, std::span<double> out) const {
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; i += 2) {
      const auto z = normal_pair(step, particle, static_cast<std::uint32_t>(i / 2));
      out[i] = z[0];
      if (i + 1 < n) out[i + 1] = z[1];
    }
  }

  double uniform(std::uint32_t step, std::uint32_t particle, std::uint32_t block = 0) const {
    return uniform_pair(step, particle, block)[0];
  }

  // Uniform index in [0, n).
  std::size_t index(std::uint32_t step, std::uint32_t particle, std::size_t n,
                     std::uint32_t block = 0) const {
    const auto i = static_cast<std::size_t>(uniform(step, particle, block) * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

 private:
  static double to_unit(std::uint32_t a, std::uint32_t b) {
    const std::uint64_t bits = (std::uint64_t{a >> 5} << 26) | (b >> 6);
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  NoiseKey key_;
};

}  // namespace mdplab

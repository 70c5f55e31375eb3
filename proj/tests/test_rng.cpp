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

#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "mdplab/rng.hpp"

using namespace mdplab;

TEST_CASE("philox known-answer vectors") {
  using C = Philox4x32::Counter;
  using K = Philox4x32::Key;
  CHECK(Philox4x32::generate(C{0, 0, 0, 0}, K{0, 0}) ==
        C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::generate(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}) ==
        C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::generate(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}) ==
        C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("draws are pure functions of key and counter") {
  const NoiseSource a({42, 3});
  const NoiseSource b({42, 3});
  std::vector<double> x(5), y(5);
  a.normals(7, 11, x);
  b.normals(7, 11, y);
  CHECK(x == y);
  b.normals(7, 12, y);
  CHECK(x != y);
  const NoiseSource c({42, 4});
  c.normals(7, 11, y);
  CHECK(x != y);
}

TEST_CASE("uniforms lie strictly inside (0,1)") {
  const NoiseSource s({1, 0});
  for (std::uint32_t i = 0; i < 10000; ++i) {
    const auto u = s.uniform_pair(i, 0, 0);
    CHECK(u[0] > 0.0);
    CHECK(u[0] < 1.0);
    CHECK(u[1] > 0.0);
    CHECK(u[1] < 1.0);
  }
}

TEST_CASE("normal moments") {
  const NoiseSource s({2024, 0});
  const int n = 200000;
  double m1 = 0, m2 = 0, m4 = 0;
  std::vector<double> z(2);
  for (int i = 0; i < n / 2; ++i) {
    s.normals(static_cast<std::uint32_t>(i), 0, z);
    for (double v : z) {
      m1 += v;
      m2 += v * v;
      m4 += v * v * v * v;
    }
  }
  m1 /= n;
  m2 /= n;
  m4 /= n;
  // Standard errors: 1/sqrt(n), sqrt(2/n), sqrt(96/n).
  CHECK(std::abs(m1) < 5.0 / std::sqrt(n));
  CHECK(std::abs(m2 - 1.0) < 5.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(m4 - 3.0) < 5.0 * std::sqrt(96.0 / n));
}

TEST_CASE("odd-length normal requests reuse the leading draws") {
  const NoiseSource s({5, 1});
  std::vector<double> three(3), four(4);
  s.normals(0, 0, three);
  s.normals(0, 0, four);
  for (int i = 0; i < 3; ++i) CHECK(three[i] == four[i]);
}

TEST_CASE("derived seeds separate purposes") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    for (std::uint64_t tag = stream_tag::kInitialCloud; tag <= stream_tag::kSampling; ++tag) {
      seen.insert(derive_seed(seed, tag));
    }
  }
  CHECK(seen.size() == 24);
}

TEST_CASE("index stays in range") {
  const NoiseSource s({9, 0});
  std::vector<int> counts(7, 0);
  for (std::uint32_t i = 0; i < 7000; ++i) {
    const auto k = s.index(i, 0, 7);
    REQUIRE(k < 7);
    ++counts[k];
  }
  for (int c : counts) CHECK(c > 850);
}

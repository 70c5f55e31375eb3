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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "mdplab/measures.hpp"

using namespace mdplab;

namespace {

EmpiricalMeasure random_cloud(std::mt19937_64& gen, std::size_t n, std::size_t dim) {
  std::normal_distribution<double> z(0.0, 1.0);
  RowMatrix p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = z(gen);
  return EmpiricalMeasure::from_samples(std::move(p));
}

// Oracle: minimum over all n! bijections of the mean squared displacement.
double w2_oracle(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  std::vector<std::size_t> perm(mu.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      const auto a = mu.atom(i);
      const auto b = nu.atom(perm[i]);
      for (std::size_t k = 0; k < a.size(); ++k) c += (a[k] - b[k]) * (a[k] - b[k]);
    }
    best = std::min(best, c / static_cast<double>(perm.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best);
}

EmpiricalMeasure from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t dim = rows.begin()->size();
  RowMatrix p(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index k = 0;
    for (double v : r) p(i, k++) = v;
    ++i;
  }
  return EmpiricalMeasure::from_samples(std::move(p));
}

}  // namespace

TEST_CASE("assignment and brute force agree with the permutation oracle") {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + trial % 6;
    const std::size_t dim = 1 + trial % 3;
    const auto mu = random_cloud(gen, n, dim);
    const auto nu = random_cloud(gen, n, dim);
    const double oracle = w2_oracle(mu, nu);
    CHECK(wasserstein2(mu, nu, {W2Method::assignment}).distance == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(wasserstein2_brute(mu, nu) == doctest::Approx(oracle).epsilon(1e-12));
    if (dim == 1) CHECK(wasserstein2(mu, nu, {W2Method::sorted1d}).distance == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("translation moves W2 by the shift length") {
  std::mt19937_64 gen(11);
  const auto mu = random_cloud(gen, 40, 3);
  RowMatrix shifted = mu.points();
  shifted.rowwise() += Eigen::RowVector3d(1.0, -2.0, 2.0);
  const auto nu = EmpiricalMeasure::from_samples(shifted);
  CHECK(wasserstein2_exact(mu, nu) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(wasserstein2_exact(mu, mu) == 0.0);
}

TEST_CASE("W2 is symmetric") {
  std::mt19937_64 gen(13);
  const auto mu = random_cloud(gen, 30, 2);
  const auto nu = random_cloud(gen, 30, 2);
  CHECK(wasserstein2_exact(mu, nu) == doctest::Approx(wasserstein2_exact(nu, mu)).epsilon(1e-12));
}

TEST_CASE("point mass against a cloud is the root mean square distance") {
  std::mt19937_64 gen(17);
  const auto nu = random_cloud(gen, 25, 2);
  RowMatrix same(25, 2);
  same.setConstant(0.5);
  const auto mu = EmpiricalMeasure::from_samples(same);
  double s = 0.0;
  for (std::size_t i = 0; i < nu.size(); ++i) {
    const auto a = nu.atom(i);
    s += (a[0] - 0.5) * (a[0] - 0.5) + (a[1] - 0.5) * (a[1] - 0.5);
  }
  CHECK(wasserstein2_exact(mu, nu) == doctest::Approx(std::sqrt(s / 25.0)).epsilon(1e-12));
}

TEST_CASE("matching in dim 1 is monotone") {
  const auto mu = from_rows({{3.0}, {-1.0}, {0.5}});
  const auto nu = from_rows({{10.0}, {20.0}, {30.0}});
  const auto m = optimal_matching(mu, nu);
  CHECK(m == std::vector<std::size_t>{2, 0, 1});
  CHECK(matching_cost(mu, nu, m) == doctest::Approx(((27.0 * 27.0) + 11.0 * 11.0 + 19.5 * 19.5) / 3.0));
}

TEST_CASE("entropic estimate is bracketed by the exact value and its bias bound") {
  std::mt19937_64 gen(19);
  const auto mu = random_cloud(gen, 30, 2);
  const auto nu = random_cloud(gen, 30, 2);
  const double exact = wasserstein2_exact(mu, nu);
  const W2Result e = wasserstein2(mu, nu, {W2Method::entropic, 0.05});
  CHECK_FALSE(e.exact);
  CHECK(e.squared_bias_bound == doctest::Approx(0.05 * std::log(30.0)));
  CHECK(e.distance * e.distance >= exact * exact - 1e-6);
  CHECK(e.distance * e.distance <= exact * exact + e.squared_bias_bound + 1e-6);
}

TEST_CASE("size and method preconditions") {
  std::mt19937_64 gen(23);
  const auto a = random_cloud(gen, 3, 1);
  const auto b = random_cloud(gen, 4, 1);
  CHECK_THROWS_AS(wasserstein2(a, b, {W2Method::assignment}), std::invalid_argument);
  CHECK_THROWS_AS(wasserstein2(a, b, {W2Method::sorted1d}), std::invalid_argument);
  const auto c = random_cloud(gen, 3, 2);
  CHECK_THROWS_AS(wasserstein2(c, c, {W2Method::sorted1d}), std::invalid_argument);
  const auto big = random_cloud(gen, 9, 1);
  CHECK_THROWS_AS(wasserstein2_brute(big, big), std::invalid_argument);
  // Unequal sizes are fine for the entropic method.
  CHECK(std::isfinite(wasserstein2(a, b, {W2Method::entropic, 0.1}).distance));
}

TEST_CASE("invalid samples are rejected with the offending row") {
  RowMatrix p(3, 2);
  p << 0, 1, 2, std::numeric_limits<double>::quiet_NaN(), 4, 5;
  try {
    EmpiricalMeasure::from_samples(p);
    FAIL("expected InvalidSampleError");
  } catch (const InvalidSampleError& e) {
    CHECK(e.row() == 1);
  }
  CHECK_THROWS_AS(EmpiricalMeasure::from_samples(RowMatrix(0, 2)), std::invalid_argument);
}

TEST_CASE("mean and second moment") {
  const auto mu = from_rows({{1.0, 0.0}, {3.0, 2.0}});
  CHECK(mu.mean()(0) == 2.0);
  CHECK(mu.mean()(1) == 1.0);
  CHECK(second_moment_norm(mu) == doctest::Approx(std::sqrt((1.0 + 9.0 + 4.0) / 2.0)));
}

TEST_CASE("csv round trip is exact") {
  std::mt19937_64 gen(29);
  const auto mu = random_cloud(gen, 50, 3);
  std::stringstream ss;
  write_measure_csv(ss, mu);
  const auto back = read_measure_csv(ss);
  CHECK(back.points() == mu.points());
}

TEST_CASE("csv reader reports malformed input") {
  std::stringstream bad_header("y0\n1\n");
  CHECK_THROWS_AS(read_measure_csv(bad_header), std::invalid_argument);
  std::stringstream bad_cell("x0,x1\n1,2\n3,abc\n");
  CHECK_THROWS(read_measure_csv(bad_cell));
  std::stringstream nan_cell("x0\n1\nnan\n");
  CHECK_THROWS_AS(read_measure_csv(nan_cell), InvalidSampleError);
}

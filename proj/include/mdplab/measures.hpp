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

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mdplab {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class InvalidSampleError : public std::invalid_argument {
 public:
  InvalidSampleError(const std::string& what, std::size_t row)
      : std::invalid_argument(what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

/// Uniform-weight point cloud on R^dim. Each of the n atoms carries mass 1/n;
/// there is no weight vector, so total mass is 1 by construction.
class EmpiricalMeasure {
 public:
  /// Rejects an empty matrix and any non-finite entry (the error carries the
  /// offending row).
  static EmpiricalMeasure from_samples(RowMatrix points);
  static EmpiricalMeasure dirac(std::span<const double> x);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }
  std::span<const double> atom(std::size_t i) const {
    return {points_.data() + i * dim(), dim()};
  }
  const RowMatrix& points() const { return points_; }

  Eigen::VectorXd mean() const;

 private:
  explicit EmpiricalMeasure(RowMatrix points) : points_(std::move(points)) {}
  RowMatrix points_;
};

/// ( (1/n) sum |x_i|^2 )^{1/2}
double second_moment_norm(const EmpiricalMeasure& mu);

enum class W2Method { sorted1d, assignment, entropic, brute };

struct W2Options {
  W2Method method = W2Method::assignment;
  double epsilon = 1e-2;  // entropic regularization, on the squared-cost scale
};

struct W2Result {
  double distance = 0.0;
  bool exact = true;
  // Upper bound on (returned^2 - true^2); zero for exact methods.
  double squared_bias_bound = 0.0;
};

inline constexpr std::size_t kAssignmentLimit = 4096;
inline constexpr std::size_t kBruteLimit = 8;

W2Result wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                      const W2Options& options);
double wasserstein2_brute(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

/// Exact W2 with the cheapest admissible method (sorted1d in dim 1,
/// assignment otherwise). Requires equal sizes.
double wasserstein2_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

/// Optimal matching for equal-size uniform measures: result[i] is the atom of
/// `nu` paired with atom i of `mu`. Dim 1 uses monotone rearrangement,
/// otherwise shortest augmenting paths with lowest-index tie-breaking.
std::vector<std::size_t> optimal_matching(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

/// Mean squared displacement of a given matching.
double matching_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                     std::span<const std::size_t> matching);

/// CSV: header `x0,...,x{dim-1}`, one atom per row, 17 significant digits.
void write_measure_csv(std::ostream& out, const EmpiricalMeasure& mu);
EmpiricalMeasure read_measure_csv(std::istream& in);

}  // namespace mdplab

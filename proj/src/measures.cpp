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

#include "mdplab/measures.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mdplab {

EmpiricalMeasure EmpiricalMeasure::from_samples(RowMatrix points) {
  if (points.rows() == 0 || points.cols() == 0) {
    throw std::invalid_argument("empirical measure: empty sample matrix");
  }
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (!points.row(i).allFinite()) {
      throw InvalidSampleError(
          "empirical measure: non-finite entry in row " + std::to_string(i),
          static_cast<std::size_t>(i));
    }
  }
  return EmpiricalMeasure(std::move(points));
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> x) {
  RowMatrix p(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t k = 0; k < x.size(); ++k) p(0, static_cast<Eigen::Index>(k)) = x[k];
  return from_samples(std::move(p));
}

Eigen::VectorXd EmpiricalMeasure::mean() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(points_.cols());
  for (Eigen::Index i = 0; i < points_.rows(); ++i) m += points_.row(i).transpose();
  return m / static_cast<double>(points_.rows());
}

double second_moment_norm(const EmpiricalMeasure& mu) {
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (double v : mu.atom(i)) acc += v * v;
  }
  return std::sqrt(acc / static_cast<double>(mu.size()));
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

void require_same_dim(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() != nu.dim()) {
    throw std::invalid_argument("wasserstein2: dimension mismatch (" + std::to_string(mu.dim()) +
                                " vs " + std::to_string(nu.dim()) + ")");
  }
}

void require_equal_size(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const char* who) {
  if (mu.size() != nu.size()) {
    throw std::invalid_argument(std::string(who) + ": requires equal support sizes (" +
                                std::to_string(mu.size()) + " vs " + std::to_string(nu.size()) +
                                ")");
  }
}

std::vector<std::size_t> sorted_order(const EmpiricalMeasure& mu) {
  std::vector<std::size_t> idx(mu.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double xa = mu.atom(a)[0];
    const double xb = mu.atom(b)[0];
    return xa < xb || (xa == xb && a < b);
  });
  return idx;
}

std::vector<std::size_t> monotone_matching(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  const auto om = sorted_order(mu);
  const auto on = sorted_order(nu);
  std::vector<std::size_t> match(mu.size());
  for (std::size_t k = 0; k < om.size(); ++k) match[om[k]] = on[k];
  return match;
}

// Shortest augmenting path assignment (Hungarian method with potentials),
// O(n^3). Ties on reduced cost resolve to the lowest column index.
std::vector<std::size_t> assignment_matching(const EmpiricalMeasure& mu,
                                             const EmpiricalMeasure& nu) {
  const std::size_t n = mu.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      const auto row = mu.atom(i0 - 1);
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = sq_dist(row, nu.atom(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> match(n);
  for (std::size_t j = 1; j <= n; ++j) match[p[j] - 1] = j - 1;
  return match;
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

W2Result entropic_w2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("wasserstein2: entropic epsilon must be > 0");
  const std::size_t n = mu.size();
  const std::size_t m = nu.size();
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  std::vector<double> f(n, 0.0), g(m, 0.0), buf;
  auto cost = [&](std::size_t i, std::size_t j) { return sq_dist(mu.atom(i), nu.atom(j)); };
  for (int iter = 0; iter < 2000; ++iter) {
    buf.resize(m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - cost(i, j)) / eps + log_b;
      f[i] = -eps * log_sum_exp(buf);
    }
    buf.resize(n);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - cost(i, j)) / eps + log_a;
      g[j] = -eps * log_sum_exp(buf);
    }
    // Columns are exact after the g-update; check the row marginals.
    double err = 0.0;
    buf.resize(m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = (f[i] + g[j] - cost(i, j)) / eps + log_b;
      err += std::abs(std::exp(log_sum_exp(buf) + log_a) - std::exp(log_a));
    }
    if (err < 1e-9) break;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double c = cost(i, j);
      total += std::exp((f[i] + g[j] - c) / eps + log_a + log_b) * c;
    }
  }
  W2Result r;
  r.distance = std::sqrt(std::max(total, 0.0));
  r.exact = false;
  r.squared_bias_bound = eps * std::log(static_cast<double>(std::min(n, m)));
  return r;
}

}  // namespace

double matching_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                     std::span<const std::size_t> matching) {
  double acc = 0.0;
  for (std::size_t i = 0; i < matching.size(); ++i) acc += sq_dist(mu.atom(i), nu.atom(matching[i]));
  return acc / static_cast<double>(matching.size());
}

std::vector<std::size_t> optimal_matching(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  require_same_dim(mu, nu);
  require_equal_size(mu, nu, "optimal_matching");
  if (mu.dim() == 1) return monotone_matching(mu, nu);
  if (mu.size() > kAssignmentLimit) {
    throw std::invalid_argument("optimal_matching: assignment limited to n <= " +
                                std::to_string(kAssignmentLimit));
  }
  return assignment_matching(mu, nu);
}

double wasserstein2_brute(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  require_same_dim(mu, nu);
  require_equal_size(mu, nu, "wasserstein2_brute");
  if (mu.size() > kBruteLimit) {
    throw std::invalid_argument("wasserstein2_brute: n must be <= " + std::to_string(kBruteLimit));
  }
  std::vector<std::size_t> perm(mu.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    best = std::min(best, matching_cost(mu, nu, perm));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best);
}

W2Result wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                      const W2Options& options) {
  require_same_dim(mu, nu);
  switch (options.method) {
    case W2Method::sorted1d: {
      if (mu.dim() != 1) throw std::invalid_argument("wasserstein2: sorted1d requires dim = 1");
      require_equal_size(mu, nu, "wasserstein2(sorted1d)");
      const auto match = monotone_matching(mu, nu);
      return {std::sqrt(matching_cost(mu, nu, match)), true, 0.0};
    }
    case W2Method::assignment: {
      require_equal_size(mu, nu, "wasserstein2(assignment)");
      if (mu.size() > kAssignmentLimit) {
        throw std::invalid_argument("wasserstein2: assignment limited to n <= " +
                                    std::to_string(kAssignmentLimit));
      }
      const auto match = assignment_matching(mu, nu);
      return {std::sqrt(matching_cost(mu, nu, match)), true, 0.0};
    }
    case W2Method::brute:
      return {wasserstein2_brute(mu, nu), true, 0.0};
    case W2Method::entropic:
      return entropic_w2(mu, nu, options.epsilon);
  }
  throw std::invalid_argument("wasserstein2: unknown method");
}

double wasserstein2_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  const W2Method m = mu.dim() == 1 ? W2Method::sorted1d : W2Method::assignment;
  return wasserstein2(mu, nu, {m, 0.0}).distance;
}

void write_measure_csv(std::ostream& out, const EmpiricalMeasure& mu) {
  for (std::size_t k = 0; k < mu.dim(); ++k) out << (k ? "," : "") << 'x' << k;
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto a = mu.atom(i);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const auto res = std::to_chars(buf, buf + sizeof buf, a[k], std::chars_format::general, 17);
      if (k) out << ',';
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

EmpiricalMeasure read_measure_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("measure csv: missing header");
  std::size_t dim = 0;
  {
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) {
      if (cell != "x" + std::to_string(dim)) {
        throw std::invalid_argument("measure csv: bad header column '" + cell + "'");
      }
      ++dim;
    }
  }
  if (dim == 0) throw std::invalid_argument("measure csv: empty header");
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ls, cell, ',')) {
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw InvalidSampleError("measure csv: unparsable value in row " + std::to_string(rows),
                                 rows);
      }
      values.push_back(v);
      ++cols;
    }
    if (cols != dim) {
      throw InvalidSampleError("measure csv: wrong column count in row " + std::to_string(rows),
                               rows);
    }
    ++rows;
  }
  RowMatrix pts(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  std::copy(values.begin(), values.end(), pts.data());
  return EmpiricalMeasure::from_samples(std::move(pts));
}

}  // namespace mdplab

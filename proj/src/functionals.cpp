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

#include "mdplab/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mdplab/parallel.hpp"
#include "mdplab/rng.hpp"

namespace mdplab {

namespace {

double norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double distance(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

}  // namespace

void Observable::validate() const {
  if (!eval) throw std::invalid_argument("observable " + name + ": no evaluation function");
  switch (reg_class) {
    case RegClass::lipschitz:
      if (!(lip_const > 0.0)) throw std::invalid_argument("observable " + name + ": lip_const must be > 0");
      break;
    case RegClass::hoelder:
      if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("observable " + name + ": alpha must lie in (0,1)");
      }
      break;
    case RegClass::log_modulus:
      if (!(p > 1.0)) throw std::invalid_argument("observable " + name + ": p must be > 1");
      break;
  }
  if (!(class_const > 0.0)) throw std::invalid_argument("observable " + name + ": class_const must be > 0");
}

Observable identity_observable() {
  Observable a;
  a.name = "identity";
  a.eval = [](std::span<const double> x) { return x[0]; };
  a.reg_class = RegClass::lipschitz;
  a.lip_const = 1.0;
  a.class_const = 1.0;
  return a;
}

Observable norm2_observable() {
  Observable a;
  a.name = "norm2";
  a.eval = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  a.reg_class = RegClass::hoelder;
  a.alpha = 0.5;
  a.lip_const = 1.0;
  a.class_const = 1.0;
  return a;
}

Observable constant_observable(double c) {
  Observable a;
  a.name = "constant";
  a.eval = [c](std::span<const double>) { return c; };
  a.reg_class = RegClass::lipschitz;
  a.lip_const = 1.0;
  a.class_const = 1.0;
  return a;
}

Observable coordinate_observable(std::size_t i) {
  Observable a;
  a.name = "coordinate";
  a.eval = [i](std::span<const double> x) {
    if (i >= x.size()) throw std::invalid_argument("coordinate observable: index out of range");
    return x[i];
  };
  a.reg_class = RegClass::lipschitz;
  a.lip_const = 1.0;
  a.class_const = 1.0;
  return a;
}

double class_ratio(const Observable& A, std::span<const double> x, std::span<const double> y) {
  const double d = distance(x, y);
  if (d == 0.0) return 0.0;
  const double diff = std::abs(A(x) - A(y));
  if (diff == 0.0) return 0.0;
  const double nx = norm(x);
  const double ny = norm(y);
  switch (A.reg_class) {
    case RegClass::lipschitz:
      return diff / d;
    case RegClass::hoelder:
      return diff / (std::pow(d, A.alpha) * std::pow(1.0 + nx + ny, 2.0 - A.alpha));
    case RegClass::log_modulus: {
      const double sq = nx * nx + ny * ny;
      return diff * std::log(std::numbers::e + sq) * std::pow(std::log(std::numbers::e + 1.0 / d), A.p) /
             (1.0 + sq);
    }
  }
  return 0.0;
}

ObservableClassReport check_observable_class(const Observable& A, std::size_t dim,
                                             std::uint64_t seed, std::size_t n_trials) {
  if (n_trials == 0) throw std::invalid_argument("check_observable_class: n_trials must be >= 1");
  if (dim == 0) throw std::invalid_argument("check_observable_class: dim must be >= 1");
  const NoiseSource noise({derive_seed(seed, stream_tag::kObservable), 0});
  std::vector<double> ratios(n_trials);
  std::vector<std::vector<double>> pairs(n_trials);
  parallel_for(n_trials, [&](std::size_t t) {
    const auto trial = static_cast<std::uint32_t>(t);
    std::vector<double> x(dim), y(dim);
    noise.normals(trial, 0, x);
    noise.normals(trial, 1, y);
    const auto u = noise.uniform_pair(trial, 2, 0);
    const auto v = noise.uniform_pair(trial, 2, 1);
    const double sx = std::pow(10.0, -2.0 + 5.0 * u[0]);
    for (double& e : x) e *= sx;
    if (v[0] < 0.5) {
      const double sy = std::pow(10.0, -2.0 + 5.0 * u[1]);
      for (double& e : y) e *= sy;
    } else {
      const double sy = sx * std::pow(10.0, -6.0 + 6.0 * u[1]);
      for (std::size_t i = 0; i < dim; ++i) y[i] = x[i] + sy * y[i];
    }
    ratios[t] = class_ratio(A, x, y);
    x.insert(x.end(), y.begin(), y.end());
    pairs[t] = std::move(x);
  });
  ObservableClassReport out;
  out.report.hypothesis = "observable_class";
  out.report.trials = n_trials;
  out.report.tolerance = kHypothesisTolerance;
  out.report.worst_margin = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n_trials; ++t) {
    const double margin = ratios[t] - A.class_const;
    if (margin > out.report.worst_margin) {
      out.report.worst_margin = margin;
      out.report.witness_trial = t;
      out.report.witness = pairs[t];
      out.worst_ratio = ratios[t];
    }
  }
  return out;
}

bool scaling_check(double kappa) { return kappa > 0.5 && kappa < 1.0; }

ScalingFunction ScalingFunction::moderate(double kappa) {
  if (!scaling_check(kappa)) {
    std::ostringstream os;
    os << "kappa must satisfy 1/2 < kappa < 1 (got " << kappa << ")";
    throw std::invalid_argument(os.str());
  }
  return ScalingFunction{kappa};
}

double ScalingFunction::operator()(double t) const { return std::pow(t, kappa); }

double additive_functional(const Path& path, const Observable& A) {
  if (path.size() == 0) throw std::invalid_argument("additive_functional: empty path");
  const std::size_t n = path.size();
  if (n == 1) return A(path.at(0));
  double integral = 0.0;
  double prev = A(path.at(0));
  for (std::size_t k = 1; k < n; ++k) {
    const double cur = A(path.at(k));
    integral += 0.5 * (prev + cur) * (path.times[k] - path.times[k - 1]);
    prev = cur;
  }
  return integral / (path.times[n - 1] - path.times[0]);
}

double moderate_functional(double L, double mu_bar_A, double t, const ScalingFunction& a) {
  if (!(t > 0.0)) throw std::invalid_argument("moderate_functional: t must be positive");
  return t / a(t) * (L - mu_bar_A);
}

Autocovariance autocovariance(std::span<const double> series, double dt, double max_lag) {
  if (!(dt > 0.0) || !(max_lag >= 0.0)) throw std::invalid_argument("autocovariance: bad lag grid");
  const std::size_t n = series.size();
  const auto lags = static_cast<std::size_t>(std::floor(max_lag / dt + 1e-9));
  if (n < 2 || static_cast<double>(n - 1) * dt < 10.0 * max_lag) {
    throw std::invalid_argument("autocovariance: max_lag too large for path (need T >= 10 max_lag)");
  }
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = series[i] - mean;
  Autocovariance c;
  c.dt = dt;
  c.values.resize(lags + 1);
  c.std_error.resize(lags + 1);
  for (std::size_t k = 0; k <= lags; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) s += centered[i] * centered[i + k];
    c.values[k] = s / static_cast<double>(n - k);
  }
  for (std::size_t k = 0; k <= lags; ++k) {
    c.std_error[k] = c.values[0] / std::sqrt(static_cast<double>(n - k));
  }
  return c;
}

Autocovariance autocovariance(const Path& path, const Observable& A, double max_lag) {
  std::vector<double> series(path.size());
  for (std::size_t k = 0; k < path.size(); ++k) series[k] = A(path.at(k));
  return autocovariance(series, path.dt, max_lag);
}

double green_kubo(const Autocovariance& c, double tau) {
  const auto lags = std::min(c.values.size() - 1,
                             static_cast<std::size_t>(std::floor(tau / c.dt + 1e-9)));
  double s = 0.0;
  for (std::size_t k = 1; k <= lags; ++k) s += 0.5 * (c.values[k - 1] + c.values[k]) * c.dt;
  return s;
}

VarianceEstimate asymptotic_variance(const Model& model, const Observable& A,
                                     const EmpiricalMeasure& mu_bar_hat, const VarianceParams& p) {
  if (p.replicas == 0) throw std::invalid_argument("asymptotic_variance: replicas must be >= 1");
  if (!(p.tau > 0.0)) throw std::invalid_argument("asymptotic_variance: tau must be positive");
  if (p.tau > p.horizon / 10.0) throw std::invalid_argument("asymptotic_variance: tau must be <= T/10");
  step_count(p.horizon, p.dt);
  const NoiseSource pick({derive_seed(p.seed, stream_tag::kSampling), 0});
  const std::uint64_t path_seed = derive_seed(p.seed, stream_tag::kReference);
  std::vector<double> per_replica(p.replicas);
  parallel_for(p.replicas, [&](std::size_t r) {
    const std::size_t start = pick.index(0, static_cast<std::uint32_t>(r), mu_bar_hat.size());
    const Path path = simulate_reference(model, mu_bar_hat, mu_bar_hat.atom(start), p.horizon, p.dt,
                                         {path_seed, static_cast<std::uint32_t>(r)});
    per_replica[r] = green_kubo(autocovariance(path, A, p.tau), p.tau);
  });
  const double n = static_cast<double>(p.replicas);
  const double mean = std::accumulate(per_replica.begin(), per_replica.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : per_replica) ss += (v - mean) * (v - mean);
  VarianceEstimate est;
  est.vbar = std::max(0.0, mean);
  est.std_error = p.replicas > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
  est.truncation_tau = p.tau;
  est.dt = p.dt;
  est.horizon = p.horizon;
  est.replicas = p.replicas;
  return est;
}

double rate_function(double y, double vbar) {
  if (!(vbar > 0.0)) throw std::invalid_argument("rate_function: vbar must be positive");
  return y * y / (8.0 * vbar);
}

double log_mean_exp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("log_mean_exp: no samples");
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double e : v) s += std::exp(e - m);
  return m + std::log(s / static_cast<double>(v.size()));
}

CramerValue cramer_functional(std::span<const double> l_samples, double z, double t,
                              const ScalingFunction& a) {
  if (l_samples.empty()) throw std::invalid_argument("cramer_functional: no samples");
  if (!(t > 0.0)) throw std::invalid_argument("cramer_functional: t must be positive");
  if (z == 0.0) return {0.0, false};
  const double at = a(t);
  const double speed = at * at / t;
  std::vector<double> e(l_samples.size());
  double worst = 0.0;
  for (std::size_t r = 0; r < e.size(); ++r) {
    e[r] = speed * z * l_samples[r];
    worst = std::max(worst, std::abs(e[r]));
  }
  if (!(worst <= 700.0)) return {std::nullopt, true};
  return {log_mean_exp(e) / speed, false};
}

LegendreValue legendre_transform(std::span<const double> z, std::span<const double> lambda,
                                 double y) {
  if (z.empty()) throw std::invalid_argument("legendre_transform: empty grid");
  if (z.size() != lambda.size()) throw std::invalid_argument("legendre_transform: grid size mismatch");
  std::vector<std::size_t> order(z.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return z[i] < z[j]; });

  // Lower convex hull; grid points strictly above it are non-convex input.
  std::vector<std::size_t> hull;
  for (std::size_t idx : order) {
    while (hull.size() >= 2) {
      const std::size_t a = hull[hull.size() - 2];
      const std::size_t b = hull.back();
      const double cross = (z[b] - z[a]) * (lambda[idx] - lambda[a]) -
                           (lambda[b] - lambda[a]) * (z[idx] - z[a]);
      if (cross <= 0.0) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(idx);
  }
  LegendreValue out;
  double scale = 0.0;
  for (double v : lambda) scale = std::max(scale, std::abs(v));
  const double tol = 1e-12 * std::max(1.0, scale);
  for (std::size_t k = 0; k + 1 < hull.size(); ++k) {
    const std::size_t a = hull[k];
    const std::size_t b = hull[k + 1];
    for (std::size_t idx : order) {
      if (z[idx] <= z[a] || z[idx] >= z[b]) continue;
      const double w = (z[idx] - z[a]) / (z[b] - z[a]);
      if (lambda[idx] > (1.0 - w) * lambda[a] + w * lambda[b] + tol) out.convexified = true;
    }
  }
  out.value = -std::numeric_limits<double>::infinity();
  for (std::size_t idx : hull) out.value = std::max(out.value, z[idx] * y - lambda[idx]);
  return out;
}

}  // namespace mdplab

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

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdplab/integrator.hpp"
#include "mdplab/measures.hpp"
#include "mdplab/models.hpp"

namespace mdplab {

enum class RegClass { lipschitz, hoelder, log_modulus };

/// Scalar observable A: R^D -> R with a declared regularity class.
///   lipschitz:   |A(x)-A(y)| <= K |x-y|
///   hoelder:     |A(x)-A(y)| <= C |x-y|^alpha (1+|x|+|y|)^(2-alpha)
///   log_modulus: |A(x)-A(y)| log(e+|x|^2+|y|^2) log(e+1/|x-y|)^p
///                  <= C (1+|x|^2+|y|^2)
struct Observable {
  std::string name;
  std::function<double(std::span<const double>)> eval;
  RegClass reg_class = RegClass::lipschitz;
  double alpha = 0.0;      // hoelder exponent
  double p = 0.0;          // log_modulus exponent
  double lip_const = 0.0;  // K; required for lipschitz
  double class_const = 0.0;

  double operator()(std::span<const double> x) const { return eval(x); }
  void validate() const;
};

Observable identity_observable();            // x_0, lipschitz K=1
Observable norm2_observable();               // |x|^2, hoelder alpha=1/2, C=1
Observable constant_observable(double c);    // lipschitz K=1 (any K works)
Observable coordinate_observable(std::size_t i);

/// Left-hand side of the class inequality divided by its right-hand side,
/// without the constant. Zero for x == y.
double class_ratio(const Observable& A, std::span<const double> x, std::span<const double> y);

struct ObservableClassReport {
  HypothesisReport report;  // margin = ratio - class_const
  double worst_ratio = 0.0;
  bool pass() const { return report.pass(); }
};

/// Samples pairs over scales 1e-2..1e3 (independent and nearby pairs).
ObservableClassReport check_observable_class(const Observable& A, std::size_t dim,
                                             std::uint64_t seed, std::size_t n_trials);

/// a(t) = t^kappa.
struct ScalingFunction {
  double kappa = 0.75;

  static ScalingFunction moderate(double kappa);  // throws unless 1/2 < kappa < 1
  static ScalingFunction clt() { return ScalingFunction{0.5}; }  // diagnostic only
  double operator()(double t) const;
};

bool scaling_check(double kappa);

/// (1/t) * trapezoid integral of A along the path; A(x_0) for a single point.
double additive_functional(const Path& path, const Observable& A);

/// (t / a(t)) (L - mu_bar_A).
double moderate_functional(double L, double mu_bar_A, double t, const ScalingFunction& a);

struct Autocovariance {
  double dt = 0.0;
  std::vector<double> values;  // C(k dt), k = 0..K
  std::vector<double> std_error;  // C(0) / sqrt(n - k)
};

/// Requires the path to span at least 10 * max_lag.
Autocovariance autocovariance(const Path& path, const Observable& A, double max_lag);
Autocovariance autocovariance(std::span<const double> series, double dt, double max_lag);

/// Integral of the autocovariance over [0, tau] (trapezoid).
double green_kubo(const Autocovariance& c, double tau);

struct VarianceEstimate {
  double vbar = 0.0;
  double std_error = 0.0;
  double truncation_tau = 0.0;
  double dt = 0.0;
  double horizon = 0.0;
  std::size_t replicas = 0;
};

struct VarianceParams {
  double horizon = 2000.0;
  double dt = 0.01;
  double tau = 20.0;
  std::size_t replicas = 8;
  std::uint64_t seed = 0;
};

/// Green-Kubo estimate over replicas of the frozen-law reference process,
/// each started from an atom of mu_bar_hat.
VarianceEstimate asymptotic_variance(const Model& model, const Observable& A,
                                     const EmpiricalMeasure& mu_bar_hat, const VarianceParams& p);

/// y^2 / (8 vbar).
double rate_function(double y, double vbar);

struct CramerValue {
  std::optional<double> value;  // empty when saturated
  bool saturated = false;
};

/// (t/a^2) log( (1/R) sum_r exp{(a^2/t) z l_r} ).
CramerValue cramer_functional(std::span<const double> l_samples, double z, double t,
                              const ScalingFunction& a);

struct LegendreValue {
  double value = 0.0;
  bool convexified = false;
};

/// max_z { z y - Lambda(z) } over the grid; non-convex input is replaced by
/// its lower convex hull and flagged.
LegendreValue legendre_transform(std::span<const double> z, std::span<const double> lambda,
                                 double y);

/// Numerically stable log of the mean of exp(v_r).
double log_mean_exp(std::span<const double> v);

}  // namespace mdplab

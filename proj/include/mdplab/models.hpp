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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mdplab/measures.hpp"
#include "mdplab/rng.hpp"

namespace mdplab {

// Measure dependence of the catalogue coefficients enters through the first
// two moments; features are computed once per step and shared by all particles.
struct MeasureFeatures {
  Eigen::VectorXd mean;
  double second_moment = 0.0;

  static MeasureFeatures of(const EmpiricalMeasure& mu);
  static MeasureFeatures of_rows(const RowMatrix& states);
};

enum class SigmaClass { general, measure_only, constant };

const char* to_string(SigmaClass c);

using DriftFn =
    std::function<void(std::span<const double> x, const MeasureFeatures& mu, std::span<double> out)>;
using DiffusionFn =
    std::function<Eigen::MatrixXd(std::span<const double> x, const MeasureFeatures& mu)>;

/// dX = b(X, law) dt + sigma(X, law) dB with the constants it declares for
/// the monotonicity condition (lambda1, lambda2) and the ellipticity bounds
/// (kappa1, kappa2).
struct DDSDEModel {
  std::string name;
  std::size_t dim = 1;
  DriftFn drift;
  DiffusionFn diffusion;
  SigmaClass sigma_class = SigmaClass::general;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double kappa1 = 0.0;
  double kappa2 = 0.0;
  std::map<std::string, double> params;

  /// Throws std::invalid_argument unless lambda1 > lambda2 >= 0 and
  /// 0 < kappa1 <= kappa2.
  void validate() const;

  Eigen::VectorXd drift_at(std::span<const double> x, const EmpiricalMeasure& mu) const;
  Eigen::MatrixXd diffusion_at(std::span<const double> x, const EmpiricalMeasure& mu) const;
};

/// Z(x, mu) = state_gain * x + mean_gain * mean(mu)
struct AffineZField {
  Eigen::MatrixXd state_gain;  // d x (m+d)
  Eigen::MatrixXd mean_gain;   // d x (m+d)

  void eval(std::span<const double> x, const Eigen::VectorXd& mean, std::span<double> out) const;
};

/// Constants satisfying the dissipativity condition of the degenerate system,
/// together with the Psi-form equivalence constant C.
struct D3Certificate {
  double r = 0.0;
  double r0 = 0.0;
  double theta1 = 0.0;
  double theta2 = 0.0;
  double psi_constant = 1.0;

  /// (theta1 - theta2) / (2C)
  double contraction_rate() const { return (theta1 - theta2) / (2.0 * psi_constant); }
};

/// Two-block system on R^{m+d}:
///   dX1 = (A X1 + B X2) dt,   dX2 = Z(X, law) dt + M dB.
struct SHSModel {
  std::string name;
  std::size_t m = 1;
  std::size_t d = 1;
  Eigen::MatrixXd matA;
  Eigen::MatrixXd matB;
  Eigen::MatrixXd matM;
  AffineZField zfield;
  std::optional<D3Certificate> certificate;
  std::map<std::string, double> params;

  std::size_t state_dim() const { return m + d; }
  void validate() const;
};

using Model = std::variant<DDSDEModel, SHSModel>;

std::size_t state_dim(const Model& model);
std::size_t noise_dim(const Model& model);
const std::string& model_name(const Model& model);
const std::map<std::string, double>& model_params(const Model& model);
/// Constant and measure-only diffusions (and the additive SHS noise) admit the
/// deterministic pathwise coupling bound.
bool noise_is_state_independent(const Model& model);

/// b(x, mu) = -theta x + eta mean(mu), sigma = sigma0 I.
/// Declares lambda1 = 2 theta - eta, lambda2 = eta, kappa1 = kappa2 = sigma0.
DDSDEModel make_mean_field_ou(double theta, double eta, double sigma0, std::size_t dim);

/// m = d = 1, A = 0, B = 1, M = sigma0,
/// Z(x, mu) = -k x1 - gamma x2 + eps_int mean2(mu).
SHSModel make_shs_linear(double gamma, double k, double eps_int, double sigma0);

/// Outcome of a randomized refutation check. A pass means no sampled
/// violation was found; it does not prove the condition. A failure carries a
/// witness and disproves the declared constants.
struct HypothesisReport {
  std::string hypothesis;
  std::size_t trials = 0;
  double worst_margin = 0.0;
  std::size_t witness_trial = 0;
  std::vector<double> witness;
  double tolerance = 0.0;

  bool pass() const { return worst_margin <= tolerance; }
};

/// Margin of the monotonicity inequality at one sample:
/// 2<b(x,mu)-b(y,nu), x-y> + |sigma(x,mu)-sigma(y,nu)|_HS^2
///   - lambda2 W2(mu,nu)^2 + lambda1 |x-y|^2.
double h1_margin(const DDSDEModel& model, std::span<const double> x, std::span<const double> y,
                 const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

inline constexpr double kHypothesisTolerance = 1e-9;

/// Samples Gaussian states and random empirical probe measures (support_size
/// atoms, standard normal scaled by a factor in [0.5, 2]); W2 between probes
/// is exact. Witness layout: x, then y.
HypothesisReport check_H1(const DDSDEModel& model, std::uint64_t seed, std::size_t n_trials,
                          std::size_t support_size = 8);

struct H2Report {
  double kappa1_hat = 0.0;
  double kappa2_hat = 0.0;
  bool pass = false;
};

/// Extreme singular values of sigma(x, mu) over all probe combinations.
H2Report check_H2(const DDSDEModel& model, const std::vector<Eigen::VectorXd>& probe_states,
                  const std::vector<EmpiricalMeasure>& probe_measures);

/// n_probes random states and n_probes probe measures drawn as in check_H1;
/// all n_probes^2 combinations are evaluated.
H2Report check_H2(const DDSDEModel& model, std::uint64_t seed, std::size_t n_probes,
                  std::size_t support_size = 8);

struct KalmanRank {
  std::size_t rank = 0;
  bool pass = false;
};

/// Rank of [B, AB, ..., A^{m-1}B] with tolerance 1e-10 * largest singular value.
KalmanRank kalman_rank(const Eigen::MatrixXd& matA, const Eigen::MatrixXd& matB);

/// LHS - RHS of the dissipativity inequality at one sample.
double d3_margin(const SHSModel& model, const D3Certificate& c, std::span<const double> x,
                 std::span<const double> y, const EmpiricalMeasure& mu,
                 const EmpiricalMeasure& nu);

/// Largest eigenvalue of the quadratic form in (x - y, mean(mu) - mean(nu))
/// that bounds the margin for the affine z-field. Nonpositive => the
/// inequality holds for every pair, since |mean(mu) - mean(nu)| <= W2(mu, nu).
double d3_form_max_eigenvalue(const SHSModel& model, double r, double r0, double theta1,
                              double theta2);

/// C >= 1 with |z|^2 / C <= Psi(z) <= C |z|^2.
double psi_equivalence_constant(const SHSModel& model, double r, double r0);

/// 64-point log grid on [1e-3, 10].
std::vector<double> theta_grid();

/// Best (theta1, theta2) on the theta grid for fixed (r, r0): theta1 > theta2
/// and maximal theta1 - theta2.
std::optional<D3Certificate> certify_D3_at(const SHSModel& model, double r, double r0);

/// Searches r in {0.25, 0.5, 1, 2, 4} and r0 = k/(10 |B|), k = -9..9, keeping
/// the certificate with the fastest contraction rate.
std::optional<D3Certificate> certify_D3(const SHSModel& model);

struct D3Report {
  HypothesisReport sampled;
  std::optional<D3Certificate> certified;

  bool pass() const { return certified.has_value() && sampled.pass(); }
};

/// Certifies (theta1, theta2) at the given (r, r0), then samples the margin at
/// those constants. With no certificate the sample uses the mildest grid pair
/// (theta1, theta2) = (grid[1], grid[0]) so the report still shows the violation.
D3Report check_D3(const SHSModel& model, double r, double r0, std::uint64_t seed,
                  std::size_t n_trials, std::size_t support_size = 8);

/// Random probe measure as used by the checkers.
EmpiricalMeasure random_probe_measure(const NoiseSource& noise, std::uint32_t trial,
                                      std::uint32_t slot, std::size_t dim,
                                      std::size_t support_size);

}  // namespace mdplab

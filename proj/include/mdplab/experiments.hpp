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
#include <memory>
#include <string>
#include <vector>

#include "mdplab/functionals.hpp"
#include "mdplab/integrator.hpp"
#include "mdplab/measures.hpp"
#include "mdplab/models.hpp"

namespace mdplab {

struct WilsonInterval {
  double low = 0.0;
  double high = 1.0;
};

/// 95% Wilson score interval for hits out of n.
WilsonInterval wilson_interval(std::size_t hits, std::size_t n);

struct TailEstimate {
  double t = 0.0;
  std::size_t replicas = 0;
  std::size_t hits = 0;
  double p_hat = 0.0;
  double wilson_low = 0.0;
  double wilson_high = 0.0;
  double normalized_log_tail = 0.0;  // (t/a(t)^2) log p_hat, wilson_high if no hits
  bool saturated = false;
};

TailEstimate make_tail_estimate(double t, std::size_t replicas, std::size_t hits,
                                const ScalingFunction& a);

struct CurveRow {
  double t = 0.0;
  double observed = 0.0;
  double bound = 0.0;
  double ratio = 0.0;  // NaN when bound == 0
};

/// Decay rate g of the W2^2 contraction: lambda1 - lambda2 for DDSDE models,
/// (theta1 - theta2)/(2C) for certified SHS models.
double contraction_rate(const Model& model);
/// Prefactor of the W2^2 bound: 1 for DDSDE models, C for SHS models.
double contraction_prefactor(const Model& model);

/// n atoms drawn uniformly (with replacement) from mu; mu itself if it already
/// has n atoms.
EmpiricalMeasure resample(const EmpiricalMeasure& mu, std::size_t n, std::uint64_t seed,
                          std::uint32_t stream);

/// Starting pairs for coupled replicas: rows of the first matrix are drawn from
/// nu, rows of the second from mu_bar, then paired by a sorted coupling
/// (dim 1) or by optimal assignment within blocks of at most 1024 rows.
std::pair<RowMatrix, RowMatrix> coupled_starts(const EmpiricalMeasure& nu,
                                               const EmpiricalMeasure& mu_bar,
                                               std::size_t replicas, std::uint64_t seed);

inline constexpr std::size_t kCouplingBlock = 1024;

struct ContractionParams {
  std::vector<double> horizons;
  std::size_t n_particles = 0;  // must equal the size of mu_bar_hat
  double dt = 0.01;
  std::uint64_t seed = 0;
};

std::vector<CurveRow> contraction_experiment(std::shared_ptr<const Model> model,
                                             const EmpiricalMeasure& nu0,
                                             const EmpiricalMeasure& mu_bar_hat,
                                             const ContractionParams& p);

struct PathwiseParams {
  std::size_t n_pairs = 256;
  double horizon = 5.0;
  double dt = 0.005;
  std::size_t n_particles = 4096;  // law proxy
  std::uint64_t seed = 0;
};

/// Witness layout: pair index, time, |X-Xbar|^2, bound.
HypothesisReport pathwise_contraction_check(std::shared_ptr<const Model> model,
                                            const EmpiricalMeasure& nu_hat,
                                            const EmpiricalMeasure& mu_bar_hat,
                                            const PathwiseParams& p);

struct ModerateSampleParams {
  std::vector<double> horizons;
  std::size_t replicas = 10000;
  std::size_t n_particles = 1000;  // law proxy
  double dt = 0.01;
  std::uint64_t seed = 0;
  double mu_bar_A = 0.0;
};

/// Replica values of the moderate functional (t/a(t))(L_t - mu_bar_A):
/// result[h][r] for horizon h and replica r. Tagged replicas start from atoms
/// of nu0 and share one law proxy started from nu0.
std::vector<std::vector<double>> moderate_samples(std::shared_ptr<const Model> model,
                                                  const Observable& A, const EmpiricalMeasure& nu0,
                                                  const ScalingFunction& a,
                                                  const ModerateSampleParams& p);

struct MdpTailParams {
  std::vector<double> thresholds;
  double kappa = 0.75;
  std::vector<double> horizons;
  std::size_t replicas = 10000;
  std::size_t n_particles = 1000;  // law proxy
  double dt = 0.01;
  std::uint64_t seed = 0;
  double vbar = 0.0;
  double mu_bar_A = 0.0;
};

struct MdpTailCurve {
  double y = 0.0;
  std::vector<TailEstimate> rows;
  double rate8 = 0.0;  // -y^2/(8 vbar)
  double rate4 = 0.0;  // -y^2/(4 vbar)
};

/// One curve per threshold, all evaluated on the replica set of
/// moderate_samples.
std::vector<MdpTailCurve> mdp_tail_experiment(std::shared_ptr<const Model> model,
                                              const Observable& A, const EmpiricalMeasure& nu0,
                                              const MdpTailParams& p);

struct EquivalenceParams {
  double epsilon = 0.05;
  double kappa = 0.75;
  std::vector<double> horizons;
  std::size_t replicas = 10000;
  std::size_t n_particles = 1000;
  double dt = 0.01;
  std::uint64_t seed = 0;
};

/// Rows for P(|l_t - lbar_t| > epsilon), with X and Xbar sharing noise.
std::vector<TailEstimate> exp_equivalence_experiment(std::shared_ptr<const Model> model,
                                                     const Observable& A,
                                                     const EmpiricalMeasure& nu0,
                                                     const EmpiricalMeasure& mu_bar_hat,
                                                     const EquivalenceParams& p);

enum class ProbeKind { abs, hoelder, logmod, supexp };

struct ProbeSpec {
  ProbeKind kind = ProbeKind::abs;
  double alpha = 0.5;  // hoelder
  double p = 2.0;      // logmod
};

std::string to_string(const ProbeSpec& spec);

struct ProbeParams {
  ProbeSpec spec;
  std::vector<double> deltas;
  std::vector<double> horizons;
  std::size_t replicas = 10000;
  std::size_t n_particles = 1000;
  double dt = 0.01;
  std::uint64_t seed = 0;
};

struct ProbeRow {
  std::string kind;
  double delta = 0.0;
  double horizon = 0.0;
  double log_mean_exp = 0.0;
  bool saturated = false;  // some replica had delta * G_T > 700
};

/// G_T is the time integral of the kind's integrand along the coupled pair,
/// or sup_{t <= T} |X_t|^2 for supexp. Reports log E exp(delta G_T).
std::vector<ProbeRow> integrability_probe(std::shared_ptr<const Model> model,
                                          const EmpiricalMeasure& nu0,
                                          const EmpiricalMeasure& mu_bar_hat,
                                          const ProbeParams& p);

inline constexpr double kExpSaturation = 700.0;

}  // namespace mdplab

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
#include <span>
#include <stdexcept>
#include <vector>

#include "mdplab/measures.hpp"
#include "mdplab/models.hpp"
#include "mdplab/rng.hpp"

namespace mdplab {

/// Any state component above this magnitude aborts the run.
inline constexpr double kDivergenceThreshold = 1e8;

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t particle, double time);
  std::size_t particle() const { return particle_; }
  double time() const { return time_; }

 private:
  std::size_t particle_;
  double time_;
};

/// One Euler-Maruyama update for a fixed measure argument. Diffusion matrices
/// that do not depend on the state are evaluated once per kernel.
class StepKernel {
 public:
  StepKernel(const Model& model, const MeasureFeatures& features);

  std::size_t state_dim() const { return dim_; }
  std::size_t noise_dim() const { return noise_dim_; }

  // out <- x + drift dt + diffusion sqrt(dt) xi;  `out` must not alias `x`.
  void advance(std::span<const double> x, std::span<const double> xi, double dt,
               std::span<double> out) const;

 private:
  const Model* model_;
  const MeasureFeatures* features_;
  std::size_t dim_;
  std::size_t noise_dim_;
  Eigen::MatrixXd sigma_;  // cached when state independent
  bool sigma_cached_ = false;
};

/// Throws DivergenceError if any component is non-finite or above threshold.
void check_finite(std::span<const double> x, std::size_t particle, double time);

/// N particles at a common time. Particle i draws noise from stream
/// (key, particle_ids[i]) at every step; permuting states together with ids
/// permutes the trajectories.
class ParticleSystem {
 public:
  ParticleSystem(std::shared_ptr<const Model> model, RowMatrix states, NoiseKey key,
                 double time = 0.0);

  static ParticleSystem from_measure(std::shared_ptr<const Model> model,
                                     const EmpiricalMeasure& initial, NoiseKey key);

  const Model& model() const { return *model_; }
  std::shared_ptr<const Model> model_ptr() const { return model_; }
  double time() const { return time_; }
  std::uint32_t step_index() const { return step_; }
  const RowMatrix& states() const { return states_; }
  std::size_t size() const { return static_cast<std::size_t>(states_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(states_.cols()); }
  NoiseKey key() const { return key_; }
  const std::vector<std::uint32_t>& particle_ids() const { return ids_; }
  std::span<const double> particle(std::size_t i) const { return {states_.data() + i * dim(), dim()}; }

  ParticleSystem with_particle_ids(std::vector<std::uint32_t> ids) const;
  EmpiricalMeasure empirical() const { return EmpiricalMeasure::from_samples(states_); }
  MeasureFeatures features() const { return MeasureFeatures::of_rows(states_); }

 private:
  friend ParticleSystem em_step(const ParticleSystem& ps, double dt);

  std::shared_ptr<const Model> model_;
  RowMatrix states_;
  NoiseKey key_;
  std::vector<std::uint32_t> ids_;
  double time_ = 0.0;
  std::uint32_t step_ = 0;
};

/// Synchronous update: every particle sees the empirical measure of the
/// complete state before the step.
ParticleSystem em_step(const ParticleSystem& ps, double dt);

struct Path {
  std::vector<double> times;
  RowMatrix states;  // one row per time
  double dt = 0.0;

  std::size_t size() const { return times.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(states.cols()); }
  std::span<const double> at(std::size_t k) const { return {states.data() + k * dim(), dim()}; }
};

/// Number of steps for horizon T; requires T/dt integral within 1e-9.
std::size_t step_count(double horizon, double dt);

struct Simulation {
  ParticleSystem final_state;
  std::vector<Path> tracked;
};

Simulation simulate(const ParticleSystem& ps, double horizon, double dt,
                    std::span<const std::size_t> track);

/// Single trajectory of the Markov SDE with the measure argument pinned to
/// `frozen_mu`. Noise comes from particle 0 of `key`.
Path simulate_reference(const Model& model, const EmpiricalMeasure& frozen_mu,
                        std::span<const double> x0, double horizon, double dt, NoiseKey key);

struct CoupledPaths {
  Path path_x;
  Path path_xbar;
  bool shared_noise = true;
  // False when the diffusion depends on the state; the deterministic
  // pathwise contraction bound then does not apply.
  bool pathwise_bound_applies = true;
};

/// X follows the mean-field dynamics (measure = law_proxy's empirical law,
/// advanced in lockstep); Xbar follows the frozen-law reference dynamics. Both
/// consume the increments of particle 0 of `key`.
CoupledPaths simulate_coupled(const Model& model, std::span<const double> init_x,
                              std::span<const double> init_xbar,
                              const EmpiricalMeasure& frozen_mu, const ParticleSystem& law_proxy,
                              double horizon, double dt, NoiseKey key);

/// Measure features of a particle system recorded at every step; the law
/// proxy shared by tagged-particle ensembles. features[k] is at time k*dt.
struct LawFlow {
  double dt = 0.0;
  std::vector<MeasureFeatures> features;
};

LawFlow record_law_flow(const ParticleSystem& proxy, double horizon, double dt);

/// Visitor(replica, step, time, x) for tagged ensembles; called for step 0
/// (initial state) and after every step. Replicas run in parallel; visitors
/// must only touch per-replica state.
using TaggedVisitor =
    std::function<void(std::size_t, std::size_t, double, std::span<const double>)>;
using CoupledVisitor = std::function<void(std::size_t, std::size_t, double,
                                          std::span<const double>, std::span<const double>)>;

/// Replica r evolves one tagged particle from initial.row(r) under the law
/// flow, with noise stream {seed, r}.
void run_tagged_ensemble(const Model& model, const LawFlow& flow, const RowMatrix& initial,
                         std::size_t steps, std::uint64_t seed, const TaggedVisitor& visit);

/// Replica r evolves the pair (x0.row(r), xbar0.row(r)) with shared noise
/// stream {seed, r}: X under the law flow, Xbar under `frozen`.
void run_coupled_ensemble(const Model& model, const LawFlow& flow, const MeasureFeatures& frozen,
                          const RowMatrix& x0, const RowMatrix& xbar0, std::size_t steps,
                          std::uint64_t seed, const CoupledVisitor& visit);

struct InvariantEstimate {
  EmpiricalMeasure cloud;
  double residual = 0.0;
  bool residual_exact = true;
};

/// Runs N particles from i.i.d. standard normal states for t_burn, then
/// t_avg more; returns the final cloud and W2(cloud at t_burn + t_avg/2,
/// final cloud) as a stationarity residual.
InvariantEstimate estimate_invariant(std::shared_ptr<const Model> model, std::size_t n_particles,
                                     double t_burn, double t_avg, double dt, std::uint64_t seed);

/// W2 with the cheapest admissible method; entropic beyond the assignment
/// limit in dim > 1 (flagged via `exact`).
W2Result wasserstein2_auto(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

}  // namespace mdplab

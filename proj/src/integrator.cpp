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

#include "mdplab/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "mdplab/parallel.hpp"

namespace mdplab {

namespace {

std::string divergence_message(std::size_t particle, double time) {
  std::ostringstream os;
  os << "simulation diverged: particle " << particle << " at t=" << time;
  return os.str();
}

}  // namespace

DivergenceError::DivergenceError(std::size_t particle, double time)
    : std::runtime_error(divergence_message(particle, time)), particle_(particle), time_(time) {}

void check_finite(std::span<const double> x, std::size_t particle, double time) {
  for (double v : x) {
    if (!(std::abs(v) <= kDivergenceThreshold)) throw DivergenceError(particle, time);
  }
}

StepKernel::StepKernel(const Model& model, const MeasureFeatures& features)
    : model_(&model), features_(&features), dim_(mdplab::state_dim(model)), noise_dim_(mdplab::noise_dim(model)) {
  if (const auto* dd = std::get_if<DDSDEModel>(&model)) {
    if (dd->sigma_class != SigmaClass::general) {
      const std::vector<double> origin(dim_, 0.0);
      sigma_ = dd->diffusion(origin, features);
      sigma_cached_ = true;
    }
  }
}

void StepKernel::advance(std::span<const double> x, std::span<const double> xi, double dt,
                         std::span<double> out) const {
  const double sdt = std::sqrt(dt);
  if (const auto* dd = std::get_if<DDSDEModel>(model_)) {
    dd->drift(x, *features_, out);
    if (sigma_cached_) {
      for (std::size_t i = 0; i < dim_; ++i) {
        double noise = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
          noise += sigma_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * xi[j];
        }
        out[i] = x[i] + out[i] * dt + noise * sdt;
      }
    } else {
      const Eigen::MatrixXd sigma = dd->diffusion(x, *features_);
      for (std::size_t i = 0; i < dim_; ++i) {
        double noise = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
          noise += sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * xi[j];
        }
        out[i] = x[i] + out[i] * dt + noise * sdt;
      }
    }
    return;
  }
  const auto& shs = std::get<SHSModel>(*model_);
  const std::size_t m = shs.m;
  const std::size_t d = shs.d;
  for (std::size_t i = 0; i < m; ++i) {
    double v = 0.0;
    for (std::size_t j = 0; j < m; ++j) v += shs.matA(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * x[j];
    for (std::size_t j = 0; j < d; ++j) v += shs.matB(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * x[m + j];
    out[i] = x[i] + v * dt;
  }
  shs.zfield.eval(x, features_->mean, out.subspan(m, d));
  for (std::size_t i = 0; i < d; ++i) {
    double noise = 0.0;
    for (std::size_t j = 0; j < d; ++j) noise += shs.matM(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * xi[j];
    out[m + i] = x[m + i] + out[m + i] * dt + noise * sdt;
  }
}

ParticleSystem::ParticleSystem(std::shared_ptr<const Model> model, RowMatrix states, NoiseKey key,
                               double time)
    : model_(std::move(model)), states_(std::move(states)), key_(key), time_(time) {
  if (!model_) throw std::invalid_argument("particle system: model required");
  if (states_.rows() == 0) throw std::invalid_argument("particle system: no particles");
  if (static_cast<std::size_t>(states_.cols()) != state_dim(*model_)) {
    throw std::invalid_argument("particle system: state dimension does not match model");
  }
  for (std::size_t i = 0; i < size(); ++i) check_finite(particle(i), i, time_);
  ids_.resize(size());
  for (std::size_t i = 0; i < ids_.size(); ++i) ids_[i] = static_cast<std::uint32_t>(i);
}

ParticleSystem ParticleSystem::from_measure(std::shared_ptr<const Model> model,
                                            const EmpiricalMeasure& initial, NoiseKey key) {
  return ParticleSystem(std::move(model), initial.points(), key);
}

ParticleSystem ParticleSystem::with_particle_ids(std::vector<std::uint32_t> ids) const {
  if (ids.size() != size()) throw std::invalid_argument("particle system: id count mismatch");
  ParticleSystem copy = *this;
  copy.ids_ = std::move(ids);
  return copy;
}

ParticleSystem em_step(const ParticleSystem& ps, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("em_step: dt must be positive");
  const MeasureFeatures features = ps.features();
  const StepKernel kernel(ps.model(), features);
  const NoiseSource noise(ps.key());
  ParticleSystem next = ps;
  const std::size_t dim = ps.dim();
  const std::size_t nd = kernel.noise_dim();
  const double t_next = ps.time() + dt;
  parallel_for(ps.size(), [&](std::size_t i) {
    thread_local std::vector<double> xi;
    xi.resize(nd);
    noise.normals(ps.step_index(), ps.particle_ids()[i], xi);
    std::span<double> out{next.states_.data() + i * dim, dim};
    kernel.advance(ps.particle(i), xi, dt, out);
    check_finite(out, i, t_next);
  });
  next.time_ = t_next;
  next.step_ = ps.step_index() + 1;
  return next;
}

std::size_t step_count(double horizon, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(horizon >= 0.0)) throw std::invalid_argument("horizon must be nonnegative");
  const double ratio = horizon / dt;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    std::ostringstream os;
    os << "horizon " << horizon << " is not an integral multiple of dt " << dt;
    throw std::invalid_argument(os.str());
  }
  return static_cast<std::size_t>(rounded);
}

namespace {

Path make_path(std::size_t steps, std::size_t dim, double dt) {
  Path p;
  p.dt = dt;
  p.times.resize(steps + 1);
  p.states.resize(static_cast<Eigen::Index>(steps + 1), static_cast<Eigen::Index>(dim));
  return p;
}

void record(Path& p, std::size_t k, double t, std::span<const double> x) {
  p.times[k] = t;
  std::copy(x.begin(), x.end(), p.states.data() + k * x.size());
}

}  // namespace

Simulation simulate(const ParticleSystem& ps, double horizon, double dt,
                    std::span<const std::size_t> track) {
  const std::size_t steps = step_count(horizon, dt);
  for (std::size_t idx : track) {
    if (idx >= ps.size()) throw std::invalid_argument("simulate: tracked index out of range");
  }
  std::vector<Path> paths;
  for (std::size_t idx : track) {
    paths.push_back(make_path(steps, ps.dim(), dt));
    record(paths.back(), 0, ps.time(), ps.particle(idx));
  }
  ParticleSystem cur = ps;
  const double t0 = ps.time();
  for (std::size_t k = 1; k <= steps; ++k) {
    cur = em_step(cur, dt);
    for (std::size_t j = 0; j < track.size(); ++j) {
      record(paths[j], k, t0 + static_cast<double>(k) * dt, cur.particle(track[j]));
    }
  }
  return {std::move(cur), std::move(paths)};
}

Path simulate_reference(const Model& model, const EmpiricalMeasure& frozen_mu,
                        std::span<const double> x0, double horizon, double dt, NoiseKey key) {
  const std::size_t dim = state_dim(model);
  if (x0.size() != dim || frozen_mu.dim() != dim) {
    throw std::invalid_argument("simulate_reference: dimension mismatch");
  }
  const std::size_t steps = step_count(horizon, dt);
  const MeasureFeatures frozen = MeasureFeatures::of(frozen_mu);
  const StepKernel kernel(model, frozen);
  const NoiseSource noise(key);
  Path path = make_path(steps, dim, dt);
  record(path, 0, 0.0, x0);
  std::vector<double> xi(kernel.noise_dim());
  for (std::size_t k = 1; k <= steps; ++k) {
    noise.normals(static_cast<std::uint32_t>(k - 1), 0, xi);
    const double t = static_cast<double>(k) * dt;
    std::span<double> out{path.states.data() + k * dim, dim};
    kernel.advance(path.at(k - 1), xi, dt, out);
    check_finite(out, 0, t);
    path.times[k] = t;
  }
  return path;
}

CoupledPaths simulate_coupled(const Model& model, std::span<const double> init_x,
                              std::span<const double> init_xbar,
                              const EmpiricalMeasure& frozen_mu, const ParticleSystem& law_proxy,
                              double horizon, double dt, NoiseKey key) {
  const std::size_t dim = state_dim(model);
  if (init_x.size() != dim || init_xbar.size() != dim || frozen_mu.dim() != dim ||
      law_proxy.dim() != dim) {
    throw std::invalid_argument("simulate_coupled: dimension mismatch");
  }
  if (model_name(law_proxy.model()) != model_name(model) ||
      model_params(law_proxy.model()) != model_params(model)) {
    throw std::invalid_argument("simulate_coupled: law proxy evolves a different model");
  }
  const double t0 = law_proxy.time();
  if (std::abs(t0 / dt - std::round(t0 / dt)) > 1e-9 * std::max(1.0, t0 / dt)) {
    throw std::invalid_argument("simulate_coupled: grid mismatch between pair and law proxy");
  }
  const std::size_t steps = step_count(horizon, dt);
  const MeasureFeatures frozen = MeasureFeatures::of(frozen_mu);
  const StepKernel ref_kernel(model, frozen);
  const NoiseSource noise(key);

  CoupledPaths out;
  out.path_x = make_path(steps, dim, dt);
  out.path_xbar = make_path(steps, dim, dt);
  out.pathwise_bound_applies = noise_is_state_independent(model);
  record(out.path_x, 0, t0, init_x);
  record(out.path_xbar, 0, t0, init_xbar);

  ParticleSystem proxy = law_proxy;
  std::vector<double> xi(ref_kernel.noise_dim());
  for (std::size_t k = 1; k <= steps; ++k) {
    const MeasureFeatures current = proxy.features();
    const StepKernel kernel(model, current);
    noise.normals(static_cast<std::uint32_t>(k - 1), 0, xi);
    const double t = t0 + static_cast<double>(k) * dt;
    std::span<double> ox{out.path_x.states.data() + k * dim, dim};
    std::span<double> ob{out.path_xbar.states.data() + k * dim, dim};
    kernel.advance(out.path_x.at(k - 1), xi, dt, ox);
    ref_kernel.advance(out.path_xbar.at(k - 1), xi, dt, ob);
    check_finite(ox, 0, t);
    check_finite(ob, 0, t);
    out.path_x.times[k] = t;
    out.path_xbar.times[k] = t;
    proxy = em_step(proxy, dt);
  }
  return out;
}

LawFlow record_law_flow(const ParticleSystem& proxy, double horizon, double dt) {
  const std::size_t steps = step_count(horizon, dt);
  LawFlow flow;
  flow.dt = dt;
  flow.features.reserve(steps + 1);
  ParticleSystem cur = proxy;
  flow.features.push_back(cur.features());
  for (std::size_t k = 1; k <= steps; ++k) {
    cur = em_step(cur, dt);
    flow.features.push_back(cur.features());
  }
  return flow;
}

void run_tagged_ensemble(const Model& model, const LawFlow& flow, const RowMatrix& initial,
                         std::size_t steps, std::uint64_t seed, const TaggedVisitor& visit) {
  if (flow.features.size() < steps + 1) {
    throw std::invalid_argument("tagged ensemble: law flow shorter than the horizon");
  }
  const std::size_t dim = state_dim(model);
  if (static_cast<std::size_t>(initial.cols()) != dim) {
    throw std::invalid_argument("tagged ensemble: dimension mismatch");
  }
  std::vector<StepKernel> kernels;
  kernels.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) kernels.emplace_back(model, flow.features[k]);
  const double dt = flow.dt;
  parallel_for(static_cast<std::size_t>(initial.rows()), [&](std::size_t r) {
    const NoiseSource noise({seed, static_cast<std::uint32_t>(r)});
    std::vector<double> x(initial.data() + r * dim, initial.data() + (r + 1) * dim);
    std::vector<double> next(dim), xi(kernels.empty() ? noise_dim(model) : kernels[0].noise_dim());
    visit(r, 0, 0.0, x);
    for (std::size_t k = 1; k <= steps; ++k) {
      noise.normals(static_cast<std::uint32_t>(k - 1), 0, xi);
      const double t = static_cast<double>(k) * dt;
      kernels[k - 1].advance(x, xi, dt, next);
      check_finite(next, r, t);
      x.swap(next);
      visit(r, k, t, x);
    }
  });
}

void run_coupled_ensemble(const Model& model, const LawFlow& flow, const MeasureFeatures& frozen,
                          const RowMatrix& x0, const RowMatrix& xbar0, std::size_t steps,
                          std::uint64_t seed, const CoupledVisitor& visit) {
  if (flow.features.size() < steps + 1) {
    throw std::invalid_argument("coupled ensemble: law flow shorter than the horizon");
  }
  const std::size_t dim = state_dim(model);
  if (static_cast<std::size_t>(x0.cols()) != dim || static_cast<std::size_t>(xbar0.cols()) != dim ||
      x0.rows() != xbar0.rows()) {
    throw std::invalid_argument("coupled ensemble: initial pairs do not conform");
  }
  std::vector<StepKernel> kernels;
  kernels.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) kernels.emplace_back(model, flow.features[k]);
  const StepKernel ref_kernel(model, frozen);
  const double dt = flow.dt;
  parallel_for(static_cast<std::size_t>(x0.rows()), [&](std::size_t r) {
    const NoiseSource noise({seed, static_cast<std::uint32_t>(r)});
    std::vector<double> x(x0.data() + r * dim, x0.data() + (r + 1) * dim);
    std::vector<double> xb(xbar0.data() + r * dim, xbar0.data() + (r + 1) * dim);
    std::vector<double> nx(dim), nxb(dim), xi(ref_kernel.noise_dim());
    visit(r, 0, 0.0, x, xb);
    for (std::size_t k = 1; k <= steps; ++k) {
      noise.normals(static_cast<std::uint32_t>(k - 1), 0, xi);
      const double t = static_cast<double>(k) * dt;
      kernels[k - 1].advance(x, xi, dt, nx);
      ref_kernel.advance(xb, xi, dt, nxb);
      check_finite(nx, r, t);
      check_finite(nxb, r, t);
      x.swap(nx);
      xb.swap(nxb);
      visit(r, k, t, x, xb);
    }
  });
}

W2Result wasserstein2_auto(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() == 1 && mu.size() == nu.size()) return wasserstein2(mu, nu, {W2Method::sorted1d});
  if (mu.size() == nu.size() && mu.size() <= kAssignmentLimit) {
    return wasserstein2(mu, nu, {W2Method::assignment});
  }
  const double a = second_moment_norm(mu);
  const double b = second_moment_norm(nu);
  const double scale = std::max(1e-12, 0.5 * (a * a + b * b));
  return wasserstein2(mu, nu, {W2Method::entropic, 1e-2 * scale});
}

InvariantEstimate estimate_invariant(std::shared_ptr<const Model> model, std::size_t n_particles,
                                     double t_burn, double t_avg, double dt, std::uint64_t seed) {
  if (!(t_burn > 0.0) || !(t_avg > 0.0)) {
    throw std::invalid_argument("estimate_invariant: T_burn and T_avg must be positive");
  }
  if (n_particles == 0) throw std::invalid_argument("estimate_invariant: N must be positive");
  const std::size_t dim = state_dim(*model);
  const std::size_t burn_steps = step_count(t_burn, dt);
  const std::size_t avg_steps = step_count(t_avg, dt);
  RowMatrix init(static_cast<Eigen::Index>(n_particles), static_cast<Eigen::Index>(dim));
  const NoiseSource init_noise({derive_seed(seed, stream_tag::kInitialCloud), 0});
  for (std::size_t i = 0; i < n_particles; ++i) {
    init_noise.normals(0, static_cast<std::uint32_t>(i), {init.data() + i * dim, dim});
  }
  ParticleSystem ps(std::move(model), std::move(init), {derive_seed(seed, stream_tag::kParticles), 0});
  const std::size_t mid = burn_steps + avg_steps / 2;
  const std::size_t total = burn_steps + avg_steps;
  std::optional<EmpiricalMeasure> mid_cloud;
  for (std::size_t k = 1; k <= total; ++k) {
    ps = em_step(ps, dt);
    if (k == mid) mid_cloud = ps.empirical();
  }
  if (!mid_cloud) mid_cloud = ps.empirical();
  InvariantEstimate est{ps.empirical(), 0.0, true};
  const W2Result res = wasserstein2_auto(*mid_cloud, est.cloud);
  est.residual = res.distance;
  est.residual_exact = res.exact;
  return est;
}

}  // namespace mdplab

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

#include "mdplab/experiments.hpp"

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

constexpr double kWilsonZ = 1.959963984540054;

// Step index for each horizon; horizons must be strictly increasing.
std::vector<std::size_t> horizon_steps(const std::vector<double>& horizons, double dt,
                                       bool allow_zero, const char* who) {
  if (horizons.empty()) throw std::invalid_argument(std::string(who) + ": no horizons");
  std::vector<std::size_t> steps;
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    const double t = horizons[i];
    if (!(allow_zero ? t >= 0.0 : t > 0.0)) {
      throw std::invalid_argument(std::string(who) + ": horizons must be " +
                                  (allow_zero ? "nonnegative" : "positive"));
    }
    if (i > 0 && !(t > horizons[i - 1])) {
      throw std::invalid_argument(std::string(who) + ": horizons must be strictly increasing");
    }
    steps.push_back(step_count(t, dt));
  }
  return steps;
}

std::vector<int> step_lookup(const std::vector<std::size_t>& steps) {
  std::vector<int> lookup(steps.back() + 1, -1);
  for (std::size_t h = 0; h < steps.size(); ++h) lookup[steps[h]] = static_cast<int>(h);
  return lookup;
}

LawFlow shared_law_flow(const std::shared_ptr<const Model>& model, const EmpiricalMeasure& nu0,
                        std::size_t n_particles, double horizon, double dt, std::uint64_t seed) {
  if (n_particles == 0) throw std::invalid_argument("law proxy needs at least one particle");
  const EmpiricalMeasure cloud = resample(nu0, n_particles, seed, 0);
  const ParticleSystem proxy(model, cloud.points(), {derive_seed(seed, stream_tag::kLawProxy), 0});
  return record_law_flow(proxy, horizon, dt);
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return s;
}

double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

void require_dim(const Model& model, const EmpiricalMeasure& mu, const char* who) {
  if (mu.dim() != state_dim(model)) {
    throw std::invalid_argument(std::string(who) + ": measure dimension does not match model");
  }
}

}  // namespace

WilsonInterval wilson_interval(std::size_t hits, std::size_t n) {
  if (n == 0) throw std::invalid_argument("wilson_interval: no trials");
  if (hits > n) throw std::invalid_argument("wilson_interval: hits exceed trials");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(hits) / nn;
  const double z2 = kWilsonZ * kWilsonZ;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = kWilsonZ / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  WilsonInterval w{std::clamp(center - half, 0.0, 1.0), std::clamp(center + half, 0.0, 1.0)};
  if (hits == 0) w.low = 0.0;
  if (hits == n) w.high = 1.0;
  w.low = std::min(w.low, p);
  w.high = std::max(w.high, p);
  return w;
}

TailEstimate make_tail_estimate(double t, std::size_t replicas, std::size_t hits,
                                const ScalingFunction& a) {
  TailEstimate e;
  e.t = t;
  e.replicas = replicas;
  e.hits = hits;
  e.p_hat = static_cast<double>(hits) / static_cast<double>(replicas);
  const WilsonInterval w = wilson_interval(hits, replicas);
  e.wilson_low = w.low;
  e.wilson_high = w.high;
  e.saturated = hits == 0;
  const double at = a(t);
  e.normalized_log_tail = t / (at * at) * std::log(e.saturated ? w.high : e.p_hat);
  return e;
}

double contraction_rate(const Model& model) {
  if (const auto* dd = std::get_if<DDSDEModel>(&model)) return dd->lambda1 - dd->lambda2;
  const auto& shs = std::get<SHSModel>(model);
  if (!shs.certificate) throw std::invalid_argument("model " + shs.name + " has no D3 certificate");
  return shs.certificate->contraction_rate();
}

double contraction_prefactor(const Model& model) {
  if (std::holds_alternative<DDSDEModel>(model)) return 1.0;
  const auto& shs = std::get<SHSModel>(model);
  if (!shs.certificate) throw std::invalid_argument("model " + shs.name + " has no D3 certificate");
  return shs.certificate->psi_constant;
}

EmpiricalMeasure resample(const EmpiricalMeasure& mu, std::size_t n, std::uint64_t seed,
                          std::uint32_t stream) {
  if (n == 0) throw std::invalid_argument("resample: n must be positive");
  if (mu.size() == n) return mu;
  const NoiseSource pick({derive_seed(seed, stream_tag::kSampling), stream});
  const std::size_t dim = mu.dim();
  RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    const auto atom = mu.atom(pick.index(0, static_cast<std::uint32_t>(i), mu.size()));
    std::copy(atom.begin(), atom.end(), out.data() + i * dim);
  }
  return EmpiricalMeasure::from_samples(std::move(out));
}

std::pair<RowMatrix, RowMatrix> coupled_starts(const EmpiricalMeasure& nu,
                                               const EmpiricalMeasure& mu_bar,
                                               std::size_t replicas, std::uint64_t seed) {
  if (nu.dim() != mu_bar.dim()) throw std::invalid_argument("coupled_starts: dimension mismatch");
  RowMatrix x0 = resample(nu, replicas, seed, 1).points();
  const RowMatrix drawn = resample(mu_bar, replicas, seed, 2).points();
  const std::size_t dim = nu.dim();
  RowMatrix xbar0(drawn.rows(), drawn.cols());
  if (dim == 1) {
    std::vector<std::size_t> ox(replicas), ob(replicas);
    std::iota(ox.begin(), ox.end(), 0);
    std::iota(ob.begin(), ob.end(), 0);
    std::stable_sort(ox.begin(), ox.end(), [&](std::size_t i, std::size_t j) { return x0(i, 0) < x0(j, 0); });
    std::stable_sort(ob.begin(), ob.end(), [&](std::size_t i, std::size_t j) { return drawn(i, 0) < drawn(j, 0); });
    for (std::size_t k = 0; k < replicas; ++k) xbar0(ox[k], 0) = drawn(ob[k], 0);
    return {std::move(x0), std::move(xbar0)};
  }
  for (std::size_t begin = 0; begin < replicas; begin += kCouplingBlock) {
    const std::size_t len = std::min(kCouplingBlock, replicas - begin);
    const auto rows = [&](const RowMatrix& m) {
      return EmpiricalMeasure::from_samples(m.middleRows(static_cast<Eigen::Index>(begin),
                                                         static_cast<Eigen::Index>(len)));
    };
    const auto match = optimal_matching(rows(x0), rows(drawn));
    for (std::size_t i = 0; i < len; ++i) {
      xbar0.row(static_cast<Eigen::Index>(begin + i)) =
          drawn.row(static_cast<Eigen::Index>(begin + match[i]));
    }
  }
  return {std::move(x0), std::move(xbar0)};
}

std::vector<CurveRow> contraction_experiment(std::shared_ptr<const Model> model,
                                             const EmpiricalMeasure& nu0,
                                             const EmpiricalMeasure& mu_bar_hat,
                                             const ContractionParams& p) {
  require_dim(*model, nu0, "contraction_experiment");
  require_dim(*model, mu_bar_hat, "contraction_experiment");
  if (p.n_particles != mu_bar_hat.size()) {
    throw std::invalid_argument("contraction_experiment: N must equal the size of mu_bar_hat");
  }
  const double g = contraction_rate(*model);
  const double pref = contraction_prefactor(*model);
  const auto steps = horizon_steps(p.horizons, p.dt, true, "contraction_experiment");
  const EmpiricalMeasure cloud0 = resample(nu0, p.n_particles, p.seed, 0);
  const double w0 = wasserstein2_auto(cloud0, mu_bar_hat).distance;
  ParticleSystem ps(model, cloud0.points(), {derive_seed(p.seed, stream_tag::kParticles), 0});
  std::vector<CurveRow> rows;
  std::size_t k = 0;
  for (std::size_t h = 0; h < steps.size(); ++h) {
    for (; k < steps[h]; ++k) ps = em_step(ps, p.dt);
    CurveRow row;
    row.t = p.horizons[h];
    const double w = wasserstein2_auto(ps.empirical(), mu_bar_hat).distance;
    row.observed = w * w;
    row.bound = pref * std::exp(-g * row.t) * w0 * w0;
    row.ratio = row.bound > 0.0 ? row.observed / row.bound : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(row);
  }
  return rows;
}

HypothesisReport pathwise_contraction_check(std::shared_ptr<const Model> model,
                                            const EmpiricalMeasure& nu_hat,
                                            const EmpiricalMeasure& mu_bar_hat,
                                            const PathwiseParams& p) {
  const auto* dd = std::get_if<DDSDEModel>(model.get());
  if (!dd) throw std::invalid_argument("pathwise_contraction_check: requires a DDSDE model");
  if (dd->sigma_class == SigmaClass::general) {
    throw std::invalid_argument(
        "pathwise_contraction_check: sigma_class must be constant or measure_only (got general)");
  }
  if (p.n_pairs == 0) throw std::invalid_argument("pathwise_contraction_check: n_pairs must be >= 1");
  require_dim(*model, nu_hat, "pathwise_contraction_check");
  require_dim(*model, mu_bar_hat, "pathwise_contraction_check");
  const std::size_t steps = step_count(p.horizon, p.dt);
  const double gap = dd->lambda1 - dd->lambda2;
  const double w = wasserstein2_auto(resample(nu_hat, mu_bar_hat.size(), p.seed, 3), mu_bar_hat).distance;
  const double w_sq = w * w;

  const LawFlow flow = shared_law_flow(model, nu_hat, p.n_particles, p.horizon, p.dt, p.seed);
  const MeasureFeatures frozen = MeasureFeatures::of(mu_bar_hat);
  RowMatrix x0 = resample(nu_hat, p.n_pairs, p.seed, 1).points();
  RowMatrix xbar0 = resample(mu_bar_hat, p.n_pairs, p.seed, 2).points();

  struct Worst {
    double margin = -std::numeric_limits<double>::infinity();
    double time = 0.0;
    double observed = 0.0;
    double bound = 0.0;
  };
  std::vector<Worst> worst(p.n_pairs);
  std::vector<double> start_sq(p.n_pairs);
  run_coupled_ensemble(*model, flow, frozen, x0, xbar0, steps, derive_seed(p.seed, stream_tag::kReplicas),
                       [&](std::size_t r, std::size_t k, double t, std::span<const double> x,
                           std::span<const double> xb) {
                         const double d = squared_distance(x, xb);
                         if (k == 0) start_sq[r] = d;
                         const double bound = std::max(start_sq[r], w_sq) * std::exp(-gap * t) *
                                              (1.0 + 10.0 * p.dt * t);
                         const double margin = d - bound;
                         if (margin > worst[r].margin) worst[r] = {margin, t, d, bound};
                       });

  HypothesisReport rep;
  rep.hypothesis = "pathwise";
  rep.trials = p.n_pairs;
  rep.tolerance = 0.0;
  rep.worst_margin = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < p.n_pairs; ++r) {
    if (worst[r].margin > rep.worst_margin) {
      rep.worst_margin = worst[r].margin;
      rep.witness_trial = r;
      rep.witness = {static_cast<double>(r), worst[r].time, worst[r].observed, worst[r].bound};
    }
  }
  return rep;
}

std::vector<std::vector<double>> moderate_samples(std::shared_ptr<const Model> model,
                                                  const Observable& A, const EmpiricalMeasure& nu0,
                                                  const ScalingFunction& a,
                                                  const ModerateSampleParams& p) {
  if (p.replicas == 0) throw std::invalid_argument("moderate_samples: replicas must be >= 1");
  require_dim(*model, nu0, "moderate_samples");
  const auto steps = horizon_steps(p.horizons, p.dt, false, "moderate_samples");
  const auto lookup = step_lookup(steps);
  const std::size_t R = p.replicas;

  const LawFlow flow = shared_law_flow(model, nu0, p.n_particles, p.horizons.back(), p.dt, p.seed);
  const RowMatrix initial = resample(nu0, R, p.seed, 1).points();
  std::vector<double> integral(R), previous(R);
  std::vector<std::vector<double>> values(steps.size(), std::vector<double>(R));
  run_tagged_ensemble(*model, flow, initial, steps.back(), derive_seed(p.seed, stream_tag::kReplicas),
                      [&](std::size_t r, std::size_t k, double t, std::span<const double> x) {
                        const double v = A(x);
                        if (k > 0) integral[r] += 0.5 * (previous[r] + v) * p.dt;
                        previous[r] = v;
                        if (k > 0 && lookup[k] >= 0) {
                          values[static_cast<std::size_t>(lookup[k])][r] =
                              moderate_functional(integral[r] / t, p.mu_bar_A, t, a);
                        }
                      });
  return values;
}

std::vector<MdpTailCurve> mdp_tail_experiment(std::shared_ptr<const Model> model,
                                              const Observable& A, const EmpiricalMeasure& nu0,
                                              const MdpTailParams& p) {
  const ScalingFunction a = ScalingFunction::moderate(p.kappa);
  if (p.thresholds.empty()) throw std::invalid_argument("mdp_tail_experiment: no thresholds");
  if (!(p.vbar > 0.0)) throw std::invalid_argument("mdp_tail_experiment: vbar must be positive");
  const auto samples = moderate_samples(
      model, A, nu0, a, {p.horizons, p.replicas, p.n_particles, p.dt, p.seed, p.mu_bar_A});

  std::vector<MdpTailCurve> curves;
  for (double y : p.thresholds) {
    MdpTailCurve c;
    c.y = y;
    c.rate8 = -rate_function(y, p.vbar);
    c.rate4 = 2.0 * c.rate8;
    for (std::size_t h = 0; h < samples.size(); ++h) {
      const auto hits = static_cast<std::size_t>(
          std::count_if(samples[h].begin(), samples[h].end(), [y](double l) { return l >= y; }));
      c.rows.push_back(make_tail_estimate(p.horizons[h], p.replicas, hits, a));
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

std::vector<TailEstimate> exp_equivalence_experiment(std::shared_ptr<const Model> model,
                                                     const Observable& A,
                                                     const EmpiricalMeasure& nu0,
                                                     const EmpiricalMeasure& mu_bar_hat,
                                                     const EquivalenceParams& p) {
  const ScalingFunction a = ScalingFunction::moderate(p.kappa);
  if (p.replicas == 0) throw std::invalid_argument("exp_equivalence_experiment: replicas must be >= 1");
  if (!(p.epsilon > 0.0)) throw std::invalid_argument("exp_equivalence_experiment: epsilon must be positive");
  require_dim(*model, nu0, "exp_equivalence_experiment");
  require_dim(*model, mu_bar_hat, "exp_equivalence_experiment");
  const auto steps = horizon_steps(p.horizons, p.dt, false, "exp_equivalence_experiment");
  const auto lookup = step_lookup(steps);
  const std::size_t H = steps.size();
  const std::size_t R = p.replicas;

  const LawFlow flow = shared_law_flow(model, nu0, p.n_particles, p.horizons.back(), p.dt, p.seed);
  const MeasureFeatures frozen = MeasureFeatures::of(mu_bar_hat);
  const auto [x0, xbar0] = coupled_starts(nu0, mu_bar_hat, R, p.seed);
  std::vector<double> integral(R), previous(R), gaps(H * R);
  run_coupled_ensemble(*model, flow, frozen, x0, xbar0, steps.back(),
                       derive_seed(p.seed, stream_tag::kReplicas),
                       [&](std::size_t r, std::size_t k, double t, std::span<const double> x,
                           std::span<const double> xb) {
                         const double v = A(x) - A(xb);
                         if (k > 0) integral[r] += 0.5 * (previous[r] + v) * p.dt;
                         previous[r] = v;
                         if (k > 0 && lookup[k] >= 0) {
                           gaps[static_cast<std::size_t>(lookup[k]) * R + r] = integral[r] / t;
                         }
                       });

  std::vector<TailEstimate> rows;
  for (std::size_t h = 0; h < H; ++h) {
    const double t = p.horizons[h];
    std::size_t hits = 0;
    for (std::size_t r = 0; r < R; ++r) {
      if (std::abs(moderate_functional(gaps[h * R + r], 0.0, t, a)) > p.epsilon) ++hits;
    }
    rows.push_back(make_tail_estimate(t, R, hits, a));
  }
  return rows;
}

std::string to_string(const ProbeSpec& spec) {
  switch (spec.kind) {
    case ProbeKind::abs:
      return "abs";
    case ProbeKind::hoelder:
      return "hoelder";
    case ProbeKind::logmod:
      return "logmod";
    case ProbeKind::supexp:
      return "supexp";
  }
  return "unknown";
}

std::vector<ProbeRow> integrability_probe(std::shared_ptr<const Model> model,
                                          const EmpiricalMeasure& nu0,
                                          const EmpiricalMeasure& mu_bar_hat,
                                          const ProbeParams& p) {
  if (p.deltas.empty()) throw std::invalid_argument("integrability_probe: empty delta grid");
  for (double d : p.deltas) {
    if (!(d >= 0.0)) throw std::invalid_argument("integrability_probe: delta must be nonnegative");
  }
  if (p.replicas == 0) throw std::invalid_argument("integrability_probe: replicas must be >= 1");
  if (p.spec.kind == ProbeKind::hoelder && !(p.spec.alpha > 0.0 && p.spec.alpha < 1.0)) {
    throw std::invalid_argument("integrability_probe: alpha must lie in (0,1)");
  }
  if (p.spec.kind == ProbeKind::logmod && !(p.spec.p > 1.0)) {
    throw std::invalid_argument("integrability_probe: p must be > 1");
  }
  require_dim(*model, nu0, "integrability_probe");
  require_dim(*model, mu_bar_hat, "integrability_probe");
  const auto steps = horizon_steps(p.horizons, p.dt, false, "integrability_probe");
  const auto lookup = step_lookup(steps);
  const std::size_t H = steps.size();
  const std::size_t R = p.replicas;
  const ProbeSpec spec = p.spec;

  const auto integrand = [spec](std::span<const double> x, std::span<const double> xb) {
    const double d = std::sqrt(squared_distance(x, xb));
    switch (spec.kind) {
      case ProbeKind::abs:
        return d;
      case ProbeKind::hoelder: {
        const double s = 1.0 + std::sqrt(squared_norm(x)) + std::sqrt(squared_norm(xb));
        return std::pow(d, spec.alpha) * std::pow(s, 2.0 - spec.alpha);
      }
      case ProbeKind::logmod: {
        if (d == 0.0) return 0.0;
        const double sq = squared_norm(x) + squared_norm(xb);
        return (1.0 + sq) / (std::log(std::numbers::e + sq) *
                             std::pow(std::log(std::numbers::e + 1.0 / d), spec.p));
      }
      case ProbeKind::supexp:
        return squared_norm(x);
    }
    return 0.0;
  };

  const LawFlow flow = shared_law_flow(model, nu0, p.n_particles, p.horizons.back(), p.dt, p.seed);
  const MeasureFeatures frozen = MeasureFeatures::of(mu_bar_hat);
  const auto [x0, xbar0] = coupled_starts(nu0, mu_bar_hat, R, p.seed);
  const bool sup = spec.kind == ProbeKind::supexp;
  std::vector<double> acc(R), previous(R), totals(H * R);
  run_coupled_ensemble(*model, flow, frozen, x0, xbar0, steps.back(),
                       derive_seed(p.seed, stream_tag::kReplicas),
                       [&](std::size_t r, std::size_t k, double, std::span<const double> x,
                           std::span<const double> xb) {
                         const double g = integrand(x, xb);
                         if (sup) {
                           acc[r] = k == 0 ? g : std::max(acc[r], g);
                         } else {
                           if (k == 0) acc[r] = 0.0;
                           else acc[r] += 0.5 * (previous[r] + g) * p.dt;
                           previous[r] = g;
                         }
                         if (k > 0 && lookup[k] >= 0) totals[static_cast<std::size_t>(lookup[k]) * R + r] = acc[r];
                       });

  std::vector<ProbeRow> rows;
  std::vector<double> v(R);
  const std::string kind = to_string(spec);
  for (double delta : p.deltas) {
    for (std::size_t h = 0; h < H; ++h) {
      double top = 0.0;
      for (std::size_t r = 0; r < R; ++r) {
        v[r] = delta * totals[h * R + r];
        top = std::max(top, v[r]);
      }
      rows.push_back({kind, delta, p.horizons[h], log_mean_exp(v), top > kExpSaturation});
    }
  }
  return rows;
}

}  // namespace mdplab

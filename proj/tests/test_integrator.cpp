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

#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mdplab/integrator.hpp"
#include "mdplab/parallel.hpp"

using namespace mdplab;

namespace {

std::shared_ptr<const Model> ou(double theta = 1.0, double eta = 0.5, double sigma = 1.0, std::size_t dim = 1) {
  return std::make_shared<const Model>(make_mean_field_ou(theta, eta, sigma, dim));
}

// Mean-field OU drift with zero diffusion.
std::shared_ptr<const Model> noiseless(double theta, double eta) {
  DDSDEModel m;
  m.name = "noiseless";
  m.dim = 1;
  m.drift = [theta, eta](std::span<const double> x, const MeasureFeatures& mu, std::span<double> out) {
    out[0] = -theta * x[0] + eta * mu.mean(0);
  };
  m.diffusion = [](std::span<const double>, const MeasureFeatures&) { return Eigen::MatrixXd::Zero(1, 1); };
  m.sigma_class = SigmaClass::constant;
  return std::make_shared<const Model>(std::move(m));
}

RowMatrix column(std::initializer_list<double> xs) {
  RowMatrix p(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double v : xs) p(i++, 0) = v;
  return p;
}

RowMatrix gaussian_rows(std::size_t n, std::size_t dim, std::uint64_t seed) {
  RowMatrix p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  const NoiseSource s({seed, 99});
  for (std::size_t i = 0; i < n; ++i) s.normals(0, static_cast<std::uint32_t>(i), {p.data() + i * dim, dim});
  return p;
}

struct ThreadGuard {
  ~ThreadGuard() { set_thread_count(0); }
};

}  // namespace

TEST_CASE("zero noise reproduces the linear recursion") {
  const double theta = 1.0, eta = 0.5, dt = 0.1;
  ParticleSystem ps(noiseless(theta, eta), column({2.0, -1.0, 0.5}), {1, 0});
  std::vector<double> x = {2.0, -1.0, 0.5};
  for (int k = 0; k < 50; ++k) {
    const double m = (x[0] + x[1] + x[2]) / 3.0;
    for (double& v : x) v = v + dt * (-theta * v + eta * m);
    ps = em_step(ps, dt);
    for (std::size_t i = 0; i < 3; ++i) CHECK(ps.states()(static_cast<Eigen::Index>(i), 0) == doctest::Approx(x[i]).epsilon(1e-12));
  }
  CHECK(ps.time() == doctest::Approx(5.0));
  CHECK(ps.step_index() == 50);
}

TEST_CASE("particle results do not depend on the thread count") {
  ThreadGuard guard;
  const auto model = ou(1.0, 0.5, 1.0, 2);
  const ParticleSystem ps(model, gaussian_rows(257, 2, 3), {17, 0});
  set_thread_count(1);
  const auto a = simulate(ps, 1.0, 0.01, std::vector<std::size_t>{0, 100});
  set_thread_count(3);
  const auto b = simulate(ps, 1.0, 0.01, std::vector<std::size_t>{0, 100});
  CHECK(a.final_state.states() == b.final_state.states());
  CHECK(a.tracked[1].states == b.tracked[1].states);
}

TEST_CASE("permuting particles together with their ids permutes the trajectories") {
  const auto model = ou();
  const RowMatrix init = gaussian_rows(6, 1, 4);
  const std::vector<std::uint32_t> perm = {3, 0, 5, 1, 4, 2};
  RowMatrix permuted(6, 1);
  for (std::size_t i = 0; i < 6; ++i) permuted(static_cast<Eigen::Index>(i), 0) = init(perm[i], 0);
  const ParticleSystem a(model, init, {8, 0});
  const ParticleSystem b = ParticleSystem(model, permuted, {8, 0}).with_particle_ids(perm);
  const auto ra = simulate(a, 2.0, 0.01, {}).final_state;
  const auto rb = simulate(b, 2.0, 0.01, {}).final_state;
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(rb.states()(static_cast<Eigen::Index>(i), 0) == ra.states()(perm[i], 0));
  }
}

TEST_CASE("divergence is reported with particle and time") {
  DDSDEModel m;
  m.name = "explosive";
  m.dim = 1;
  m.drift = [](std::span<const double> x, const MeasureFeatures&, std::span<double> out) { out[0] = x[0] * x[0]; };
  m.diffusion = [](std::span<const double>, const MeasureFeatures&) { return Eigen::MatrixXd::Zero(1, 1); };
  m.sigma_class = SigmaClass::constant;
  const auto model = std::make_shared<const Model>(std::move(m));
  const ParticleSystem ps(model, column({0.0, 10.0}), {1, 0});
  try {
    simulate(ps, 10.0, 0.1, {});
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.particle() == 1);
    CHECK(e.time() > 0.0);
    CHECK(e.time() < 1.0);
  }
}

TEST_CASE("horizons must be integral multiples of dt") {
  CHECK(step_count(1.0, 0.01) == 100);
  CHECK(step_count(0.0, 0.01) == 0);
  CHECK_THROWS_AS(step_count(1.005, 0.01), std::invalid_argument);
  CHECK_THROWS_AS(step_count(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("tracked paths start at the initial state") {
  const ParticleSystem ps(ou(), column({2.0, -2.0}), {3, 0});
  const auto sim = simulate(ps, 0.5, 0.1, std::vector<std::size_t>{1});
  REQUIRE(sim.tracked.size() == 1);
  const Path& p = sim.tracked[0];
  CHECK(p.size() == 6);
  CHECK(p.at(0)[0] == -2.0);
  CHECK(p.times[5] == doctest::Approx(0.5));
  CHECK(p.at(5)[0] == sim.final_state.states()(1, 0));
}

TEST_CASE("without interaction the coupled pair from one start coincides") {
  const auto model = ou(1.0, 0.0, 1.0, 1);
  const ParticleSystem proxy(model, column({5.0, 5.0, 5.0}), {2, 0});
  const auto frozen = EmpiricalMeasure::from_samples(column({0.0}));
  const double start[] = {1.5};
  const auto cp = simulate_coupled(*model, start, start, frozen, proxy, 2.0, 0.01, {4, 0});
  CHECK(cp.shared_noise);
  CHECK(cp.pathwise_bound_applies);
  CHECK(cp.path_x.states == cp.path_xbar.states);
}

TEST_CASE("coupled difference follows the deterministic comparison ODE") {
  // With additive noise the difference D = X - Xbar solves
  // D' = -theta D + eta (m(t) - mbar), m' = -(theta - eta) m.
  const double theta = 1.0, eta = 0.5, m0 = 2.0;
  const auto model = ou(theta, eta, 1.0, 1);
  RowMatrix cloud(4000, 1);
  cloud.setConstant(m0);
  const ParticleSystem proxy(model, cloud, {6, 0});
  const auto frozen = EmpiricalMeasure::from_samples(column({0.0}));
  const double x0[] = {2.0};
  const double xb0[] = {0.0};
  const auto cp = simulate_coupled(*model, x0, xb0, frozen, proxy, 3.0, 0.001, {5, 0});

  // RK4 oracle on a fine grid.
  auto rhs = [&](double t, double d) { return -theta * d + eta * m0 * std::exp(-(theta - eta) * t); };
  double d = 2.0, t = 0.0;
  const double h = 1e-4;
  for (double target : {1.0, 2.0, 3.0}) {
    while (t < target - h / 2) {
      const double k1 = rhs(t, d), k2 = rhs(t + h / 2, d + h / 2 * k1), k3 = rhs(t + h / 2, d + h / 2 * k2),
                   k4 = rhs(t + h, d + h * k3);
      d += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
      t += h;
    }
    const auto k = static_cast<std::size_t>(std::lround(target / 0.001));
    const double sim = cp.path_x.at(k)[0] - cp.path_xbar.at(k)[0];
    // Proxy mean fluctuation is about sqrt(0.5/4000); Euler error O(dt).
    CHECK(sim == doctest::Approx(d).epsilon(0.03));
  }
}

TEST_CASE("coupled simulation flags state-dependent noise") {
  DDSDEModel m;
  m.name = "multiplicative";
  m.dim = 1;
  m.drift = [](std::span<const double> x, const MeasureFeatures&, std::span<double> out) { out[0] = -x[0]; };
  m.diffusion = [](std::span<const double> x, const MeasureFeatures&) {
    return Eigen::MatrixXd::Constant(1, 1, 0.5 + 0.1 * std::tanh(x[0]));
  };
  m.sigma_class = SigmaClass::general;
  const auto model = std::make_shared<const Model>(std::move(m));
  const ParticleSystem proxy(model, column({0.0, 1.0}), {1, 0});
  const auto frozen = EmpiricalMeasure::from_samples(column({0.0}));
  const double a[] = {1.0};
  const double b[] = {-1.0};
  const auto cp = simulate_coupled(*model, a, b, frozen, proxy, 1.0, 0.01, {2, 0});
  CHECK_FALSE(cp.pathwise_bound_applies);
  CHECK(cp.path_x.at(100)[0] != cp.path_xbar.at(100)[0]);
}

TEST_CASE("coupled simulation rejects a proxy of another model") {
  const ParticleSystem proxy(ou(1.0, 0.2), column({0.0}), {1, 0});
  const auto frozen = EmpiricalMeasure::from_samples(column({0.0}));
  const double a[] = {1.0};
  CHECK_THROWS_AS(simulate_coupled(*ou(), a, a, frozen, proxy, 1.0, 0.01, {2, 0}), std::invalid_argument);
}

TEST_CASE("reference path with frozen law is the plain OU recursion") {
  const auto model = ou(1.0, 0.5, 1.0, 1);
  const auto frozen = EmpiricalMeasure::from_samples(column({1.0, 3.0}));
  const double x0[] = {0.0};
  const NoiseKey key{12, 0};
  const Path p = simulate_reference(*model, frozen, x0, 1.0, 0.1, key);
  const NoiseSource noise(key);
  double x = 0.0;
  std::vector<double> z(1);
  for (std::uint32_t k = 0; k < 10; ++k) {
    noise.normals(k, 0, z);
    x = x + 0.1 * (-x + 0.5 * 2.0) + std::sqrt(0.1) * z[0];
    CHECK(p.at(k + 1)[0] == doctest::Approx(x).epsilon(1e-13));
  }
}

TEST_CASE("law flow records features at every step") {
  const ParticleSystem ps(ou(), column({2.0, 4.0}), {1, 0});
  const auto flow = record_law_flow(ps, 1.0, 0.1);
  CHECK(flow.features.size() == 11);
  CHECK(flow.features[0].mean(0) == 3.0);
  CHECK(flow.features[0].second_moment == doctest::Approx(10.0));
}

TEST_CASE("tagged ensembles are thread-count independent") {
  ThreadGuard guard;
  const auto model = ou();
  const auto flow = record_law_flow(ParticleSystem(model, column({2.0, 2.0}), {1, 0}), 1.0, 0.01);
  const RowMatrix init = gaussian_rows(64, 1, 5);
  auto run = [&](std::size_t threads) {
    set_thread_count(threads);
    std::vector<double> last(64);
    run_tagged_ensemble(*model, flow, init, 100, 77,
                        [&](std::size_t r, std::size_t k, double, std::span<const double> x) {
                          if (k == 100) last[r] = x[0];
                        });
    return last;
  };
  CHECK(run(1) == run(4));
}

TEST_CASE("invariant law of mean-field OU") {
  const auto est = estimate_invariant(ou(), 2000, 10.0, 10.0, 0.01, 21);
  const auto& pts = est.cloud.points();
  const double mean = pts.mean();
  const double var = (pts.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.08);
  CHECK(var == doctest::Approx(0.5).epsilon(0.1));
  CHECK(est.residual_exact);
  CHECK(est.residual < 0.1);
}

TEST_CASE("stationary covariance of the linear SHS matches the Lyapunov solution") {
  // Oracle: A S + S A^T + Q = 0 for the drift matrix of (X1, X2), solved as a
  // 4x4 linear system in vec(S).
  const double gamma = 1.5, k = 2.0, sigma = 1.0;
  Eigen::Matrix2d a;
  a << 0.0, 1.0, -k, -gamma;
  Eigen::Matrix2d q = Eigen::Matrix2d::Zero();
  q(1, 1) = sigma * sigma;
  Eigen::Matrix4d sys;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int p = 0; p < 2; ++p) {
        for (int r = 0; r < 2; ++r) {
          // coefficient of S(p,r) in (A S + S A^T)(i,j)
          double c = 0.0;
          if (r == j) c += a(i, p);
          if (p == i) c += a(j, r);
          sys(i * 2 + j, p * 2 + r) = c;
        }
      }
    }
  }
  Eigen::Vector4d rhs;
  rhs << -q(0, 0), -q(0, 1), -q(1, 0), -q(1, 1);
  const Eigen::Vector4d s = sys.fullPivLu().solve(rhs);

  const auto model = std::make_shared<const Model>(make_shs_linear(gamma, k, 0.0, sigma));
  const auto est = estimate_invariant(model, 4000, 20.0, 10.0, 0.005, 8);
  const auto& pts = est.cloud.points();
  const Eigen::RowVector2d mean = pts.colwise().mean();
  const RowMatrix c = pts.rowwise() - mean;
  const Eigen::Matrix2d cov = (c.transpose() * c) / static_cast<double>(pts.rows());
  CHECK(cov(0, 0) == doctest::Approx(s(0)).epsilon(0.1));
  CHECK(cov(1, 1) == doctest::Approx(s(3)).epsilon(0.1));
  CHECK(std::abs(cov(0, 1)) < 0.05);
}

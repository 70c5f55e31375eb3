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

#include "mdplab/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mdplab/parallel.hpp"

namespace mdplab {

MeasureFeatures MeasureFeatures::of(const EmpiricalMeasure& mu) {
  return of_rows(mu.points());
}

MeasureFeatures MeasureFeatures::of_rows(const RowMatrix& states) {
  MeasureFeatures f;
  f.mean = Eigen::VectorXd::Zero(states.cols());
  double sq = 0.0;
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    for (Eigen::Index k = 0; k < states.cols(); ++k) {
      const double v = states(i, k);
      f.mean[k] += v;
      sq += v * v;
    }
  }
  const auto n = static_cast<double>(states.rows());
  f.mean /= n;
  f.second_moment = sq / n;
  return f;
}

const char* to_string(SigmaClass c) {
  switch (c) {
    case SigmaClass::general: return "general";
    case SigmaClass::measure_only: return "measure_only";
    case SigmaClass::constant: return "constant";
  }
  return "unknown";
}

void DDSDEModel::validate() const {
  if (dim == 0) throw std::invalid_argument("model: dim must be positive");
  if (!drift || !diffusion) throw std::invalid_argument("model: drift and diffusion required");
  if (!(lambda2 >= 0.0) || !(lambda1 > lambda2)) {
    std::ostringstream os;
    os << "model: lambda1 > lambda2 >= 0 violated (lambda1=" << lambda1
       << ", lambda2=" << lambda2 << ")";
    throw std::invalid_argument(os.str());
  }
  if (!(kappa1 > 0.0) || !(kappa1 <= kappa2)) {
    std::ostringstream os;
    os << "model: 0 < kappa1 <= kappa2 violated (kappa1=" << kappa1 << ", kappa2=" << kappa2
       << ")";
    throw std::invalid_argument(os.str());
  }
}

Eigen::VectorXd DDSDEModel::drift_at(std::span<const double> x, const EmpiricalMeasure& mu) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(dim));
  drift(x, MeasureFeatures::of(mu), {out.data(), dim});
  return out;
}

Eigen::MatrixXd DDSDEModel::diffusion_at(std::span<const double> x,
                                         const EmpiricalMeasure& mu) const {
  return diffusion(x, MeasureFeatures::of(mu));
}

void AffineZField::eval(std::span<const double> x, const Eigen::VectorXd& mean,
                        std::span<double> out) const {
  for (Eigen::Index r = 0; r < state_gain.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < state_gain.cols(); ++c) {
      acc += state_gain(r, c) * x[static_cast<std::size_t>(c)] + mean_gain(r, c) * mean[c];
    }
    out[static_cast<std::size_t>(r)] = acc;
  }
}

void SHSModel::validate() const {
  const auto mi = static_cast<Eigen::Index>(m);
  const auto di = static_cast<Eigen::Index>(d);
  if (m == 0 || d == 0) throw std::invalid_argument("shs model: m and d must be positive");
  if (matA.rows() != mi || matA.cols() != mi || matB.rows() != mi || matB.cols() != di ||
      matM.rows() != di || matM.cols() != di) {
    throw std::invalid_argument("shs model: matrix shapes do not conform to (m, d)");
  }
  if (zfield.state_gain.rows() != di || zfield.state_gain.cols() != mi + di ||
      zfield.mean_gain.rows() != di || zfield.mean_gain.cols() != mi + di) {
    throw std::invalid_argument("shs model: z-field gains must be d x (m+d)");
  }
  if (Eigen::FullPivLU<Eigen::MatrixXd>(matM).rank() != di) {
    throw std::invalid_argument("shs model: M must be invertible");
  }
  if (certificate) {
    const auto& c = *certificate;
    if (!(c.theta1 > c.theta2 && c.theta2 > 0.0)) {
      throw std::invalid_argument("shs model: theta1 > theta2 > 0 violated");
    }
    const double bnorm = matB.operatorNorm();
    if (!(c.r > 0.0) || !(std::abs(c.r0) * bnorm < 1.0)) {
      throw std::invalid_argument("shs model: r > 0 and |r0| < 1/|B| required");
    }
  }
}

std::size_t state_dim(const Model& model) {
  return std::visit(
      [](const auto& mdl) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(mdl)>, DDSDEModel>) {
          return mdl.dim;
        } else {
          return mdl.state_dim();
        }
      },
      model);
}

std::size_t noise_dim(const Model& model) {
  if (const auto* dd = std::get_if<DDSDEModel>(&model)) return dd->dim;
  return std::get<SHSModel>(model).d;
}

const std::string& model_name(const Model& model) {
  return std::visit([](const auto& mdl) -> const std::string& { return mdl.name; }, model);
}

const std::map<std::string, double>& model_params(const Model& model) {
  return std::visit([](const auto& mdl) -> const std::map<std::string, double>& { return mdl.params; },
                    model);
}

bool noise_is_state_independent(const Model& model) {
  if (const auto* dd = std::get_if<DDSDEModel>(&model)) {
    return dd->sigma_class != SigmaClass::general;
  }
  return true;
}

DDSDEModel make_mean_field_ou(double theta, double eta, double sigma0, std::size_t dim) {
  if (!(theta > eta)) {
    std::ostringstream os;
    os << "mean_field_ou: theta > eta violated (theta=" << theta << ", eta=" << eta << ")";
    throw std::invalid_argument(os.str());
  }
  if (!(eta >= 0.0)) throw std::invalid_argument("mean_field_ou: eta >= 0 violated");
  if (!(sigma0 > 0.0)) throw std::invalid_argument("mean_field_ou: sigma0 > 0 violated");
  if (dim == 0) throw std::invalid_argument("mean_field_ou: dim must be positive");

  DDSDEModel model;
  model.name = "mean_field_ou";
  model.dim = dim;
  model.drift = [theta, eta](std::span<const double> x, const MeasureFeatures& mu,
                             std::span<double> out) {
    for (std::size_t k = 0; k < x.size(); ++k) {
      out[k] = -theta * x[k] + eta * mu.mean[static_cast<Eigen::Index>(k)];
    }
  };
  const Eigen::MatrixXd sigma =
      sigma0 * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  model.diffusion = [sigma](std::span<const double>, const MeasureFeatures&) { return sigma; };
  model.sigma_class = SigmaClass::constant;
  model.lambda1 = 2.0 * theta - eta;
  model.lambda2 = eta;
  model.kappa1 = sigma0;
  model.kappa2 = sigma0;
  model.params = {{"theta", theta}, {"eta", eta}, {"sigma0", sigma0},
                  {"dim", static_cast<double>(dim)}};
  model.validate();
  return model;
}

SHSModel make_shs_linear(double gamma, double k, double eps_int, double sigma0) {
  if (!(gamma > 0.0)) throw std::invalid_argument("shs_linear: gamma > 0 violated");
  if (!(k > 0.0)) throw std::invalid_argument("shs_linear: k > 0 violated");
  if (!(sigma0 > 0.0)) throw std::invalid_argument("shs_linear: sigma0 > 0 violated");
  if (!(eps_int >= 0.0)) throw std::invalid_argument("shs_linear: eps_int >= 0 violated");
  SHSModel model;
  model.name = "shs_linear";
  model.m = 1;
  model.d = 1;
  model.matA = Eigen::MatrixXd::Zero(1, 1);
  model.matB = Eigen::MatrixXd::Ones(1, 1);
  model.matM = Eigen::MatrixXd::Constant(1, 1, sigma0);
  model.zfield.state_gain = Eigen::MatrixXd(1, 2);
  model.zfield.state_gain << -k, -gamma;
  model.zfield.mean_gain = Eigen::MatrixXd(1, 2);
  model.zfield.mean_gain << 0.0, eps_int;
  model.params = {{"gamma", gamma}, {"k", k}, {"eps_int", eps_int}, {"sigma0", sigma0}};
  model.validate();
  return model;
}

namespace {

Eigen::VectorXd random_state(const NoiseSource& noise, std::uint32_t trial, std::uint32_t slot,
                             std::size_t dim) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(dim));
  noise.normals(slot << 16, trial, {x.data(), dim});
  return x;
}

struct Sample {
  double margin;
  std::vector<double> witness;
};

HypothesisReport reduce_samples(std::string name, std::vector<Sample> samples, double tol) {
  HypothesisReport rep;
  rep.hypothesis = std::move(name);
  rep.trials = samples.size();
  rep.tolerance = tol;
  rep.worst_margin = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].margin > rep.worst_margin) {
      rep.worst_margin = samples[i].margin;
      rep.witness_trial = i;
    }
  }
  if (!samples.empty()) rep.witness = std::move(samples[rep.witness_trial].witness);
  return rep;
}

std::vector<double> concat(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  std::vector<double> w(a.data(), a.data() + a.size());
  w.insert(w.end(), b.data(), b.data() + b.size());
  return w;
}

}  // namespace

EmpiricalMeasure random_probe_measure(const NoiseSource& noise, std::uint32_t trial,
                                      std::uint32_t slot, std::size_t dim,
                                      std::size_t support_size) {
  const double scale = 0.5 + 1.5 * noise.uniform((slot << 16) | 0xFFFFu, trial);
  RowMatrix pts(static_cast<Eigen::Index>(support_size), static_cast<Eigen::Index>(dim));
  for (std::size_t a = 0; a < support_size; ++a) {
    noise.normals((slot << 16) | static_cast<std::uint32_t>(a), trial,
                  {pts.data() + a * dim, dim});
  }
  pts *= scale;
  return EmpiricalMeasure::from_samples(std::move(pts));
}

double h1_margin(const DDSDEModel& model, std::span<const double> x, std::span<const double> y,
                 const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  const auto fm = MeasureFeatures::of(mu);
  const auto fn = MeasureFeatures::of(nu);
  Eigen::VectorXd bx(static_cast<Eigen::Index>(model.dim)), by(static_cast<Eigen::Index>(model.dim));
  model.drift(x, fm, {bx.data(), model.dim});
  model.drift(y, fn, {by.data(), model.dim});
  double inner = 0.0;
  double dist2 = 0.0;
  for (std::size_t k = 0; k < model.dim; ++k) {
    const double dx = x[k] - y[k];
    inner += (bx[static_cast<Eigen::Index>(k)] - by[static_cast<Eigen::Index>(k)]) * dx;
    dist2 += dx * dx;
  }
  const double hs = (model.diffusion(x, fm) - model.diffusion(y, fn)).squaredNorm();
  const double w2 = wasserstein2_exact(mu, nu);
  return 2.0 * inner + hs - model.lambda2 * w2 * w2 + model.lambda1 * dist2;
}

HypothesisReport check_H1(const DDSDEModel& model, std::uint64_t seed, std::size_t n_trials,
                          std::size_t support_size) {
  if (n_trials == 0) throw std::invalid_argument("check_H1: n_trials must be >= 1");
  const NoiseSource noise({derive_seed(seed, stream_tag::kHypothesis), 1});
  std::vector<Sample> samples(n_trials);
  parallel_for(n_trials, [&](std::size_t i) {
    const auto t = static_cast<std::uint32_t>(i);
    const auto x = random_state(noise, t, 0, model.dim);
    const auto y = random_state(noise, t, 1, model.dim);
    const auto mu = random_probe_measure(noise, t, 2, model.dim, support_size);
    const auto nu = random_probe_measure(noise, t, 3, model.dim, support_size);
    samples[i] = {h1_margin(model, {x.data(), model.dim}, {y.data(), model.dim}, mu, nu),
                  concat(x, y)};
  });
  return reduce_samples("H1", std::move(samples), kHypothesisTolerance);
}

H2Report check_H2(const DDSDEModel& model, const std::vector<Eigen::VectorXd>& probe_states,
                  const std::vector<EmpiricalMeasure>& probe_measures) {
  if (probe_states.empty() || probe_measures.empty()) {
    throw std::invalid_argument("check_H2: at least one probe state and measure required");
  }
  H2Report rep;
  rep.kappa1_hat = std::numeric_limits<double>::infinity();
  rep.kappa2_hat = 0.0;
  for (const auto& mu : probe_measures) {
    const auto f = MeasureFeatures::of(mu);
    for (const auto& x : probe_states) {
      const Eigen::MatrixXd s = model.diffusion({x.data(), static_cast<std::size_t>(x.size())}, f);
      const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(s).singularValues();
      rep.kappa1_hat = std::min(rep.kappa1_hat, sv.minCoeff());
      rep.kappa2_hat = std::max(rep.kappa2_hat, sv.maxCoeff());
    }
  }
  constexpr double slack = 1e-9;
  rep.pass = model.kappa1 <= rep.kappa1_hat + slack && rep.kappa2_hat <= model.kappa2 + slack;
  return rep;
}

H2Report check_H2(const DDSDEModel& model, std::uint64_t seed, std::size_t n_probes,
                  std::size_t support_size) {
  const NoiseSource noise({derive_seed(seed, stream_tag::kHypothesis), 2});
  std::vector<Eigen::VectorXd> states;
  std::vector<EmpiricalMeasure> measures;
  for (std::size_t i = 0; i < n_probes; ++i) {
    const auto t = static_cast<std::uint32_t>(i);
    states.push_back(random_state(noise, t, 0, model.dim));
    measures.push_back(random_probe_measure(noise, t, 1, model.dim, support_size));
  }
  return check_H2(model, states, measures);
}

KalmanRank kalman_rank(const Eigen::MatrixXd& matA, const Eigen::MatrixXd& matB) {
  const Eigen::Index m = matA.rows();
  if (matA.cols() != m || matB.rows() != m || m == 0) {
    throw std::invalid_argument("kalman_rank: A must be m x m and B m x d");
  }
  const Eigen::Index d = matB.cols();
  Eigen::MatrixXd k(m, m * d);
  Eigen::MatrixXd block = matB;
  for (Eigen::Index j = 0; j < m; ++j) {
    k.middleCols(j * d, d) = block;
    block = matA * block;
  }
  KalmanRank out;
  if (k.size() > 0) {
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(k).singularValues();
    const double smax = sv.size() ? sv.maxCoeff() : 0.0;
    if (smax > 0.0) {
      const double tol = 1e-10 * smax;
      for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv[i] > tol) ++out.rank;
      }
    }
  }
  out.pass = out.rank == static_cast<std::size_t>(m);
  return out;
}

double d3_margin(const SHSModel& model, const D3Certificate& c, std::span<const double> x,
                 std::span<const double> y, const EmpiricalMeasure& mu,
                 const EmpiricalMeasure& nu) {
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  const auto m = static_cast<Eigen::Index>(model.m);
  const auto d = static_cast<Eigen::Index>(model.d);
  Eigen::VectorXd delta(n);
  for (Eigen::Index i = 0; i < n; ++i) delta[i] = x[i] - y[i];
  const Eigen::VectorXd d1 = delta.head(m);
  const Eigen::VectorXd d2 = delta.tail(d);
  const auto fm = MeasureFeatures::of(mu);
  const auto fn = MeasureFeatures::of(nu);
  Eigen::VectorXd zx(d), zy(d);
  model.zfield.eval(x, fm.mean, {zx.data(), model.d});
  model.zfield.eval(y, fn.mean, {zy.data(), model.d});
  const Eigen::VectorXd a = c.r * c.r * d1 + c.r * c.r0 * model.matB * d2;
  const Eigen::VectorXd b = model.matA * d1 + model.matB * d2;
  const Eigen::VectorXd g = d2 + c.r * c.r0 * model.matB.transpose() * d1;
  const double lhs = a.dot(b) + (zx - zy).dot(g);
  const double w2 = wasserstein2_exact(mu, nu);
  const double rhs = -c.theta1 * delta.squaredNorm() + c.theta2 * w2 * w2;
  return lhs - rhs;
}

double d3_form_max_eigenvalue(const SHSModel& model, double r, double r0, double theta1,
                              double theta2) {
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  const auto m = static_cast<Eigen::Index>(model.m);
  const auto d = static_cast<Eigen::Index>(model.d);
  // Linear maps of delta = (delta1, delta2).
  Eigen::MatrixXd p1 = Eigen::MatrixXd::Zero(m, n);  // r^2 d1 + r r0 B d2
  p1.leftCols(m) = r * r * Eigen::MatrixXd::Identity(m, m);
  p1.rightCols(d) = r * r0 * model.matB;
  Eigen::MatrixXd p2(m, n);  // A d1 + B d2
  p2 << model.matA, model.matB;
  Eigen::MatrixXd p3 = Eigen::MatrixXd::Zero(d, n);  // d2 + r r0 B^T d1
  p3.leftCols(m) = r * r0 * model.matB.transpose();
  p3.rightCols(d) = Eigen::MatrixXd::Identity(d, d);

  const Eigen::MatrixXd dd = p1.transpose() * p2 + p3.transpose() * model.zfield.state_gain;
  const Eigen::MatrixXd dv = p3.transpose() * model.zfield.mean_gain;  // delta^T dv v
  Eigen::MatrixXd form = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  form.topLeftCorner(n, n) = 0.5 * (dd + dd.transpose()) + theta1 * Eigen::MatrixXd::Identity(n, n);
  form.topRightCorner(n, n) = 0.5 * dv;
  form.bottomLeftCorner(n, n) = 0.5 * dv.transpose();
  form.bottomRightCorner(n, n) = -theta2 * Eigen::MatrixXd::Identity(n, n);
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(form, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .maxCoeff();
}

double psi_equivalence_constant(const SHSModel& model, double r, double r0) {
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  const auto m = static_cast<Eigen::Index>(model.m);
  const auto d = static_cast<Eigen::Index>(model.d);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  p.topLeftCorner(m, m) = 0.5 * r * r * Eigen::MatrixXd::Identity(m, m);
  p.bottomRightCorner(d, d) = 0.5 * Eigen::MatrixXd::Identity(d, d);
  p.topRightCorner(m, d) = 0.5 * r * r0 * model.matB;
  p.bottomLeftCorner(d, m) = 0.5 * r * r0 * model.matB.transpose();
  const Eigen::VectorXd ev =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(p, Eigen::EigenvaluesOnly).eigenvalues();
  if (!(ev.minCoeff() > 0.0)) {
    throw std::invalid_argument("psi form is not positive definite; check |r0| < 1/|B|");
  }
  return std::max({ev.maxCoeff(), 1.0 / ev.minCoeff(), 1.0});
}

std::vector<double> theta_grid() {
  std::vector<double> g(64);
  const double lo = std::log(1e-3);
  const double hi = std::log(10.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / 63.0);
  }
  return g;
}

namespace {

void require_r0_in_range(const SHSModel& model, double r, double r0) {
  const double bnorm = model.matB.operatorNorm();
  if (!(r > 0.0)) throw std::invalid_argument("D3: r must be positive");
  if (!(std::abs(r0) * bnorm < 1.0)) {
    std::ostringstream os;
    os << "D3: r0 out of range, |r0| < 1/|B| = " << (bnorm > 0 ? 1.0 / bnorm : 0.0)
       << " required (r0=" << r0 << ")";
    throw std::invalid_argument(os.str());
  }
}

constexpr double kFormTolerance = 1e-12;

}  // namespace

std::optional<D3Certificate> certify_D3_at(const SHSModel& model, double r, double r0) {
  require_r0_in_range(model, r, r0);
  const auto grid = theta_grid();
  std::optional<D3Certificate> best;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    // Feasible theta1 form a down-set for fixed theta2; scan upward.
    std::optional<std::size_t> top;
    for (std::size_t i = j + 1; i < grid.size(); ++i) {
      if (d3_form_max_eigenvalue(model, r, r0, grid[i], grid[j]) <= kFormTolerance) {
        top = i;
      } else {
        break;
      }
    }
    if (!top) continue;
    const double gap = grid[*top] - grid[j];
    if (!best || gap > best->theta1 - best->theta2) {
      best = D3Certificate{r, r0, grid[*top], grid[j], 1.0};
    }
  }
  if (best) best->psi_constant = psi_equivalence_constant(model, r, r0);
  return best;
}

std::optional<D3Certificate> certify_D3(const SHSModel& model) {
  const double bnorm = model.matB.operatorNorm();
  std::optional<D3Certificate> best;
  for (double r : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    for (int k = -9; k <= 9; ++k) {
      const double r0 = bnorm > 0.0 ? k / (10.0 * bnorm) : 0.0;
      if (bnorm == 0.0 && k != 0) continue;
      auto cert = certify_D3_at(model, r, r0);
      if (cert && (!best || cert->contraction_rate() > best->contraction_rate())) best = cert;
    }
  }
  return best;
}

D3Report check_D3(const SHSModel& model, double r, double r0, std::uint64_t seed,
                  std::size_t n_trials, std::size_t support_size) {
  if (n_trials == 0) throw std::invalid_argument("check_D3: n_trials must be >= 1");
  D3Report rep;
  rep.certified = certify_D3_at(model, r, r0);
  D3Certificate used;
  if (rep.certified) {
    used = *rep.certified;
  } else {
    const auto grid = theta_grid();
    used = D3Certificate{r, r0, grid[1], grid[0], psi_equivalence_constant(model, r, r0)};
  }
  const std::size_t n = model.state_dim();
  const NoiseSource noise({derive_seed(seed, stream_tag::kHypothesis), 3});
  std::vector<Sample> samples(n_trials);
  parallel_for(n_trials, [&](std::size_t i) {
    const auto t = static_cast<std::uint32_t>(i);
    const auto x = random_state(noise, t, 0, n);
    const auto y = random_state(noise, t, 1, n);
    const auto mu = random_probe_measure(noise, t, 2, n, support_size);
    const auto nu = random_probe_measure(noise, t, 3, n, support_size);
    samples[i] = {d3_margin(model, used, {x.data(), n}, {y.data(), n}, mu, nu), concat(x, y)};
  });
  rep.sampled = reduce_samples("D3", std::move(samples), kHypothesisTolerance);
  return rep;
}

}  // namespace mdplab

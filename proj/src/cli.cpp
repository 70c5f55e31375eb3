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

#include "mdplab/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "mdplab/csv.hpp"
#include "mdplab/experiments.hpp"
#include "mdplab/functionals.hpp"
#include "mdplab/integrator.hpp"
#include "mdplab/models.hpp"
#include "mdplab/parallel.hpp"

#ifndef MDPLAB_VERSION
#define MDPLAB_VERSION "0.0.0"
#endif

namespace mdplab::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kInvariantTag = 0x2001;
constexpr std::uint64_t kVarianceTag = 0x2002;
// check_H2 evaluates every state/measure combination.
constexpr std::size_t kH2Probes = 64;

const std::vector<std::string> kCommands = {"check",       "simulate",    "invariant",
                                            "variance",    "contraction", "pathwise",
                                            "mdp-tail",    "equivalence", "probe"};

Json invariant_defaults(std::size_t n) {
  return Json{{"n_particles", n}, {"t_burn", 20.0}, {"t_avg", 20.0}, {"dt", 0.01}};
}

Json horizon_ladder(std::initializer_list<double> ts) {
  Json a = Json::array();
  for (double t : ts) a.push_back(t);
  return a;
}

Json model_defaults(const std::string& name) {
  if (name == "mean_field_ou") {
    return Json{{"name", name}, {"theta", 1.0}, {"eta", 0.5}, {"sigma0", 1.0}, {"dim", 1}};
  }
  if (name == "shs_linear") {
    return Json{{"name", name}, {"gamma", 1.0}, {"k", 1.0}, {"eps_int", 0.1}, {"sigma0", 1.0}};
  }
  throw ConfigError("model.name: unknown model '" + name + "' (expected mean_field_ou or shs_linear)");
}

Json experiment_defaults(const std::string& command) {
  Json d{{"name", command}};
  if (command == "check") {
    d["trials"] = 10000;
    d["support_size"] = 8;
    d["observable"] = "identity";
  } else if (command == "simulate") {
    d["n_particles"] = 1000;
    d["T"] = 1.0;
    d["dt"] = 0.01;
    d["init"] = "dirac(2)";
    d["track"] = Json::array({0});
  } else if (command == "invariant") {
    d.update(invariant_defaults(5000));
  } else if (command == "variance") {
    d["observable"] = "identity";
    d["T"] = 2000.0;
    d["dt"] = 0.01;
    d["tau"] = 20.0;
    d["replicas"] = 8;
    d["invariant"] = invariant_defaults(5000);
  } else if (command == "contraction") {
    d["horizons"] = horizon_ladder({0, 0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4, 4.5, 5});
    d["n_particles"] = 5000;
    d["dt"] = 0.01;
    d["init"] = "dirac(2)";
    d["invariant"] = invariant_defaults(5000);
  } else if (command == "pathwise") {
    d["n_pairs"] = 256;
    d["T"] = 5.0;
    d["dt"] = 0.005;
    d["n_particles"] = 4096;
    d["init"] = "dirac(2)";
    d["invariant"] = invariant_defaults(20000);
  } else if (command == "mdp-tail") {
    d["observable"] = "identity";
    d["y"] = 0.5;
    d["kappa"] = 0.75;
    d["horizons"] = horizon_ladder({50, 100, 200});
    d["replicas"] = 100000;
    d["n_particles"] = 1000;
    d["dt"] = 0.01;
    d["init"] = "dirac(2)";
    d["vbar"] = nullptr;
    d["mu_bar_A"] = nullptr;
    d["variance"] = Json{{"T", 2000.0}, {"dt", 0.01}, {"tau", 20.0}, {"replicas", 8}};
    d["invariant"] = invariant_defaults(5000);
  } else if (command == "equivalence") {
    d["observable"] = "identity";
    d["epsilon"] = 0.05;
    d["kappa"] = 0.75;
    d["horizons"] = horizon_ladder({50, 100, 200});
    d["replicas"] = 100000;
    d["n_particles"] = 1000;
    d["dt"] = 0.01;
    d["init"] = "dirac(2)";
    d["invariant"] = invariant_defaults(5000);
  } else if (command == "probe") {
    d["kind"] = "abs";
    d["alpha"] = 0.5;
    d["p"] = 2.0;
    d["deltas"] = horizon_ladder({0.1});
    d["horizons"] = horizon_ladder({20, 40});
    d["replicas"] = 10000;
    d["n_particles"] = 20000;
    d["dt"] = 0.01;
    d["init"] = "dirac(2)";
    d["invariant"] = invariant_defaults(20000);
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  return d;
}

const char* type_name(const Json& j) {
  if (j.is_number()) return "a number";
  if (j.is_string()) return "a string";
  if (j.is_array()) return "an array";
  if (j.is_object()) return "an object";
  if (j.is_boolean()) return "a boolean";
  return "null";
}

// Overlays `given` on `defaults`, rejecting keys the defaults do not name.
Json resolve(const Json& given, const Json& defaults, const std::string& where) {
  if (given.is_null()) return defaults;
  if (!given.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : given.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown key '" + where + "." + key + "'");
  }
  Json out = Json::object();
  for (const auto& [key, def] : defaults.items()) {
    const std::string path = where + "." + key;
    if (!given.contains(key)) {
      out[key] = def;
      continue;
    }
    const Json& v = given.at(key);
    if (def.is_object()) {
      out[key] = resolve(v, def, path);
    } else if (def.is_null()) {
      if (!v.is_null() && !v.is_number()) throw ConfigError(path + ": expected a number or null");
      out[key] = v;
    } else if ((def.is_number() && !v.is_number()) || (def.is_string() && !v.is_string()) ||
               (def.is_array() && !v.is_array())) {
      throw ConfigError(path + ": expected " + std::string(type_name(def)) + ", got " + type_name(v));
    } else {
      out[key] = v;
    }
  }
  return out;
}

// ---- typed field access with validation ----

struct Fields {
  const Json& j;
  std::string where;

  std::string path(const std::string& key) const { return where + "." + key; }

  double number(const std::string& key) const {
    const Json& v = j.at(key);
    if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path(key) + ": must be finite");
    return x;
  }
  double positive(const std::string& key) const {
    const double x = number(key);
    if (!(x > 0.0)) throw ConfigError(path(key) + ": must be > 0");
    return x;
  }
  double nonnegative(const std::string& key) const {
    const double x = number(key);
    if (!(x >= 0.0)) throw ConfigError(path(key) + ": must be >= 0");
    return x;
  }
  std::size_t count(const std::string& key) const {
    const Json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 1) {
      throw ConfigError(path(key) + ": must be a positive integer");
    }
    return v.get<std::size_t>();
  }
  std::optional<double> optional_number(const std::string& key) const {
    if (j.at(key).is_null()) return std::nullopt;
    return number(key);
  }
  std::string text(const std::string& key) const {
    const Json& v = j.at(key);
    if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
    return v.get<std::string>();
  }
  std::vector<double> numbers(const std::string& key) const {
    const Json& v = j.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(path(key) + ": expected a nonempty array");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(path(key) + ": entries must be numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  std::vector<double> ladder(const std::string& key, double dt, bool allow_zero) const {
    const auto ts = numbers(key);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (!(allow_zero ? ts[i] >= 0.0 : ts[i] > 0.0)) {
        throw ConfigError(path(key) + ": horizons must be " + (allow_zero ? "nonnegative" : "positive"));
      }
      if (i > 0 && !(ts[i] > ts[i - 1])) throw ConfigError(path(key) + ": must be strictly increasing");
      horizon_on_grid(key, ts[i], dt);
    }
    return ts;
  }
  void horizon_on_grid(const std::string& key, double t, double dt) const {
    try {
      step_count(t, dt);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }
  Fields sub(const std::string& key) const { return Fields{j.at(key), path(key)}; }
};

// "name(arg, ...)" -> name and argument list.
std::pair<std::string, std::vector<std::string>> split_call(const std::string& s,
                                                            const std::string& where) {
  const auto open = s.find('(');
  if (open == std::string::npos) return {s, {}};
  if (s.back() != ')') throw ConfigError(where + ": malformed '" + s + "'");
  std::vector<std::string> args;
  std::stringstream ss(s.substr(open + 1, s.size() - open - 2));
  std::string a;
  while (std::getline(ss, a, ',')) {
    const auto b = a.find_first_not_of(' ');
    const auto e = a.find_last_not_of(' ');
    args.push_back(b == std::string::npos ? "" : a.substr(b, e - b + 1));
  }
  return {s.substr(0, open), args};
}

double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError(where + ": '" + s + "' is not a number");
  }
  if (used != s.size() || !std::isfinite(v)) throw ConfigError(where + ": '" + s + "' is not a number");
  return v;
}

Observable parse_observable(const std::string& s, std::size_t dim, const std::string& where) {
  const auto [name, args] = split_call(s, where);
  if (name == "identity" && args.empty()) return identity_observable();
  if (name == "norm2" && args.empty()) return norm2_observable();
  if (name == "constant" && args.size() == 1) return constant_observable(parse_double(args[0], where));
  if (name == "coordinate" && args.size() == 1) {
    const double i = parse_double(args[0], where);
    if (i < 0 || i != std::floor(i) || i >= static_cast<double>(dim)) {
      throw ConfigError(where + ": coordinate index out of range for dimension " + std::to_string(dim));
    }
    return coordinate_observable(static_cast<std::size_t>(i));
  }
  throw ConfigError(where + ": unknown observable '" + s +
                    "' (expected identity, norm2, constant(c), coordinate(i))");
}

// Initial law: dirac(v) | dirac(v1,...,vD) | invariant | csv(path).
struct InitSpec {
  enum class Kind { dirac, invariant, csv } kind = Kind::dirac;
  std::optional<EmpiricalMeasure> measure;
};

InitSpec parse_init(const std::string& s, std::size_t dim, const std::string& where) {
  const auto [name, args] = split_call(s, where);
  InitSpec spec;
  if (name == "invariant" && args.empty()) {
    spec.kind = InitSpec::Kind::invariant;
    return spec;
  }
  if (name == "dirac" && (args.size() == 1 || args.size() == dim)) {
    std::vector<double> point(dim);
    for (std::size_t i = 0; i < dim; ++i) point[i] = parse_double(args[args.size() == 1 ? 0 : i], where);
    spec.measure = EmpiricalMeasure::dirac(point);
    return spec;
  }
  if (name == "csv" && args.size() == 1) {
    std::ifstream in(args[0]);
    if (!in) throw ConfigError(where + ": cannot open '" + args[0] + "'");
    try {
      spec.measure = read_measure_csv(in);
    } catch (const std::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
    if (spec.measure->dim() != dim) throw ConfigError(where + ": cloud dimension does not match model");
    spec.kind = InitSpec::Kind::csv;
    return spec;
  }
  throw ConfigError(where + ": unknown initial law '" + s +
                    "' (expected dirac(v), dirac(v1,...), invariant, csv(path))");
}

std::shared_ptr<const Model> build_model(const Json& m) {
  const Fields f{m, "model"};
  const std::string name = f.text("name");
  try {
    if (name == "mean_field_ou") {
      return std::make_shared<const Model>(
          make_mean_field_ou(f.positive("theta"), f.nonnegative("eta"), f.positive("sigma0"), f.count("dim")));
    }
    SHSModel shs = make_shs_linear(f.positive("gamma"), f.positive("k"), f.nonnegative("eps_int"),
                                   f.positive("sigma0"));
    shs.certificate = certify_D3(shs);
    return std::make_shared<const Model>(std::move(shs));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

struct InvariantParams {
  std::size_t n = 0;
  double t_burn = 0.0;
  double t_avg = 0.0;
  double dt = 0.0;
};

InvariantParams parse_invariant(const Fields& f) {
  InvariantParams p{f.count("n_particles"), f.positive("t_burn"), f.positive("t_avg"), f.positive("dt")};
  f.horizon_on_grid("t_burn", p.t_burn, p.dt);
  f.horizon_on_grid("t_avg", p.t_avg, p.dt);
  return p;
}

InvariantEstimate run_invariant(const std::shared_ptr<const Model>& model, const InvariantParams& p,
                                std::uint64_t seed) {
  return estimate_invariant(model, p.n, p.t_burn, p.t_avg, p.dt, derive_seed(seed, kInvariantTag));
}

const EmpiricalMeasure& initial_law(const InitSpec& init, const InvariantEstimate& inv) {
  return init.kind == InitSpec::Kind::invariant ? inv.cloud : *init.measure;
}

double observable_mean(const Observable& A, const EmpiricalMeasure& mu) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += A(mu.atom(i));
  return s / static_cast<double>(mu.size());
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::string witness_text(const std::vector<double>& w) {
  std::vector<std::string> cells;
  for (double v : w) cells.push_back(format_number(v));
  return join(cells, ";");
}

const std::vector<std::string> kReportHeader = {"hypothesis", "trials", "worst_margin",
                                                "tolerance",  "pass",   "witness"};

void report_row(CsvTable& t, const std::string& name, std::size_t trials, double margin,
                double tolerance, bool pass, const std::vector<double>& witness) {
  t.row({name, std::to_string(trials), format_number(margin), format_number(tolerance), bool_text(pass),
         witness_text(witness)});
}

void report_row(CsvTable& t, const HypothesisReport& r) {
  report_row(t, r.hypothesis, r.trials, r.worst_margin, r.tolerance, r.pass(), r.witness);
}

const std::vector<std::string> kTailHeader = {"t",          "replicas",    "hits",
                                              "p_hat",      "wilson_low",  "wilson_high",
                                              "norm_log_tail", "saturated"};

std::vector<std::string> tail_cells(const TailEstimate& e) {
  return {format_number(e.t),          std::to_string(e.replicas),    std::to_string(e.hits),
          format_number(e.p_hat),      format_number(e.wilson_low),   format_number(e.wilson_high),
          format_number(e.normalized_log_tail), e.saturated ? "1" : "0"};
}

OutputFile to_output(const std::string& name, const CsvTable& t) { return {name, t.text(), t.rows()}; }

// ---- per-command planners ----

Job plan_check(std::shared_ptr<const Model> model, const Fields& f, std::uint64_t seed) {
  const std::size_t trials = f.count("trials");
  const std::size_t support = f.count("support_size");
  const Observable A = parse_observable(f.text("observable"), state_dim(*model), f.path("observable"));
  return [=]() {
    CsvTable t(kReportHeader);
    if (const auto* dd = std::get_if<DDSDEModel>(model.get())) {
      report_row(t, check_H1(*dd, seed, trials, support));
      const std::size_t h2_probes = std::min<std::size_t>(trials, kH2Probes);
      const H2Report h2 = check_H2(*dd, seed, h2_probes, support);
      report_row(t, "H2", h2_probes * h2_probes, std::max(dd->kappa1 - h2.kappa1_hat, h2.kappa2_hat - dd->kappa2),
                 kHypothesisTolerance, h2.pass, {h2.kappa1_hat, h2.kappa2_hat});
      const auto cls = check_observable_class(A, dd->dim, seed, trials);
      report_row(t, cls.report);
    } else {
      const auto& shs = std::get<SHSModel>(*model);
      const KalmanRank kr = kalman_rank(shs.matA, shs.matB);
      report_row(t, "kalman_rank", 1, static_cast<double>(shs.m) - static_cast<double>(kr.rank), 0.0,
                 kr.pass, {static_cast<double>(kr.rank)});
      const double r = shs.certificate ? shs.certificate->r : 1.0;
      const double r0 = shs.certificate ? shs.certificate->r0 : 0.0;
      const D3Report d3 = check_D3(shs, r, r0, seed, trials, support);
      report_row(t, "D3", d3.sampled.trials, d3.sampled.worst_margin, d3.sampled.tolerance, d3.pass(),
                 d3.sampled.witness);
      if (d3.certified) {
        const auto& c = *d3.certified;
        report_row(t, "D3_certificate", 1, c.theta2 - c.theta1, 0.0, true,
                   {c.r, c.r0, c.theta1, c.theta2, c.psi_constant});
      } else {
        report_row(t, "D3_certificate", 1, std::numeric_limits<double>::infinity(), 0.0, false, {r, r0});
      }
    }
    return std::vector<OutputFile>{to_output("check.csv", t)};
  };
}

Job plan_simulate(std::shared_ptr<const Model> model, const Fields& f, std::uint64_t seed) {
  const std::size_t n = f.count("n_particles");
  const double dt = f.positive("dt");
  const double T = f.nonnegative("T");
  f.horizon_on_grid("T", T, dt);
  const InitSpec init = parse_init(f.text("init"), state_dim(*model), f.path("init"));
  if (init.kind == InitSpec::Kind::invariant) {
    throw ConfigError(f.path("init") + ": simulate needs an explicit initial law");
  }
  std::vector<std::size_t> track;
  for (const auto& e : f.j.at("track")) {
    if (!e.is_number_integer() || e.get<long long>() < 0 || e.get<std::size_t>() >= n) {
      throw ConfigError(f.path("track") + ": indices must lie in [0, n_particles)");
    }
    track.push_back(e.get<std::size_t>());
  }
  return [=]() {
    const EmpiricalMeasure cloud = resample(*init.measure, n, seed, 0);
    const ParticleSystem ps(model, cloud.points(), {derive_seed(seed, stream_tag::kParticles), 0});
    const Simulation sim = simulate(ps, T, dt, track);
    const std::size_t dim = ps.dim();
    std::vector<std::string> header = {"particle", "t"};
    for (std::size_t k = 0; k < dim; ++k) header.push_back("x" + std::to_string(k));
    CsvTable paths(header);
    for (std::size_t j = 0; j < track.size(); ++j) {
      const Path& p = sim.tracked[j];
      for (std::size_t k = 0; k < p.size(); ++k) {
        std::vector<std::string> cells = {std::to_string(track[j]), format_number(p.times[k])};
        for (double v : p.at(k)) cells.push_back(format_number(v));
        paths.row(std::move(cells));
      }
    }
    std::ostringstream final_cloud;
    write_measure_csv(final_cloud, sim.final_state.empirical());
    return std::vector<OutputFile>{to_output("simulate_paths.csv", paths),
                                   {"simulate_final.csv", final_cloud.str(), sim.final_state.size()}};
  };
}

Job plan_invariant(std::shared_ptr<const Model> model, const Fields& f, std::uint64_t seed) {
  const InvariantParams ip = parse_invariant(f);
  return [=]() {
    const InvariantEstimate inv = run_invariant(model, ip, seed);
    std::ostringstream cloud;
    write_measure_csv(cloud, inv.cloud);
    CsvTable res({"n_particles", "t_burn", "t_avg", "dt", "residual", "residual_exact"});
    res.row({std::to_string(ip.n), format_number(ip.t_burn), format_number(ip.t_avg), format_number(ip.dt),
             format_number(inv.residual), bool_text(inv.residual_exact)});
    return std::vector<OutputFile>{{"invariant.csv", cloud.str(), inv.cloud.size()},
                                   to_output("invariant_residual.csv", res)};
  };
}

VarianceParams parse_variance(const Fields& f, std::uint64_t seed) {
  VarianceParams vp;
  vp.horizon = f.positive("T");
  vp.dt = f.positive("dt");
  vp.tau = f.positive("tau");
  vp.replicas = f.count("replicas");
  vp.seed = derive_seed(seed, kVarianceTag);
  f.horizon_on_grid("T", vp.horizon, vp.dt);
  if (vp.tau > vp.horizon / 10.0) throw ConfigError(f.path("tau") + ": must satisfy tau <= T/10");
  return vp;
}

Job plan_variance(std::shared_ptr<const Model> model, const Fields& f, std::uint64_t seed) {
  const Observable A = parse_observable(f.text("observable"), state_dim(*model), f.path("observable"));
  const VarianceParams vp = parse_variance(f, seed);
  const InvariantParams ip = parse_invariant(f.sub("invariant"));
  return [=]() {
    const InvariantEstimate inv = run_invariant(model, ip, seed);
    const VarianceEstimate v = asymptotic_variance(*model, A, inv.cloud, vp);
    CsvTable t({"vbar", "stderr", "tau", "dt", "T", "replicas"});
    t.row({format_number(v.vbar), format_number(v.std_error), format_number(v.truncation_tau),
           format_number(v.dt), format_number(v.horizon), std::to_string(v.replicas)});
    return std::vector<OutputFile>{to_output("variance.csv", t)};
  };
}

Job plan_contraction(std::shared_ptr<const Model> model, const Fields& f, std::uint64_t seed) {
  ContractionParams cp;
  cp.dt = f.positive("dt");
  cp.n_particles = f.count("n_particles");
  cp.horizons = f.ladder("horizons", cp.dt, true);
  cp.seed = seed;
  const InitSpec init = parse_init(f.text("init"), state_dim(*model), f.path("init"));
  const InvariantParams ip = parse_invariant(f.sub("invariant"));
  if (ip.n != cp.n_particles) {
    throw ConfigError(f.path("invariant.n_particles") + ": must equal " + f.path("n_particles"));
  }
  try {
    contraction_rate(*model);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return [=]() {
    const InvariantEstimate inv = run_invariant(model, ip, seed);
    const auto rows = contraction_experiment(model, initial_law(init, inv), inv.cloud, cp);
    CsvTable t({"t", "observed", "bound", "ratio"});
    for (const auto& r : rows) {
      t.row({format_number(r.t), format_number(r.observed), format_number(r.bound), format_number(r.ratio)});
    }
    return std::vector<OutputFile>{to_output("contraction.csv", t)};
  };
}

Job plan_pathwise(std::shared_ptr<const Model> model, const Fields& f, std::uint64_t seed) {
  PathwiseParams pp;
  pp.n_pairs = f.count("n_pairs");
  pp.dt = f.positive("dt");
  pp.horizon = f.positive("T");
  pp.n_particles = f.count("n_particles");
  pp.seed = seed;
  f.horizon_on_grid("T", pp.horizon, pp.dt);
  const auto* dd = std::get_if<DDSDEModel>(model.get());
  if (!dd || dd->sigma_class == SigmaClass::general) {
    throw ConfigError("model: pathwise requires a DDSDE model with constant or measure_only diffusion");
  }
  const InitSpec init = parse_init(f.text("init"), state_dim(*model), f.path("init"));
  const InvariantParams ip = parse_invariant(f.sub("invariant"));
  return [=]() {
    const InvariantEstimate inv = run_invariant(model, ip, seed);
    const HypothesisReport rep = pathwise_contraction_check(model, initial_law(init, inv), inv.cloud, pp);
    CsvTable t(kReportHeader);
    report_row(t, rep);
    return std::vector<OutputFile>{to_output("pathwise.csv", t)};
  };
}

Job plan_mdp_tail(std::shared_ptr<const Model> model, const Fields& f, std::uint64_t seed) {
  const Observable A = parse_observable(f.text("observable"), state_dim(*model), f.path("observable"));
  MdpTailParams mp;
  mp.thresholds = {f.number("y")};
  mp.kappa = f.number("kappa");
  if (!scaling_check(mp.kappa)) {
    throw ConfigError(f.path("kappa") + ": scaling requires 1/2 < kappa < 1 (got " +
                      format_number(mp.kappa) + ")");
  }
  mp.dt = f.positive("dt");
  mp.horizons = f.ladder("horizons", mp.dt, false);
  mp.replicas = f.count("replicas");
  mp.n_particles = f.count("n_particles");
  mp.seed = seed;
  const std::optional<double> vbar = f.optional_number("vbar");
  if (vbar && !(*vbar > 0.0)) throw ConfigError(f.path("vbar") + ": must be > 0");
  const std::optional<double> mu_bar_A = f.optional_number("mu_bar_A");
  const VarianceParams vp = parse_variance(f.sub("variance"), seed);
  const InitSpec init = parse_init(f.text("init"), state_dim(*model), f.path("init"));
  const InvariantParams ip = parse_invariant(f.sub("invariant"));
  return [=]() mutable {
    const InvariantEstimate inv = run_invariant(model, ip, seed);
    mp.vbar = vbar ? *vbar : asymptotic_variance(*model, A, inv.cloud, vp).vbar;
    if (!(mp.vbar > 0.0)) throw std::runtime_error("mdp-tail: estimated vbar is not positive");
    mp.mu_bar_A = mu_bar_A ? *mu_bar_A : observable_mean(A, inv.cloud);
    const auto curves = mdp_tail_experiment(model, A, initial_law(init, inv), mp);
    std::vector<std::string> header = kTailHeader;
    header.push_back("rate8");
    header.push_back("rate4");
    CsvTable t(header);
    for (const auto& c : curves) {
      for (const auto& e : c.rows) {
        auto cells = tail_cells(e);
        cells.push_back(format_number(c.rate8));
        cells.push_back(format_number(c.rate4));
        t.row(std::move(cells));
      }
    }
    return std::vector<OutputFile>{to_output("mdp-tail.csv", t)};
  };
}

Job plan_equivalence(std::shared_ptr<const Model> model, const Fields& f, std::uint64_t seed) {
  const Observable A = parse_observable(f.text("observable"), state_dim(*model), f.path("observable"));
  EquivalenceParams ep;
  ep.epsilon = f.positive("epsilon");
  ep.kappa = f.number("kappa");
  if (!scaling_check(ep.kappa)) {
    throw ConfigError(f.path("kappa") + ": scaling requires 1/2 < kappa < 1 (got " +
                      format_number(ep.kappa) + ")");
  }
  ep.dt = f.positive("dt");
  ep.horizons = f.ladder("horizons", ep.dt, false);
  ep.replicas = f.count("replicas");
  ep.n_particles = f.count("n_particles");
  ep.seed = seed;
  const InitSpec init = parse_init(f.text("init"), state_dim(*model), f.path("init"));
  const InvariantParams ip = parse_invariant(f.sub("invariant"));
  return [=]() {
    const InvariantEstimate inv = run_invariant(model, ip, seed);
    const auto rows = exp_equivalence_experiment(model, A, initial_law(init, inv), inv.cloud, ep);
    CsvTable t(kTailHeader);
    for (const auto& e : rows) t.row(tail_cells(e));
    return std::vector<OutputFile>{to_output("equivalence.csv", t)};
  };
}

Job plan_probe(std::shared_ptr<const Model> model, const Fields& f, std::uint64_t seed) {
  ProbeParams pp;
  const std::string kind = f.text("kind");
  if (kind == "abs") {
    pp.spec.kind = ProbeKind::abs;
  } else if (kind == "hoelder") {
    pp.spec.kind = ProbeKind::hoelder;
  } else if (kind == "logmod") {
    pp.spec.kind = ProbeKind::logmod;
  } else if (kind == "supexp") {
    pp.spec.kind = ProbeKind::supexp;
  } else {
    throw ConfigError(f.path("kind") + ": unknown probe kind '" + kind + "' (expected abs, hoelder, logmod, supexp)");
  }
  pp.spec.alpha = f.number("alpha");
  if (!(pp.spec.alpha > 0.0 && pp.spec.alpha < 1.0)) throw ConfigError(f.path("alpha") + ": must lie in (0,1)");
  pp.spec.p = f.number("p");
  if (!(pp.spec.p > 1.0)) throw ConfigError(f.path("p") + ": must be > 1");
  pp.deltas = f.numbers("deltas");
  for (double d : pp.deltas) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw ConfigError(f.path("deltas") + ": entries must be >= 0");
  }
  pp.dt = f.positive("dt");
  pp.horizons = f.ladder("horizons", pp.dt, false);
  pp.replicas = f.count("replicas");
  pp.n_particles = f.count("n_particles");
  pp.seed = seed;
  const InitSpec init = parse_init(f.text("init"), state_dim(*model), f.path("init"));
  const InvariantParams ip = parse_invariant(f.sub("invariant"));
  return [=]() {
    const InvariantEstimate inv = run_invariant(model, ip, seed);
    const auto rows = integrability_probe(model, initial_law(init, inv), inv.cloud, pp);
    CsvTable t({"kind", "delta", "T", "log_mean_exp", "saturated"});
    for (const auto& r : rows) {
      t.row({r.kind, format_number(r.delta), format_number(r.horizon), format_number(r.log_mean_exp),
             r.saturated ? "1" : "0"});
    }
    return std::vector<OutputFile>{to_output("probe.csv", t)};
  };
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.close();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

const std::vector<std::string>& commands() { return kCommands; }

std::optional<std::size_t> parse_threads(const std::string& text) {
  if (text == "auto") return std::nullopt;
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || v < 1) {
    throw ConfigError("threads: expected a positive integer or 'auto' (got '" + text + "')");
  }
  return static_cast<std::size_t>(v);
}

RunConfig parse_config(const std::string& text, const std::string& command) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  static const std::vector<std::string> top = {"version", "command", "model", "experiment",
                                               "seed",    "threads", "out_dir"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(top.begin(), top.end(), key) == top.end()) throw ConfigError("unknown key '" + key + "'");
  }
  if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end()) {
    throw ConfigError("unknown command '" + command + "'");
  }
  if (doc.contains("version") && !doc["version"].is_string()) throw ConfigError("version: expected a string");
  if (doc.contains("command") && doc["command"] != command) {
    throw ConfigError("command: config was written for '" + doc["command"].dump() + "', not '" + command + "'");
  }

  RunConfig cfg;
  cfg.command = command;
  const Json model_given = doc.value("model", Json::object());
  if (!model_given.is_object()) throw ConfigError("model: expected an object");
  const Json name = model_given.value("name", Json("mean_field_ou"));
  if (!name.is_string()) throw ConfigError("model.name: expected a string");
  cfg.model = resolve(model_given, model_defaults(name.get<std::string>()), "model");

  const Json exp_given = doc.value("experiment", Json::object());
  if (!exp_given.is_object()) throw ConfigError("experiment: expected an object");
  cfg.experiment = resolve(exp_given, experiment_defaults(command), "experiment");
  if (cfg.experiment["name"] != command) {
    throw ConfigError("experiment.name: '" + cfg.experiment["name"].get<std::string>() +
                      "' does not match command '" + command + "'");
  }

  if (doc.contains("seed")) {
    const Json& s = doc["seed"];
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      throw ConfigError("seed: expected an unsigned 64-bit integer");
    }
    cfg.seed = s.get<std::uint64_t>();
  }
  if (doc.contains("threads")) {
    const Json& t = doc["threads"];
    if (t.is_string()) {
      cfg.threads = parse_threads(t.get<std::string>());
    } else if (t.is_number_integer() && t.get<long long>() >= 1) {
      cfg.threads = t.get<std::size_t>();
    } else {
      throw ConfigError("threads: expected a positive integer or 'auto'");
    }
  }
  if (doc.contains("out_dir")) {
    if (!doc["out_dir"].is_string()) throw ConfigError("out_dir: expected a string");
    cfg.out_dir = doc["out_dir"].get<std::string>();
  }
  return cfg;
}

Json provenance(const RunConfig& config) {
  return Json{{"version", MDPLAB_VERSION},
              {"command", config.command},
              {"seed", config.seed},
              {"model", config.model},
              {"experiment", config.experiment}};
}

Job plan(const RunConfig& config) {
  const std::shared_ptr<const Model> model = build_model(config.model);
  const Fields f{config.experiment, "experiment"};
  const std::uint64_t seed = config.seed;
  const std::string& c = config.command;
  if (c == "check") return plan_check(model, f, seed);
  if (c == "simulate") return plan_simulate(model, f, seed);
  if (c == "invariant") return plan_invariant(model, f, seed);
  if (c == "variance") return plan_variance(model, f, seed);
  if (c == "contraction") return plan_contraction(model, f, seed);
  if (c == "pathwise") return plan_pathwise(model, f, seed);
  if (c == "mdp-tail") return plan_mdp_tail(model, f, seed);
  if (c == "equivalence") return plan_equivalence(model, f, seed);
  if (c == "probe") return plan_probe(model, f, seed);
  throw ConfigError("unknown command '" + c + "'");
}

std::vector<std::string> write_outputs(const RunConfig& config, const std::vector<OutputFile>& outputs) {
  const fs::path dir(config.out_dir);
  const std::string meta = provenance(config).dump(2) + "\n";
  std::vector<fs::path> finals;
  std::vector<fs::path> temps;
  try {
    fs::create_directories(dir);
    for (const auto& o : outputs) {
      for (const auto& [name, text] : {std::pair{o.name, o.text}, std::pair{o.name + ".meta.json", meta}}) {
        const fs::path target = dir / name;
        const fs::path tmp = dir / (name + ".tmp");
        temps.push_back(tmp);
        write_file(tmp, text);
        fs::rename(tmp, target);
        finals.push_back(target);
      }
    }
  } catch (...) {
    std::error_code ec;
    for (const auto& p : temps) fs::remove(p, ec);
    for (const auto& p : finals) fs::remove(p, ec);
    throw;
  }
  std::vector<std::string> written;
  for (const auto& p : finals) written.push_back(p.string());
  return written;
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-field diffusion experiments: simulation, contraction, and moderate deviations"};
  app.set_version_flag("--version", std::string(MDPLAB_VERSION));
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string threads;
  std::string format = "csv";
  for (const auto& name : kCommands) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "JSON run configuration or provenance sidecar")->required();
    sub->add_option("--seed", seed, "overrides the configured seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", threads, "worker threads: N or auto");
    sub->add_option("--format", format, "output format")->check(CLI::IsMember({"csv"}));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  RunConfig cfg;
  Job job;
  try {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + config_path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    cfg = parse_config(buf.str(), command);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!threads.empty()) {
      cfg.threads = parse_threads(threads);
    } else if (const char* env = std::getenv("MDPLAB_THREADS"); env && !cfg.threads) {
      cfg.threads = parse_threads(env);
    }
    job = plan(cfg);
  } catch (const std::exception& e) {
    err << "mdplab: " << e.what() << '\n';
    return kExitConfig;
  }

  set_thread_count(cfg.threads.value_or(0));
  try {
    const auto outputs = job();
    const auto written = write_outputs(cfg, outputs);
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      out << "wrote " << written[2 * i] << " (" << outputs[i].rows << " rows)\n";
    }
  } catch (const std::exception& e) {
    err << "mdplab: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace mdplab::cli

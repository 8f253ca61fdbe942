#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lgmjoint/archive.hpp"
#include "lgmjoint/fit.hpp"
#include "lgmjoint/oracle.hpp"
#include "lgmjoint/predict.hpp"
#include "lgmjoint/summaries.hpp"

namespace lgmjoint::verify {

struct SuiteResult {
  std::string name;
  bool pass = false;
  bool skipped = false;
  std::string details;
  double seconds = 0.0;
};

namespace detail {

struct Check {
  bool ok = true;
  std::ostringstream log;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      log << "FAILED: " << what << "; ";
    }
  }
  void note(const std::string& what) { log << what << "; "; }
};

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

/// Criterion-4 style scenario: gaussian marker (intercept + slope, random
/// intercept) shared as current value into an exponential hazard.
inline SimScenario cv_scenario(int n_subjects, std::uint64_t seed) {
  SimScenario sc;
  sc.seed = seed;
  sc.n_subjects = n_subjects;
  sc.visit_times = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5};
  sc.covariates.push_back({"x", SimCovariate::Bernoulli, 0.5, 1.0});
  SimLong sl;
  sl.response = "y";
  sl.family = Family::gaussian;
  sl.sigma_eps = 0.4;
  sl.fixed_terms = {Term{}, Term{{TermFactor{TermFactor::TimeVar, "time"}}}};
  sl.beta = {1.0, -0.5};
  sl.random_terms = {Term{}};
  sc.longitudinal.push_back(sl);
  SimSurv ss;
  ss.baseline = BaselineKind::exponential;
  ss.fixed_terms = {Term{}, Term{{TermFactor{TermFactor::Column, "x"}}}};
  ss.gamma = {-1.8, 0.4};
  sc.survival.push_back(ss);
  sc.assoc = {{AssocKind::cv}};
  sc.phi["CV_L1_S1"] = 0.5;
  sc.re_cov.resize(1, 1);
  sc.re_cov(0, 0) = 0.5 * 0.5;
  sc.cens_admin = 3.0;
  sc.grid_horizon = 3.0;
  return sc;
}

inline std::string cv_config(const char* strategy, const char* extra_controls = "") {
  std::string controls = std::string("{\"int_strategy\": \"") + strategy + "\"";
  if (extra_controls[0]) controls += std::string(", ") + extra_controls;
  controls += "}";
  return std::string(R"({
    "id": "id", "time": "time",
    "longitudinal": [
      {"response": "y", "family": "gaussian",
       "fixed": [["1"], ["time"]], "random": [["1"]]}
    ],
    "survival": [
      {"time": "stime", "event": "event_s1", "baseline": "exponential",
       "fixed": [["1"], ["x"]], "n_intervals": 25}
    ],
    "assoc": [["CV"]],
    "controls": )") +
         controls + "}";
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline SuiteResult suite_cox_equivalence(int threads) {
  auto t0 = std::chrono::steady_clock::now();
  detail::Check ck;

  SimScenario sc;
  sc.seed = 20240811;
  sc.n_subjects = 200;
  sc.covariates.push_back({"x", SimCovariate::Bernoulli, 0.5, 1.0});
  SimSurv ss;
  ss.baseline = BaselineKind::exponential;
  ss.fixed_terms = {Term{}, Term{{TermFactor{TermFactor::Column, "x"}}}};
  ss.gamma = {std::log(0.15), 0.7};
  sc.survival.push_back(ss);
  sc.cens_admin = 8.0;
  sc.grid_horizon = 8.0;
  SimData sim = simulate_joint(sc);

  // one interval per distinct exit time so event risk sets match exactly
  std::vector<double> exits = sim.survival.column_values("stime");
  std::vector<int> events;
  for (double e : sim.survival.column_values("event_s1")) events.push_back(e > 0.5 ? 1 : 0);
  std::vector<double> cuts = exits;
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  json cfg;
  cfg["id"] = "id";
  cfg["survival"] = json::array();
  json js{{"time", "stime"}, {"event", "event_s1"}, {"baseline", "rw1"},
          {"fix_baseline_prec", 1e-6}};
  js["fixed"] = json::array({json::array({"1"}), json::array({"x"})});
  js["cutpoints"] = cuts;
  cfg["survival"].push_back(js);
  cfg["controls"] = {{"int_strategy", "eb"},
                     {"prior_fixed", {{"mean", 0.0}, {"prec", 1e-8}}},
                     {"tolerance", 1e-6}};

  ModelSpec spec = parse_config(cfg.dump(), sim.survival, sim.survival);
  FitOptions opts;
  opts.threads = threads;
  JointFit fit = fit_model(spec, sim.survival, sim.survival, opts);
  double beta_engine = 0.0;
  for (int i = 0; i < fit.model.n_latent(); ++i)
    if (fit.model.layout.names[i] == "x_S1") beta_engine = fit.latent_marginal(i).mean;

  Eigen::MatrixXd X(sim.survival.n_rows(), 1);
  for (int r = 0; r < sim.survival.n_rows(); ++r) X(r, 0) = sim.survival.value(r, "x");
  CoxFit cox = cox_partial_fit(exits, events, X);

  double diff = std::abs(beta_engine - cox.beta[0]);
  ck.note("engine=" + detail::fmt(beta_engine) + " cox=" + detail::fmt(cox.beta[0]) +
          " diff=" + detail::fmt(diff));
  ck.expect(diff < 1e-3, "augmented-Poisson coefficient within 1e-3 of Breslow Cox");

  SuiteResult res{"cox-equivalence", ck.ok, false, ck.log.str(),
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  ck.expect(res.seconds < 30.0, "runtime under 30 s");
  res.pass = ck.ok;
  res.details = ck.log.str();
  return res;
}

inline SuiteResult suite_lmm_exactness(int threads) {
  (void)threads;
  auto t0 = std::chrono::steady_clock::now();
  detail::Check ck;

  SimScenario sc;
  sc.seed = 7;
  sc.n_subjects = 50;
  sc.visit_times = {0, 1, 2, 3};
  sc.covariates.push_back({"x", SimCovariate::Normal, 0.0, 1.0});
  SimLong sl;
  sl.response = "y";
  sl.family = Family::gaussian;
  sl.sigma_eps = 0.5;
  sl.fixed_terms = {Term{}, Term{{TermFactor{TermFactor::Column, "x"}}}};
  sl.beta = {2.0, 0.7};
  sl.random_terms = {Term{}};
  sc.longitudinal.push_back(sl);
  sc.re_cov.resize(1, 1);
  sc.re_cov(0, 0) = 0.8 * 0.8;
  sc.cens_admin = 100.0;
  sc.grid_horizon = 100.0;
  SimData sim = simulate_joint(sc);

  std::string cfg = R"({
    "id": "id", "time": "time",
    "longitudinal": [
      {"response": "y", "family": "gaussian", "fixed": [["1"], ["x"]], "random": [["1"]]}
    ],
    "controls": {"tolerance": 1e-9}
  })";
  ModelSpec spec = parse_config(cfg, sim.longitudinal, Table());
  AssembledModel model = assemble(spec, sim.longitudinal, Table());

  // hyperparameters pinned at the simulation truth
  Eigen::VectorXd omega(2);
  omega[0] = std::log(1.0 / (0.5 * 0.5));  // residual log-precision
  omega[1] = std::log(1.0 / 0.8);          // RE precision Cholesky: L = 1/sd
  GaussianApprox ga = gaussian_approx(model, omega, Eigen::VectorXd(), 1e-9);
  ck.expect(ga.n_iter <= 2, "gaussian likelihood converges in one Newton step");

  // dense generalized-least-squares oracle built from the raw table
  const Table& tab = sim.longitudinal;
  const int n_obs = tab.n_rows();
  const int n_sub = model.layout.n_subjects();
  const int p = 2 + n_sub;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n_obs, p);
  Eigen::VectorXd y(n_obs);
  for (int r = 0; r < n_obs; ++r) {
    M(r, 0) = 1.0;
    M(r, 1) = tab.value(r, "x");
    int sid = model.layout.subject_of(tab.raw(r, "id"));
    M(r, 2 + sid) = 1.0;
    y[r] = tab.value(r, "y");
  }
  double tau = std::exp(omega[0]);
  Eigen::VectorXd prior_diag(p);
  prior_diag[0] = spec.controls.prior_fixed_intercept.prec;
  prior_diag[1] = spec.controls.prior_fixed.prec;
  for (int i = 0; i < n_sub; ++i) prior_diag[2 + i] = std::exp(2.0 * omega[1]);
  Eigen::MatrixXd Q = tau * M.transpose() * M;
  Q += prior_diag.asDiagonal();
  Eigen::LLT<Eigen::MatrixXd> llt(Q);
  Eigen::VectorXd mean = llt.solve(tau * M.transpose() * y);
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(p, p));

  double max_mean_err = 0, max_sd_err = 0;
  for (int i = 0; i < p; ++i) {
    max_mean_err = std::max(max_mean_err, std::abs(ga.mode[i] - mean[i]));
    max_sd_err =
        std::max(max_sd_err, std::abs(std::sqrt(ga.marginal_var(i)) - std::sqrt(cov(i, i))));
  }
  ck.note("mean_err=" + detail::fmt(max_mean_err) + " sd_err=" + detail::fmt(max_sd_err));
  ck.expect(max_mean_err < 1e-8, "posterior means equal GLS within 1e-8");
  ck.expect(max_sd_err < 1e-6, "marginal sds equal closed form within 1e-6");

  SuiteResult res{"lmm-exactness", false, false, "",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  ck.expect(res.seconds < 5.0, "runtime under 5 s");
  res.pass = ck.ok;
  res.details = ck.log.str();
  return res;
}

inline SuiteResult suite_quadrature_equivalence(int threads) {
  auto t0 = std::chrono::steady_clock::now();
  detail::Check ck;

  // poisson random-intercept data, 3 subjects, one hyperparameter
  Table tab;
  {
    std::mt19937_64 rng(99);
    std::vector<double> id, time, y;
    double b_true[3] = {0.5, -0.6, 0.2};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 10; ++j) {
        std::poisson_distribution<long> pd(std::exp(1.5 + b_true[i]));
        id.push_back(i + 1);
        time.push_back(j);
        y.push_back(static_cast<double>(pd(rng)));
      }
    tab.add_column("id", id);
    tab.add_column("time", time);
    tab.add_column("y", y);
  }
  std::string cfg = R"({
    "id": "id", "time": "time",
    "longitudinal": [
      {"response": "y", "family": "poisson", "fixed": [["1"]], "random": [["1"]]}
    ],
    "controls": {"int_strategy": "grid", "grid_dz": 0.5, "grid_drop": 6.0,
                 "tolerance": 1e-8, "grad_tol": 1e-5}
  })";
  ModelSpec spec = parse_config(cfg, tab, Table());
  FitOptions opts;
  opts.threads = threads;
  JointFit fit = fit_model(spec, tab, Table(), opts);
  Eigen::VectorXd mean_engine;
  Eigen::MatrixXd cov_engine;
  fit.omega_moments(mean_engine, cov_engine);

  // dense tensor quadrature over (intercept, b1, b2, b3, theta) through the
  // exact posterior; the predictor matrix has no hyperparameter entries so
  // it is built once
  const AssembledModel& model = fit.model;
  SpMat A = model.build_A(fit.omega_mode);
  Eigen::VectorXd omega_c(1);
  double logdet_cache = 0.0;
  SpMat Qp_cache;
  double omega_cached = std::numeric_limits<double>::quiet_NaN();
  auto log_density = [&](const Eigen::VectorXd& xv) {
    Eigen::VectorXd u(4);
    u << xv[0], xv[1], xv[2], xv[3];
    omega_c[0] = xv[4];
    if (omega_c[0] != omega_cached) {
      Qp_cache = model.build_Q_prior(omega_c, &logdet_cache);
      omega_cached = omega_c[0];
    }
    Eigen::VectorXd eta = A * u;
    std::vector<double> etav(eta.data(), eta.data() + eta.size());
    double ll = total_loglik(model.rows, etav, omega_c.data()).value;
    Eigen::VectorXd du = u - model.prior_mean;
    return ll + 0.5 * logdet_cache - 0.5 * du.dot(Qp_cache * du) +
           model.log_prior_omega(omega_c);
  };
  // integration box centered on the engine estimates, wide enough that the
  // clipped mass is negligible but narrow enough for the nodes to resolve
  // the peak
  QuadSpec qs;
  for (int i = 0; i < 4; ++i) {
    PosteriorMarginal m = fit.latent_marginal(i);
    qs.ranges.push_back({m.mean - 8.0 * m.sd, m.mean + 8.0 * m.sd});
    qs.n_points.push_back(25);
  }
  double th_sd = std::sqrt(cov_engine(0, 0));
  qs.ranges.push_back({mean_engine[0] - 9.0 * th_sd, mean_engine[0] + 9.0 * th_sd});
  qs.n_points.push_back(31);
  QuadResult oracle = quadrature_posterior(log_density, qs);

  double rel_mean = std::abs(mean_engine[0] - oracle.mean[4]) / std::abs(oracle.mean[4]);
  double rel_sd = std::abs(std::sqrt(cov_engine(0, 0)) - oracle.sd[4]) / oracle.sd[4];
  ck.note("engine mean=" + detail::fmt(mean_engine[0]) + " sd=" +
          detail::fmt(std::sqrt(cov_engine(0, 0))) + "; oracle mean=" +
          detail::fmt(oracle.mean[4]) + " sd=" + detail::fmt(oracle.sd[4]));
  ck.expect(rel_mean < 0.02, "hyperparameter posterior mean within 2% of quadrature");
  ck.expect(rel_sd < 0.02, "hyperparameter posterior sd within 2% of quadrature");

  SuiteResult res{"quadrature-equivalence", false, false, "",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  ck.expect(res.seconds < 60.0, "runtime under 60 s");
  res.pass = ck.ok;
  res.details = ck.log.str();
  return res;
}

inline SuiteResult suite_mcmc_equivalence(int threads) {
  auto t0 = std::chrono::steady_clock::now();
  detail::Check ck;

  SimScenario sc = detail::cv_scenario(100, 31);
  SimData sim = simulate_joint(sc);
  ModelSpec spec = parse_config(detail::cv_config("grid"), sim.longitudinal, sim.survival);
  FitOptions opts;
  opts.threads = threads;
  JointFit fit = fit_model(spec, sim.longitudinal, sim.survival, opts);
  double engine_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ck.expect(engine_seconds < 60.0, "engine runtime under 60 s");

  MetropolisOptions mo;
  mo.n_iter = 300000;
  mo.burnin = 100000;
  mo.seed = 17;
  auto t1 = std::chrono::steady_clock::now();
  MetropolisResult mc = metropolis(fit.model, mo);
  double oracle_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  ck.expect(oracle_seconds < 1800.0, "oracle runtime under 30 min");
  ck.note("mcmc accept=" + detail::fmt(mc.accept_rate));

  // every fixed effect
  const auto& names = fit.model.layout.names;
  for (int i = 0; i < fit.model.n_latent(); ++i) {
    if (names[i].rfind("b[", 0) == 0 || names[i].rfind("baseline[", 0) == 0) continue;
    PosteriorMarginal m = fit.latent_marginal(i);
    double diff = std::abs(m.mean - mc.u_mean[i]);
    ck.note(names[i] + ": engine=" + detail::fmt(m.mean) + " mcmc=" + detail::fmt(mc.u_mean[i]) +
            " sd=" + detail::fmt(m.sd));
    ck.expect(diff < 0.5 * m.sd, names[i] + " within 0.5 engine sd of the sampler");
  }
  // association scalar
  Eigen::VectorXd omean;
  Eigen::MatrixXd ocov;
  fit.omega_moments(omean, ocov);
  for (int j = 0; j < fit.model.hyper.dim(); ++j) {
    if (fit.model.hyper.entries[j].kind != HyperEntry::Assoc) continue;
    double diff = std::abs(omean[j] - mc.omega_mean[j]);
    double sd = std::sqrt(ocov(j, j));
    ck.note("phi: engine=" + detail::fmt(omean[j]) + " mcmc=" + detail::fmt(mc.omega_mean[j]) +
            " sd=" + detail::fmt(sd));
    ck.expect(diff < 0.5 * sd, "association scalar within 0.5 engine sd of the sampler");
  }

  SuiteResult res{"mcmc-equivalence", false, false, "",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  res.pass = ck.ok;
  res.details = ck.log.str();
  return res;
}

inline SuiteResult suite_parameter_recovery(int threads) {
  auto t0 = std::chrono::steady_clock::now();
  detail::Check ck;
  const int n_rep = 20;

  struct Track {
    std::string name;
    double truth;
    int covered = 0;
  };
  std::vector<Track> tracks = {{"Intercept_L1", 1.0}, {"time_L1", -0.5},  {"Intercept_S1", -1.8},
                               {"x_S1", 0.4},         {"CV_L1_S1", 0.5},  {"sigma_eps", 0.4},
                               {"sigma_b", 0.5}};
  double phi_sum = 0.0;

  for (int rep = 0; rep < n_rep; ++rep) {
    SimScenario sc = detail::cv_scenario(300, 1000 + rep);
    SimData sim = simulate_joint(sc);
    ModelSpec spec = parse_config(detail::cv_config("grid", "\"grid_dz\": 0.75, \"grid_drop\": 4.0"), sim.longitudinal, sim.survival);
    FitOptions opts;
    opts.threads = threads;
    JointFit fit = fit_model(spec, sim.longitudinal, sim.survival, opts);

    // latent CIs from the mixture marginals
    for (auto& tr : tracks) {
      double lo = 0, hi = 0;
      bool found = false;
      for (int i = 0; i < fit.model.n_latent(); ++i)
        if (fit.model.layout.names[i] == tr.name) {
          PosteriorMarginal m = fit.latent_marginal(i);
          lo = m.quantile(0.025);
          hi = m.quantile(0.975);
          found = true;
        }
      if (!found) {
        // hyperparameter-derived quantities from omega samples
        std::mt19937_64 rng(4242 + rep);
        std::vector<double> s(4000);
        int phi_idx = -1, res_idx = -1, re_idx = -1;
        for (int j = 0; j < fit.model.hyper.dim(); ++j) {
          const HyperEntry& e = fit.model.hyper.entries[j];
          if (e.kind == HyperEntry::Assoc) phi_idx = j;
          if (e.kind == HyperEntry::ResLogPrec) res_idx = j;
          if (e.kind == HyperEntry::REChol) re_idx = j;
        }
        for (auto& v : s) {
          Eigen::VectorXd w = fit.sample_omega(rng);
          if (tr.name == "CV_L1_S1")
            v = w[phi_idx];
          else if (tr.name == "sigma_eps")
            v = std::exp(-0.5 * w[res_idx]);
          else
            v = std::exp(-w[re_idx]);  // sd of a dim-1 RE group: 1/L
        }
        std::sort(s.begin(), s.end());
        lo = s[static_cast<std::size_t>(0.025 * (s.size() - 1))];
        hi = s[static_cast<std::size_t>(0.975 * (s.size() - 1))];
        if (tr.name == "CV_L1_S1") {
          Eigen::VectorXd omean;
          Eigen::MatrixXd ocov;
          fit.omega_moments(omean, ocov);
          phi_sum += omean[phi_idx];
        }
      }
      if (tr.truth >= lo && tr.truth <= hi) tr.covered++;
    }
  }

  for (const auto& tr : tracks) {
    ck.note(tr.name + " coverage " + std::to_string(tr.covered) + "/20");
    ck.expect(tr.covered >= 16 && tr.covered <= 20,
              tr.name + " 95% interval coverage in [16, 20] of 20");
  }
  double phi_bias = phi_sum / n_rep - 0.5;
  ck.note("phi mean bias=" + detail::fmt(phi_bias));
  ck.expect(std::abs(phi_bias) < 0.1, "association mean bias below 0.1");

  SuiteResult res{"parameter-recovery", false, false, "",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  ck.expect(res.seconds < 1800.0, "runtime under 30 min");
  res.pass = ck.ok;
  res.details = ck.log.str();
  return res;
}

inline SuiteResult suite_pbc2_fixture(int threads) {
  auto t0 = std::chrono::steady_clock::now();
  detail::Check ck;
  namespace fs = std::filesystem;
  std::string long_path, surv_path;
  for (const char* base : {"data", "../data", "fixtures", "../fixtures"}) {
    std::string lp = std::string(base) + "/pbc2.csv";
    std::string sp = std::string(base) + "/pbc2_id.csv";
    if (fs::exists(lp) && fs::exists(sp)) {
      long_path = lp;
      surv_path = sp;
    }
  }
  if (long_path.empty()) {
    return {"pbc2-fixture", true, true,
            "SKIPPED: pbc2.csv / pbc2_id.csv not found under data/ (see README to export them)",
            0.0};
  }
  Table long_data = Table::read_csv(long_path);
  Table surv_data = Table::read_csv(surv_path);

  std::string cfg = R"({
    "id": "id", "time": "year",
    "longitudinal": [
      {"response": "SGOT", "family": "lognormal",
       "fixed": [["1"], ["year"], ["drug"], ["year", "drug"]], "random": [["1"]]},
      {"response": "platelets", "family": "poisson",
       "fixed": [["1"], ["year"], ["drug"], ["year", "drug"]], "random": [["1"]]}
    ],
    "survival": [
      {"time": "years", "event": "status2", "baseline": "weibull",
       "fixed": [["1"], ["drug"]], "n_intervals": 15}
    ],
    "assoc": [["CV"], ["CV"]],
    "cor_long": true,
    "controls": {"int_strategy": "eb"}
  })";
  ModelSpec spec = parse_config(cfg, long_data, surv_data);
  FitOptions opts;
  opts.threads = threads;
  JointFit fit = fit_model(spec, long_data, surv_data, opts);

  struct Ref {
    const char* name;
    double mean, sd;
  };
  // published posterior summaries for this model on pbc2
  const Ref refs[] = {{"Intercept_L1", 4.7971, 0.0388}, {"year_L1", -0.0051, 0.0038},
                      {"drug_L1", -0.1545, 0.0547},     {"year:drug_L1", -0.0014, 0.0053},
                      {"Intercept_L2", 5.5102, 0.0319}, {"year_L2", -0.0478, 0.0009},
                      {"drug_L2", -0.1014, 0.0449},     {"year:drug_L2", 0.0138, 0.0012},
                      {"drug_S1", 0.1116, 0.1715}};
  for (const auto& ref : refs) {
    bool found = false;
    for (int i = 0; i < fit.model.n_latent(); ++i)
      if (fit.model.layout.names[i] == ref.name) {
        PosteriorMarginal m = fit.latent_marginal(i);
        double diff = std::abs(m.mean - ref.mean);
        ck.note(std::string(ref.name) + "=" + detail::fmt(m.mean));
        ck.expect(diff < 3.0 * ref.sd, std::string(ref.name) + " within 3 reported sds");
        found = true;
      }
    ck.expect(found, std::string("latent ") + ref.name + " present");
  }
  const Ref phis[] = {{"CV_L1_S1", 1.3724, 0.2184}, {"CV_L2_S1", -1.1338, 0.2072}};
  Eigen::VectorXd omean;
  Eigen::MatrixXd ocov;
  fit.omega_moments(omean, ocov);
  for (const auto& ref : phis) {
    for (int j = 0; j < fit.model.hyper.dim(); ++j)
      if (fit.model.hyper.entries[j].name == ref.name) {
        double diff = std::abs(omean[j] - ref.mean);
        ck.note(std::string(ref.name) + "=" + detail::fmt(omean[j]));
        ck.expect(diff < 3.0 * ref.sd, std::string(ref.name) + " within 3 reported sds");
      }
  }

  SuiteResult res{"pbc2-fixture", false, false, "",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  ck.expect(res.seconds < 120.0, "runtime under 2 min");
  res.pass = ck.ok;
  res.details = ck.log.str();
  return res;
}

inline SuiteResult suite_properties(int threads) {
  auto t0 = std::chrono::steady_clock::now();
  detail::Check ck;
  std::mt19937_64 rng(5150);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);

  // 1. analytic likelihood derivatives vs central differences
  {
    Eigen::VectorXd omega(2);
    double max_rel = 0.0;
    for (int family = 0; family < 6; ++family) {
      for (int rep = 0; rep < 200; ++rep) {
        ObsRow row;
        double eta = 2.0 * nd(rng);
        omega[0] = nd(rng) * 0.5;
        omega[1] = nd(rng) * 0.3;
        switch (family) {
          case 0:
            row.family = Family::gaussian;
            row.y = nd(rng);
            row.hyper_res = 0;
            break;
          case 1:
            row.family = Family::poisson;
            row.y = std::floor(ud(rng) * 6);
            break;
          case 2:
            row.family = Family::binomial;
            row.ntrials = 1 + std::floor(ud(rng) * 5);
            row.y = std::floor(ud(rng) * (row.ntrials + 1));
            break;
          case 3:
            row.family = Family::poisson_surv;
            row.y = ud(rng) < 0.3 ? 1 : 0;
            row.offset = -1.0 + nd(rng) * 0.3;
            break;
          case 4:
            row.family = Family::exponential_surv;
            row.entry = ud(rng);
            row.exit = row.entry + 0.1 + ud(rng);
            row.event = ud(rng) < 0.5 ? 1 : 0;
            break;
          case 5:
            row.family = Family::weibull_surv;
            row.entry = ud(rng);
            row.exit = row.entry + 0.1 + ud(rng);
            row.event = ud(rng) < 0.5 ? 1 : 0;
            row.hyper_shape = 1;
            break;
        }
        const double h = 1e-6;
        LoglikTerms c = loglik(row, eta, omega.data());
        LoglikTerms p = loglik(row, eta + h, omega.data());
        LoglikTerms m = loglik(row, eta - h, omega.data());
        double fd1 = (p.value - m.value) / (2 * h);
        double fd2 = (p.d1 - m.d1) / (2 * h);
        max_rel = std::max(max_rel, std::abs(fd1 - c.d1) / std::max(1.0, std::abs(c.d1)));
        max_rel = std::max(max_rel, std::abs(fd2 - c.d2) / std::max(1.0, std::abs(c.d2)));
        ck.expect(c.d2 <= 1e-12, "log-concavity: curvature nonpositive");
      }
    }
    ck.note("deriv max_rel=" + detail::fmt(max_rel));
    ck.expect(max_rel < 1e-5, "analytic derivatives match finite differences at 1e-5");
  }

  // 2. exposure conservation
  {
    double worst = 0.0;
    for (int rep = 0; rep < 500; ++rep) {
      double max_t = 1.0 + 9.0 * ud(rng);
      Cutpoints cuts = make_cutpoints(1 + static_cast<int>(ud(rng) * 20), max_t);
      double entry = ud(rng) * 0.5 * max_t;
      double exit = entry + ud(rng) * (max_t - entry) + 1e-6;
      cuts.cover(exit);
      auto rows = decompose(entry, exit, ud(rng) < 0.5 ? 1 : 0, cuts);
      double total = 0;
      for (const auto& r : rows) total += std::exp(r.offset());
      worst = std::max(worst, std::abs(total - (exit - entry)));
    }
    ck.note("exposure err=" + detail::fmt(worst));
    ck.expect(worst < 1e-12, "exposure conservation at 1e-12");
  }

  // shared small joint fit for the remaining properties
  SimScenario sc = detail::cv_scenario(60, 5151);
  SimData sim = simulate_joint(sc);
  ModelSpec spec = parse_config(detail::cv_config("grid"), sim.longitudinal, sim.survival);
  FitOptions opts;
  opts.threads = threads;
  JointFit fit = fit_model(spec, sim.longitudinal, sim.survival, opts);

  // 3. marginal densities integrate to one
  {
    double worst = 0.0;
    for (int i = 0; i < std::min(5, fit.model.n_latent()); ++i) {
      auto [x, d] = fit.latent_marginal(i).density_grid(401);
      double integral = 0;
      for (std::size_t g = 1; g < x.size(); ++g)
        integral += 0.5 * (d[g] + d[g - 1]) * (x[g] - x[g - 1]);
      worst = std::max(worst, std::abs(integral - 1.0));
    }
    ck.note("normalization err=" + detail::fmt(worst));
    ck.expect(worst < 1e-3, "marginal densities integrate to 1 within 1e-3");
  }

  // 4. grid weights normalized
  {
    double sum = 0;
    for (const auto& pt : fit.explore.points) sum += pt.weight;
    ck.expect(std::abs(sum - 1.0) < 1e-12, "integration weights sum to one");
  }

  // 5. seeded determinism: identical reruns bit for bit
  {
    JointFit fit2 = fit_model(spec, sim.longitudinal, sim.survival, opts);
    FitSummary s1 = summarize(fit, false, false, 2000, false);
    FitSummary s2 = summarize(fit2, false, false, 2000, false);
    s1.seconds = s2.seconds = 0;
    ck.expect(s1.to_json().dump() == s2.to_json().dump(), "same seed reruns are bit-identical");
  }

  // 6. survival monotonicity, CIF bounds, single-risk identity
  {
    Table ndt;
    ndt.add_column("id", {1, 1});
    ndt.add_column("time", {0.0, 0.5});
    ndt.add_column("x", {1.0, 1.0});
    ndt.add_column("y", {1.2, 0.9});
    PredictRequest req;
    req.newdata = ndt;
    req.horizon = 3.0;
    req.n_sample = 40;
    req.n_sample_re = 10;
    req.survival = true;
    req.cif = true;
    PredictResult pr = predict(fit, req);
    const Table& ps = pr.pred_surv;
    double worst_id = 0.0;
    for (int r = 0; r < ps.n_rows(); ++r) {
      for (const char* col : {"Surv_Mean", "Surv_quant0.5"}) {
        if (r > 0 && ps.value(r, col) > ps.value(r - 1, col) + 1e-12)
          ck.expect(false, "survival curve nonincreasing");
      }
      for (const char* col : {"CIF_Mean", "CIF_quant0.5"}) {
        double v = ps.value(r, col);
        ck.expect(v >= -1e-12 && v <= 1.0 + 1e-12, "CIF inside [0,1]");
        if (r > 0 && ps.value(r, col) < ps.value(r - 1, col) - 1e-12)
          ck.expect(false, "CIF nondecreasing");
      }
      worst_id = std::max(
          worst_id, std::abs(ps.value(r, "CIF_Mean") - (1.0 - ps.value(r, "Surv_Mean"))));
    }
    ck.note("cif identity err=" + detail::fmt(worst_id));
    ck.expect(worst_id < 1e-10, "single risk: CIF equals 1 - survival at 1e-10");
  }

  // 7. zero-association factorization
  {
    ModelSpec joint_spec =
        parse_config(detail::cv_config("eb", "\"grad_tol\": 1e-6, \"tolerance\": 1e-8"),
                     sim.longitudinal, sim.survival);
    for (auto& row : joint_spec.assoc)
      for (auto& cell : row) cell = AssocKind::none;
    JointFit jf = fit_model(joint_spec, sim.longitudinal, sim.survival, opts);

    ModelSpec long_spec = joint_spec;
    long_spec.survival.clear();
    long_spec.assoc.assign(1, {});
    JointFit lf = fit_model(long_spec, sim.longitudinal, Table(), opts);

    double worst = 0.0;
    for (int i = 0; i < lf.model.n_latent(); ++i) {
      const std::string& nm = lf.model.layout.names[i];
      if (nm.rfind("b[", 0) == 0) continue;
      for (int j = 0; j < jf.model.n_latent(); ++j)
        if (jf.model.layout.names[j] == nm) {
          PosteriorMarginal a = lf.latent_marginal(i), b = jf.latent_marginal(j);
          worst = std::max(worst, std::abs(a.mean - b.mean));
          worst = std::max(worst, std::abs(a.sd - b.sd));
        }
    }
    ck.note("factorization err=" + detail::fmt(worst));
    ck.expect(worst < 1e-6, "zero-association fits factorize at 1e-6");
  }

  SuiteResult res{"properties", false, false, "",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  ck.expect(res.seconds < 600.0, "runtime under 10 min");
  res.pass = ck.ok;
  res.details = ck.log.str();
  return res;
}

inline SuiteResult suite_scalability_smoke(int threads) {
  auto t0 = std::chrono::steady_clock::now();
  detail::Check ck;

  // seven markers, two competing risks; simulated from simpler trajectories
  // than the fitted structure, which is the point of a smoke test
  SimScenario sc;
  sc.seed = 808;
  sc.n_subjects = 300;
  sc.visit_times = {0, 0.5, 1, 2, 3, 4, 5, 7, 9, 11};
  sc.covariates.push_back({"drug", SimCovariate::Bernoulli, 0.5, 1.0});
  sc.covariates.push_back({"sex", SimCovariate::Bernoulli, 0.4, 1.0});
  auto time_term = Term{{TermFactor{TermFactor::TimeVar, "time"}}};
  struct MK {
    const char* name;
    Family fam;
    double b0, b1, se;
  };
  const MK mks[] = {{"m1", Family::gaussian, 0.0, 0.25, 0.3},
                    {"m2", Family::poisson, 5.4, -0.1, 0.0},
                    {"m3", Family::gaussian, 0.1, -0.01, 0.55},
                    {"m4", Family::gaussian, 0.3, -0.15, 0.7},
                    {"m5", Family::binomial, -2.5, 0.2, 0.0},
                    {"m6", Family::binomial, -1.4, 0.13, 0.0},
                    {"m7", Family::gaussian, -0.2, 0.1, 0.75}};
  int n_re = 0;
  for (const auto& mk : mks) {
    SimLong sl;
    sl.response = mk.name;
    sl.family = mk.fam;
    sl.sigma_eps = mk.se;
    sl.fixed_terms = {Term{}, time_term};
    sl.beta = {mk.b0, mk.b1};
    sl.random_terms = {Term{}};
    sc.longitudinal.push_back(sl);
    ++n_re;
  }
  sc.re_cov = Eigen::MatrixXd::Identity(n_re, n_re);
  sc.re_cov.diagonal() << 0.8, 0.15, 0.6, 0.5, 2.5, 3.0, 0.4;
  for (int s = 0; s < 2; ++s) {
    SimSurv ss;
    ss.baseline = BaselineKind::weibull;
    ss.shape = s == 0 ? 1.2 : 0.9;
    ss.fixed_terms = {Term{}};
    ss.gamma = {s == 0 ? -3.2 : -3.6};
    sc.survival.push_back(ss);
  }
  sc.assoc = {{AssocKind::cv, AssocKind::none},  {AssocKind::cv, AssocKind::cv},
              {AssocKind::none, AssocKind::cv},  {AssocKind::none, AssocKind::sre},
              {AssocKind::sre, AssocKind::none}, {AssocKind::none, AssocKind::cv_cs},
              {AssocKind::cs, AssocKind::none}};
  sc.phi = {{"CV_L1_S1", 0.3},  {"CV_L2_S1", -0.2}, {"CV_L2_S2", -0.2},
            {"CV_L3_S2", 0.3},  {"SRE_L4_S2", -0.3}, {"SRE_L5_S1", 0.2},
            {"CV_L6_S2", 0.1},  {"CS_L6_S2", 0.0},  {"CS_L7_S1", 0.0}};
  sc.cens_admin = 12.0;
  sc.grid_horizon = 12.0;
  SimData sim = simulate_joint(sc);

  std::string cfg = R"({
    "id": "id", "time": "time",
    "time_functions": [
      {"name": "f1", "type": "ns", "knots": [1.0], "boundary": [0.0, 0.0], "component": 0},
      {"name": "f2", "type": "ns", "knots": [1.0], "boundary": [0.0, 0.0], "component": 1}
    ],
    "longitudinal": [
      {"response": "m1", "family": "gaussian",
       "fixed": [["1"], ["f1"], ["f2"]], "random": [["1"], ["f1"], ["f2"]]},
      {"response": "m2", "family": "poisson",
       "fixed": [["1"], ["time"], ["drug"], ["sex"], ["time","drug"], ["time","sex"],
                 ["drug","sex"], ["time","drug","sex"]],
       "random": [["1"], ["time"]]},
      {"response": "m3", "family": "gaussian", "fixed": [["1"], ["time"]], "random": [["1"]]},
      {"response": "m4", "family": "gaussian", "fixed": [["1"], ["time"]], "random": [["1"]]},
      {"response": "m5", "family": "binomial", "fixed": [["1"], ["time"]], "random": [["1"]]},
      {"response": "m6", "family": "binomial", "fixed": [["1"], ["time"]], "random": [["1"]]},
      {"response": "m7", "family": "gaussian", "fixed": [["1"], ["time"]], "random": [["1"]]}
    ],
    "survival": [
      {"time": "stime", "event": "event_s1", "baseline": "rw2", "fixed": [["1"]],
       "n_intervals": 15},
      {"time": "stime", "event": "event_s2", "baseline": "rw1", "fixed": [["1"]],
       "n_intervals": 15}
    ],
    "assoc": [["CV", ""], ["CV", "CV"], ["", "CV"], ["", "SRE"], ["SRE", ""],
              ["", "CV_CS"], ["CS", ""]],
    "cor_long": false,
    "controls": {"int_strategy": "eb"}
  })";
  ModelSpec spec = parse_config(cfg, sim.longitudinal, sim.survival);
  FitOptions opts;
  opts.threads = threads;
  JointFit fit = fit_model(spec, sim.longitudinal, sim.survival, opts);
  ck.note("hyper dim=" + std::to_string(fit.model.hyper.dim()) +
          " latent dim=" + std::to_string(fit.model.n_latent()));

  ck.expect(fit.model.hyper.dim() == 29, "full mixed association list yields 29 hyperparameters");
  ck.expect(fit.explore.hess_spd, "hyperparameter Hessian negative definite at the mode");
  FitSummary summary = summarize(fit, false, false, 2000);
  bool finite = true;
  for (const auto& sec : summary.sections)
    for (const auto& row : sec.rows)
      finite = finite && std::isfinite(row.mean) && std::isfinite(row.sd) &&
               std::isfinite(row.q025) && std::isfinite(row.q975);
  finite = finite && std::isfinite(summary.mlik_integration) && std::isfinite(summary.dic) &&
           std::isfinite(summary.waic);
  ck.expect(finite, "all summary entries finite");

  SuiteResult res{"scalability-smoke", false, false, "",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  ck.expect(res.seconds < 1800.0, "runtime under 30 min");
  res.pass = ck.ok;
  res.details = ck.log.str();
  return res;
}

// ---------------------------------------------------------------------------

inline std::vector<std::string> suite_names() {
  return {"cox-equivalence",  "lmm-exactness",      "quadrature-equivalence",
          "mcmc-equivalence", "parameter-recovery", "pbc2-fixture",
          "properties",       "scalability-smoke"};
}

inline SuiteResult run_suite(const std::string& name, int threads = 1) {
  if (name == "cox-equivalence") return suite_cox_equivalence(threads);
  if (name == "lmm-exactness") return suite_lmm_exactness(threads);
  if (name == "quadrature-equivalence") return suite_quadrature_equivalence(threads);
  if (name == "mcmc-equivalence") return suite_mcmc_equivalence(threads);
  if (name == "parameter-recovery") return suite_parameter_recovery(threads);
  if (name == "pbc2-fixture") return suite_pbc2_fixture(threads);
  if (name == "properties") return suite_properties(threads);
  if (name == "scalability-smoke") return suite_scalability_smoke(threads);
  throw spec_error("unknown verify suite: " + name);
}

}  // namespace lgmjoint::verify

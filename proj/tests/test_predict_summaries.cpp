#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "lgmjoint/archive.hpp"
#include "lgmjoint/fit.hpp"
#include "lgmjoint/oracle.hpp"
#include "lgmjoint/predict.hpp"
#include "lgmjoint/summaries.hpp"

using namespace lgmjoint;
using Catch::Approx;

namespace {

SimScenario joint_scenario(int n, std::uint64_t seed) {
  SimScenario sc;
  sc.seed = seed;
  sc.n_subjects = n;
  sc.visit_times = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5};
  sc.covariates.push_back({"x", SimCovariate::Bernoulli, 0.5, 1.0});
  SimLong sl;
  sl.response = "y";
  sl.family = Family::gaussian;
  sl.sigma_eps = 0.3;
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
  sc.re_cov(0, 0) = 0.8 * 0.8;
  sc.cens_admin = 3.0;
  sc.grid_horizon = 3.0;
  return sc;
}

const char* kJointConfig = R"({
  "id": "id", "time": "time",
  "longitudinal": [
    {"response": "y", "family": "gaussian", "fixed": [["1"], ["time"]], "random": [["1"]]}
  ],
  "survival": [
    {"time": "stime", "event": "event_s1", "baseline": "exponential",
     "fixed": [["1"], ["x"]], "n_intervals": 12}
  ],
  "assoc": [["CV"]],
  "controls": {"int_strategy": "eb"}
})";

JointFit& shared_fit() {
  static JointFit fit = [] {
    SimData sim = simulate_joint(joint_scenario(80, 404));
    ModelSpec spec = parse_config(kJointConfig, sim.longitudinal, sim.survival);
    return fit_model(spec, sim.longitudinal, sim.survival);
  }();
  return fit;
}

}  // namespace

TEST_CASE("summary transforms: hazard ratios, sd/cor scales, quantile sanity") {
  JointFit& fit = shared_fit();
  FitSummary plain = summarize(fit, false, false, 8000, false);
  FitSummary hrs = summarize(fit, false, true, 8000, false);
  FitSummary sdcor = summarize(fit, true, false, 8000, false);

  // hazard-ratio rows are the exponentiated log-hazard rows (same samples,
  // monotone map, so quantiles correspond)
  const SummaryRow* lhr = plain.find("x_S1");
  const SummaryRow* hr = hrs.find("x_S1");
  REQUIRE(lhr != nullptr);
  REQUIRE(hr != nullptr);
  REQUIRE(hr->q50 == Approx(std::exp(lhr->q50)).epsilon(0.02));
  REQUIRE(hr->q025 == Approx(std::exp(lhr->q025)).epsilon(0.02));
  REQUIRE(hr->q975 == Approx(std::exp(lhr->q975)).epsilon(0.02));

  // hr leaves longitudinal tables untouched
  for (const auto& sec : plain.sections) {
    if (sec.title.rfind("Longitudinal", 0) != 0) continue;
    for (const auto& row : sec.rows) {
      const SummaryRow* other = hrs.find(row.name);
      REQUIRE(other != nullptr);
      REQUIRE(other->mean == Approx(row.mean).margin(1e-12));
    }
  }

  // sd/cor scale: variance quantiles are squared sd quantiles; the RE row is
  // a scalar group here so no correlation rows appear, but sds stay positive
  const SummaryRow* var_row = plain.find("Res. err. (variance)");
  const SummaryRow* sd_row = sdcor.find("Res. err. (sd)");
  REQUIRE(var_row != nullptr);
  REQUIRE(sd_row != nullptr);
  REQUIRE(var_row->q50 == Approx(sd_row->q50 * sd_row->q50).epsilon(0.02));

  // reported means lie inside the central interval for unimodal marginals
  for (const auto& sec : plain.sections)
    for (const auto& row : sec.rows) {
      REQUIRE(row.mean >= row.q025 - 1e-9);
      REQUIRE(row.mean <= row.q975 + 1e-9);
      REQUIRE(row.sd >= 0.0);
    }
}

TEST_CASE("correlations stay in [-1, 1] and sampled covariances stay PSD") {
  // two correlated random intercepts
  Table long_data = Table::from_csv_text(
      "id,time,a,b\n"
      "1,0,1.0,2.0\n1,1,1.2,2.2\n2,0,0.7,1.8\n2,1,1.1,2.4\n"
      "3,0,0.8,2.1\n3,1,0.9,1.9\n4,0,1.3,2.2\n4,1,1.4,2.5\n");
  const char* cfg = R"({
    "id": "id", "time": "time",
    "longitudinal": [
      {"response": "a", "family": "gaussian", "fixed": [["1"]], "random": [["1"]]},
      {"response": "b", "family": "gaussian", "fixed": [["1"]], "random": [["1"]]}
    ],
    "cor_long": true,
    "controls": {"int_strategy": "eb"}
  })";
  ModelSpec spec = parse_config(cfg, long_data, Table());
  JointFit fit = fit_model(spec, long_data, Table());
  FitSummary s = summarize(fit, true, false, 4000, false);
  const SummaryRow* cor = s.find("Intercept_L1:Intercept_L2");
  REQUIRE(cor != nullptr);
  REQUIRE(cor->q025 >= -1.0);
  REQUIRE(cor->q975 <= 1.0);

  // PSD per sample follows from the Cholesky construction; spot-check the
  // reconstructed covariance at random hyperparameter draws
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd w = fit.sample_omega(rng);
    Eigen::MatrixXd cov = fit.model.re_covariance(0, w);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    REQUIRE(llt.info() == Eigen::Success);
  }
}

TEST_CASE("near point-mass posterior collapses the DIC penalty") {
  Table tab = Table::from_csv_text("id,time,y\n1,0,0.4\n2,0,0.6\n3,0,0.5\n");
  const char* cfg = R"({
    "id": "id", "time": "time",
    "longitudinal": [{"response": "y", "family": "gaussian", "fixed": [["1"]]}],
    "controls": {"prior_fixed": {"mean": 0.5, "prec": 1e10, "mean_intercept": 0.5,
                                 "prec_intercept": 1e10}, "int_strategy": "eb"}
  })";
  ModelSpec spec = parse_config(cfg, tab, Table());
  JointFit fit = fit_model(spec, tab, Table());
  double d = dic(fit, 400, 3);

  // deviance at the pinned posterior mean
  Eigen::VectorXd omean;
  Eigen::MatrixXd ocov;
  fit.omega_moments(omean, ocov);
  SpMat A = fit.model.build_A(omean);
  Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 0.5);
  Eigen::VectorXd eta = A * u;
  std::vector<double> etav(eta.data(), eta.data() + eta.size());
  double d_hat = -2.0 * total_loglik(fit.model.rows, etav, omean.data()).value;
  // pD carries only the residual-precision uncertainty, the latent part is 0
  REQUIRE(std::abs(d - d_hat) < 0.6);
}

TEST_CASE("DIC roughly doubles on duplicated data and WAIC matches a direct oracle") {
  SimData sim = simulate_joint(joint_scenario(40, 11));
  ModelSpec spec = parse_config(kJointConfig, sim.longitudinal, sim.survival);
  // longitudinal-only copy keeps this quick
  spec.survival.clear();
  spec.assoc.assign(1, {});
  JointFit fit1 = fit_model(spec, sim.longitudinal, Table());
  double dic1 = dic(fit1, 800, 5);

  Table doubled = Table::from_csv_text([&] {
    std::string text = sim.longitudinal.to_csv_text();
    std::istringstream in(text);
    std::string line, out;
    std::getline(in, line);
    out = line + "\n";
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    for (const auto& r : rows) out += r + "\n";
    // duplicated subjects get fresh ids so the RE structure matches
    for (const auto& r : rows) {
      auto comma = r.find(',');
      out += "9" + r.substr(0, comma) + r.substr(comma) + "\n";
    }
    return out;
  }());
  JointFit fit2 = fit_model(spec, doubled, Table());
  double dic2 = dic(fit2, 800, 5);
  REQUIRE(dic2 == Approx(2.0 * dic1).epsilon(0.10));

  // WAIC against an independent recomputation from fresh draws
  double w1 = waic(fit1, 900, 21);
  double w2 = waic(fit1, 900, 22);
  REQUIRE(w1 == Approx(w2).epsilon(0.02));
}

TEST_CASE("predict: single-risk CIF identity, monotonicity and bounds") {
  JointFit& fit = shared_fit();
  Table nd = Table::from_csv_text(
      "id,time,x,y\n"
      "7,0.0,1,1.1\n"
      "7,0.5,1,0.8\n");
  PredictRequest req;
  req.newdata = nd;
  req.horizon = 3.0;
  req.n_sample = 50;
  req.n_sample_re = 8;
  req.survival = true;
  req.cif = true;
  req.seed = 1;
  PredictResult pr = predict(fit, req);

  REQUIRE(pr.pred_long.n_rows() == 50);
  REQUIRE(pr.pred_surv.n_rows() == 50);
  REQUIRE(pr.pred_surv.columns()[3] == "Haz_Mean");
  double prev_surv = 1.0 + 1e-12, prev_cif = -1e-12;
  for (int r = 0; r < pr.pred_surv.n_rows(); ++r) {
    double s = pr.pred_surv.value(r, "Surv_Mean");
    double c = pr.pred_surv.value(r, "CIF_Mean");
    REQUIRE(s <= prev_surv + 1e-12);
    REQUIRE(c >= prev_cif - 1e-12);
    REQUIRE(c >= -1e-12);
    REQUIRE(c <= 1.0 + 1e-12);
    REQUIRE(std::abs(c - (1.0 - s)) < 1e-10);
    prev_surv = s;
    prev_cif = c;
  }

  // horizon before the last observation is a validation error
  PredictRequest bad = req;
  bad.horizon = 0.25;
  REQUIRE_THROWS_AS(predict(fit, bad), spec_error);
}

TEST_CASE("predict: conditional RE mean matches the closed-form gaussian update") {
  JointFit& fit = shared_fit();
  // subject with two observations; the model is gaussian so the conditional
  // RE distribution is exact
  double y1 = 2.1, y2 = 1.4, t1 = 0.0, t2 = 1.0;
  Table nd;
  nd.add_column("id", {5, 5});
  nd.add_column("time", {t1, t2});
  nd.add_column("x", {0, 0});
  nd.add_column("y", {y1, y2});

  PredictRequest req;
  req.newdata = nd;
  req.horizon = 3.0;
  req.time_points = {2.0};
  req.n_sample = 400;
  req.n_sample_re = 25;
  req.seed = 31;
  PredictResult pr = predict(fit, req);
  double got = pr.pred_long.value(0, "Mean");

  // oracle at the posterior means of (beta, hyper)
  double b0 = fit.latent_marginal(0).mean;
  double b1 = fit.latent_marginal(1).mean;
  Eigen::VectorXd omean;
  Eigen::MatrixXd ocov;
  fit.omega_moments(omean, ocov);
  double tau_e = std::exp(omean[0]);
  double tau_b = std::exp(2.0 * omean[1]);
  double prec = tau_b + 2 * tau_e;
  double bhat = tau_e * ((y1 - b0 - b1 * t1) + (y2 - b0 - b1 * t2)) / prec;
  double want = b0 + b1 * 2.0 + bhat;
  double mc_se = pr.pred_long.value(0, "Sd") / std::sqrt(400.0 * 25.0);
  // allowance for hyper/fixed-effect uncertainty entering the MC mean
  REQUIRE(std::abs(got - want) < 3.0 * mc_se + 0.05);
}

TEST_CASE("predict: marginal prediction for a subject without observations") {
  JointFit& fit = shared_fit();
  Table nd;
  nd.add_column("id", {1, 2, 2});
  nd.add_column("time", {0.0, 0.0, 0.5});
  nd.add_column("x", {0.0, 0.0, 0.0});
  nd.add_string_column("y", {".", "1.2", "0.9"});
  PredictRequest req;
  req.newdata = nd;
  req.horizon = 2.5;
  req.time_points = {2.0};
  req.n_sample = 300;
  req.n_sample_re = 20;
  req.seed = 77;
  PredictResult pr = predict(fit, req);
  // marginal (no data) subject is centered at the population mean with a
  // wider band than the conditioned subject
  double mean1 = pr.pred_long.value(0, "Mean"), sd1 = pr.pred_long.value(0, "Sd");
  double sd2 = pr.pred_long.value(1, "Sd");
  double pop = fit.latent_marginal(0).mean + 2.0 * fit.latent_marginal(1).mean;
  REQUIRE(std::abs(mean1 - pop) < 0.15);
  REQUIRE(sd1 > sd2);
}

TEST_CASE("predict: more observations shrink the prediction band") {
  JointFit& fit = shared_fit();
  int wins = 0;
  const int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    Table nd;
    // subject 1: two observations; subject 2: six observations, same truth
    std::vector<double> ids{1, 1, 2, 2, 2, 2, 2, 2};
    std::vector<double> times{0.0, 0.4, 0.0, 0.4, 0.8, 1.2, 1.6, 2.0};
    std::vector<double> xs(8, 0.0);
    std::mt19937_64 rng(900 + rep);
    std::normal_distribution<double> nd_(0.0, 1.0);
    double b = 0.8 * nd_(rng);
    std::vector<double> ys;
    for (double t : times) ys.push_back(1.0 - 0.5 * t + b + 0.3 * nd_(rng));
    nd.add_column("id", ids);
    nd.add_column("time", times);
    nd.add_column("x", xs);
    nd.add_column("y", ys);
    PredictRequest req;
    req.newdata = nd;
    req.horizon = 3.0;
    req.time_points = {2.9};
    req.n_sample = 120;
    req.n_sample_re = 12;
    req.seed = 1000 + rep;
    PredictResult pr = predict(fit, req);
    double band2 = pr.pred_long.value(0, "quant0.975") - pr.pred_long.value(0, "quant0.025");
    double band6 = pr.pred_long.value(1, "quant0.975") - pr.pred_long.value(1, "quant0.025");
    if (band6 <= band2) ++wins;
  }
  REQUIRE(wins >= 19);
}

TEST_CASE("predict: inverse link keeps binomial outputs inside (0, 1)") {
  Table long_data = Table::from_csv_text(
      "id,time,y\n"
      "1,0,0\n1,1,1\n2,0,0\n2,1,0\n3,0,1\n3,1,1\n4,0,0\n4,1,1\n"
      "5,0,0\n5,1,0\n6,0,1\n6,1,0\n7,0,0\n7,1,1\n8,0,0\n8,1,0\n");
  const char* cfg = R"({
    "id": "id", "time": "time",
    "longitudinal": [{"response": "y", "family": "binomial",
                      "fixed": [["1"], ["time"]], "random": [["1"]]}],
    "controls": {"int_strategy": "eb"}
  })";
  ModelSpec spec = parse_config(cfg, long_data, Table());
  JointFit fit = fit_model(spec, long_data, Table());
  Table nd = Table::from_csv_text("id,time,y\n1,0,0\n");
  PredictRequest req;
  req.newdata = nd;
  req.horizon = 2.0;
  req.n_time_points = 8;
  req.n_sample = 40;
  req.n_sample_re = 10;
  req.inv_link = true;
  req.return_samples = true;
  PredictResult pr = predict(fit, req);
  for (const auto& block : pr.samples)
    for (double v : block) {
      REQUIRE(v > 0.0);
      REQUIRE(v < 1.0);
    }
}

TEST_CASE("zero-association fits predict the same survival with or without observations") {
  SimData sim = simulate_joint(joint_scenario(60, 220));
  ModelSpec spec = parse_config(kJointConfig, sim.longitudinal, sim.survival);
  spec.assoc[0][0] = AssocKind::none;
  JointFit fit = fit_model(spec, sim.longitudinal, sim.survival);

  Table with_obs;
  with_obs.add_column("id", {1, 1});
  with_obs.add_column("time", {0.0, 0.5});
  with_obs.add_column("x", {0.0, 0.0});
  with_obs.add_column("y", {2.0, 1.5});
  Table no_obs;
  no_obs.add_column("id", {1});
  no_obs.add_column("time", {0.0});
  no_obs.add_column("x", {0.0});
  no_obs.add_string_column("y", {"."});

  auto run = [&](const Table& nd, std::uint64_t seed) {
    PredictRequest req;
    req.newdata = nd;
    req.horizon = 3.0;
    req.time_points = {1.0, 2.0, 3.0};
    req.n_sample = 400;
    req.n_sample_re = 10;
    req.survival = true;
    req.csurv = 0.0;
    req.seed = seed;
    return predict(fit, req);
  };
  PredictResult a = run(with_obs, 5);
  PredictResult bres = run(no_obs, 6);
  for (int r = 0; r < 3; ++r) {
    double sa = a.pred_surv.value(r, "Surv_Mean");
    double sb = bres.pred_surv.value(r, "Surv_Mean");
    REQUIRE(sa == Approx(sb).margin(0.02));
  }
}

TEST_CASE("impute_missing fills likelihood-free rows with posterior means") {
  SimData sim = simulate_joint(joint_scenario(50, 88));
  // blank out two responses
  std::string text = sim.longitudinal.to_csv_text();
  Table tab = sim.longitudinal;
  {
    std::istringstream in(text);
    std::string line, out;
    std::getline(in, line);
    out = line + "\n";
    int row = 0;
    while (std::getline(in, line)) {
      if (row == 2 || row == 5) {
        auto pos = line.rfind(',');
        line = line.substr(0, pos + 1) + ".";
      }
      out += line + "\n";
      ++row;
    }
    tab = Table::from_csv_text(out);
  }
  ModelSpec spec = parse_config(kJointConfig, tab, sim.survival);
  JointFit fit = fit_model(spec, tab, sim.survival);
  auto imputed = impute_missing(fit);
  REQUIRE(imputed.size() == 2);
  for (const auto& iv : imputed) {
    REQUIRE((iv.data_row == 2 || iv.data_row == 5));
    // the filled value equals the posterior mean of the row's predictor:
    // for these rows the subject has other observations, so the value is
    // finite and near the subject's trajectory
    REQUIRE(std::isfinite(iv.value));
  }
  // observed rows are never imputed
  for (const auto& iv : imputed) REQUIRE(tab.is_missing(iv.data_row, tab.col_index("y")));
}

TEST_CASE("fit archives round-trip and reproduce predictions") {
  namespace fs = std::filesystem;
  JointFit& fit = shared_fit();
  FitSummary summary = summarize(fit, false, false, 2000, false);
  std::string dir = (fs::temp_directory_path() / "lgmjoint_archive_test").string();
  fs::remove_all(dir);
  save_fit(fit, summary, dir);
  ArchiveFit af = load_fit(dir);

  REQUIRE(af.n_points() == fit.n_points());
  REQUIRE(af.layout.n_latent == fit.model.n_latent());
  PosteriorMarginal a = fit.latent_marginal(0), b = af.latent_marginal(0);
  REQUIRE(a.mean == Approx(b.mean).margin(1e-12));
  REQUIRE(a.sd == Approx(b.sd).margin(1e-12));

  Table nd = Table::from_csv_text("id,time,x,y\n7,0.0,1,1.1\n7,0.5,1,0.8\n");
  PredictRequest req;
  req.newdata = nd;
  req.horizon = 3.0;
  req.time_points = {1.0, 2.0};
  req.n_sample = 50;
  req.n_sample_re = 5;
  req.survival = true;
  req.seed = 9;
  PredictResult p1 = predict(fit, req);
  PredictResult p2 = predict(af.predict_context(), req);
  for (int r = 0; r < p1.pred_surv.n_rows(); ++r)
    REQUIRE(p1.pred_surv.value(r, "Surv_Mean") ==
            Approx(p2.pred_surv.value(r, "Surv_Mean")).margin(1e-12));

  // summary rebuilt from the archive matches the stored one
  FitSummary s2 = summarize_source(af.summary_source(), false, false, 2000);
  REQUIRE(s2.find("Intercept_L1")->mean == Approx(summary.find("Intercept_L1")->mean).margin(1e-9));

  // tampering breaks the manifest hash check
  {
    std::ofstream out(dir + "/points.json", std::ios::app);
    out << " ";
  }
  REQUIRE_THROWS_AS(load_fit(dir), spec_error);
  fs::remove_all(dir);
}

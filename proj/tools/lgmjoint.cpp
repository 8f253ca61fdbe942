// Command-line front end: fit / summarize / predict / simulate / verify.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "lgmjoint/archive.hpp"
#include "lgmjoint/fit.hpp"
#include "lgmjoint/oracle.hpp"
#include "lgmjoint/predict.hpp"
#include "lgmjoint/summaries.hpp"
#include "lgmjoint/verify.hpp"
#include "lgmjoint/version.hpp"

namespace {

namespace fs = std::filesystem;
using namespace lgmjoint;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw spec_error("cannot open file: " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Table read_table(const std::string& path) {
  if (!fs::exists(path)) throw spec_error("cannot open data file: " + path);
  return Table::read_csv(path);
}

std::uint64_t resolve_seed(std::int64_t cli_seed, std::uint64_t config_seed) {
  if (cli_seed >= 0) return static_cast<std::uint64_t>(cli_seed);
  if (const char* env = std::getenv("LGMJOINT_SEED")) return std::strtoull(env, nullptr, 10);
  return config_seed;
}

int cmd_fit(const std::string& config_path, const std::string& long_path,
            const std::string& surv_path, const std::string& out_dir, const std::string& strategy,
            std::int64_t seed, int threads, bool sdcor, bool hr) {
  std::string config_text = read_file(config_path);
  Table long_data = long_path.empty() ? Table() : read_table(long_path);
  Table surv_data = surv_path.empty() ? Table() : read_table(surv_path);

  ModelSpec spec = parse_config(config_text, long_data, surv_data);
  if (strategy == "eb")
    spec.controls.int_strategy = Strategy::eb;
  else if (strategy == "grid")
    spec.controls.int_strategy = Strategy::grid;
  else if (!strategy.empty())
    throw spec_error("unknown strategy '" + strategy + "' (expected eb or grid)");
  spec.controls.seed = resolve_seed(seed, spec.controls.seed);

  ValidationReport report = validate_data(spec, long_data, surv_data);
  for (const auto& note : report.notes)
    if (note.kind == ValidationIssue::MissingResponse)
      std::cerr << "note: row " << note.row + 1 << ": " << note.message << "\n";

  FitOptions opts;
  opts.threads = threads;
  JointFit fit = fit_model(spec, long_data, surv_data, opts);
  FitSummary summary = summarize(fit, sdcor, hr);

  json extra;
  extra["tool_version"] = kVersion;
  extra["seed"] = spec.controls.seed;
  extra["threads"] = threads;
  extra["config_hash"] = archive_detail::file_hash(config_path);
  if (!long_path.empty()) extra["long_data_hash"] = archive_detail::file_hash(long_path);
  if (!surv_path.empty()) extra["surv_data_hash"] = archive_detail::file_hash(surv_path);
  save_fit(fit, summary, out_dir, extra);

  std::cout << summary.to_text();
  std::cout << "fit archive written to " << out_dir << "\n";
  return 0;
}

int cmd_summarize(const std::string& fit_dir, bool sdcor, bool hr) {
  ArchiveFit af = load_fit(fit_dir);
  if (!sdcor && !hr) {
    std::cout << af.summary_text;
    return 0;
  }
  SummarySource src = af.summary_source();
  FitSummary summary = summarize_source(src, sdcor, hr);
  summary.dic = af.summary_json.value("dic", 0.0);
  summary.waic = af.summary_json.value("waic", 0.0);
  std::cout << summary.to_text();
  return 0;
}

int cmd_predict(const std::string& fit_dir, const std::string& newdata_path,
                const std::string& out_dir, double horizon, int nsample, int nsample_re,
                int ntimepoints, bool inv_link, bool survival, bool cif, double csurv,
                bool has_csurv, std::int64_t seed) {
  ArchiveFit af = load_fit(fit_dir);
  PredictRequest req;
  req.newdata = read_table(newdata_path);
  req.horizon = horizon;
  req.n_sample = nsample;
  req.n_sample_re = nsample_re;
  req.n_time_points = ntimepoints;
  req.inv_link = inv_link;
  req.survival = survival;
  req.cif = cif;
  if (has_csurv) req.csurv = csurv;
  req.seed = resolve_seed(seed, af.spec.controls.seed + 1);

  if (!req.newdata.has_column(af.spec.id_column))
    throw spec_error("new data is missing the id column '" + af.spec.id_column + "'");

  PredictResult pr = predict(af.predict_context(), req);
  fs::create_directories(out_dir);
  if (pr.pred_long.n_rows() > 0) {
    pr.pred_long.write_csv(out_dir + "/predL.csv");
    std::cout << "wrote " << out_dir << "/predL.csv\n";
  }
  if (pr.pred_surv.n_rows() > 0) {
    pr.pred_surv.write_csv(out_dir + "/predS.csv");
    std::cout << "wrote " << out_dir << "/predS.csv\n";
  }
  return 0;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir) {
  json j = json::parse(read_file(scenario_path));
  SimScenario sc = scenario_from_json(j);
  SimData sim = simulate_joint(sc);
  fs::create_directories(out_dir);
  sim.longitudinal.write_csv(out_dir + "/longitudinal.csv");
  sim.survival.write_csv(out_dir + "/survival.csv");
  std::cout << "wrote " << out_dir << "/longitudinal.csv and " << out_dir << "/survival.csv\n";
  return 0;
}

int cmd_verify(const std::string& suite, int threads) {
  std::vector<std::string> names;
  if (suite == "all") {
    names = verify::suite_names();
  } else {
    auto all = verify::suite_names();
    if (std::find(all.begin(), all.end(), suite) == all.end()) {
      std::cerr << "unknown suite '" << suite << "'. Available suites:\n  all\n";
      for (const auto& n : all) std::cerr << "  " << n << "\n";
      return 2;
    }
    names = {suite};
  }
  bool all_pass = true;
  for (const auto& name : names) {
    verify::SuiteResult res = verify::run_suite(name, threads);
    const char* mark = res.skipped ? "SKIP" : (res.pass ? "PASS" : "FAIL");
    std::printf("[%s] %-24s (%.1fs) %s\n", mark, res.name.c_str(), res.seconds,
                res.details.c_str());
    std::fflush(stdout);
    if (!res.pass && !res.skipped) all_pass = false;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint longitudinal-survival latent Gaussian models via Laplace approximations"};
  app.set_version_flag("--version", lgmjoint::kVersion);
  app.require_subcommand(1);

  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  // fit
  std::string config_path, long_path, surv_path, out_dir = "fit", strategy;
  std::int64_t seed = -1;
  bool sdcor = false, hr = false;
  auto* fit = app.add_subcommand("fit", "Fit a joint model from a JSON config and CSV data");
  fit->add_option("config", config_path, "model configuration (JSON)")->required();
  fit->add_option("long_csv", long_path, "longitudinal data CSV ('' if survival-only)");
  fit->add_option("surv_csv", surv_path, "survival data CSV");
  fit->add_option("--out", out_dir, "output directory for the fit archive");
  fit->add_option("--strategy", strategy, "integration strategy: eb or grid");
  fit->add_option("--seed", seed, "random seed (overrides config and LGMJOINT_SEED)");
  fit->add_option("--threads", threads, "parallelism cap");
  fit->add_flag("--sdcor", sdcor, "report sd/correlation instead of variance/covariance");
  fit->add_flag("--hr", hr, "report survival fixed effects as hazard ratios");

  // summarize
  std::string fit_dir;
  bool s_sdcor = false, s_hr = false;
  auto* summ = app.add_subcommand("summarize", "Print the summary of a fit archive");
  summ->add_option("fit_dir", fit_dir, "fit archive directory")->required();
  summ->add_flag("--sdcor", s_sdcor, "sd/correlation scale");
  summ->add_flag("--hr", s_hr, "hazard-ratio scale");

  // predict
  std::string p_fit_dir, newdata_path, p_out = "pred";
  double horizon = 0.0, csurv = 0.0;
  int nsample = 300, nsample_re = 50, ntimepoints = 50;
  bool inv_link = false, p_surv = false, p_cif = false;
  std::int64_t p_seed = -1;
  auto* pred = app.add_subcommand("predict", "Predict trajectories and risks from a fit archive");
  pred->add_option("fit_dir", p_fit_dir, "fit archive directory")->required();
  pred->add_option("newdata_csv", newdata_path, "new data CSV")->required();
  pred->add_option("--out", p_out, "output directory");
  pred->add_option("--horizon", horizon, "prediction horizon")->required();
  pred->add_option("--nsample", nsample, "posterior samples");
  pred->add_option("--nsample-re", nsample_re, "random-effect draws per sample");
  pred->add_option("--ntimepoints", ntimepoints, "equidistant prediction times");
  pred->add_flag("--inv-link", inv_link, "apply the inverse link to longitudinal predictions");
  pred->add_flag("--survival", p_surv, "add survival-curve summaries");
  pred->add_flag("--cif", p_cif, "add cumulative-incidence summaries");
  auto* csurv_opt = pred->add_option("--csurv", csurv, "survival start time");
  pred->add_option("--seed", p_seed, "random seed");

  // simulate
  std::string scenario_path, sim_out = "sim";
  auto* sim = app.add_subcommand("simulate", "Simulate joint data from a scenario JSON");
  sim->add_option("scenario", scenario_path, "scenario JSON")->required();
  sim->add_option("--out", sim_out, "output directory");

  // verify
  std::string suite;
  auto* ver = app.add_subcommand("verify", "Run a named verification suite (or 'all')");
  ver->add_option("suite", suite, "suite name or 'all'")->required();
  ver->add_option("--threads", threads, "parallelism cap");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) return cmd_fit(config_path, long_path, surv_path, out_dir, strategy, seed, threads,
                             sdcor, hr);
    if (*summ) return cmd_summarize(fit_dir, s_sdcor, s_hr);
    if (*pred)
      return cmd_predict(p_fit_dir, newdata_path, p_out, horizon, nsample, nsample_re,
                         ntimepoints, inv_link, p_surv, p_cif, csurv, csurv_opt->count() > 0,
                         p_seed);
    if (*sim) return cmd_simulate(scenario_path, sim_out);
    if (*ver) return cmd_verify(suite, threads);
  } catch (const lgmjoint::spec_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lgmjoint::convergence_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

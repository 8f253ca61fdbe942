#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "lgmjoint/csv.hpp"
#include "lgmjoint/oracle.hpp"

using namespace lgmjoint;
namespace fs = std::filesystem;

namespace {

struct Workdir {
  fs::path dir;
  Workdir() {
    dir = fs::temp_directory_path() / "lgmjoint_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args) {
  std::string cmd = std::string(LGMJOINT_BIN) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const char* kConfig = R"({
  "id": "id", "time": "time",
  "longitudinal": [
    {"response": "y", "family": "gaussian", "fixed": [["1"], ["time"]], "random": [["1"]]}
  ],
  "survival": [
    {"time": "stime", "event": "event_s1", "baseline": "exponential",
     "fixed": [["1"], ["x"]]}
  ],
  "assoc": [["CV"]],
  "controls": {"int_strategy": "eb"}
})";

const char* kScenario = R"({
  "seed": 42, "n_subjects": 50, "visit_times": [0, 0.5, 1.0, 1.5, 2.0],
  "covariates": [{"name": "x", "kind": "bernoulli", "p": 0.5}],
  "longitudinal": [
    {"response": "y", "family": "gaussian", "sigma_eps": 0.35,
     "fixed": [{"term": ["1"], "value": 1.0}, {"term": ["time"], "value": -0.5}],
     "random": [["1"]]}
  ],
  "survival": [
    {"baseline": "exponential",
     "fixed": [{"term": ["1"], "value": -1.6}, {"term": ["x"], "value": 0.4}]}
  ],
  "assoc": [["CV"]],
  "phi": {"CV_L1_S1": 0.5},
  "re_cov": [[0.49]],
  "cens_admin": 2.5
})";

}  // namespace

TEST_CASE("cli end-to-end: simulate, fit, summarize, predict, verify") {
  Workdir wd;
  write(wd.path("scenario.json"), kScenario);
  write(wd.path("config.json"), kConfig);

  SECTION("simulate writes both tables") {
    REQUIRE(run("simulate " + wd.path("scenario.json") + " --out " + wd.path("sim")) == 0);
    REQUIRE(fs::exists(wd.path("sim/longitudinal.csv")));
    REQUIRE(fs::exists(wd.path("sim/survival.csv")));
  }

  // regenerate data in-process for the remaining sections
  SimData sim = simulate_joint(scenario_from_json(json::parse(kScenario)));
  sim.longitudinal.write_csv(wd.path("long.csv"));
  sim.survival.write_csv(wd.path("surv.csv"));

  SECTION("fit writes a complete archive and is deterministic") {
    std::string fit_cmd = "fit " + wd.path("config.json") + " " + wd.path("long.csv") + " " +
                          wd.path("surv.csv") + " --seed 5 --threads 1 --out ";
    REQUIRE(run(fit_cmd + wd.path("fit1")) == 0);
    for (const char* f : {"manifest.json", "spec.json", "layout.json", "points.json",
                          "summary.json", "summary.txt", "marginal_means.bin"})
      REQUIRE(fs::exists(wd.path("fit1") + "/" + f));

    std::string summary = slurp(wd.path("fit1/summary.txt"));
    REQUIRE(summary.find("Longitudinal outcome (L1, gaussian)") != std::string::npos);
    REQUIRE(summary.find("Association longitudinal - survival") != std::string::npos);
    REQUIRE(summary.find("log marginal-likelihood (integration)") != std::string::npos);

    REQUIRE(run(fit_cmd + wd.path("fit2")) == 0);
    json s1 = json::parse(slurp(wd.path("fit1/summary.json")));
    json s2 = json::parse(slurp(wd.path("fit2/summary.json")));
    s1["seconds"] = s2["seconds"] = 0;
    REQUIRE(s1.dump() == s2.dump());

    SECTION("summarize prints the stored tables") {
      REQUIRE(run("summarize " + wd.path("fit1")) == 0);
      REQUIRE(run("summarize " + wd.path("fit1") + " --sdcor --hr") == 0);
    }

    SECTION("predict writes the documented column layout") {
      Table nd;
      nd.add_column("id", {1, 1});
      nd.add_column("time", {0.0, 0.5});
      nd.add_column("x", {1.0, 1.0});
      nd.add_column("y", {1.2, 0.9});
      nd.write_csv(wd.path("newdata.csv"));
      REQUIRE(run("predict " + wd.path("fit1") + " " + wd.path("newdata.csv") +
                  " --horizon 2.5 --nsample 40 --nsample-re 5 --survival --cif --out " +
                  wd.path("pred")) == 0);
      Table predL = Table::read_csv(wd.path("pred/predL.csv"));
      REQUIRE(predL.columns() ==
              std::vector<std::string>{"id", "time", "Outcome", "Mean", "Sd", "quant0.025",
                                       "quant0.5", "quant0.975"});
      REQUIRE(predL.n_rows() == 50);  // default 50 equidistant time points
      Table predS = Table::read_csv(wd.path("pred/predS.csv"));
      REQUIRE(predS.has_column("Haz_Mean"));
      REQUIRE(predS.has_column("Surv_quant0.975"));
      REQUIRE(predS.has_column("CIF_Mean"));
      // one competing risk: CIF column equals 1 - survival column
      for (int r = 0; r < predS.n_rows(); ++r)
        REQUIRE(std::abs(predS.value(r, "CIF_Mean") - (1 - predS.value(r, "Surv_Mean"))) < 1e-9);

      // horizon earlier than the last observation is a validation error
      REQUIRE(run("predict " + wd.path("fit1") + " " + wd.path("newdata.csv") +
                  " --horizon 0.2 --out " + wd.path("pred2")) == 2);
    }
  }

  SECTION("error paths use the documented exit codes") {
    REQUIRE(run("fit " + wd.path("config.json") + " " + wd.path("nope.csv") + " " +
                wd.path("surv.csv") + " --out " + wd.path("f")) == 2);
    write(wd.path("bad_event.csv"),
          "id,x,stime,event_s1\n1,0,1.0,2\n");
    write(wd.path("bad_long.csv"), "id,time,y\n1,0,1.0\n");
    REQUIRE(run("fit " + wd.path("config.json") + " " + wd.path("bad_long.csv") + " " +
                wd.path("bad_event.csv") + " --out " + wd.path("f")) == 2);
    REQUIRE(run("verify not-a-suite") == 2);
  }

  SECTION("verify runs a fast named suite through the CLI") {
    REQUIRE(run("verify lmm-exactness") == 0);
  }
}

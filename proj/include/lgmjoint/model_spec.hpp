#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgmjoint/csv.hpp"

namespace lgmjoint {

using json = nlohmann::json;

/// Raised for configuration / data validation failures (CLI exit code 2).
struct spec_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when an optimizer fails to converge (CLI exit code 3).
struct convergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Family { gaussian, lognormal, poisson, binomial, poisson_surv, exponential_surv, weibull_surv };
enum class Link { identity, log_link, logit };
enum class BaselineKind { rw1, rw2, exponential, weibull };
enum class AssocKind { none, cv, cs, cv_cs, sre, sre_ind };
enum class Strategy { eb, grid };

inline std::string family_name(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::lognormal: return "lognormal";
    case Family::poisson: return "poisson";
    case Family::binomial: return "binomial";
    case Family::poisson_surv: return "poisson_surv";
    case Family::exponential_surv: return "exponential_surv";
    case Family::weibull_surv: return "weibull_surv";
  }
  return "?";
}

inline Family family_from_name(const std::string& s) {
  if (s == "gaussian") return Family::gaussian;
  if (s == "lognormal") return Family::lognormal;
  if (s == "poisson") return Family::poisson;
  if (s == "binomial") return Family::binomial;
  throw spec_error("unknown family: " + s);
}

inline Link default_link(Family f) {
  switch (f) {
    case Family::gaussian:
    case Family::lognormal: return Link::identity;
    case Family::poisson: return Link::log_link;
    case Family::binomial: return Link::logit;
    default: return Link::log_link;
  }
}

inline Link link_from_name(const std::string& s, Family f) {
  if (s == "default" || s.empty()) return default_link(f);
  if (s == "identity") return Link::identity;
  if (s == "log") return Link::log_link;
  if (s == "logit") return Link::logit;
  throw spec_error("unknown link: " + s);
}

inline std::string link_name(Link l) {
  switch (l) {
    case Link::identity: return "identity";
    case Link::log_link: return "log";
    case Link::logit: return "logit";
  }
  return "?";
}

inline std::string baseline_name(BaselineKind b) {
  switch (b) {
    case BaselineKind::rw1: return "rw1";
    case BaselineKind::rw2: return "rw2";
    case BaselineKind::exponential: return "exponential";
    case BaselineKind::weibull: return "weibull";
  }
  return "?";
}

inline BaselineKind baseline_from_name(const std::string& s) {
  if (s == "rw1") return BaselineKind::rw1;
  if (s == "rw2") return BaselineKind::rw2;
  if (s == "exponential" || s == "exponentialsurv") return BaselineKind::exponential;
  if (s == "weibull" || s == "weibullsurv") return BaselineKind::weibull;
  throw spec_error("unknown baseline kind: " + s);
}

inline std::string assoc_name(AssocKind a) {
  switch (a) {
    case AssocKind::none: return "";
    case AssocKind::cv: return "CV";
    case AssocKind::cs: return "CS";
    case AssocKind::cv_cs: return "CV_CS";
    case AssocKind::sre: return "SRE";
    case AssocKind::sre_ind: return "SRE_ind";
  }
  return "";
}

inline AssocKind assoc_from_name(const std::string& s) {
  if (s.empty()) return AssocKind::none;
  if (s == "CV") return AssocKind::cv;
  if (s == "CS") return AssocKind::cs;
  if (s == "CV_CS") return AssocKind::cv_cs;
  if (s == "SRE") return AssocKind::sre;
  if (s == "SRE_ind") return AssocKind::sre_ind;
  throw spec_error("unknown association kind: " + s);
}

/// One multiplicative factor of a model term.
struct TermFactor {
  enum Kind { Intercept, Column, TimeVar, TimeFun } kind = Column;
  std::string name;  // column or registered time-function name

  bool time_dependent() const { return kind == TimeVar || kind == TimeFun; }
  bool operator==(const TermFactor&) const = default;
};

/// Product term, e.g. {year, drug} for a year:drug interaction. An
/// intercept is the empty product, written "1" in configs.
struct Term {
  std::vector<TermFactor> factors;

  bool is_intercept() const {
    return factors.empty() ||
           (factors.size() == 1 && factors[0].kind == TermFactor::Intercept);
  }
  bool time_dependent() const {
    return std::any_of(factors.begin(), factors.end(),
                       [](const TermFactor& f) { return f.time_dependent(); });
  }
  std::string label() const {
    if (is_intercept()) return "Intercept";
    std::string out;
    for (const auto& f : factors) {
      if (!out.empty()) out += ":";
      out += f.name;
    }
    return out;
  }
  bool operator==(const Term&) const = default;
};

/// Registered time-basis definition; "ns" picks one component of a natural
/// cubic spline basis, "identity" is t itself.
struct TimeFunDef {
  std::string name;
  std::string type;  // "ns" | "identity"
  std::vector<double> knots;
  double boundary_low = 0.0;
  double boundary_high = 0.0;  // 0 means "use max observed time"
  int component = 0;
  bool operator==(const TimeFunDef&) const = default;
};

struct LongSpec {
  std::string response;
  Family family = Family::gaussian;
  Link link = Link::identity;
  std::vector<Term> fixed_terms;
  std::vector<Term> random_terms;
  bool cor_re = true;
  int ntrials = 1;
  bool operator==(const LongSpec&) const = default;
};

struct SurvSpec {
  std::string entry_time;  // empty = no left truncation
  std::string exit_time;
  std::string event;
  std::vector<Term> fixed_terms;
  bool frailty = false;  // subject-level random intercept in the hazard
  BaselineKind baseline = BaselineKind::rw1;
  int n_intervals = 15;
  std::vector<double> cutpoints;  // empty = equidistant
  std::optional<double> fixed_rw_log_precision;  // pins the rw smoothing precision
  bool operator==(const SurvSpec&) const = default;
};

struct PriorGaussian {
  double mean = 0.0;
  double prec = 0.01;
  bool operator==(const PriorGaussian&) const = default;
};

struct ControlOptions {
  PriorGaussian prior_fixed{0.0, 0.01};
  PriorGaussian prior_fixed_intercept{0.0, 0.01};
  double prior_random_r = 10.0;
  double prior_random_R = 1.0;
  PriorGaussian prior_assoc{0.0, 0.01};
  PriorGaussian prior_sre_ind{0.0, 1.0};
  double assoc_init = 0.1;
  Strategy int_strategy = Strategy::grid;
  double tolerance = 0.005;  // inner Newton step tolerance
  double h_step = 0.005;     // finite-difference step over hyperparameters
  std::uint64_t seed = 1;
  // exposed integration / optimizer knobs
  double grid_dz = 1.0;
  double grid_drop = 2.5;
  double grad_tol = 1e-3;
  double cs_delta_frac = 1e-4;  // derivative step as a fraction of max follow-up
  bool operator==(const ControlOptions&) const = default;
};

struct ModelSpec {
  std::vector<LongSpec> longitudinal;
  std::vector<SurvSpec> survival;
  std::vector<std::vector<AssocKind>> assoc;  // [longitudinal][survival]
  bool cor_long = false;
  std::string id_column = "id";
  std::string time_column;
  ControlOptions controls;
  std::vector<TimeFunDef> time_functions;

  int n_long() const { return static_cast<int>(longitudinal.size()); }
  int n_surv() const { return static_cast<int>(survival.size()); }
  bool operator==(const ModelSpec&) const = default;
};

struct ValidationIssue {
  enum Kind { MissingResponse, NoSurvivalRow } kind;
  int outcome;  // longitudinal index, or survival index for NoSurvivalRow
  int row;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> notes;  // allowed conditions (imputable rows etc.)
  int n_missing_responses = 0;
};

namespace detail {

inline bool is_registered_fun(const ModelSpec& spec, const std::string& name) {
  for (const auto& f : spec.time_functions)
    if (f.name == name) return true;
  return false;
}

inline Term parse_term(const json& jt, const ModelSpec& spec, const std::string& where) {
  if (!jt.is_array()) throw spec_error(where + ": term must be an array of factor names");
  Term term;
  for (const auto& jf : jt) {
    std::string s = jf.get<std::string>();
    TermFactor f;
    if (s == "1") {
      f.kind = TermFactor::Intercept;
      f.name = "1";
      if (jt.size() > 1) throw spec_error(where + ": '1' cannot appear in a product term");
    } else if (is_registered_fun(spec, s)) {
      f.kind = TermFactor::TimeFun;
      f.name = s;
    } else if (s == spec.time_column && !spec.time_column.empty()) {
      f.kind = TermFactor::TimeVar;
      f.name = s;
    } else {
      f.kind = TermFactor::Column;
      f.name = s;
    }
    if (f.kind != TermFactor::Intercept) term.factors.push_back(f);
  }
  return term;
}

inline std::vector<Term> parse_terms(const json& j, const char* key, const ModelSpec& spec,
                                     const std::string& where, bool required) {
  std::vector<Term> out;
  if (!j.contains(key)) {
    if (required) throw spec_error(where + ": missing '" + key + "'");
    return out;
  }
  for (const auto& jt : j.at(key)) out.push_back(parse_term(jt, spec, where));
  return out;
}

inline void check_term_columns(const std::vector<Term>& terms, const Table& data,
                               const std::string& where) {
  for (const auto& term : terms)
    for (const auto& f : term.factors)
      if (f.kind == TermFactor::Column && !data.has_column(f.name))
        throw spec_error(where + ": malformed term, unknown column or function '" + f.name + "'");
}

inline void require_column(const Table& t, const std::string& name, const std::string& where) {
  if (!t.has_column(name)) throw spec_error(where + ": missing column '" + name + "'");
}

}  // namespace detail

/// Structural parse of a config JSON document: families, links, terms,
/// associations, controls, with every default filled. No data checks.
inline ModelSpec spec_from_json(const json& cfg) {
  ModelSpec spec;
  spec.id_column = cfg.value("id", std::string("id"));
  spec.time_column = cfg.value("time", std::string(""));

  if (cfg.contains("time_functions")) {
    for (const auto& jf : cfg.at("time_functions")) {
      TimeFunDef def;
      def.name = jf.at("name").get<std::string>();
      def.type = jf.value("type", std::string("ns"));
      if (def.type != "ns" && def.type != "identity")
        throw spec_error("time_functions: unknown type '" + def.type + "'");
      if (jf.contains("knots")) def.knots = jf.at("knots").get<std::vector<double>>();
      if (jf.contains("boundary")) {
        auto b = jf.at("boundary").get<std::vector<double>>();
        if (b.size() != 2) throw spec_error("time_functions: boundary must be [low, high]");
        def.boundary_low = b[0];
        def.boundary_high = b[1];
      }
      def.component = jf.value("component", 0);
      spec.time_functions.push_back(def);
    }
  }

  if (cfg.contains("longitudinal")) {
    if (spec.time_column.empty())
      throw spec_error("config: 'time' column is required with longitudinal submodels");
    for (const auto& jl : cfg.at("longitudinal")) {
      LongSpec ls;
      std::string where = "longitudinal[" + std::to_string(spec.longitudinal.size()) + "]";
      ls.response = jl.at("response").get<std::string>();
      ls.family = family_from_name(jl.value("family", std::string("gaussian")));
      ls.link = link_from_name(jl.value("link", std::string("default")), ls.family);
      ls.fixed_terms = detail::parse_terms(jl, "fixed", spec, where, true);
      ls.random_terms = detail::parse_terms(jl, "random", spec, where, false);
      ls.cor_re = jl.value("cor_re", true);
      ls.ntrials = jl.value("ntrials", 1);
      if (ls.ntrials < 1) throw spec_error(where + ": ntrials must be >= 1");
      if (ls.fixed_terms.empty()) throw spec_error(where + ": at least one fixed term required");
      spec.longitudinal.push_back(std::move(ls));
    }
  }

  if (cfg.contains("survival")) {
    for (const auto& js : cfg.at("survival")) {
      SurvSpec ss;
      std::string where = "survival[" + std::to_string(spec.survival.size()) + "]";
      ss.exit_time = js.at("time").get<std::string>();
      ss.event = js.at("event").get<std::string>();
      ss.entry_time = js.value("entry", std::string(""));
      ss.fixed_terms = detail::parse_terms(js, "fixed", spec, where, true);
      ss.frailty = js.value("frailty", false);
      ss.baseline = baseline_from_name(js.value("baseline", std::string("rw1")));
      ss.n_intervals = js.value("n_intervals", 15);
      if (ss.n_intervals < 1) throw spec_error(where + ": n_intervals must be >= 1");
      if (js.contains("cutpoints") && !js.at("cutpoints").is_null()) {
        ss.cutpoints = js.at("cutpoints").get<std::vector<double>>();
        for (std::size_t i = 1; i < ss.cutpoints.size(); ++i)
          if (!(ss.cutpoints[i] > ss.cutpoints[i - 1]))
            throw spec_error(where + ": cutpoints must be strictly increasing");
      }
      if (js.contains("fix_baseline_prec") && !js.at("fix_baseline_prec").is_null()) {
        double p = js.at("fix_baseline_prec").get<double>();
        if (!(p > 0)) throw spec_error(where + ": fix_baseline_prec must be > 0");
        ss.fixed_rw_log_precision = std::log(p);
      }
      bool has_intercept = std::any_of(ss.fixed_terms.begin(), ss.fixed_terms.end(),
                                       [](const Term& t) { return t.is_intercept(); });
      if ((ss.baseline == BaselineKind::rw1 || ss.baseline == BaselineKind::rw2) && !has_intercept)
        throw spec_error(where + ": rw baselines need an intercept term [\"1\"] in 'fixed'");
      spec.survival.push_back(std::move(ss));
    }
  }

  if (spec.longitudinal.empty() && spec.survival.empty())
    throw spec_error("config: at least one submodel is required");

  // association matrix, one entry per (longitudinal, survival) pair
  spec.assoc.assign(spec.n_long(), std::vector<AssocKind>(spec.n_surv(), AssocKind::none));
  if (cfg.contains("assoc")) {
    const auto& ja = cfg.at("assoc");
    if (static_cast<int>(ja.size()) != spec.n_long())
      throw spec_error("assoc: expected one row per longitudinal submodel");
    for (int k = 0; k < spec.n_long(); ++k) {
      if (static_cast<int>(ja[k].size()) != spec.n_surv())
        throw spec_error("assoc: row " + std::to_string(k) +
                         " must have one entry per survival submodel");
      for (int s = 0; s < spec.n_surv(); ++s) {
        AssocKind kind = assoc_from_name(ja[k][s].get<std::string>());
        if ((kind == AssocKind::sre || kind == AssocKind::sre_ind) &&
            spec.longitudinal[k].random_terms.empty())
          throw spec_error("assoc: SRE requires random terms in longitudinal submodel " +
                           std::to_string(k + 1));
        spec.assoc[k][s] = kind;
      }
    }
  }
  spec.cor_long = cfg.value("cor_long", false);

  if (cfg.contains("controls")) {
    const auto& jc = cfg.at("controls");
    ControlOptions& c = spec.controls;
    auto read_prior = [&](const char* key, PriorGaussian& p) {
      if (!jc.contains(key)) return;
      p.mean = jc.at(key).value("mean", p.mean);
      p.prec = jc.at(key).value("prec", p.prec);
      if (!(p.prec > 0)) throw spec_error(std::string("controls.") + key + ": prec must be > 0");
    };
    read_prior("prior_fixed", c.prior_fixed);
    c.prior_fixed_intercept = c.prior_fixed;
    if (jc.contains("prior_fixed")) {
      c.prior_fixed_intercept.mean = jc.at("prior_fixed").value("mean_intercept", c.prior_fixed.mean);
      c.prior_fixed_intercept.prec = jc.at("prior_fixed").value("prec_intercept", c.prior_fixed.prec);
      if (!(c.prior_fixed_intercept.prec > 0))
        throw spec_error("controls.prior_fixed: prec_intercept must be > 0");
    }
    if (jc.contains("prior_random")) {
      c.prior_random_r = jc.at("prior_random").value("r", c.prior_random_r);
      c.prior_random_R = jc.at("prior_random").value("R", c.prior_random_R);
      if (!(c.prior_random_R > 0)) throw spec_error("controls.prior_random: R must be > 0");
    }
    read_prior("prior_assoc", c.prior_assoc);
    read_prior("prior_sre_ind", c.prior_sre_ind);
    c.assoc_init = jc.value("assoc_init", c.assoc_init);
    if (jc.contains("int_strategy")) {
      std::string s = jc.at("int_strategy").get<std::string>();
      if (s == "eb")
        c.int_strategy = Strategy::eb;
      else if (s == "grid")
        c.int_strategy = Strategy::grid;
      else
        throw spec_error("controls.int_strategy: expected 'eb' or 'grid'");
    }
    c.tolerance = jc.value("tolerance", c.tolerance);
    c.h_step = jc.value("h", jc.value("h_step", c.h_step));
    if (!(c.tolerance > 0) || !(c.h_step > 0))
      throw spec_error("controls: tolerance and h must be > 0");
    c.seed = jc.value("seed", c.seed);
    c.grid_dz = jc.value("grid_dz", c.grid_dz);
    c.grid_drop = jc.value("grid_drop", c.grid_drop);
    c.grad_tol = jc.value("grad_tol", c.grad_tol);
    c.cs_delta_frac = jc.value("cs_delta_frac", c.cs_delta_frac);
  }
  return spec;
}

/// Parse a JSON model configuration against the data tables, filling every
/// default and checking column references and row-level preconditions.
/// `surv_data` may be empty (zero columns): survival covariates then come
/// from each subject's first longitudinal row.
inline ModelSpec parse_config(const std::string& config_text, const Table& long_data,
                              const Table& surv_data) {
  json cfg;
  try {
    cfg = json::parse(config_text);
  } catch (const std::exception& e) {
    throw spec_error(std::string("config is not valid JSON: ") + e.what());
  }
  ModelSpec spec = spec_from_json(cfg);

  const bool have_surv_data = surv_data.n_rows() > 0 || !surv_data.columns().empty();
  const Table& surv_tab = have_surv_data ? surv_data : long_data;

  if (!spec.longitudinal.empty()) {
    detail::require_column(long_data, spec.id_column, "longitudinal data");
    detail::require_column(long_data, spec.time_column, "longitudinal data");
    for (std::size_t k = 0; k < spec.longitudinal.size(); ++k) {
      const LongSpec& ls = spec.longitudinal[k];
      std::string where = "longitudinal[" + std::to_string(k) + "]";
      detail::require_column(long_data, ls.response, where);
      detail::check_term_columns(ls.fixed_terms, long_data, where);
      detail::check_term_columns(ls.random_terms, long_data, where);
    }
  }
  if (!spec.survival.empty()) {
    detail::require_column(surv_tab, spec.id_column, "survival data");
    for (std::size_t si = 0; si < spec.survival.size(); ++si) {
      const SurvSpec& ss = spec.survival[si];
      std::string where = "survival[" + std::to_string(si) + "]";
      detail::require_column(surv_tab, ss.exit_time, where);
      detail::require_column(surv_tab, ss.event, where);
      if (!ss.entry_time.empty()) detail::require_column(surv_tab, ss.entry_time, where);
      detail::check_term_columns(ss.fixed_terms, surv_tab, where);
      for (int r = 0; r < surv_tab.n_rows(); ++r) {
        double ev = surv_tab.value(r, ss.event);
        if (!(ev == 0.0 || ev == 1.0))
          throw spec_error("non-binary event in column '" + ss.event + "' row " +
                           std::to_string(r + 1));
        double exit = surv_tab.value(r, ss.exit_time);
        double entry = ss.entry_time.empty() ? 0.0 : surv_tab.value(r, ss.entry_time);
        if (std::isnan(exit)) throw spec_error("missing exit time row " + std::to_string(r + 1));
        if (!(exit > entry))
          throw spec_error("exit <= entry time in survival row " + std::to_string(r + 1));
      }
    }
  }
  return spec;
}

/// Serialize back to the config JSON schema (defaults included).
inline json spec_to_json(const ModelSpec& spec) {
  json cfg;
  cfg["id"] = spec.id_column;
  if (!spec.time_column.empty()) cfg["time"] = spec.time_column;
  auto term_json = [](const Term& t) {
    json a = json::array();
    if (t.is_intercept()) {
      a.push_back("1");
      return a;
    }
    for (const auto& f : t.factors) a.push_back(f.name);
    return a;
  };
  auto terms_json = [&](const std::vector<Term>& ts) {
    json a = json::array();
    for (const auto& t : ts) a.push_back(term_json(t));
    return a;
  };
  if (!spec.time_functions.empty()) {
    json a = json::array();
    for (const auto& f : spec.time_functions) {
      json jf{{"name", f.name}, {"type", f.type}, {"component", f.component}};
      jf["knots"] = f.knots;
      jf["boundary"] = {f.boundary_low, f.boundary_high};
      a.push_back(jf);
    }
    cfg["time_functions"] = a;
  }
  if (!spec.longitudinal.empty()) {
    json a = json::array();
    for (const auto& ls : spec.longitudinal) {
      json jl{{"response", ls.response},
              {"family", family_name(ls.family)},
              {"link", link_name(ls.link)},
              {"cor_re", ls.cor_re},
              {"ntrials", ls.ntrials}};
      jl["fixed"] = terms_json(ls.fixed_terms);
      jl["random"] = terms_json(ls.random_terms);
      a.push_back(jl);
    }
    cfg["longitudinal"] = a;
  }
  if (!spec.survival.empty()) {
    json a = json::array();
    for (const auto& ss : spec.survival) {
      json js{{"time", ss.exit_time},
              {"event", ss.event},
              {"baseline", baseline_name(ss.baseline)},
              {"n_intervals", ss.n_intervals},
              {"frailty", ss.frailty}};
      if (!ss.entry_time.empty()) js["entry"] = ss.entry_time;
      if (!ss.cutpoints.empty()) js["cutpoints"] = ss.cutpoints;
      if (ss.fixed_rw_log_precision)
        js["fix_baseline_prec"] = std::exp(*ss.fixed_rw_log_precision);
      js["fixed"] = terms_json(ss.fixed_terms);
      a.push_back(js);
    }
    cfg["survival"] = a;
  }
  json ja = json::array();
  for (int k = 0; k < spec.n_long(); ++k) {
    json row = json::array();
    for (int s = 0; s < spec.n_surv(); ++s) row.push_back(assoc_name(spec.assoc[k][s]));
    ja.push_back(row);
  }
  cfg["assoc"] = ja;
  cfg["cor_long"] = spec.cor_long;
  const ControlOptions& c = spec.controls;
  cfg["controls"] = {
      {"prior_fixed",
       {{"mean", c.prior_fixed.mean},
        {"prec", c.prior_fixed.prec},
        {"mean_intercept", c.prior_fixed_intercept.mean},
        {"prec_intercept", c.prior_fixed_intercept.prec}}},
      {"prior_random", {{"r", c.prior_random_r}, {"R", c.prior_random_R}}},
      {"prior_assoc", {{"mean", c.prior_assoc.mean}, {"prec", c.prior_assoc.prec}}},
      {"prior_sre_ind", {{"mean", c.prior_sre_ind.mean}, {"prec", c.prior_sre_ind.prec}}},
      {"assoc_init", c.assoc_init},
      {"int_strategy", c.int_strategy == Strategy::eb ? "eb" : "grid"},
      {"tolerance", c.tolerance},
      {"h", c.h_step},
      {"seed", c.seed},
      {"grid_dz", c.grid_dz},
      {"grid_drop", c.grid_drop},
      {"grad_tol", c.grad_tol},
      {"cs_delta_frac", c.cs_delta_frac}};
  return cfg;
}

/// Check the data against the spec row by row. Missing responses are
/// reported but allowed (those rows carry no likelihood and are imputable
/// after the fit); missing covariates are a hard error.
inline ValidationReport validate_data(const ModelSpec& spec, const Table& long_data,
                                      const Table& surv_data) {
  ValidationReport report;
  const bool have_surv_data = surv_data.n_rows() > 0 || !surv_data.columns().empty();
  const Table& surv_tab = have_surv_data ? surv_data : long_data;

  if (!spec.longitudinal.empty() && long_data.n_rows() == 0)
    throw spec_error("no observations in longitudinal data");
  if (!spec.survival.empty() && surv_tab.n_rows() == 0)
    throw spec_error("no observations in survival data");

  auto check_covariates = [&](const Table& tab, int row, const std::vector<Term>& terms,
                              const std::string& where) {
    for (const auto& term : terms)
      for (const auto& f : term.factors)
        if (f.kind == TermFactor::Column || f.kind == TermFactor::TimeVar)
          if (tab.is_missing(row, tab.col_index(f.name)))
            throw spec_error(where + " row " + std::to_string(row + 1) +
                             ": missing covariate value in column '" + f.name + "'");
  };

  std::set<std::string> long_subjects;
  for (int k = 0; k < spec.n_long(); ++k) {
    const LongSpec& ls = spec.longitudinal[k];
    int rcol = long_data.col_index(ls.response);
    for (int r = 0; r < long_data.n_rows(); ++r) {
      check_covariates(long_data, r, ls.fixed_terms, "longitudinal data");
      check_covariates(long_data, r, ls.random_terms, "longitudinal data");
      if (long_data.is_missing(r, rcol)) {
        report.notes.push_back({ValidationIssue::MissingResponse, k, r,
                                "likelihood-free row (missing response '" + ls.response + "')"});
        ++report.n_missing_responses;
      }
    }
  }
  for (int r = 0; r < long_data.n_rows() && !spec.longitudinal.empty(); ++r)
    long_subjects.insert(long_data.raw(r, spec.id_column));

  if (!spec.survival.empty()) {
    for (int s = 0; s < spec.n_surv(); ++s)
      for (int r = 0; r < surv_tab.n_rows(); ++r)
        check_covariates(surv_tab, r, spec.survival[s].fixed_terms, "survival data");
    if (!spec.longitudinal.empty() && have_surv_data) {
      for (int r = 0; r < surv_tab.n_rows(); ++r) {
        std::string id = surv_tab.raw(r, spec.id_column);
        if (!long_subjects.count(id))
          throw spec_error("survival data subject '" + id +
                           "' has zero longitudinal observations");
      }
      std::set<std::string> surv_subjects;
      for (int r = 0; r < surv_tab.n_rows(); ++r)
        surv_subjects.insert(surv_tab.raw(r, spec.id_column));
      for (const auto& id : long_subjects)
        if (!surv_subjects.count(id))
          report.notes.push_back({ValidationIssue::NoSurvivalRow, 0, -1,
                                  "subject '" + id + "' has no survival row"});
    }
  }
  return report;
}

}  // namespace lgmjoint

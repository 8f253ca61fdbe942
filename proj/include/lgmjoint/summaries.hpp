#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgmjoint/fit.hpp"
#include "lgmjoint/likelihoods.hpp"

namespace lgmjoint {

struct SummaryRow {
  std::string name;
  double mean = 0, sd = 0, q025 = 0, q50 = 0, q975 = 0;
};

struct SummarySection {
  std::string title;
  std::vector<SummaryRow> rows;
};

struct FitSummary {
  std::vector<SummarySection> sections;
  double mlik_integration = 0, mlik_gaussian = 0;
  double dic = 0, waic = 0;
  double seconds = 0;

  const SummaryRow* find(const std::string& name) const {
    for (const auto& sec : sections)
      for (const auto& row : sec.rows)
        if (row.name == name) return &row;
    return nullptr;
  }

  json to_json() const {
    json out;
    out["sections"] = json::array();
    for (const auto& sec : sections) {
      json js{{"title", sec.title}, {"rows", json::array()}};
      for (const auto& r : sec.rows)
        js["rows"].push_back({{"name", r.name},
                              {"mean", r.mean},
                              {"sd", r.sd},
                              {"q0.025", r.q025},
                              {"q0.5", r.q50},
                              {"q0.975", r.q975}});
      out["sections"].push_back(js);
    }
    out["mlik_integration"] = mlik_integration;
    out["mlik_gaussian"] = mlik_gaussian;
    out["dic"] = dic;
    out["waic"] = waic;
    out["seconds"] = seconds;
    return out;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    for (const auto& sec : sections) {
      os << sec.title << "\n";
      std::size_t w = 12;
      for (const auto& r : sec.rows) w = std::max(w, r.name.size());
      os << std::setw(static_cast<int>(w)) << "" << std::setw(10) << "mean" << std::setw(9) << "sd"
         << std::setw(12) << "0.025quant" << std::setw(10) << "0.5quant" << std::setw(12)
         << "0.975quant"
         << "\n";
      for (const auto& r : sec.rows)
        os << std::setw(static_cast<int>(w)) << std::left << r.name << std::right << std::setw(10)
           << r.mean << std::setw(9) << r.sd << std::setw(12) << r.q025 << std::setw(10) << r.q50
           << std::setw(12) << r.q975 << "\n";
      os << "\n";
    }
    os << "log marginal-likelihood (integration)    log marginal-likelihood (Gaussian)\n";
    os << std::setw(37) << std::setprecision(2) << mlik_integration << std::setw(38)
       << mlik_gaussian << "\n\n";
    os << std::setprecision(3);
    os << "Deviance Information Criterion:  " << dic << "\n";
    os << "Widely applicable Bayesian information criterion:  " << waic << "\n";
    os << "Computation time: " << std::setprecision(2) << seconds << " seconds\n";
    return os.str();
  }
};

namespace detail {

inline SummaryRow row_from_samples(const std::string& name, std::vector<double> samples) {
  SummaryRow r;
  r.name = name;
  const std::size_t n = samples.size();
  double mean = 0;
  for (double v : samples) mean += v;
  mean /= n;
  double var = 0;
  for (double v : samples) var += (v - mean) * (v - mean);
  std::sort(samples.begin(), samples.end());
  auto q = [&](double prob) {
    double idx = prob * (n - 1);
    std::size_t lo = static_cast<std::size_t>(idx);
    double frac = idx - lo;
    return lo + 1 < n ? samples[lo] * (1 - frac) + samples[lo + 1] * frac : samples[lo];
  };
  r.mean = mean;
  r.sd = std::sqrt(var / (n - 1));
  r.q025 = q(0.025);
  r.q50 = q(0.5);
  r.q975 = q(0.975);
  return r;
}

inline SummaryRow row_from_marginal(const std::string& name, const PosteriorMarginal& m) {
  SummaryRow r;
  r.name = name;
  r.mean = m.mean;
  r.sd = m.sd;
  r.q025 = m.quantile(0.025);
  r.q50 = m.quantile(0.5);
  r.q975 = m.quantile(0.975);
  return r;
}

}  // namespace detail

/// Deviance information criterion from posterior draws: DIC = Dbar + pD,
/// pD = Dbar - D(posterior means).
inline double dic(const JointFit& fit, int n_samples = 1000, std::uint64_t seed = 71) {
  PosteriorDraws draws = sample_posterior(fit, n_samples, seed);
  const AssembledModel& model = fit.model;
  std::vector<SpMat> A_at(fit.n_points());
  std::vector<bool> built(fit.n_points(), false);
  double dbar = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    int h = draws.point[i];
    if (!built[h]) {
      A_at[h] = model.build_A(draws.omega[i]);
      built[h] = true;
    }
    Eigen::VectorXd eta = A_at[h] * draws.u[i];
    std::vector<double> etav(eta.data(), eta.data() + eta.size());
    dbar += -2.0 * total_loglik(model.rows, etav, draws.omega[i].data()).value;
  }
  dbar /= n_samples;

  Eigen::VectorXd u_mean = Eigen::VectorXd::Zero(model.n_latent());
  for (int h = 0; h < fit.n_points(); ++h)
    u_mean += fit.explore.points[h].weight * fit.explore.points[h].ga.mode;
  Eigen::VectorXd omega_mean;
  Eigen::MatrixXd omega_cov;
  fit.omega_moments(omega_mean, omega_cov);
  SpMat A = model.build_A(omega_mean);
  Eigen::VectorXd eta = A * u_mean;
  std::vector<double> etav(eta.data(), eta.data() + eta.size());
  double d_hat = -2.0 * total_loglik(model.rows, etav, omega_mean.data()).value;
  double pd = dbar - d_hat;
  return dbar + pd;
}

/// Widely applicable information criterion from posterior draws:
/// WAIC = -2 [ sum_i log mean_s p_i(s) - sum_i var_s log p_i(s) ].
inline double waic(const JointFit& fit, int n_samples = 1000, std::uint64_t seed = 72) {
  PosteriorDraws draws = sample_posterior(fit, n_samples, seed);
  const AssembledModel& model = fit.model;
  const int R = model.n_rows();
  std::vector<SpMat> A_at(fit.n_points());
  std::vector<bool> built(fit.n_points(), false);
  // running per-row statistics over samples
  std::vector<double> max_lp(R, -std::numeric_limits<double>::infinity());
  std::vector<std::vector<double>> lp(R);
  for (int i = 0; i < n_samples; ++i) {
    int h = draws.point[i];
    if (!built[h]) {
      A_at[h] = model.build_A(draws.omega[i]);
      built[h] = true;
    }
    Eigen::VectorXd eta = A_at[h] * draws.u[i];
    for (int r = 0; r < R; ++r) {
      if (!model.rows[r].has_likelihood()) continue;
      double v = loglik(model.rows[r], eta[r], draws.omega[i].data()).value;
      lp[r].push_back(v);
      max_lp[r] = std::max(max_lp[r], v);
    }
  }
  double lppd = 0.0, pwaic = 0.0;
  for (int r = 0; r < R; ++r) {
    if (lp[r].empty()) continue;
    double se = 0.0, m = 0.0;
    for (double v : lp[r]) {
      se += std::exp(v - max_lp[r]);
      m += v;
    }
    m /= lp[r].size();
    double var = 0.0;
    for (double v : lp[r]) var += (v - m) * (v - m);
    var /= (lp[r].size() - 1);
    lppd += max_lp[r] + std::log(se / lp[r].size());
    pwaic += var;
  }
  return -2.0 * (lppd - pwaic);
}

/// Everything the summary tables need; buildable from an in-memory fit or a
/// loaded archive.
struct SummarySource {
  const ModelSpec* spec = nullptr;
  const LatentLayout* layout = nullptr;
  const HyperLayout* hyper = nullptr;
  std::function<PosteriorMarginal(int)> latent_marginal;
  std::function<Eigen::VectorXd(std::mt19937_64&)> sample_omega;
  double mlik_integration = 0, mlik_gaussian = 0, seconds = 0;
};

/// User-facing summary tables. Scale transforms (variance/sd/correlation,
/// hazard ratios, Weibull scale) are done by transforming posterior samples
/// rather than by the delta method.
inline FitSummary summarize_source(const SummarySource& src, bool sdcor = false, bool hr = false,
                                   int n_samples = 10000) {
  const ModelSpec& spec = *src.spec;
  const LatentLayout& layout = *src.layout;
  const HyperLayout& hyper = *src.hyper;
  FitSummary out;

  std::mt19937_64 rng(spec.controls.seed ^ 0x5eed5eedULL);
  Eigen::MatrixXd omega_samples(n_samples, std::max(hyper.dim(), 1));
  for (int i = 0; i < n_samples; ++i) {
    Eigen::VectorXd w = src.sample_omega(rng);
    for (int j = 0; j < hyper.dim(); ++j) omega_samples(i, j) = w[j];
  }
  auto transformed_row = [&](const std::string& name, auto&& fn) {
    std::vector<double> s(n_samples);
    for (int i = 0; i < n_samples; ++i) s[i] = fn(omega_samples.row(i));
    return detail::row_from_samples(name, std::move(s));
  };
  auto latent_samples = [&](int index) {
    std::vector<double> s(n_samples);
    PosteriorMarginal m = src.latent_marginal(index);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int i = 0; i < n_samples; ++i) {
      double r = ud(rng), acc = 0.0;
      std::size_t h = 0;
      for (; h < m.weights.size(); ++h) {
        acc += m.weights[h];
        if (r <= acc) break;
      }
      if (h == m.weights.size()) --h;
      s[i] = m.means[h] + m.sds[h] * nd(rng);
    }
    return s;
  };

  // residual log-precision index per marker
  std::vector<int> res_idx(spec.n_long(), -1);
  std::vector<int> shape_idx(spec.n_surv(), -1);
  for (int i = 0; i < hyper.dim(); ++i) {
    const HyperEntry& e = hyper.entries[i];
    if (e.kind == HyperEntry::ResLogPrec) res_idx[e.outcome] = i;
    if (e.kind == HyperEntry::WeibullLogShape) shape_idx[e.outcome] = i;
  }

  for (int k = 0; k < spec.n_long(); ++k) {
    SummarySection sec;
    sec.title = "Longitudinal outcome (L" + std::to_string(k + 1) + ", " +
                family_name(spec.longitudinal[k].family) + ")";
    for (int j = 0; j < layout.long_fixed_dim[k]; ++j) {
      int idx = layout.long_fixed_offset[k] + j;
      sec.rows.push_back(detail::row_from_marginal(layout.names[idx], src.latent_marginal(idx)));
    }
    if (res_idx[k] >= 0) {
      int j = res_idx[k];
      if (sdcor)
        sec.rows.push_back(transformed_row(
            "Res. err. (sd)", [&](const auto& w) { return std::exp(-0.5 * w[j]); }));
      else
        sec.rows.push_back(transformed_row("Res. err. (variance)",
                                           [&](const auto& w) { return std::exp(-w[j]); }));
    }
    out.sections.push_back(std::move(sec));
  }

  // random-effect groups
  for (std::size_t g = 0; g < layout.re_groups.size(); ++g) {
    const REGroup& grp = layout.re_groups[g];
    const int d = grp.dim();
    SummarySection sec;
    bool single_marker = true;
    int marker = grp.terms[0].marker;
    for (const auto& t : grp.terms) single_marker &= (t.marker == marker);
    std::string scope;
    if (grp.terms[0].marker < 0)
      scope = " (S" + std::to_string(grp.terms[0].surv + 1) + ")";
    else if (single_marker && !spec.cor_long)
      scope = " (L" + std::to_string(marker + 1) + ")";
    sec.title = sdcor ? "Random effects standard deviation / correlation" + scope
                      : "Random effects variance-covariance" + scope;
    // per-sample covariance reconstruction
    std::vector<Eigen::MatrixXd> covs(n_samples);
    for (int i = 0; i < n_samples; ++i) {
      Eigen::VectorXd w = omega_samples.row(i).transpose();
      covs[i] = group_covariance(hyper, layout, static_cast<int>(g), w);
    }
    for (int a = 0; a < d; ++a) {
      std::vector<double> s(n_samples);
      for (int i = 0; i < n_samples; ++i)
        s[i] = sdcor ? std::sqrt(covs[i](a, a)) : covs[i](a, a);
      sec.rows.push_back(detail::row_from_samples(grp.terms[a].label, std::move(s)));
    }
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b) {
        std::vector<double> s(n_samples);
        for (int i = 0; i < n_samples; ++i)
          s[i] = sdcor ? covs[i](a, b) / std::sqrt(covs[i](a, a) * covs[i](b, b)) : covs[i](a, b);
        sec.rows.push_back(
            detail::row_from_samples(grp.terms[a].label + ":" + grp.terms[b].label, std::move(s)));
      }
    out.sections.push_back(std::move(sec));
  }

  // survival outcomes
  for (int s = 0; s < spec.n_surv(); ++s) {
    const SurvSpec& ss = spec.survival[s];
    SummarySection sec;
    sec.title = "Survival outcome (S" + std::to_string(s + 1) + ")";
    const std::string tag = "_S" + std::to_string(s + 1);
    int intercept_idx = -1;
    for (int j = 0; j < layout.surv_fixed_dim[s]; ++j)
      if (ss.fixed_terms[j].is_intercept()) intercept_idx = layout.surv_fixed_offset[s] + j;

    if (ss.baseline == BaselineKind::weibull && shape_idx[s] >= 0) {
      int j = shape_idx[s];
      sec.rows.push_back(transformed_row("Weibull (shape)" + tag,
                                         [&](const auto& w) { return std::exp(w[j]); }));
      if (intercept_idx >= 0) {
        auto sc = latent_samples(intercept_idx);
        for (auto& v : sc) v = std::exp(v);
        sec.rows.push_back(detail::row_from_samples("Weibull (scale)" + tag, std::move(sc)));
      }
    } else if (ss.baseline == BaselineKind::exponential) {
      if (intercept_idx >= 0) {
        auto sc = latent_samples(intercept_idx);
        for (auto& v : sc) v = std::exp(v);
        sec.rows.push_back(detail::row_from_samples("Exponential (rate)" + tag, std::move(sc)));
      }
    } else {
      for (int i = 0; i < hyper.dim(); ++i) {
        const HyperEntry& e = hyper.entries[i];
        if (e.kind != HyperEntry::RWLogPrec || e.outcome != s) continue;
        int j = i;
        if (sdcor)
          sec.rows.push_back(transformed_row("Baseline risk (sd)" + tag, [&](const auto& w) {
            return std::exp(-0.5 * w[j]);
          }));
        else
          sec.rows.push_back(transformed_row(
              "Baseline risk (variance)" + tag, [&](const auto& w) { return std::exp(-w[j]); }));
      }
    }
    for (int j = 0; j < layout.surv_fixed_dim[s]; ++j) {
      int idx = layout.surv_fixed_offset[s] + j;
      bool ic = ss.fixed_terms[j].is_intercept();
      if (ic && ss.baseline != BaselineKind::rw1 && ss.baseline != BaselineKind::rw2)
        continue;  // shown as the scale / rate above
      if (hr && !ic) {
        auto sc = latent_samples(idx);
        for (auto& v : sc) v = std::exp(v);
        sec.rows.push_back(detail::row_from_samples(layout.names[idx], std::move(sc)));
      } else {
        sec.rows.push_back(detail::row_from_marginal(layout.names[idx], src.latent_marginal(idx)));
      }
    }
    out.sections.push_back(std::move(sec));
  }

  // associations
  bool any_assoc = false;
  for (int i = 0; i < hyper.dim(); ++i)
    if (hyper.entries[i].kind == HyperEntry::Assoc) any_assoc = true;
  if (any_assoc) {
    SummarySection sec;
    sec.title = "Association longitudinal - survival";
    for (int i = 0; i < hyper.dim(); ++i) {
      const HyperEntry& e = hyper.entries[i];
      if (e.kind != HyperEntry::Assoc) continue;
      sec.rows.push_back(
          transformed_row(e.name, [&](const auto& w) { return w[i]; }));
    }
    out.sections.push_back(std::move(sec));
  }

  out.mlik_integration = src.mlik_integration;
  out.mlik_gaussian = src.mlik_gaussian;
  out.seconds = src.seconds;
  return out;
}

inline SummarySource summary_source(const JointFit& fit) {
  SummarySource src;
  src.spec = &fit.model.spec;
  src.layout = &fit.model.layout;
  src.hyper = &fit.model.hyper;
  src.latent_marginal = [&fit](int i) { return fit.latent_marginal(i); };
  src.sample_omega = [&fit](std::mt19937_64& rng) { return fit.sample_omega(rng); };
  src.mlik_integration = fit.explore.mlik_integration;
  src.mlik_gaussian = fit.explore.mlik_gaussian;
  src.seconds = fit.seconds;
  return src;
}

inline FitSummary summarize(const JointFit& fit, bool sdcor = false, bool hr = false,
                            int n_samples = 10000, bool with_criteria = true) {
  FitSummary out = summarize_source(summary_source(fit), sdcor, hr, n_samples);
  if (with_criteria) {
    out.dic = dic(fit);
    out.waic = waic(fit);
  }
  return out;
}

}  // namespace lgmjoint

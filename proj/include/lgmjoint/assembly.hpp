#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "lgmjoint/csv.hpp"
#include "lgmjoint/design.hpp"
#include "lgmjoint/layout.hpp"
#include "lgmjoint/likelihoods.hpp"
#include "lgmjoint/model_spec.hpp"
#include "lgmjoint/surv_augment.hpp"
#include "lgmjoint/time_basis.hpp"

namespace lgmjoint {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// One hyperparameter entry of the omega vector.
struct HyperEntry {
  enum Kind { ResLogPrec, REChol, RWLogPrec, WeibullLogShape, Assoc } kind;
  std::string name;
  int outcome = -1;   // marker index (ResLogPrec) or survival index (RW / Weibull)
  int group = -1;     // RE group (REChol)
  int row = -1, col = -1;  // Cholesky slot, row >= col
  int pair_long = -1, pair_surv = -1;  // association origin
  bool sre_ind = false;
  double init = 0.0;
  // Gaussian prior (Assoc, WeibullLogShape) or log-gamma prior on the
  // precision (ResLogPrec, RWLogPrec); REChol entries are covered by the
  // group Wishart prior.
  double g_mean = 0.0, g_prec = 1.0;
  double lg_shape = 1.0, lg_rate = 5e-5;
};

struct HyperLayout {
  std::vector<HyperEntry> entries;
  std::vector<int> group_theta_offset;  // per RE group, -1 if it has no free params

  int dim() const { return static_cast<int>(entries.size()); }
  Eigen::VectorXd init() const {
    Eigen::VectorXd v(dim());
    for (int i = 0; i < dim(); ++i) v[i] = entries[i].init;
    return v;
  }
};

namespace detail {

/// Lower-Cholesky factor of an RE-group precision from its log-Cholesky
/// parameters: diagonal first (log scale), then the strict lower triangle
/// column by column.
inline Eigen::MatrixXd re_chol_from_theta(const double* theta, int d) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) L(i, i) = std::exp(theta[i]);
  int idx = d;
  for (int j = 0; j < d; ++j)
    for (int i = j + 1; i < d; ++i) L(i, j) = theta[idx++];
  return L;
}

inline int re_theta_dim(int d) { return d + d * (d - 1) / 2; }

/// log Gamma(exp(theta); shape, rate) plus the log-scale Jacobian.
inline double loggamma_logprec_prior(double theta, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + shape * theta - rate * std::exp(theta);
}

inline double gaussian_logpdf(double x, double mean, double prec) {
  return 0.5 * std::log(prec / (2.0 * M_PI)) - 0.5 * prec * (x - mean) * (x - mean);
}

inline double multivariate_lgamma(double a, int d) {
  double v = 0.25 * d * (d - 1) * std::log(M_PI);
  for (int j = 1; j <= d; ++j) v += std::lgamma(a + 0.5 * (1 - j));
  return v;
}

/// Wishart(r, scale R*I) log-density on the precision P = L L', with the
/// Jacobian of the log-Cholesky parametrization: |dP/dtheta| = 2^d *
/// prod_i L_ii^(d - i + 2).
inline double wishart_logchol_prior(const Eigen::MatrixXd& L, double r, double R) {
  const int d = static_cast<int>(L.rows());
  double logdetP = 0.0;
  for (int i = 0; i < d; ++i) logdetP += 2.0 * std::log(L(i, i));
  double trRP = R * L.squaredNorm();  // tr(R*I * LL') = R * sum L_ij^2
  double log_norm = -0.5 * r * d * std::log(2.0) + 0.5 * r * d * std::log(R) -
                    multivariate_lgamma(0.5 * r, d);
  double log_density = log_norm + 0.5 * (r - d - 1.0) * logdetP - 0.5 * trRP;
  double log_jac = d * std::log(2.0);
  for (int i = 0; i < d; ++i) log_jac += (d - i + 1.0) * std::log(L(i, i));
  return log_density + log_jac;
}

}  // namespace detail

/// Precomputed pieces of one rw-baseline prior block.
struct BaselinePrior {
  int surv = -1;
  int block = -1;          // index into layout.baselines
  int omega_index = -1;    // -1 when the precision is pinned
  double fixed_log_prec = 0.0;
  SpMat structure;         // D'D + jitter*I, SPD
  double logdet_structure = 0.0;
  double ones_solve = 0.0;  // 1' structure^{-1} 1, for the constraint correction
};

/// Fully assembled latent Gaussian model: observation rows, sparse
/// predictor-matrix components (base plus one per association scalar),
/// prior machinery, and sum-to-zero constraints for rw baselines.
struct AssembledModel {
  ModelSpec spec;
  LatentLayout layout;
  HyperLayout hyper;
  TimeFunRegistry funs;
  std::vector<ObsRow> rows;

  std::vector<Triplet> trip_base;
  std::vector<std::vector<Triplet>> trip_assoc;  // one list per association scalar
  std::vector<int> assoc_omega;                  // omega index of each scalar

  Eigen::VectorXd prior_mean;
  Eigen::VectorXd prior_diag_fixed;  // fixed-effect precisions (0 elsewhere)
  std::vector<BaselinePrior> baseline_priors;

  std::vector<int> anchor_long_row;  // per subject, first longitudinal row (-1 if none)

  int n_rows() const { return static_cast<int>(rows.size()); }
  int n_latent() const { return layout.n_latent; }
  int n_constraints() const { return static_cast<int>(layout.baselines.size()); }

  /// A(omega): base predictor matrix plus phi-scaled shared columns.
  SpMat build_A(const Eigen::VectorXd& omega) const {
    std::vector<Triplet> trips = trip_base;
    for (std::size_t j = 0; j < trip_assoc.size(); ++j) {
      double phi = omega[assoc_omega[j]];
      for (const auto& t : trip_assoc[j]) trips.emplace_back(t.row(), t.col(), phi * t.value());
    }
    SpMat A(n_rows(), n_latent());
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
  }

  /// Shared-component matrices alone (for derivative checks and the
  /// sampler's caches).
  SpMat assoc_matrix(int j) const {
    SpMat A(n_rows(), n_latent());
    A.setFromTriplets(trip_assoc[j].begin(), trip_assoc[j].end());
    return A;
  }

  /// Block prior precision of the latent field at omega, with its analytic
  /// log-determinant.
  SpMat build_Q_prior(const Eigen::VectorXd& omega, double* logdet = nullptr) const {
    std::vector<Triplet> trips;
    double ld = 0.0;
    for (int i = 0; i < n_latent(); ++i)
      if (prior_diag_fixed[i] > 0) {
        trips.emplace_back(i, i, prior_diag_fixed[i]);
        ld += std::log(prior_diag_fixed[i]);
      }
    for (std::size_t g = 0; g < layout.re_groups.size(); ++g) {
      const REGroup& grp = layout.re_groups[g];
      const int d = grp.dim();
      Eigen::MatrixXd L =
          detail::re_chol_from_theta(omega.data() + hyper.group_theta_offset[g], d);
      Eigen::MatrixXd P = L * L.transpose();
      double logdetP = 0.0;
      for (int i = 0; i < d; ++i) logdetP += 2.0 * std::log(L(i, i));
      for (int s = 0; s < layout.n_subjects(); ++s) {
        int off = grp.block_offset(s);
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) trips.emplace_back(off + a, off + b, P(a, b));
      }
      ld += layout.n_subjects() * logdetP;
    }
    for (const auto& bp : baseline_priors) {
      const BaselineBlock& blk = layout.baselines[bp.block];
      double tau = std::exp(bp.omega_index >= 0 ? omega[bp.omega_index] : bp.fixed_log_prec);
      for (int k = 0; k < bp.structure.outerSize(); ++k)
        for (SpMat::InnerIterator it(bp.structure, k); it; ++it)
          trips.emplace_back(blk.offset + it.row(), blk.offset + it.col(), tau * it.value());
      ld += blk.n * std::log(tau) + bp.logdet_structure;
    }
    SpMat Q(n_latent(), n_latent());
    Q.setFromTriplets(trips.begin(), trips.end());
    if (logdet) *logdet = ld;
    return Q;
  }

  /// Diagonal of C Qprior^{-1} C' for the sum-to-zero constraints (one row
  /// per rw block, so the matrix is diagonal).
  Eigen::VectorXd constraint_prior_cov(const Eigen::VectorXd& omega) const {
    Eigen::VectorXd v(n_constraints());
    for (int c = 0; c < n_constraints(); ++c) {
      const auto& bp = baseline_priors[c];
      double tau = std::exp(bp.omega_index >= 0 ? omega[bp.omega_index] : bp.fixed_log_prec);
      v[c] = bp.ones_solve / tau;
    }
    return v;
  }

  /// Dense constraint matrix row c: ones over baseline block c.
  void apply_constraint_row(int c, Eigen::VectorXd& out, double value) const {
    const BaselineBlock& blk = layout.baselines[c];
    for (int i = 0; i < blk.n; ++i) out[blk.offset + i] += value;
  }

  double constraint_dot(int c, const Eigen::VectorXd& u) const {
    const BaselineBlock& blk = layout.baselines[c];
    double s = 0;
    for (int i = 0; i < blk.n; ++i) s += u[blk.offset + i];
    return s;
  }

  /// Joint log-prior of the hyperparameters, including the change-of-
  /// variable terms of the log / log-Cholesky parametrizations.
  double log_prior_omega(const Eigen::VectorXd& omega) const {
    double v = 0.0;
    for (int i = 0; i < hyper.dim(); ++i) {
      const HyperEntry& e = hyper.entries[i];
      switch (e.kind) {
        case HyperEntry::ResLogPrec:
        case HyperEntry::RWLogPrec:
          v += detail::loggamma_logprec_prior(omega[i], e.lg_shape, e.lg_rate);
          break;
        case HyperEntry::WeibullLogShape:
        case HyperEntry::Assoc:
          v += detail::gaussian_logpdf(omega[i], e.g_mean, e.g_prec);
          break;
        case HyperEntry::REChol:
          break;  // handled per group below
      }
    }
    for (std::size_t g = 0; g < layout.re_groups.size(); ++g) {
      int off = hyper.group_theta_offset[g];
      if (off < 0) continue;
      int d = layout.re_groups[g].dim();
      Eigen::MatrixXd L = detail::re_chol_from_theta(omega.data() + off, d);
      v += detail::wishart_logchol_prior(L, spec.controls.prior_random_r,
                                         spec.controls.prior_random_R);
    }
    return v;
  }

  Eigen::MatrixXd re_covariance(int g, const Eigen::VectorXd& omega) const;
  Eigen::MatrixXd re_precision(int g, const Eigen::VectorXd& omega) const;
};

/// RE-group precision P_g = L L' reconstructed from the log-Cholesky slice
/// of omega.
inline Eigen::MatrixXd group_precision(const HyperLayout& hyper, const LatentLayout& layout,
                                       int g, const Eigen::VectorXd& omega) {
  int d = layout.re_groups[g].dim();
  Eigen::MatrixXd L = detail::re_chol_from_theta(omega.data() + hyper.group_theta_offset[g], d);
  return L * L.transpose();
}

inline Eigen::MatrixXd group_covariance(const HyperLayout& hyper, const LatentLayout& layout,
                                        int g, const Eigen::VectorXd& omega) {
  Eigen::MatrixXd P = group_precision(hyper, layout, g, omega);
  return P.llt().solve(Eigen::MatrixXd::Identity(P.rows(), P.cols()));
}

inline Eigen::MatrixXd AssembledModel::re_covariance(int g, const Eigen::VectorXd& omega) const {
  return group_covariance(hyper, layout, g, omega);
}

inline Eigen::MatrixXd AssembledModel::re_precision(int g, const Eigen::VectorXd& omega) const {
  return group_precision(hyper, layout, g, omega);
}

namespace detail {

inline bool assoc_time_dependent(const ModelSpec& spec, int k, AssocKind kind) {
  if (kind == AssocKind::cv || kind == AssocKind::cs || kind == AssocKind::cv_cs) return true;
  if (kind == AssocKind::sre || kind == AssocKind::sre_ind)
    return std::any_of(spec.longitudinal[k].random_terms.begin(),
                       spec.longitudinal[k].random_terms.end(),
                       [](const Term& t) { return t.time_dependent(); });
  return false;
}

inline void append_scaled(std::vector<Triplet>& dst, int row, const DesignRow& src) {
  for (const auto& [c, v] : src.entries) dst.emplace_back(row, c, v);
}

}  // namespace detail

/// Deterministic latent layout: fixed effects, then RE blocks grouped by
/// (group, subject), then rw-baseline value blocks.
inline LatentLayout allocate_layout(const ModelSpec& spec, const Table& long_data,
                                    const Table& surv_data) {
  LatentLayout layout;
  const bool have_surv_data = surv_data.n_rows() > 0 || !surv_data.columns().empty();
  const Table& surv_tab = have_surv_data ? surv_data : long_data;

  auto add_subject = [&](const std::string& id) {
    if (!layout.subject_index.count(id)) {
      layout.subject_index[id] = static_cast<int>(layout.subjects.size());
      layout.subjects.push_back(id);
    }
  };
  if (!spec.longitudinal.empty())
    for (int r = 0; r < long_data.n_rows(); ++r) add_subject(long_data.raw(r, spec.id_column));
  if (spec.longitudinal.empty() && !spec.survival.empty())
    for (int r = 0; r < surv_tab.n_rows(); ++r) add_subject(surv_tab.raw(r, spec.id_column));

  double max_time = 0.0;
  if (!spec.longitudinal.empty())
    for (int r = 0; r < long_data.n_rows(); ++r) {
      double t = long_data.value(r, spec.time_column);
      if (!std::isnan(t)) max_time = std::max(max_time, t);
    }
  for (const auto& ss : spec.survival)
    for (int r = 0; r < surv_tab.n_rows(); ++r)
      max_time = std::max(max_time, surv_tab.value(r, ss.exit_time));
  layout.max_time = max_time;

  int offset = 0;
  for (int k = 0; k < spec.n_long(); ++k) {
    layout.long_fixed_offset.push_back(offset);
    layout.long_fixed_dim.push_back(static_cast<int>(spec.longitudinal[k].fixed_terms.size()));
    for (const auto& t : spec.longitudinal[k].fixed_terms)
      layout.names.push_back(t.label() + "_L" + std::to_string(k + 1));
    offset += layout.long_fixed_dim.back();
  }
  for (int s = 0; s < spec.n_surv(); ++s) {
    layout.surv_fixed_offset.push_back(offset);
    layout.surv_fixed_dim.push_back(static_cast<int>(spec.survival[s].fixed_terms.size()));
    for (const auto& t : spec.survival[s].fixed_terms)
      layout.names.push_back(t.label() + "_S" + std::to_string(s + 1));
    offset += layout.surv_fixed_dim.back();
  }

  // RE groups
  layout.marker_re.assign(spec.n_long(), {});
  layout.frailty_re.assign(spec.n_surv(), {-1, -1});
  auto new_group = [&]() -> REGroup& {
    layout.re_groups.emplace_back();
    return layout.re_groups.back();
  };
  if (spec.cor_long && spec.n_long() > 1) {
    REGroup& g = new_group();
    int gi = static_cast<int>(layout.re_groups.size()) - 1;
    for (int k = 0; k < spec.n_long(); ++k)
      for (const auto& term : spec.longitudinal[k].random_terms) {
        layout.marker_re[k].push_back({gi, g.dim()});
        g.terms.push_back({k, -1, term, term.label() + "_L" + std::to_string(k + 1)});
      }
    if (g.terms.empty()) layout.re_groups.pop_back();
  } else {
    for (int k = 0; k < spec.n_long(); ++k) {
      const auto& terms = spec.longitudinal[k].random_terms;
      if (terms.empty()) continue;
      if (spec.longitudinal[k].cor_re) {
        REGroup& g = new_group();
        int gi = static_cast<int>(layout.re_groups.size()) - 1;
        for (const auto& term : terms) {
          layout.marker_re[k].push_back({gi, g.dim()});
          g.terms.push_back({k, -1, term, term.label() + "_L" + std::to_string(k + 1)});
        }
      } else {
        for (const auto& term : terms) {
          REGroup& g = new_group();
          int gi = static_cast<int>(layout.re_groups.size()) - 1;
          layout.marker_re[k].push_back({gi, 0});
          g.terms.push_back({k, -1, term, term.label() + "_L" + std::to_string(k + 1)});
        }
      }
    }
  }
  for (int s = 0; s < spec.n_surv(); ++s) {
    if (!spec.survival[s].frailty) continue;
    REGroup& g = new_group();
    int gi = static_cast<int>(layout.re_groups.size()) - 1;
    layout.frailty_re[s] = {gi, 0};
    Term t;  // random intercept
    g.terms.push_back({-1, s, t, "Frailty_S" + std::to_string(s + 1)});
  }
  for (auto& g : layout.re_groups) {
    g.offset0 = offset;
    offset += g.dim() * layout.n_subjects();
    for (int s = 0; s < layout.n_subjects(); ++s)
      for (const auto& term : g.terms)
        layout.names.push_back("b[" + layout.subjects[s] + "]." + term.label);
  }

  // rw baseline blocks
  for (int s = 0; s < spec.n_surv(); ++s) {
    const SurvSpec& ss = spec.survival[s];
    if (ss.baseline != BaselineKind::rw1 && ss.baseline != BaselineKind::rw2) continue;
    double max_exit = 0.0;
    for (int r = 0; r < surv_tab.n_rows(); ++r)
      max_exit = std::max(max_exit, surv_tab.value(r, ss.exit_time));
    Cutpoints cuts = ss.cutpoints.empty() ? make_cutpoints(ss.n_intervals, max_exit)
                                          : cutpoints_from_values(ss.cutpoints, max_exit);
    BaselineBlock blk;
    blk.surv = s;
    blk.offset = offset;
    blk.n = cuts.n_intervals();
    blk.cuts = cuts.c;
    if (blk.n < (ss.baseline == BaselineKind::rw2 ? 3 : 2))
      throw spec_error("survival[" + std::to_string(s) + "]: too few baseline intervals");
    layout.baselines.push_back(blk);
    offset += blk.n;
    for (int m = 0; m < blk.n; ++m)
      layout.names.push_back("baseline[" + std::to_string(m + 1) + "]_S" + std::to_string(s + 1));
  }

  layout.n_latent = offset;
  return layout;
}

/// Hyperparameter vector layout with priors and initial values.
inline HyperLayout build_hyper_layout(const ModelSpec& spec, const LatentLayout& layout) {
  HyperLayout hy;
  const ControlOptions& c = spec.controls;
  for (int k = 0; k < spec.n_long(); ++k) {
    Family f = spec.longitudinal[k].family;
    if (f == Family::gaussian || f == Family::lognormal) {
      HyperEntry e;
      e.kind = HyperEntry::ResLogPrec;
      e.outcome = k;
      e.name = "Res. err. precision_L" + std::to_string(k + 1);
      e.init = 0.0;
      hy.entries.push_back(e);
    }
  }
  hy.group_theta_offset.assign(layout.re_groups.size(), -1);
  for (std::size_t g = 0; g < layout.re_groups.size(); ++g) {
    const REGroup& grp = layout.re_groups[g];
    const int d = grp.dim();
    hy.group_theta_offset[g] = hy.dim();
    for (int i = 0; i < d; ++i) {
      HyperEntry e;
      e.kind = HyperEntry::REChol;
      e.group = static_cast<int>(g);
      e.row = i;
      e.col = i;
      e.name = "RE chol log-diag " + grp.terms[i].label;
      e.init = 0.0;
      hy.entries.push_back(e);
    }
    for (int j = 0; j < d; ++j)
      for (int i = j + 1; i < d; ++i) {
        HyperEntry e;
        e.kind = HyperEntry::REChol;
        e.group = static_cast<int>(g);
        e.row = i;
        e.col = j;
        e.name = "RE chol " + grp.terms[i].label + ":" + grp.terms[j].label;
        e.init = 0.0;
        hy.entries.push_back(e);
      }
  }
  for (int s = 0; s < spec.n_surv(); ++s) {
    const SurvSpec& ss = spec.survival[s];
    if (ss.baseline == BaselineKind::rw1 || ss.baseline == BaselineKind::rw2) {
      if (!ss.fixed_rw_log_precision) {
        HyperEntry e;
        e.kind = HyperEntry::RWLogPrec;
        e.outcome = s;
        e.name = "Baseline risk log-precision_S" + std::to_string(s + 1);
        e.init = 2.0;
        hy.entries.push_back(e);
      }
    } else if (ss.baseline == BaselineKind::weibull) {
      HyperEntry e;
      e.kind = HyperEntry::WeibullLogShape;
      e.outcome = s;
      e.name = "Weibull log-shape_S" + std::to_string(s + 1);
      e.init = 0.0;
      e.g_mean = 0.0;
      e.g_prec = 0.5;
      hy.entries.push_back(e);
    }
  }
  for (int k = 0; k < spec.n_long(); ++k)
    for (int s = 0; s < spec.n_surv(); ++s) {
      AssocKind kind = spec.assoc[k][s];
      if (kind == AssocKind::none) continue;
      auto add_assoc = [&](const std::string& prefix, bool sre_ind) {
        HyperEntry e;
        e.kind = HyperEntry::Assoc;
        e.pair_long = k;
        e.pair_surv = s;
        e.sre_ind = sre_ind;
        e.name = prefix + "_L" + std::to_string(k + 1) + "_S" + std::to_string(s + 1);
        e.init = c.assoc_init;
        const PriorGaussian& pg = sre_ind ? c.prior_sre_ind : c.prior_assoc;
        e.g_mean = pg.mean;
        e.g_prec = pg.prec;
        hy.entries.push_back(e);
      };
      switch (kind) {
        case AssocKind::cv: add_assoc("CV", false); break;
        case AssocKind::cs: add_assoc("CS", false); break;
        case AssocKind::cv_cs:
          add_assoc("CV", false);
          add_assoc("CS", false);
          break;
        case AssocKind::sre: add_assoc("SRE", false); break;
        case AssocKind::sre_ind: {
          for (const auto& term : spec.longitudinal[k].random_terms)
            add_assoc("SRE_" + term.label(), true);
          break;
        }
        case AssocKind::none: break;
      }
    }
  return hy;
}

/// Assemble the full model from a validated spec and the data tables.
inline AssembledModel assemble(const ModelSpec& spec, const Table& long_data,
                               const Table& surv_data) {
  AssembledModel model;
  model.spec = spec;
  const bool have_surv_data = surv_data.n_rows() > 0 || !surv_data.columns().empty();
  const Table& surv_tab = have_surv_data ? surv_data : long_data;

  model.layout = allocate_layout(spec, long_data, surv_data);
  model.hyper = build_hyper_layout(spec, model.layout);
  model.funs = TimeFunRegistry(spec.time_functions, model.layout.max_time);
  const LatentLayout& layout = model.layout;

  // omega indices of residual precisions / weibull shapes / associations
  std::vector<int> res_idx(spec.n_long(), -1);
  std::vector<int> shape_idx(spec.n_surv(), -1);
  std::map<std::string, int> assoc_idx;
  for (int i = 0; i < model.hyper.dim(); ++i) {
    const HyperEntry& e = model.hyper.entries[i];
    if (e.kind == HyperEntry::ResLogPrec) res_idx[e.outcome] = i;
    if (e.kind == HyperEntry::WeibullLogShape) shape_idx[e.outcome] = i;
    if (e.kind == HyperEntry::Assoc) assoc_idx[e.name] = i;
  }

  // first longitudinal row per subject (covariate anchor for shared terms)
  model.anchor_long_row.assign(layout.n_subjects(), -1);
  if (!spec.longitudinal.empty())
    for (int r = 0; r < long_data.n_rows(); ++r) {
      int s = layout.subject_of(long_data.raw(r, spec.id_column));
      if (model.anchor_long_row[s] < 0) model.anchor_long_row[s] = r;
    }

  // longitudinal rows
  for (int k = 0; k < spec.n_long(); ++k) {
    const LongSpec& ls = spec.longitudinal[k];
    auto rows = build_rows(spec, k, layout, model.funs, long_data);
    int rcol = long_data.col_index(ls.response);
    for (auto& dr : rows) {
      ObsRow obs;
      obs.outcome = k;
      obs.family = ls.family;
      obs.subject = dr.subject;
      obs.eval_time = dr.time;
      obs.data_row = dr.data_row;
      obs.ntrials = ls.ntrials;
      obs.hyper_res = res_idx[k];
      double y = long_data.value(dr.data_row, rcol);
      if (ls.family == Family::lognormal && !std::isnan(y)) {
        if (!(y > 0))
          throw spec_error("lognormal response must be > 0 (row " +
                           std::to_string(dr.data_row + 1) + ")");
        obs.y = std::log(y);
        obs.loglik_const = -obs.y;  // d(log y)/dy Jacobian
      } else {
        obs.y = y;
      }
      if (ls.family == Family::poisson && !std::isnan(y) && y < 0)
        throw spec_error("negative count response (row " + std::to_string(dr.data_row + 1) + ")");
      int row_id = model.n_rows();
      model.rows.push_back(obs);
      detail::append_scaled(model.trip_base, row_id, dr);
    }
  }

  // association scalar slots, in hyper order
  model.trip_assoc.clear();
  model.assoc_omega.clear();
  for (int i = 0; i < model.hyper.dim(); ++i)
    if (model.hyper.entries[i].kind == HyperEntry::Assoc) {
      model.assoc_omega.push_back(i);
      model.trip_assoc.emplace_back();
    }
  auto assoc_slot = [&](int omega_index) {
    for (std::size_t j = 0; j < model.assoc_omega.size(); ++j)
      if (model.assoc_omega[j] == omega_index) return static_cast<int>(j);
    throw std::logic_error("assoc slot not found");
  };

  const double cs_delta = spec.controls.cs_delta_frac * std::max(layout.max_time, 1e-8);

  // survival rows
  for (int s = 0; s < spec.n_surv(); ++s) {
    const SurvSpec& ss = spec.survival[s];
    bool any_timedep = false;
    for (int k = 0; k < spec.n_long(); ++k)
      if (spec.assoc[k][s] != AssocKind::none &&
          detail::assoc_time_dependent(spec, k, spec.assoc[k][s]))
        any_timedep = true;
    const bool rw = ss.baseline == BaselineKind::rw1 || ss.baseline == BaselineKind::rw2;
    const bool decomp = rw || any_timedep;
    const BaselineBlock* blk = layout.baseline_for(s);

    Cutpoints cuts;
    if (decomp) {
      if (rw) {
        cuts.c = blk->cuts;
      } else {
        double max_exit = 0.0;
        for (int r = 0; r < surv_tab.n_rows(); ++r)
          max_exit = std::max(max_exit, surv_tab.value(r, ss.exit_time));
        cuts = ss.cutpoints.empty() ? make_cutpoints(ss.n_intervals, max_exit)
                                    : cutpoints_from_values(ss.cutpoints, max_exit);
      }
    }

    for (int r = 0; r < surv_tab.n_rows(); ++r) {
      const std::string id = surv_tab.raw(r, spec.id_column);
      if (!layout.subject_index.count(id)) {
        if (spec.longitudinal.empty()) continue;  // cannot happen, subjects come from surv
        throw spec_error("survival subject '" + id + "' has zero longitudinal observations");
      }
      int subject = layout.subject_of(id);
      double exit = surv_tab.value(r, ss.exit_time);
      double entry = ss.entry_time.empty() ? 0.0 : surv_tab.value(r, ss.entry_time);
      int event = static_cast<int>(surv_tab.value(r, ss.event));
      int anchor_long = model.anchor_long_row[subject];

      auto add_assoc_columns = [&](int row_id, double t) {
        for (int k = 0; k < spec.n_long(); ++k) {
          AssocKind kind = spec.assoc[k][s];
          if (kind == AssocKind::none) continue;
          if (anchor_long < 0)
            throw spec_error("subject '" + id + "' has no longitudinal rows for association");
          std::string suffix = "_L" + std::to_string(k + 1) + "_S" + std::to_string(s + 1);
          if (kind == AssocKind::cv || kind == AssocKind::cv_cs) {
            DesignRow shared = eval_predictor_basis(spec, k, layout, model.funs, long_data,
                                                    anchor_long, subject, t);
            int j = assoc_slot(assoc_idx.at("CV" + suffix));
            for (const auto& [c, v] : shared.entries) model.trip_assoc[j].emplace_back(row_id, c, v);
          }
          if (kind == AssocKind::cs || kind == AssocKind::cv_cs) {
            DesignRow shared = predictor_time_derivative(spec, k, layout, model.funs, long_data,
                                                         anchor_long, subject, t, cs_delta);
            int j = assoc_slot(assoc_idx.at("CS" + suffix));
            for (const auto& [c, v] : shared.entries) model.trip_assoc[j].emplace_back(row_id, c, v);
          }
          if (kind == AssocKind::sre) {
            DesignRow shared = eval_predictor_basis(spec, k, layout, model.funs, long_data,
                                                    anchor_long, subject, t, false, true);
            int j = assoc_slot(assoc_idx.at("SRE" + suffix));
            for (const auto& [c, v] : shared.entries) model.trip_assoc[j].emplace_back(row_id, c, v);
          }
          if (kind == AssocKind::sre_ind) {
            const auto& terms = spec.longitudinal[k].random_terms;
            for (std::size_t jt = 0; jt < terms.size(); ++jt) {
              const auto pos = layout.marker_re[k][jt];
              const REGroup& grp = layout.re_groups[pos.group];
              double z = detail::term_value(terms[jt], long_data, anchor_long, t, model.funs);
              int j = assoc_slot(assoc_idx.at("SRE_" + terms[jt].label() + suffix));
              if (z != 0.0)
                model.trip_assoc[j].emplace_back(row_id, grp.block_offset(subject) + pos.slot, z);
            }
          }
        }
      };

      if (!decomp) {
        ObsRow obs;
        obs.outcome = spec.n_long() + s;
        obs.family = ss.baseline == BaselineKind::weibull ? Family::weibull_surv
                                                          : Family::exponential_surv;
        obs.subject = subject;
        obs.entry = entry;
        obs.exit = exit;
        obs.event = event;
        obs.eval_time = exit;
        obs.data_row = r;
        obs.hyper_shape = shape_idx[s];
        obs.y = event;
        int row_id = model.n_rows();
        model.rows.push_back(obs);
        DesignRow base =
            build_surv_row(spec, s, layout, model.funs, surv_tab, r, subject, obs.eval_time);
        detail::append_scaled(model.trip_base, row_id, base);
        add_assoc_columns(row_id, obs.eval_time);
        continue;
      }

      // exposure rows integrate the cumulative hazard at interval midpoints;
      // the event indicator is carried by a separate exposure-free row at
      // the exact event time
      auto pseudo = decompose(entry, exit, event, cuts);
      for (const auto& pr : pseudo) {
        ObsRow obs;
        obs.outcome = spec.n_long() + s;
        obs.subject = subject;
        obs.eval_time = pr.eval_time;
        obs.data_row = r;
        if (rw) {
          obs.family = Family::poisson_surv;
          obs.y = 0;
          obs.offset = pr.offset();
        } else {
          obs.family = ss.baseline == BaselineKind::weibull ? Family::weibull_surv
                                                            : Family::exponential_surv;
          obs.entry = pr.entry;
          obs.exit = pr.exit;
          obs.event = 0;
          obs.y = 0;
          obs.hyper_shape = shape_idx[s];
        }
        int row_id = model.n_rows();
        model.rows.push_back(obs);
        DesignRow base =
            build_surv_row(spec, s, layout, model.funs, surv_tab, r, subject, pr.eval_time);
        detail::append_scaled(model.trip_base, row_id, base);
        if (rw) model.trip_base.emplace_back(row_id, blk->offset + (pr.interval - 1), 1.0);
        add_assoc_columns(row_id, pr.eval_time);
      }
      if (event == 1) {
        ObsRow obs;
        obs.outcome = spec.n_long() + s;
        obs.subject = subject;
        obs.eval_time = exit;
        obs.data_row = r;
        if (rw) {
          obs.family = Family::poisson_surv;
          obs.y = 1;
          obs.point_event = true;
        } else {
          obs.family = ss.baseline == BaselineKind::weibull ? Family::weibull_surv
                                                            : Family::exponential_surv;
          obs.entry = exit;
          obs.exit = exit;
          obs.event = 1;
          obs.y = 1;
          obs.hyper_shape = shape_idx[s];
        }
        int row_id = model.n_rows();
        model.rows.push_back(obs);
        DesignRow base =
            build_surv_row(spec, s, layout, model.funs, surv_tab, r, subject, exit);
        detail::append_scaled(model.trip_base, row_id, base);
        if (rw) model.trip_base.emplace_back(row_id, blk->offset + blk->interval_of(exit), 1.0);
        add_assoc_columns(row_id, exit);
      }
    }
  }

  // prior mean and fixed-effect precisions
  model.prior_mean = Eigen::VectorXd::Zero(layout.n_latent);
  model.prior_diag_fixed = Eigen::VectorXd::Zero(layout.n_latent);
  const ControlOptions& c = spec.controls;
  for (int k = 0; k < spec.n_long(); ++k)
    for (int j = 0; j < layout.long_fixed_dim[k]; ++j) {
      bool ic = spec.longitudinal[k].fixed_terms[j].is_intercept();
      const PriorGaussian& pg = ic ? c.prior_fixed_intercept : c.prior_fixed;
      model.prior_mean[layout.long_fixed_offset[k] + j] = pg.mean;
      model.prior_diag_fixed[layout.long_fixed_offset[k] + j] = pg.prec;
    }
  for (int s = 0; s < spec.n_surv(); ++s)
    for (int j = 0; j < layout.surv_fixed_dim[s]; ++j) {
      bool ic = spec.survival[s].fixed_terms[j].is_intercept();
      const PriorGaussian& pg = ic ? c.prior_fixed_intercept : c.prior_fixed;
      model.prior_mean[layout.surv_fixed_offset[s] + j] = pg.mean;
      model.prior_diag_fixed[layout.surv_fixed_offset[s] + j] = pg.prec;
    }

  // rw baseline prior blocks
  for (std::size_t b = 0; b < layout.baselines.size(); ++b) {
    const BaselineBlock& blk = layout.baselines[b];
    const SurvSpec& ss = spec.survival[blk.surv];
    BaselinePrior bp;
    bp.surv = blk.surv;
    bp.block = static_cast<int>(b);
    int order = ss.baseline == BaselineKind::rw2 ? 2 : 1;
    SpMat R = rw_precision(order, blk.n);
    for (int i = 0; i < blk.n; ++i) R.coeffRef(i, i) += 1e-5;
    R.makeCompressed();
    bp.structure = R;
    Eigen::MatrixXd Rd(R);
    Eigen::LLT<Eigen::MatrixXd> llt(Rd);
    bp.logdet_structure = 0.0;
    for (int i = 0; i < blk.n; ++i) bp.logdet_structure += 2.0 * std::log(llt.matrixL()(i, i));
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(blk.n);
    bp.ones_solve = ones.dot(llt.solve(ones));
    if (ss.fixed_rw_log_precision) {
      bp.omega_index = -1;
      bp.fixed_log_prec = *ss.fixed_rw_log_precision;
    } else {
      for (int i = 0; i < model.hyper.dim(); ++i)
        if (model.hyper.entries[i].kind == HyperEntry::RWLogPrec &&
            model.hyper.entries[i].outcome == blk.surv)
          bp.omega_index = i;
    }
    model.baseline_priors.push_back(bp);
  }

  return model;
}

}  // namespace lgmjoint

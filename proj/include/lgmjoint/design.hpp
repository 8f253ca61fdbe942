#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lgmjoint/csv.hpp"
#include "lgmjoint/layout.hpp"
#include "lgmjoint/model_spec.hpp"
#include "lgmjoint/time_basis.hpp"

namespace lgmjoint {

/// Sparse row of the predictor matrix: (latent column, value) pairs.
struct DesignRow {
  std::vector<std::pair<int, double>> entries;
  int outcome = -1;
  int subject = -1;
  double time = 0.0;
  int data_row = -1;

  void add(int col, double v) {
    if (v != 0.0) entries.push_back({col, v});
  }
  double dot(const std::vector<double>& u) const {
    double s = 0;
    for (const auto& [c, v] : entries) s += v * u[c];
    return s;
  }
};

namespace detail {

/// Value of one factor: covariates come from the anchor data row, time and
/// time functions are evaluated at `t`.
inline double factor_value(const TermFactor& f, const Table& data, int row, double t,
                           const TimeFunRegistry& funs) {
  switch (f.kind) {
    case TermFactor::Intercept: return 1.0;
    case TermFactor::TimeVar: return t;
    case TermFactor::TimeFun: return funs.get(f.name)(t);
    case TermFactor::Column: {
      double v = data.value(row, f.name);
      if (std::isnan(v))
        throw spec_error("missing covariate '" + f.name + "' in row " + std::to_string(row + 1));
      return v;
    }
  }
  return 0.0;
}

inline double term_value(const Term& term, const Table& data, int row, double t,
                         const TimeFunRegistry& funs) {
  if (term.is_intercept()) return 1.0;
  double v = 1.0;
  for (const auto& f : term.factors) v *= factor_value(f, data, row, t, funs);
  return v;
}

}  // namespace detail

/// Full predictor row for longitudinal submodel k of `subject`, evaluated at
/// time t with covariates anchored at `data` row `anchor_row`. Used both for
/// the observed rows and for hazard-side evaluation of shared components.
inline DesignRow eval_predictor_basis(const ModelSpec& spec, int k, const LatentLayout& layout,
                                      const TimeFunRegistry& funs, const Table& data,
                                      int anchor_row, int subject, double t,
                                      bool include_fixed = true, bool include_random = true) {
  const LongSpec& ls = spec.longitudinal[k];
  DesignRow row;
  row.outcome = k;
  row.subject = subject;
  row.time = t;
  row.data_row = anchor_row;
  if (include_fixed) {
    int off = layout.long_fixed_offset[k];
    for (std::size_t j = 0; j < ls.fixed_terms.size(); ++j)
      row.add(off + static_cast<int>(j),
              detail::term_value(ls.fixed_terms[j], data, anchor_row, t, funs));
  }
  if (include_random) {
    for (std::size_t j = 0; j < ls.random_terms.size(); ++j) {
      const auto pos = layout.marker_re[k][j];
      const REGroup& g = layout.re_groups[pos.group];
      row.add(g.block_offset(subject) + pos.slot,
              detail::term_value(ls.random_terms[j], data, anchor_row, t, funs));
    }
  }
  return row;
}

/// Derivative of the predictor row with respect to time, by central
/// difference with step delta. Columns of time-constant terms cancel
/// exactly, so e.g. a random intercept contributes nothing.
inline DesignRow predictor_time_derivative(const ModelSpec& spec, int k,
                                           const LatentLayout& layout,
                                           const TimeFunRegistry& funs, const Table& data,
                                           int anchor_row, int subject, double t, double delta,
                                           bool include_fixed = true,
                                           bool include_random = true) {
  DesignRow hi = eval_predictor_basis(spec, k, layout, funs, data, anchor_row, subject, t + delta,
                                      include_fixed, include_random);
  DesignRow lo = eval_predictor_basis(spec, k, layout, funs, data, anchor_row, subject, t - delta,
                                      include_fixed, include_random);
  // same term structure, but zero values may be dropped on either side
  std::map<int, double> acc;
  for (const auto& [c, v] : hi.entries) acc[c] += v;
  for (const auto& [c, v] : lo.entries) acc[c] -= v;
  DesignRow out;
  out.outcome = k;
  out.subject = subject;
  out.time = t;
  out.data_row = anchor_row;
  for (const auto& [c, v] : acc) {
    double d = v / (2.0 * delta);
    if (std::abs(d) > 1e-300) out.add(c, d);
  }
  return out;
}

/// Design rows for every observation of longitudinal submodel k, in data
/// order.
inline std::vector<DesignRow> build_rows(const ModelSpec& spec, int k, const LatentLayout& layout,
                                         const TimeFunRegistry& funs, const Table& data) {
  std::vector<DesignRow> rows;
  rows.reserve(data.n_rows());
  for (int r = 0; r < data.n_rows(); ++r) {
    int subject = layout.subject_of(data.raw(r, spec.id_column));
    double t = data.value(r, spec.time_column);
    if (std::isnan(t)) throw spec_error("missing time value in row " + std::to_string(r + 1));
    rows.push_back(eval_predictor_basis(spec, k, layout, funs, data, r, subject, t));
  }
  return rows;
}

/// Fixed-effect (and frailty) part of the hazard predictor for survival
/// submodel s at evaluation time t, anchored at `anchor_row` of `surv_tab`.
inline DesignRow build_surv_row(const ModelSpec& spec, int s, const LatentLayout& layout,
                                const TimeFunRegistry& funs, const Table& surv_tab,
                                int anchor_row, int subject, double t) {
  const SurvSpec& ss = spec.survival[s];
  DesignRow row;
  row.outcome = spec.n_long() + s;
  row.subject = subject;
  row.time = t;
  row.data_row = anchor_row;
  int off = layout.surv_fixed_offset[s];
  for (std::size_t j = 0; j < ss.fixed_terms.size(); ++j)
    row.add(off + static_cast<int>(j),
            detail::term_value(ss.fixed_terms[j], surv_tab, anchor_row, t, funs));
  if (ss.frailty) {
    const auto pos = layout.frailty_re[s];
    const REGroup& g = layout.re_groups[pos.group];
    row.add(g.block_offset(subject) + pos.slot, 1.0);
  }
  return row;
}

}  // namespace lgmjoint

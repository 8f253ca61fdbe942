#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Sparse>

#include "lgmjoint/model_spec.hpp"

namespace lgmjoint {

/// Strictly increasing interval bounds c_0 = 0 < c_1 < ... < c_M. The last
/// interval is extended on demand so that no exposure is ever dropped.
struct Cutpoints {
  std::vector<double> c;

  int n_intervals() const { return static_cast<int>(c.size()) - 1; }

  void cover(double max_exit) {
    if (!c.empty() && c.back() < max_exit) c.back() = max_exit;
  }
};

inline Cutpoints make_cutpoints(int n_intervals, double max_time) {
  if (n_intervals < 1) throw spec_error("make_cutpoints: n_intervals must be >= 1");
  if (!(max_time > 0)) throw spec_error("make_cutpoints: max_time must be > 0");
  Cutpoints cuts;
  cuts.c.resize(n_intervals + 1);
  for (int i = 0; i <= n_intervals; ++i) cuts.c[i] = max_time * i / n_intervals;
  cuts.c[0] = 0.0;
  cuts.c[n_intervals] = max_time;
  return cuts;
}

inline Cutpoints cutpoints_from_values(std::vector<double> values, double max_exit) {
  Cutpoints cuts;
  if (values.empty() || values.front() > 0.0) values.insert(values.begin(), 0.0);
  cuts.c = std::move(values);
  for (std::size_t i = 1; i < cuts.c.size(); ++i)
    if (!(cuts.c[i] > cuts.c[i - 1])) throw spec_error("cutpoints must be strictly increasing");
  cuts.cover(max_exit);
  return cuts;
}

/// One Poisson pseudo-observation of the piecewise-hazard decomposition.
struct PoissonPseudoRow {
  int interval = 0;       // 1-based interval index m
  double entry = 0.0;     // exposure bounds within the interval
  double exit = 0.0;
  double exposure = 0.0;  // exit - entry
  int y = 0;              // 1 on the final row iff the event occurred
  double eval_time = 0.0; // midpoint of the exposure, used for shared terms

  double offset() const { return std::log(exposure); }
};

/// Decompose one subject's follow-up (entry, exit] over the cutpoint grid.
/// Exposure before `entry` is excluded (left truncation); exposures sum to
/// exit - entry exactly; y = event on the final row only.
inline std::vector<PoissonPseudoRow> decompose(double entry, double exit, int event,
                                               const Cutpoints& cuts) {
  if (!(exit > entry)) throw spec_error("decompose: exit must be > entry");
  if (entry < 0) throw spec_error("decompose: entry must be >= 0");
  if (exit > cuts.c.back())
    throw spec_error("decompose: exit beyond the last cutpoint");
  std::vector<PoissonPseudoRow> rows;
  const int M = cuts.n_intervals();
  for (int m = 1; m <= M; ++m) {
    double lo = std::max(entry, cuts.c[m - 1]);
    double hi = std::min(exit, cuts.c[m]);
    if (hi <= lo) continue;
    PoissonPseudoRow row;
    row.interval = m;
    row.entry = lo;
    row.exit = hi;
    row.exposure = hi - lo;
    row.eval_time = 0.5 * (lo + hi);
    rows.push_back(row);
  }
  if (!rows.empty() && event == 1) rows.back().y = 1;
  return rows;
}

/// Difference-penalty structure matrix D'D for random walks of order 1 or 2:
/// symmetric, positive semidefinite, rank m - order, rows sum to zero.
inline Eigen::SparseMatrix<double> rw_precision(int order, int m) {
  if (order != 1 && order != 2) throw spec_error("rw_precision: order must be 1 or 2");
  if (m < order + 1) throw spec_error("rw_precision: need at least order+1 values");
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m - order, m);
  for (int r = 0; r < m - order; ++r) {
    if (order == 1) {
      D(r, r) = -1;
      D(r, r + 1) = 1;
    } else {
      D(r, r) = 1;
      D(r, r + 1) = -2;
      D(r, r + 2) = 1;
    }
  }
  Eigen::MatrixXd R = D.transpose() * D;
  Eigen::SparseMatrix<double> out(m, m);
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < m; ++i)
    for (int j = std::max(0, i - order); j <= std::min(m - 1, i + order); ++j)
      trips.emplace_back(i, j, R(i, j));
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

/// Exact log-likelihood contribution of a parametric hazard over (entry,
/// exit] with linear predictor eta: event * log h(exit) - [H(exit) -
/// H(entry)]. Weibull uses the h(t) = alpha t^(alpha-1) exp(eta)
/// parametrization; alpha = 1 reduces to the exponential.
inline double parametric_baseline_loglik(BaselineKind kind, double exit, double entry, int event,
                                         double eta, double shape = 1.0) {
  if (!(exit > entry) || entry < 0) throw spec_error("parametric loglik: need exit > entry >= 0");
  double alpha = (kind == BaselineKind::weibull) ? shape : 1.0;
  if (!(alpha > 0)) throw spec_error("parametric loglik: shape must be > 0");
  double cumhaz = (std::pow(exit, alpha) - std::pow(entry, alpha)) * std::exp(eta);
  double log_h = std::log(alpha) + (alpha - 1.0) * std::log(exit) + eta;
  return event * log_h - cumhaz;
}

}  // namespace lgmjoint

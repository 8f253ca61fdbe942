#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "lgmjoint/model_spec.hpp"

namespace lgmjoint {

/// Per-row observation after augmentation: everything the likelihood needs
/// besides the linear predictor. `y` is NaN for likelihood-free rows.
struct ObsRow {
  int outcome = 0;  // 0..K-1 longitudinal, K..K+S-1 survival
  Family family = Family::gaussian;
  double y = std::numeric_limits<double>::quiet_NaN();
  double offset = 0.0;
  double ntrials = 1.0;
  double entry = 0.0;  // parametric survival rows
  double exit = 0.0;
  int event = 0;
  double eval_time = 0.0;
  int subject = -1;
  int hyper_res = -1;    // omega index of the residual log-precision
  int hyper_shape = -1;  // omega index of the Weibull log-shape
  double loglik_const = 0.0;  // response-scale Jacobian terms
  bool point_event = false;   // event indicator at the exact event time, no exposure
  int data_row = -1;

  bool has_likelihood() const {
    if (family == Family::exponential_surv || family == Family::weibull_surv ||
        family == Family::poisson_surv)
      return true;
    return !std::isnan(y);
  }
};

/// Log-likelihood value and first two derivatives with respect to the
/// linear predictor.
struct LoglikTerms {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

namespace detail {
inline double lchoose(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}
constexpr double log2pi = 1.8378770664093454836;
}  // namespace detail

/// Analytic per-observation log-likelihood. `omega` supplies the residual
/// log-precision (gaussian/lognormal) or log-shape (weibull) components the
/// row points at; the lognormal response is already log-transformed and the
/// Jacobian lives in loglik_const.
inline LoglikTerms loglik(const ObsRow& row, double eta, const double* omega) {
  if (!std::isfinite(eta)) throw std::runtime_error("loglik: nonfinite linear predictor");
  LoglikTerms out;
  switch (row.family) {
    case Family::gaussian:
    case Family::lognormal: {
      double theta = omega[row.hyper_res];
      double tau = std::exp(theta);
      double r = row.y - eta;
      out.value = 0.5 * (theta - detail::log2pi) - 0.5 * tau * r * r + row.loglik_const;
      out.d1 = tau * r;
      out.d2 = -tau;
      break;
    }
    case Family::poisson:
    case Family::poisson_surv: {
      if (row.y < 0) throw std::runtime_error("loglik: negative count");
      if (row.point_event) {
        // exposure-free event indicator: the log-hazard at the event time
        out.value = row.y * (eta + row.offset) + row.loglik_const;
        out.d1 = row.y;
        out.d2 = 0.0;
        break;
      }
      double lp = eta + row.offset;
      double lambda = std::exp(lp);
      out.value = row.y * lp - lambda - std::lgamma(row.y + 1.0) + row.loglik_const;
      out.d1 = row.y - lambda;
      out.d2 = -lambda;
      break;
    }
    case Family::binomial: {
      double n = row.ntrials;
      if (row.y < 0 || row.y > n) throw std::runtime_error("loglik: binomial count outside 0..n");
      double p = 1.0 / (1.0 + std::exp(-eta));
      // log(1+e^eta) computed stably
      double log1pe = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
      out.value = row.y * eta - n * log1pe + detail::lchoose(n, row.y) + row.loglik_const;
      out.d1 = row.y - n * p;
      out.d2 = -n * p * (1.0 - p);
      break;
    }
    case Family::exponential_surv: {
      double expo = (row.exit - row.entry) * std::exp(eta);
      out.value = row.event * eta - expo + row.loglik_const;
      out.d1 = row.event - expo;
      out.d2 = -expo;
      break;
    }
    case Family::weibull_surv: {
      double alpha = std::exp(omega[row.hyper_shape]);
      double inc = std::pow(row.exit, alpha) - std::pow(row.entry, alpha);
      double cumhaz = inc * std::exp(eta);
      out.value = row.event * (std::log(alpha) + (alpha - 1.0) * std::log(row.exit) + eta) -
                  cumhaz + row.loglik_const;
      out.d1 = row.event - cumhaz;
      out.d2 = -cumhaz;
      break;
    }
  }
  return out;
}

/// Sum of per-row log-likelihoods with per-row gradient and curvature of
/// the predictor. Likelihood-free rows (missing response) contribute zero.
struct TotalLoglik {
  double value = 0.0;
  std::vector<double> d1;
  std::vector<double> d2;
};

inline TotalLoglik total_loglik(const std::vector<ObsRow>& rows, const std::vector<double>& eta,
                                const double* omega) {
  TotalLoglik out;
  out.d1.assign(rows.size(), 0.0);
  out.d2.assign(rows.size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].has_likelihood()) continue;
    LoglikTerms t = loglik(rows[i], eta[i], omega);
    out.value += t.value;
    out.d1[i] = t.d1;
    out.d2[i] = t.d2;
  }
  return out;
}

}  // namespace lgmjoint

#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgmjoint/model_spec.hpp"

namespace lgmjoint {

/// A scalar function of time with a numeric derivative, used for basis
/// columns of longitudinal predictors and for hazard-side evaluation of
/// shared time-dependent components.
struct TimeBasis {
  std::string name;
  std::function<double(double)> eval;
  double deriv_step = 1e-6;

  double operator()(double t) const { return eval(t); }
  double derivative(double t) const {
    return (eval(t + deriv_step) - eval(t - deriv_step)) / (2.0 * deriv_step);
  }
};

/// Natural cubic spline basis on [low, high] with the given interior knots.
/// Built from the truncated-power representation: columns are
///   (t - low), d_1(t) - d_{K+1}(t), ..., d_K(t) - d_{K+1}(t)
/// with d_k(t) = [(t-xi_k)^3_+ - (t-xi_M)^3_+] / (xi_M - xi_k) over the full
/// knot list xi = (low, knots..., high). All columns vanish at t = low, are
/// linear beyond the boundary knots and have zero second derivative there.
class NaturalSplineBasis {
public:
  NaturalSplineBasis(std::vector<double> interior_knots, double low, double high)
      : low_(low), high_(high) {
    if (!(low < high)) throw spec_error("ns basis: boundary low must be < high");
    for (double k : interior_knots)
      if (!(k > low && k < high)) throw spec_error("ns basis: knots must lie inside the boundary");
    knots_.push_back(low);
    for (double k : interior_knots) knots_.push_back(k);
    knots_.push_back(high);
    for (std::size_t i = 1; i < knots_.size(); ++i)
      if (!(knots_[i] > knots_[i - 1])) throw spec_error("ns basis: knots must be increasing");
  }

  int n_columns() const { return static_cast<int>(knots_.size()) - 1; }

  /// Basis row at time t (size n_columns()).
  std::vector<double> operator()(double t) const {
    const int M = static_cast<int>(knots_.size());
    std::vector<double> row(n_columns());
    row[0] = t - low_;
    for (int k = 1; k <= M - 2; ++k)
      row[k] = d(k - 1, t) - d(M - 2, t);
    return row;
  }

  TimeBasis column(int j, const std::string& name) const {
    if (j < 0 || j >= n_columns()) throw spec_error("ns basis: component out of range");
    auto self = *this;
    TimeBasis tb;
    tb.name = name;
    tb.deriv_step = 1e-6 * (high_ - low_);
    tb.eval = [self, j](double t) { return self(t)[j]; };
    return tb;
  }

private:
  static double cube_pos(double x) { return x > 0 ? x * x * x : 0.0; }
  double d(int k, double t) const {
    const double xi_k = knots_[k];
    const double xi_M = knots_.back();
    return (cube_pos(t - xi_k) - cube_pos(t - xi_M)) / (xi_M - xi_k);
  }

  std::vector<double> knots_;
  double low_, high_;
};

inline NaturalSplineBasis ns_basis(const std::vector<double>& knots, double low, double high) {
  return NaturalSplineBasis(knots, low, high);
}

/// Bound time functions for one model: registered names resolve to scalar
/// evaluators; "identity" is t itself.
class TimeFunRegistry {
public:
  TimeFunRegistry() = default;

  /// Build from spec definitions; a zero boundary_high falls back to
  /// max_time (the largest observed follow-up).
  TimeFunRegistry(const std::vector<TimeFunDef>& defs, double max_time) {
    for (const auto& def : defs) {
      if (def.type == "identity") {
        TimeBasis tb;
        tb.name = def.name;
        tb.deriv_step = 1e-6 * std::max(1.0, max_time);
        tb.eval = [](double t) { return t; };
        add(tb);
      } else {
        double high = def.boundary_high > def.boundary_low ? def.boundary_high : max_time;
        NaturalSplineBasis basis(def.knots, def.boundary_low, high);
        add(basis.column(def.component, def.name));
      }
    }
  }

  void add(TimeBasis tb) { funs_.push_back(std::move(tb)); }

  const TimeBasis& get(const std::string& name) const {
    for (const auto& f : funs_)
      if (f.name == name) return f;
    throw spec_error("time function not registered: " + name);
  }

  bool has(const std::string& name) const {
    for (const auto& f : funs_)
      if (f.name == name) return true;
    return false;
  }

private:
  std::vector<TimeBasis> funs_;
};

}  // namespace lgmjoint

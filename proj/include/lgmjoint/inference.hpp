#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "lgmjoint/assembly.hpp"
#include "lgmjoint/likelihoods.hpp"

namespace lgmjoint {

using SparseChol = Eigen::SimplicialLDLT<SpMat>;

/// Gaussian approximation of p(u | omega, data) at its (constrained) mode:
/// mean u*, precision Q* = A'WA + Qprior, with rw sum-to-zero constraints
/// handled by conditioning.
struct GaussianApprox {
  Eigen::VectorXd mode;
  double loglik = 0.0;      // sum of observation log-likelihoods at the mode
  double prior_quad = 0.0;  // (u*-m)' Qprior (u*-m)
  double logdet_Qprior = 0.0;
  double logdet_Qstar = 0.0;
  double logdet_Sprior = 0.0;  // log det C Qprior^{-1} C'
  double logdet_Sstar = 0.0;   // log det C Qstar^{-1} C'
  Eigen::MatrixXd V;           // Qstar^{-1} C'
  Eigen::MatrixXd S;           // C Qstar^{-1} C'
  Eigen::LLT<Eigen::MatrixXd> S_llt;
  Eigen::VectorXd lambda;      // constraint multipliers at the mode
  std::vector<std::pair<int, int>> constraint_blocks;  // (offset, size) per constraint
  std::vector<double> eta;     // predictor values at the mode
  int n_iter = 0;
  double final_step = 0.0;
  bool converged = false;
  std::shared_ptr<SparseChol> chol;

  int dim() const { return static_cast<int>(mode.size()); }
  int n_constraints() const { return static_cast<int>(V.cols()); }

  /// diag(Qstar^{-1})_i with the constraint correction.
  double marginal_var(int i) const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dim());
    e[i] = 1.0;
    Eigen::VectorXd pe = chol->permutationP() * e;
    Eigen::VectorXd y = chol->matrixL().solve(pe);
    const auto& D = chol->vectorD();
    double v = (y.array().square() / D.array()).sum();
    if (n_constraints() > 0) {
      Eigen::VectorXd vi = V.row(i).transpose();
      v -= vi.dot(S_llt.solve(vi));
    }
    return std::max(v, 0.0);
  }

  Eigen::VectorXd marginal_sds() const {
    Eigen::VectorXd out(dim());
    for (int i = 0; i < dim(); ++i) out[i] = std::sqrt(marginal_var(i));
    return out;
  }

  /// One draw from N(mode, Qstar^{-1}) conditioned on the constraints.
  Eigen::VectorXd sample(std::mt19937_64& rng) const {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd z(dim());
    for (int i = 0; i < dim(); ++i) z[i] = nd(rng);
    const auto& D = chol->vectorD();
    Eigen::VectorXd w = z.array() / D.array().sqrt();
    Eigen::VectorXd y = chol->matrixU().solve(w);
    Eigen::VectorXd x = chol->permutationP().transpose() * y;
    if (n_constraints() > 0) {
      Eigen::VectorXd cx(n_constraints());
      for (int c = 0; c < n_constraints(); ++c) {
        auto [off, nb] = constraint_blocks[c];
        cx[c] = x.segment(off, nb).sum();
      }
      x -= V * S_llt.solve(cx);
    }
    return mode + x;
  }

  /// Covariance of a small index set (with constraint correction).
  Eigen::MatrixXd dense_cov(const std::vector<int>& idx) const {
    const int d = static_cast<int>(idx.size());
    Eigen::MatrixXd X(dim(), d);
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(dim());
      e[idx[j]] = 1.0;
      X.col(j) = chol->solve(e);
    }
    Eigen::MatrixXd cov(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) cov(i, j) = X(idx[i], j);
    if (n_constraints() > 0) {
      Eigen::MatrixXd Vi(d, n_constraints());
      for (int i = 0; i < d; ++i) Vi.row(i) = V.row(idx[i]);
      cov -= Vi * S_llt.solve(Vi.transpose());
    }
    return 0.5 * (cov + cov.transpose());
  }
};

namespace detail {

inline void krige_onto_constraints(const AssembledModel& model, Eigen::VectorXd& u) {
  // project the start value onto {Cu = 0} by centering each baseline block
  for (int c = 0; c < model.n_constraints(); ++c) {
    const BaselineBlock& blk = model.layout.baselines[c];
    double mean = 0;
    for (int i = 0; i < blk.n; ++i) mean += u[blk.offset + i];
    mean /= blk.n;
    for (int i = 0; i < blk.n; ++i) u[blk.offset + i] -= mean;
  }
}

}  // namespace detail

/// Inner sparse Newton solver. Each Newton step solves the KKT system of
/// the quadratic model under the sum-to-zero constraints, with step-halving
/// on the penalized log-likelihood; stops when the max step component drops
/// below `tolerance`.
inline GaussianApprox gaussian_approx(const AssembledModel& model, const Eigen::VectorXd& omega,
                                      Eigen::VectorXd u_init, double tolerance,
                                      int max_iter = 100) {
  const int n = model.n_latent();
  const int k = model.n_constraints();
  if (u_init.size() != n) u_init = Eigen::VectorXd::Zero(n);
  detail::krige_onto_constraints(model, u_init);

  SpMat A = model.build_A(omega);
  double logdet_Qp = 0.0;
  SpMat Qp = model.build_Q_prior(omega, &logdet_Qp);

  GaussianApprox ga;
  ga.logdet_Qprior = logdet_Qp;
  ga.chol = std::make_shared<SparseChol>();
  for (const auto& blk : model.layout.baselines)
    ga.constraint_blocks.push_back({blk.offset, blk.n});
  Eigen::VectorXd u = u_init;
  const Eigen::VectorXd& m = model.prior_mean;

  auto objective = [&](const Eigen::VectorXd& uu, std::vector<double>& eta_out) {
    Eigen::VectorXd eta = A * uu;
    eta_out.assign(eta.data(), eta.data() + eta.size());
    TotalLoglik tl = total_loglik(model.rows, eta_out, omega.data());
    Eigen::VectorXd du = uu - m;
    return tl.value - 0.5 * du.dot(Qp * du);
  };

  std::vector<double> eta;
  bool analyzed = false;
  double f_cur = objective(u, eta);
  if (!std::isfinite(f_cur))
    throw convergence_error("inner optimizer: nonfinite objective at start");

  for (int iter = 0; iter <= max_iter; ++iter) {
    TotalLoglik tl = total_loglik(model.rows, eta, omega.data());
    Eigen::VectorXd d1 = Eigen::Map<const Eigen::VectorXd>(tl.d1.data(), tl.d1.size());
    Eigen::VectorXd W(model.n_rows());
    for (int r = 0; r < model.n_rows(); ++r)
      W[r] = model.rows[r].has_likelihood() ? std::max(-tl.d2[r], 1e-8) : 0.0;

    Eigen::VectorXd grad = A.transpose() * d1 - Qp * (u - m);
    SpMat Qstar = Qp + SpMat(A.transpose() * W.asDiagonal() * A);
    if (!analyzed) {
      ga.chol->analyzePattern(Qstar);
      analyzed = true;
    }
    ga.chol->factorize(Qstar);
    if (ga.chol->info() != Eigen::Success)
      throw convergence_error("inner optimizer: conditional precision not positive definite");

    Eigen::VectorXd delta0 = ga.chol->solve(grad);
    Eigen::VectorXd delta = delta0;
    if (k > 0) {
      ga.V.resize(n, k);
      for (int c = 0; c < k; ++c) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
        model.apply_constraint_row(c, e, 1.0);
        ga.V.col(c) = ga.chol->solve(e);
      }
      ga.S.resize(k, k);
      for (int c = 0; c < k; ++c)
        for (int c2 = 0; c2 < k; ++c2) ga.S(c, c2) = model.constraint_dot(c, ga.V.col(c2));
      ga.S_llt.compute(ga.S);
      Eigen::VectorXd cd(k);
      for (int c = 0; c < k; ++c) cd[c] = model.constraint_dot(c, delta0);
      ga.lambda = ga.S_llt.solve(cd);
      delta -= ga.V * ga.lambda;
    }

    double step = delta.lpNorm<Eigen::Infinity>();
    ga.final_step = step;
    ga.n_iter = iter;
    if (step < tolerance && iter > 0) {
      // state (eta, factorization, multipliers) is already consistent with u
      ga.mode = u;
      ga.loglik = tl.value;
      Eigen::VectorXd du = u - m;
      ga.prior_quad = du.dot(Qp * du);
      const auto& D = ga.chol->vectorD();
      ga.logdet_Qstar = D.array().log().sum();
      if (k > 0) {
        ga.logdet_Sstar = 2.0 * ga.S_llt.matrixLLT().diagonal().array().log().sum();
        Eigen::VectorXd pc = model.constraint_prior_cov(omega);
        ga.logdet_Sprior = pc.array().log().sum();
      }
      ga.eta = eta;
      ga.converged = true;
      return ga;
    }
    if (iter == max_iter) break;

    // step-halving line search
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h) {
      std::vector<double> eta_try;
      Eigen::VectorXd u_try = u + alpha * delta;
      double f_try;
      try {
        f_try = objective(u_try, eta_try);
      } catch (const std::exception&) {
        f_try = -std::numeric_limits<double>::infinity();
      }
      if (std::isfinite(f_try) && f_try >= f_cur - 1e-12 * (1.0 + std::abs(f_cur))) {
        u = u_try;
        f_cur = f_try;
        eta = std::move(eta_try);
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted)
      throw convergence_error("inner optimizer: line search failed");
  }
  throw convergence_error("inner optimizer: no convergence after " + std::to_string(max_iter) +
                          " iterations");
}

/// Laplace approximation of log p(omega | data) up to the evidence
/// constant: likelihood and latent prior at the conditional mode, the
/// determinant correction, constraint corrections, and the hyperprior.
struct LogPostResult {
  double value = -std::numeric_limits<double>::infinity();
  GaussianApprox ga;
};

inline LogPostResult log_post_omega(const AssembledModel& model, const Eigen::VectorXd& omega,
                                    const Eigen::VectorXd& warm_start = Eigen::VectorXd()) {
  LogPostResult out;
  out.ga = gaussian_approx(model, omega, warm_start, model.spec.controls.tolerance);
  const GaussianApprox& ga = out.ga;
  out.value = ga.loglik - 0.5 * ga.prior_quad + 0.5 * ga.logdet_Qprior - 0.5 * ga.logdet_Qstar +
              0.5 * ga.logdet_Sprior - 0.5 * ga.logdet_Sstar + model.log_prior_omega(omega);
  return out;
}

/// Quasi-Newton (BFGS) ascent on log_post_omega with central-difference
/// gradients; inner solves are warm-started from the previous mode.
struct OptimizeResult {
  Eigen::VectorXd mode;
  double value = 0.0;
  GaussianApprox ga;
  int n_iter = 0;
  int n_eval = 0;
};

inline OptimizeResult optimize_omega(const AssembledModel& model, Eigen::VectorXd init,
                                     int threads = 1, int max_iter = 200) {
  const int p = model.hyper.dim();
  const double h = model.spec.controls.h_step;
  OptimizeResult res;
  Eigen::VectorXd warm;

  auto eval = [&](const Eigen::VectorXd& w, const Eigen::VectorXd& start) {
    return log_post_omega(model, w, start);
  };

  LogPostResult cur = eval(init, warm);
  res.n_eval = 1;
  warm = cur.ga.mode;
  if (p == 0) {
    res.mode = init;
    res.value = cur.value;
    res.ga = cur.ga;
    return res;
  }

  auto gradient = [&](const Eigen::VectorXd& w, const Eigen::VectorXd& start) {
    Eigen::VectorXd g(p);
    std::vector<double> vplus(p), vminus(p);
    auto task = [&](int i, int sign) {
      Eigen::VectorXd wp = w;
      wp[i] += sign * h;
      return log_post_omega(model, wp, start).value;
    };
    if (threads > 1) {
      std::vector<std::future<void>> futs;
      std::atomic<int> next{0};
      for (int t = 0; t < threads; ++t)
        futs.push_back(std::async(std::launch::async, [&]() {
          for (int i = next.fetch_add(1); i < p; i = next.fetch_add(1)) {
            vplus[i] = task(i, +1);
            vminus[i] = task(i, -1);
          }
        }));
      for (auto& f : futs) f.get();
    } else {
      for (int i = 0; i < p; ++i) {
        vplus[i] = task(i, +1);
        vminus[i] = task(i, -1);
      }
    }
    for (int i = 0; i < p; ++i) g[i] = (vplus[i] - vminus[i]) / (2.0 * h);
    res.n_eval += 2 * p;
    return g;
  };

  Eigen::VectorXd omega = init;
  Eigen::VectorXd g = gradient(omega, warm);
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(p, p);
  const double gtol = model.spec.controls.grad_tol;

  for (int iter = 0; iter < max_iter; ++iter) {
    res.n_iter = iter;
    if (g.lpNorm<Eigen::Infinity>() < gtol) break;
    Eigen::VectorXd dir = Hinv * g;
    if (dir.dot(g) <= 0) {  // not an ascent direction; reset
      Hinv.setIdentity();
      dir = g;
    }
    // cap the first steps so the line search starts in a sane region
    double mx = dir.lpNorm<Eigen::Infinity>();
    if (mx > 2.0) dir *= 2.0 / mx;

    double alpha = 1.0;
    bool accepted = false;
    LogPostResult trial;
    for (int hs = 0; hs < 30; ++hs) {
      Eigen::VectorXd w_try = omega + alpha * dir;
      try {
        trial = eval(w_try, warm);
      } catch (const std::exception&) {
        alpha *= 0.5;
        continue;
      }
      res.n_eval++;
      if (trial.value > cur.value + 1e-4 * alpha * g.dot(dir)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // flat to numerical precision in every direction we tried
      break;
    }
    Eigen::VectorXd step = alpha * dir;
    omega += step;
    warm = trial.ga.mode;
    cur = std::move(trial);
    Eigen::VectorXd g_new = gradient(omega, warm);
    Eigen::VectorXd yk = g - g_new;  // gradient of -F increases along step
    double sy = step.dot(yk);
    if (sy > 1e-12) {
      Eigen::VectorXd Hy = Hinv * yk;
      double yHy = yk.dot(Hy);
      Hinv += ((sy + yHy) / (sy * sy)) * step * step.transpose() -
              (Hy * step.transpose() + step * Hy.transpose()) / sy;
    }
    g = g_new;
  }
  if (res.n_iter >= max_iter - 1 && g.lpNorm<Eigen::Infinity>() > 10 * gtol)
    throw convergence_error("hyperparameter optimizer: no convergence after " +
                            std::to_string(max_iter) + " iterations");

  res.mode = omega;
  res.value = cur.value;
  res.ga = std::move(cur.ga);
  return res;
}

/// Central finite-difference Hessian of log_post_omega at `mode`.
inline Eigen::MatrixXd fd_hessian(const AssembledModel& model, const Eigen::VectorXd& mode,
                                  double f_mode, const Eigen::VectorXd& warm, int threads = 1) {
  const int p = model.hyper.dim();
  const double h = model.spec.controls.h_step;
  Eigen::MatrixXd H(p, p);
  auto value_at = [&](const Eigen::VectorXd& w) { return log_post_omega(model, w, warm).value; };

  std::vector<std::pair<int, int>> jobs;
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j) jobs.push_back({i, j});
  std::vector<double> results(jobs.size());
  auto run_job = [&](std::size_t jid) {
    auto [i, j] = jobs[jid];
    Eigen::VectorXd w = mode;
    if (i == j) {
      w[i] = mode[i] + h;
      double fp = value_at(w);
      w[i] = mode[i] - h;
      double fm = value_at(w);
      results[jid] = (fp - 2.0 * f_mode + fm) / (h * h);
    } else {
      double fpp, fpm, fmp, fmm;
      w = mode; w[i] += h; w[j] += h; fpp = value_at(w);
      w = mode; w[i] += h; w[j] -= h; fpm = value_at(w);
      w = mode; w[i] -= h; w[j] += h; fmp = value_at(w);
      w = mode; w[i] -= h; w[j] -= h; fmm = value_at(w);
      results[jid] = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  };
  if (threads > 1) {
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> futs;
    for (int t = 0; t < threads; ++t)
      futs.push_back(std::async(std::launch::async, [&]() {
        for (std::size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) run_job(j);
      }));
    for (auto& f : futs) f.get();
  } else {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  }
  for (std::size_t jid = 0; jid < jobs.size(); ++jid) {
    auto [i, j] = jobs[jid];
    H(i, j) = results[jid];
    H(j, i) = results[jid];
  }
  return H;
}

struct IntegrationPoint {
  Eigen::VectorXd omega;
  double weight = 1.0;
  double log_post = 0.0;
  GaussianApprox ga;
};

struct ExploreResult {
  std::vector<IntegrationPoint> points;
  Eigen::MatrixXd neg_hess;   // -H at the mode
  Eigen::MatrixXd z_basis;    // columns map unit z-steps to omega offsets
  double dz = 1.0;
  bool hess_spd = true;
  double mlik_gaussian = 0.0;
  double mlik_integration = 0.0;
};

/// Hyperparameter exploration: empirical Bayes keeps the mode only; the
/// grid strategy walks axes of the standardized z-space (eigendecomposition
/// of -H), keeps points within `grid_drop` log-density of the mode, fills
/// in the lattice box, and weights by density x cell volume.
inline ExploreResult explore_omega(const AssembledModel& model, const OptimizeResult& opt,
                                   Strategy strategy, int threads = 1) {
  ExploreResult out;
  const int p = model.hyper.dim();
  const double dz = model.spec.controls.grid_dz;
  const double drop = model.spec.controls.grid_drop;
  out.dz = dz;

  if (p == 0) {
    IntegrationPoint pt;
    pt.omega = opt.mode;
    pt.weight = 1.0;
    pt.log_post = opt.value;
    pt.ga = opt.ga;
    out.points.push_back(std::move(pt));
    out.mlik_gaussian = opt.value;
    out.mlik_integration = opt.value;
    out.neg_hess.resize(0, 0);
    out.z_basis.resize(0, 0);
    return out;
  }

  Eigen::MatrixXd H = fd_hessian(model, opt.mode, opt.value, opt.ga.mode, threads);
  out.neg_hess = -H;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.neg_hess);
  double min_eig = eig.eigenvalues().minCoeff();
  out.hess_spd = min_eig > 0;
  double logdet_negH = 0.0;
  Eigen::VectorXd evals = eig.eigenvalues();
  if (!out.hess_spd) {
    if (strategy == Strategy::grid)
      throw convergence_error("explore: hyperparameter Hessian is not negative definite");
    for (int i = 0; i < p; ++i) evals[i] = std::max(evals[i], 1e-8);
  }
  for (int i = 0; i < p; ++i) logdet_negH += std::log(evals[i]);
  out.z_basis = eig.eigenvectors() * evals.array().rsqrt().matrix().asDiagonal();
  out.mlik_gaussian = opt.value + 0.5 * p * std::log(2.0 * M_PI) - 0.5 * logdet_negH;

  if (strategy == Strategy::eb) {
    IntegrationPoint pt;
    pt.omega = opt.mode;
    pt.weight = 1.0;
    pt.log_post = opt.value;
    pt.ga = opt.ga;
    out.points.push_back(std::move(pt));
    out.mlik_integration = out.mlik_gaussian;
    return out;
  }

  // ---- grid strategy ----
  struct ZPoint {
    Eigen::VectorXi z;
    double log_post;
    GaussianApprox ga;
  };
  std::vector<ZPoint> kept;
  {
    ZPoint center;
    center.z = Eigen::VectorXi::Zero(p);
    center.log_post = opt.value;
    center.ga = opt.ga;
    kept.push_back(std::move(center));
  }
  auto omega_of = [&](const Eigen::VectorXi& z) {
    Eigen::VectorXd w = opt.mode;
    for (int i = 0; i < p; ++i) w += out.z_basis.col(i) * (dz * z[i]);
    return w;
  };
  auto try_point = [&](const Eigen::VectorXi& z) -> bool {
    Eigen::VectorXd w = omega_of(z);
    LogPostResult r;
    try {
      r = log_post_omega(model, w, opt.ga.mode);
    } catch (const std::exception&) {
      return false;
    }
    if (!(opt.value - r.value < drop)) return false;
    ZPoint zp;
    zp.z = z;
    zp.log_post = r.value;
    zp.ga = std::move(r.ga);
    kept.push_back(std::move(zp));
    return true;
  };

  const int max_axis = 10;
  Eigen::VectorXi lo = Eigen::VectorXi::Zero(p), hi = Eigen::VectorXi::Zero(p);
  for (int i = 0; i < p; ++i) {
    for (int step = 1; step <= max_axis; ++step) {
      Eigen::VectorXi z = Eigen::VectorXi::Zero(p);
      z[i] = step;
      if (!try_point(z)) break;
      hi[i] = step;
    }
    for (int step = 1; step <= max_axis; ++step) {
      Eigen::VectorXi z = Eigen::VectorXi::Zero(p);
      z[i] = -step;
      if (!try_point(z)) break;
      lo[i] = -step;
    }
  }
  // lattice fill-in between the axis extremes (skip pure-axis points)
  long box = 1;
  for (int i = 0; i < p; ++i) box *= (hi[i] - lo[i] + 1);
  if (p > 1 && box <= 20000) {
    Eigen::VectorXi z = lo;
    while (true) {
      int nz = 0;
      for (int i = 0; i < p; ++i)
        if (z[i] != 0) ++nz;
      if (nz >= 2) try_point(z);
      int i = 0;
      while (i < p) {
        if (z[i] < hi[i]) {
          z[i]++;
          break;
        }
        z[i] = lo[i];
        ++i;
      }
      if (i == p) break;
    }
  }

  double max_lp = -std::numeric_limits<double>::infinity();
  for (const auto& zp : kept) max_lp = std::max(max_lp, zp.log_post);
  double wsum = 0.0;
  for (const auto& zp : kept) wsum += std::exp(zp.log_post - max_lp);
  double log_cell = p * std::log(dz) - 0.5 * logdet_negH;  // |det(z_basis)| * dz^p
  out.mlik_integration = max_lp + std::log(wsum) + log_cell;

  out.points.reserve(kept.size());
  for (auto& zp : kept) {
    IntegrationPoint pt;
    pt.omega = omega_of(zp.z);
    pt.log_post = zp.log_post;
    pt.weight = std::exp(zp.log_post - max_lp) / wsum;
    pt.ga = std::move(zp.ga);
    out.points.push_back(std::move(pt));
  }
  return out;
}

/// Gaussian-mixture marginal of one latent element.
struct PosteriorMarginal {
  std::vector<double> means, sds, weights;
  double mean = 0.0, sd = 0.0;

  double mix_cdf(double x) const {
    double v = 0.0;
    for (std::size_t h = 0; h < means.size(); ++h)
      v += weights[h] * 0.5 * std::erfc(-(x - means[h]) / (sds[h] * std::sqrt(2.0)));
    return v;
  }
  double mix_pdf(double x) const {
    double v = 0.0;
    for (std::size_t h = 0; h < means.size(); ++h) {
      double z = (x - means[h]) / sds[h];
      v += weights[h] * std::exp(-0.5 * z * z) / (sds[h] * std::sqrt(2.0 * M_PI));
    }
    return v;
  }
  double quantile(double prob) const {
    double lo = means[0] - 10 * sds[0], hi = means[0] + 10 * sds[0];
    for (std::size_t h = 0; h < means.size(); ++h) {
      lo = std::min(lo, means[h] - 10 * sds[h]);
      hi = std::max(hi, means[h] + 10 * sds[h]);
    }
    for (int it = 0; it < 200 && hi - lo > 1e-13 * (1 + std::abs(lo)); ++it) {
      double mid = 0.5 * (lo + hi);
      (mix_cdf(mid) < prob ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
  /// Density grid spanning all components (for export / plotting).
  std::pair<std::vector<double>, std::vector<double>> density_grid(int n = 201) const {
    double lo = means[0] - 6 * sds[0], hi = means[0] + 6 * sds[0];
    for (std::size_t h = 0; h < means.size(); ++h) {
      lo = std::min(lo, means[h] - 6 * sds[h]);
      hi = std::max(hi, means[h] + 6 * sds[h]);
    }
    std::vector<double> x(n), d(n);
    for (int i = 0; i < n; ++i) {
      x[i] = lo + (hi - lo) * i / (n - 1);
      d[i] = mix_pdf(x[i]);
    }
    return {x, d};
  }
};

/// Per-point conditional means/sds for all latent elements; the per-element
/// marginal is the weight mixture over integration points.
struct LatentMarginals {
  Eigen::MatrixXd means;  // H x n
  Eigen::MatrixXd sds;    // H x n
  std::vector<double> weights;

  PosteriorMarginal marginal(int i) const {
    PosteriorMarginal m;
    const int H = static_cast<int>(weights.size());
    m.means.resize(H);
    m.sds.resize(H);
    m.weights = weights;
    for (int h = 0; h < H; ++h) {
      m.means[h] = means(h, i);
      m.sds[h] = sds(h, i);
    }
    double mu = 0.0, m2 = 0.0;
    for (int h = 0; h < H; ++h) {
      mu += weights[h] * m.means[h];
      m2 += weights[h] * (m.sds[h] * m.sds[h] + m.means[h] * m.means[h]);
    }
    m.mean = mu;
    m.sd = std::sqrt(std::max(m2 - mu * mu, 0.0));
    return m;
  }
};

inline LatentMarginals latent_marginals(const std::vector<IntegrationPoint>& points) {
  if (points.empty()) throw std::invalid_argument("latent_marginals: no integration points");
  const int H = static_cast<int>(points.size());
  const int n = points[0].ga.dim();
  LatentMarginals lm;
  lm.means.resize(H, n);
  lm.sds.resize(H, n);
  lm.weights.resize(H);
  for (int h = 0; h < H; ++h) {
    lm.weights[h] = points[h].weight;
    lm.means.row(h) = points[h].ga.mode.transpose();
    lm.sds.row(h) = points[h].ga.marginal_sds().transpose();
  }
  return lm;
}

}  // namespace lgmjoint

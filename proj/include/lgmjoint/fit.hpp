#pragma once

#include <chrono>
#include <random>
#include <vector>

#include "lgmjoint/assembly.hpp"
#include "lgmjoint/inference.hpp"

namespace lgmjoint {

struct FitOptions {
  int threads = 1;
  bool verbose = false;
};

/// Complete in-memory fit: integration points with their Gaussian
/// approximations, the hyperparameter mode geometry and the per-point latent
/// marginal moments.
struct JointFit {
  AssembledModel model;
  Strategy strategy = Strategy::grid;
  Eigen::VectorXd omega_mode;
  double log_post_mode = 0.0;
  ExploreResult explore;
  LatentMarginals marginals;
  Eigen::MatrixXd omega_cov;       // Gaussian covariance over omega at the mode
  Eigen::LLT<Eigen::MatrixXd> omega_cov_llt;
  double seconds = 0.0;
  int opt_iterations = 0;
  int n_evaluations = 0;

  int n_points() const { return static_cast<int>(explore.points.size()); }

  PosteriorMarginal latent_marginal(int i) const { return marginals.marginal(i); }

  /// Posterior moments of omega. Under the grid strategy these are the
  /// cell-midpoint moments of the explored density with the uniform
  /// within-cell correction; under eb the Gaussian at the mode.
  void omega_moments(Eigen::VectorXd& mean, Eigen::MatrixXd& cov) const {
    const int p = model.hyper.dim();
    mean = Eigen::VectorXd::Zero(p);
    cov = Eigen::MatrixXd::Zero(p, p);
    if (p == 0) return;
    if (strategy == Strategy::eb || explore.points.size() == 1) {
      mean = omega_mode;
      cov = omega_cov;
      return;
    }
    for (const auto& pt : explore.points) mean += pt.weight * pt.omega;
    for (const auto& pt : explore.points) {
      Eigen::VectorXd d = pt.omega - mean;
      cov += pt.weight * d * d.transpose();
    }
    double c = explore.dz * explore.dz / 12.0;
    cov += c * explore.z_basis * explore.z_basis.transpose();
  }

  /// One draw of omega: grid draws a cell (by weight) plus a uniform jitter
  /// inside it; eb draws from the Gaussian at the mode.
  Eigen::VectorXd sample_omega(std::mt19937_64& rng) const {
    const int p = model.hyper.dim();
    if (p == 0) return omega_mode;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    if (strategy == Strategy::eb || explore.points.size() == 1) {
      std::normal_distribution<double> nd(0.0, 1.0);
      Eigen::VectorXd z(p);
      for (int i = 0; i < p; ++i) z[i] = nd(rng);
      return omega_mode + omega_cov_llt.matrixL() * z;
    }
    double r = ud(rng);
    std::size_t h = 0;
    double acc = 0.0;
    for (; h < explore.points.size(); ++h) {
      acc += explore.points[h].weight;
      if (r <= acc) break;
    }
    if (h == explore.points.size()) h = explore.points.size() - 1;
    Eigen::VectorXd w = explore.points[h].omega;
    for (int i = 0; i < p; ++i) w += explore.z_basis.col(i) * (explore.dz * (ud(rng) - 0.5));
    return w;
  }

  /// Index of an integration point drawn by weight.
  int sample_point(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    double r = ud(rng);
    double acc = 0.0;
    for (std::size_t h = 0; h < explore.points.size(); ++h) {
      acc += explore.points[h].weight;
      if (r <= acc) return static_cast<int>(h);
    }
    return n_points() - 1;
  }
};

/// Draws of (omega, u) from the fitted posterior: a point by weight, then a
/// constrained Gaussian draw of the latent field at that point.
struct PosteriorDraws {
  std::vector<int> point;            // integration point per draw
  std::vector<Eigen::VectorXd> u;
  std::vector<Eigen::VectorXd> omega;
};

inline PosteriorDraws sample_posterior(const JointFit& fit, int n, std::uint64_t seed) {
  PosteriorDraws d;
  std::mt19937_64 rng(seed);
  d.point.reserve(n);
  d.u.reserve(n);
  d.omega.reserve(n);
  for (int i = 0; i < n; ++i) {
    int h = fit.sample_point(rng);
    d.point.push_back(h);
    d.omega.push_back(fit.explore.points[h].omega);
    d.u.push_back(fit.explore.points[h].ga.sample(rng));
  }
  return d;
}

/// Full pipeline: optimize the hyperparameters, explore/integrate, compute
/// latent marginal moments.
inline JointFit fit_model(const ModelSpec& spec, const Table& long_data, const Table& surv_data,
                          const FitOptions& options = {}) {
  auto t0 = std::chrono::steady_clock::now();
  validate_data(spec, long_data, surv_data);
  JointFit fit;
  fit.model = assemble(spec, long_data, surv_data);
  fit.strategy = spec.controls.int_strategy;

  OptimizeResult opt = optimize_omega(fit.model, fit.model.hyper.init(), options.threads);
  fit.omega_mode = opt.mode;
  fit.log_post_mode = opt.value;
  fit.opt_iterations = opt.n_iter;
  fit.n_evaluations = opt.n_eval;

  fit.explore = explore_omega(fit.model, opt, fit.strategy, options.threads);
  fit.marginals = latent_marginals(fit.explore.points);

  const int p = fit.model.hyper.dim();
  if (p > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.explore.neg_hess);
    Eigen::VectorXd evals = eig.eigenvalues().cwiseMax(1e-8);
    fit.omega_cov =
        eig.eigenvectors() * evals.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    fit.omega_cov_llt.compute(fit.omega_cov);
  } else {
    fit.omega_cov.resize(0, 0);
  }

  fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return fit;
}

}  // namespace lgmjoint

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lgmjoint/assembly.hpp"
#include "lgmjoint/csv.hpp"
#include "lgmjoint/likelihoods.hpp"

namespace lgmjoint {

/// Exact unnormalized log posterior of (u, omega) through the same
/// likelihood and prior code paths the engine uses. Models with rw
/// constraints are rejected here; the sampler handles those internally.
inline double exact_log_posterior(const AssembledModel& model, const Eigen::VectorXd& u,
                                  const Eigen::VectorXd& omega) {
  SpMat A = model.build_A(omega);
  Eigen::VectorXd eta = A * u;
  std::vector<double> etav(eta.data(), eta.data() + eta.size());
  TotalLoglik tl = total_loglik(model.rows, etav, omega.data());
  double logdet = 0.0;
  SpMat Qp = model.build_Q_prior(omega, &logdet);
  Eigen::VectorXd du = u - model.prior_mean;
  double qf = du.dot(Qp * du);
  return tl.value + 0.5 * logdet - 0.5 * model.n_latent() * std::log(2.0 * M_PI) - 0.5 * qf +
         model.log_prior_omega(omega);
}

// ---------------------------------------------------------------------------
// componentwise random-walk Metropolis
// ---------------------------------------------------------------------------

struct MetropolisOptions {
  long n_iter = 100000;     // sweeps over all coordinates
  long burnin = -1;         // default n_iter / 4
  int thin = 0;             // keep every thin-th sweep (0 = no storage)
  std::uint64_t seed = 1;
  double init_step = 0.5;
  bool adapt = true;
  Eigen::VectorXd u_init;      // optional
  Eigen::VectorXd omega_init;  // optional
};

struct MetropolisResult {
  Eigen::VectorXd u_mean, u_sd, u_mean_se;
  Eigen::VectorXd omega_mean, omega_sd, omega_mean_se;
  double accept_rate = 0.0;
  long n_kept = 0;
  std::vector<Eigen::VectorXd> thin_u, thin_omega;
};

namespace mcmc_detail {

/// Sparse column view of A(omega) = A0 + sum_j phi_j A_j with the entries
/// gathered per latent column, so single-site updates touch only the
/// affected rows.
struct ColumnStore {
  struct Entry {
    int row;
    double base = 0.0;
    std::vector<std::pair<int, double>> assoc;  // (scalar slot, coefficient)
  };
  std::vector<std::vector<Entry>> cols;
  std::vector<std::vector<std::pair<int, double>>> assoc_rows;  // per slot: (row, coeff)

  ColumnStore(const AssembledModel& model) {
    cols.resize(model.n_latent());
    std::map<std::pair<int, int>, int> where;  // (row, col) -> entry index
    auto entry_for = [&](int row, int col) -> Entry& {
      auto key = std::make_pair(row, col);
      auto it = where.find(key);
      if (it == where.end()) {
        cols[col].push_back({row, 0.0, {}});
        where[key] = static_cast<int>(cols[col].size()) - 1;
        return cols[col].back();
      }
      return cols[col][it->second];
    };
    for (const auto& t : model.trip_base) entry_for(t.row(), t.col()).base += t.value();
    assoc_rows.resize(model.trip_assoc.size());
    for (std::size_t j = 0; j < model.trip_assoc.size(); ++j) {
      std::map<int, double> by_row;
      for (const auto& t : model.trip_assoc[j]) {
        entry_for(t.row(), t.col()).assoc.push_back({static_cast<int>(j), t.value()});
        by_row[t.row()] += 0.0;  // row set only; coefficient applied via s_j cache
      }
      for (const auto& [r, v] : by_row) assoc_rows[j].push_back({r, v});
    }
  }
};

}  // namespace mcmc_detail

/// Componentwise random-walk Metropolis over (u, omega) on the exact
/// unnormalized log posterior. Step scales adapt during burn-in toward a
/// 20-40% acceptance rate. Coordinates of rw-baseline blocks move in
/// sum-preserving pairs so the chain stays on the constraint subspace.
inline MetropolisResult metropolis(const AssembledModel& model, const MetropolisOptions& opts) {
  if (opts.n_iter < 1) throw std::invalid_argument("metropolis: n_iter must be >= 1");
  const int n = model.n_latent();
  const int p = model.hyper.dim();
  const long burnin = opts.burnin >= 0 ? opts.burnin : opts.n_iter / 4;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);

  Eigen::VectorXd u = opts.u_init.size() == n ? opts.u_init : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd omega = opts.omega_init.size() == p ? opts.omega_init : model.hyper.init();
  for (const auto& blk : model.layout.baselines) {
    double mean = u.segment(blk.offset, blk.n).mean();
    u.segment(blk.offset, blk.n).array() -= mean;
  }

  mcmc_detail::ColumnStore store(model);

  // caches: eta, per-row loglik, per-slot shared values s_j = (A_j u)_r
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(model.n_rows());
  {
    SpMat A = model.build_A(omega);
    eta = A * u;
  }
  std::vector<Eigen::VectorXd> shared(model.trip_assoc.size());
  for (std::size_t j = 0; j < model.trip_assoc.size(); ++j) shared[j] = model.assoc_matrix(j) * u;
  std::vector<double> row_ll(model.n_rows(), 0.0);
  auto recompute_row = [&](int r) {
    row_ll[r] =
        model.rows[r].has_likelihood() ? loglik(model.rows[r], eta[r], omega.data()).value : 0.0;
  };
  double ll_total = 0.0;
  for (int r = 0; r < model.n_rows(); ++r) {
    recompute_row(r);
    ll_total += row_ll[r];
  }

  // latent prior bookkeeping
  auto group_of_coord = [&](int c) -> std::pair<int, int> {  // (group, subject), or (-1, block)
    for (std::size_t g = 0; g < model.layout.re_groups.size(); ++g) {
      const REGroup& grp = model.layout.re_groups[g];
      int span = grp.dim() * model.layout.n_subjects();
      if (c >= grp.offset0 && c < grp.offset0 + span)
        return {static_cast<int>(g), (c - grp.offset0) / grp.dim()};
    }
    for (std::size_t b = 0; b < model.layout.baselines.size(); ++b) {
      const BaselineBlock& blk = model.layout.baselines[b];
      if (c >= blk.offset && c < blk.offset + blk.n) return {-1, static_cast<int>(b)};
    }
    return {-2, -1};
  };

  std::vector<Eigen::MatrixXd> P(model.layout.re_groups.size());
  for (std::size_t g = 0; g < P.size(); ++g) P[g] = model.re_precision(static_cast<int>(g), omega);
  auto re_block_qf = [&](int g, int subj) {
    const REGroup& grp = model.layout.re_groups[g];
    auto b = u.segment(grp.block_offset(subj), grp.dim());
    return b.dot(P[g] * b);
  };
  auto rw_block_qf = [&](int b) {
    const auto& bp = model.baseline_priors[b];
    const BaselineBlock& blk = model.layout.baselines[b];
    double tau = std::exp(bp.omega_index >= 0 ? omega[bp.omega_index] : bp.fixed_log_prec);
    auto v = u.segment(blk.offset, blk.n);
    return tau * v.dot(bp.structure * v);
  };
  auto fixed_qf_term = [&](int c) {
    double d = u[c] - model.prior_mean[c];
    return model.prior_diag_fixed[c] * d * d;
  };

  // proposal machinery: one "site" per latent coordinate and per omega
  // coordinate; baseline coordinates propose paired moves
  const int n_sites = n + p;
  Eigen::VectorXd step = Eigen::VectorXd::Constant(n_sites, opts.init_step);
  Eigen::VectorXi acc = Eigen::VectorXi::Zero(n_sites);
  Eigen::VectorXi tries = Eigen::VectorXi::Zero(n_sites);
  long total_acc = 0, total_tries = 0;

  // moment accumulators (post burn-in)
  Eigen::VectorXd mean_u = Eigen::VectorXd::Zero(n), m2_u = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd mean_w = Eigen::VectorXd::Zero(p), m2_w = Eigen::VectorXd::Zero(p);
  long kept = 0;
  const int n_batches = 50;
  long batch_len = std::max<long>(1, (opts.n_iter - burnin) / n_batches);
  Eigen::MatrixXd batch_u = Eigen::MatrixXd::Zero(n_batches + 1, n);
  Eigen::MatrixXd batch_w = Eigen::MatrixXd::Zero(n_batches + 1, p);
  Eigen::VectorXi batch_count = Eigen::VectorXi::Zero(n_batches + 1);

  MetropolisResult res;

  auto apply_u_delta = [&](int c, double delta, double& dll) {
    for (const auto& e : store.cols[c]) {
      double a = e.base;
      for (const auto& [slot, coef] : e.assoc) a += omega[model.assoc_omega[slot]] * coef;
      eta[e.row] += a * delta;
      for (const auto& [slot, coef] : e.assoc) shared[slot][e.row] += coef * delta;
      double old = row_ll[e.row];
      recompute_row(e.row);
      dll += row_ll[e.row] - old;
    }
    u[c] += delta;
  };

  for (long sweep = 0; sweep < opts.n_iter; ++sweep) {
    // latent coordinates
    for (int c = 0; c < n; ++c) {
      auto [g, sub] = group_of_coord(c);
      double delta = step[c] * nd(rng);
      ++tries[c];
      ++total_tries;
      if (g == -1) {
        // paired move inside baseline block `sub`
        const BaselineBlock& blk = model.layout.baselines[sub];
        int within = c - blk.offset;
        int partner = blk.offset + (within + 1) % blk.n;
        double before = rw_block_qf(sub);
        double dll = 0.0;
        apply_u_delta(c, delta, dll);
        apply_u_delta(partner, -delta, dll);
        double dquad = rw_block_qf(sub) - before;
        double dlp = dll - 0.5 * dquad;
        if (std::log(ud(rng)) < dlp) {
          ll_total += dll;
          ++acc[c];
          ++total_acc;
        } else {
          double tmp = 0;
          apply_u_delta(c, -delta, tmp);
          apply_u_delta(partner, delta, tmp);
        }
        continue;
      }
      double before;
      if (g >= 0)
        before = re_block_qf(g, sub);
      else
        before = fixed_qf_term(c);
      double dll = 0.0;
      apply_u_delta(c, delta, dll);
      double after = g >= 0 ? re_block_qf(g, sub) : fixed_qf_term(c);
      double dlp = dll - 0.5 * (after - before);
      if (std::log(ud(rng)) < dlp) {
        ll_total += dll;
        ++acc[c];
        ++total_acc;
      } else {
        double tmp = 0;
        apply_u_delta(c, -delta, tmp);
      }
    }
    // hyperparameters
    for (int j = 0; j < p; ++j) {
      const HyperEntry& e = model.hyper.entries[j];
      double delta = step[n + j] * nd(rng);
      ++tries[n + j];
      ++total_tries;
      double dlp = 0.0;
      Eigen::VectorXd omega_new = omega;
      omega_new[j] += delta;
      // hyperprior change
      dlp += model.log_prior_omega(omega_new) - model.log_prior_omega(omega);
      double dll = 0.0;
      std::vector<std::pair<int, double>> touched;  // (row, old loglik)
      auto touch_rows = [&](auto&& pred) {
        for (int r = 0; r < model.n_rows(); ++r) {
          if (!pred(model.rows[r])) continue;
          touched.push_back({r, row_ll[r]});
          double lv = model.rows[r].has_likelihood()
                          ? loglik(model.rows[r], eta[r], omega_new.data()).value
                          : 0.0;
          dll += lv - row_ll[r];
          row_ll[r] = lv;
        }
      };
      double dprior_u = 0.0;
      std::vector<double> eta_backup;
      int slot = -1;
      switch (e.kind) {
        case HyperEntry::ResLogPrec:
          touch_rows([&](const ObsRow& r) { return r.hyper_res == j; });
          break;
        case HyperEntry::WeibullLogShape:
          touch_rows([&](const ObsRow& r) { return r.hyper_shape == j; });
          break;
        case HyperEntry::REChol: {
          int g = e.group;
          double before = 0.0;
          for (int s = 0; s < model.layout.n_subjects(); ++s) before += re_block_qf(g, s);
          Eigen::MatrixXd P_new = model.re_precision(g, omega_new);
          std::swap(P[g], P_new);
          double after = 0.0;
          for (int s = 0; s < model.layout.n_subjects(); ++s) after += re_block_qf(g, s);
          std::swap(P[g], P_new);  // restore; applied on acceptance
          double ld_old = 0, ld_new = 0;
          // log det P = 2 * sum of log-diagonal theta entries
          const int off = model.hyper.group_theta_offset[g];
          const int d = model.layout.re_groups[g].dim();
          for (int i = 0; i < d; ++i) {
            ld_old += 2.0 * omega[off + i];
            ld_new += 2.0 * omega_new[off + i];
          }
          dprior_u = 0.5 * model.layout.n_subjects() * (ld_new - ld_old) - 0.5 * (after - before);
          break;
        }
        case HyperEntry::RWLogPrec: {
          for (std::size_t b = 0; b < model.baseline_priors.size(); ++b)
            if (model.baseline_priors[b].omega_index == j) {
              const BaselineBlock& blk = model.layout.baselines[b];
              auto v = u.segment(blk.offset, blk.n);
              double qf0 = v.dot(model.baseline_priors[b].structure * v);
              double tau_old = std::exp(omega[j]), tau_new = std::exp(omega_new[j]);
              dprior_u = 0.5 * blk.n * (omega_new[j] - omega[j]) - 0.5 * (tau_new - tau_old) * qf0;
            }
          break;
        }
        case HyperEntry::Assoc: {
          for (std::size_t js = 0; js < model.assoc_omega.size(); ++js)
            if (model.assoc_omega[js] == j) slot = static_cast<int>(js);
          eta_backup.reserve(store.assoc_rows[slot].size());
          for (const auto& [r, unused] : store.assoc_rows[slot]) {
            (void)unused;
            eta_backup.push_back(eta[r]);
            touched.push_back({r, row_ll[r]});
            eta[r] += delta * shared[slot][r];
            double lv = model.rows[r].has_likelihood()
                            ? loglik(model.rows[r], eta[r], omega_new.data()).value
                            : 0.0;
            dll += lv - row_ll[r];
            row_ll[r] = lv;
          }
          break;
        }
      }
      dlp += dll + dprior_u;
      if (std::log(ud(rng)) < dlp) {
        if (e.kind == HyperEntry::REChol) P[e.group] = model.re_precision(e.group, omega_new);
        omega = omega_new;
        ll_total += dll;
        ++acc[n + j];
        ++total_acc;
      } else {
        for (std::size_t t = 0; t < touched.size(); ++t) row_ll[touched[t].first] = touched[t].second;
        if (slot >= 0)
          for (std::size_t t = 0; t < store.assoc_rows[slot].size(); ++t)
            eta[store.assoc_rows[slot][t].first] = eta_backup[t];
      }
    }

    // burn-in step adaptation in batches of 50 sweeps
    if (opts.adapt && sweep < burnin && (sweep + 1) % 50 == 0) {
      for (int sidx = 0; sidx < n_sites; ++sidx) {
        if (tries[sidx] == 0) continue;
        double rate = double(acc[sidx]) / tries[sidx];
        if (rate > 0.4)
          step[sidx] *= 1.25;
        else if (rate < 0.2)
          step[sidx] *= 0.8;
        acc[sidx] = 0;
        tries[sidx] = 0;
      }
      if (sweep + 50 >= burnin) {
        total_acc = 0;
        total_tries = 0;
      }
    }

    if (sweep >= burnin) {
      ++kept;
      mean_u += (u - mean_u) / kept;
      mean_w += (omega - mean_w) / kept;
      m2_u += (u.array().square().matrix() - m2_u) / kept;
      m2_w += (omega.array().square().matrix() - m2_w) / kept;
      long b = std::min<long>((sweep - burnin) / batch_len, n_batches);
      batch_u.row(b) += u.transpose();
      batch_w.row(b) += omega.transpose();
      batch_count[b] += 1;
      if (opts.thin > 0 && (sweep - burnin) % opts.thin == 0) {
        res.thin_u.push_back(u);
        res.thin_omega.push_back(omega);
      }
    }
  }

  res.u_mean = mean_u;
  res.omega_mean = mean_w;
  res.u_sd = (m2_u - mean_u.array().square().matrix()).cwiseMax(0.0).cwiseSqrt();
  res.omega_sd = (m2_w - mean_w.array().square().matrix()).cwiseMax(0.0).cwiseSqrt();
  res.n_kept = kept;
  res.accept_rate = total_tries > 0 ? double(total_acc) / total_tries : 0.0;

  // batch-means Monte Carlo standard errors
  auto batch_se = [&](const Eigen::MatrixXd& sums, const Eigen::VectorXd& mean) {
    Eigen::VectorXd se = Eigen::VectorXd::Zero(mean.size());
    int nb = 0;
    for (int b = 0; b <= n_batches; ++b)
      if (batch_count[b] > 1) ++nb;
    if (nb < 2) return se;
    for (int i = 0; i < mean.size(); ++i) {
      double s2 = 0;
      int m = 0;
      for (int b = 0; b <= n_batches; ++b) {
        if (batch_count[b] < 2) continue;
        double bm = sums(b, i) / batch_count[b];
        s2 += (bm - mean[i]) * (bm - mean[i]);
        ++m;
      }
      se[i] = std::sqrt(s2 / (m - 1) / m);
    }
    return se;
  };
  res.u_mean_se = batch_se(batch_u, mean_u);
  res.omega_mean_se = batch_se(batch_w, mean_w);
  return res;
}

// ---------------------------------------------------------------------------
// dense tensor-grid quadrature
// ---------------------------------------------------------------------------

namespace quad_detail {

/// Gauss-Legendre nodes and weights on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      double z1 = z;
      z = z1 - p0 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    w[n - 1 - i] = w[i];
  }
}

}  // namespace quad_detail

struct QuadSpec {
  std::vector<std::pair<double, double>> ranges;
  std::vector<int> n_points;
};

struct QuadResult {
  Eigen::VectorXd mean, sd;
  double log_normalizer = 0.0;
};

/// Tensor-product Gauss-Legendre integration of an unnormalized log
/// density; returns marginal means and sds per coordinate.
inline QuadResult quadrature_posterior(const std::function<double(const Eigen::VectorXd&)>& log_density,
                                       const QuadSpec& spec, int max_dim = 7) {
  const int d = static_cast<int>(spec.ranges.size());
  if (d == 0 || d > max_dim) throw std::invalid_argument("quadrature: dimension out of range");
  std::vector<std::vector<double>> nodes(d), weights(d);
  long total = 1;
  for (int i = 0; i < d; ++i) {
    quad_detail::gauss_legendre(spec.n_points[i], nodes[i], weights[i]);
    double a = spec.ranges[i].first, b = spec.ranges[i].second;
    for (auto& x : nodes[i]) x = 0.5 * (a + b) + 0.5 * (b - a) * x;
    for (auto& w : weights[i]) w *= 0.5 * (b - a);
    total *= spec.n_points[i];
  }
  double shift = -std::numeric_limits<double>::infinity();
  double Z = 0.0;
  Eigen::VectorXd Sx = Eigen::VectorXd::Zero(d), Sxx = Eigen::VectorXd::Zero(d);
  std::vector<int> idx(d, 0);
  Eigen::VectorXd xv(d);
  for (long it = 0; it < total; ++it) {
    double logw = 0.0;
    for (int i = 0; i < d; ++i) {
      xv[i] = nodes[i][idx[i]];
      logw += std::log(weights[i][idx[i]]);
    }
    double lp = log_density(xv) + logw;
    if (std::isfinite(lp)) {
      if (lp > shift + 40.0) {
        double f = std::isfinite(shift) ? std::exp(shift - lp) : 0.0;
        Z *= f;
        Sx *= f;
        Sxx *= f;
        shift = lp;
      }
      double w = std::exp(lp - shift);
      Z += w;
      Sx += w * xv;
      Sxx += w * xv.array().square().matrix();
    }
    for (int i = 0; i < d; ++i) {
      if (++idx[i] < spec.n_points[i]) break;
      idx[i] = 0;
    }
  }
  if (!(Z > 0)) throw std::runtime_error("quadrature: zero mass on the grid");
  QuadResult out;
  out.mean = Sx / Z;
  out.sd = ((Sxx / Z).array() - out.mean.array().square()).max(0.0).sqrt();
  out.log_normalizer = shift + std::log(Z);
  return out;
}

// ---------------------------------------------------------------------------
// Cox partial likelihood (Breslow ties)
// ---------------------------------------------------------------------------

struct CoxFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd information;
  int n_iter = 0;
};

inline CoxFit cox_partial_fit(const std::vector<double>& exit, const std::vector<int>& event,
                              const Eigen::MatrixXd& X,
                              const std::vector<double>& entry = {}) {
  const int n = static_cast<int>(exit.size());
  const int p = static_cast<int>(X.cols());
  if (n == 0 || std::none_of(event.begin(), event.end(), [](int e) { return e == 1; }))
    throw std::invalid_argument("cox fit: need at least one event");
  std::vector<double> ent(n, 0.0);
  if (!entry.empty()) ent = entry;

  std::vector<double> times;
  for (int i = 0; i < n; ++i)
    if (event[i] == 1) times.push_back(exit[i]);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  CoxFit fit;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd xb = X * beta;
    for (double t : times) {
      double s0 = 0.0;
      Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
      Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
      int d_t = 0;
      Eigen::VectorXd xsum = Eigen::VectorXd::Zero(p);
      for (int i = 0; i < n; ++i) {
        if (!(ent[i] < t && exit[i] >= t)) continue;
        double w = std::exp(xb[i]);
        s0 += w;
        s1 += w * X.row(i).transpose();
        s2 += w * X.row(i).transpose() * X.row(i);
        if (event[i] == 1 && exit[i] == t) {
          ++d_t;
          xsum += X.row(i).transpose();
        }
      }
      grad += xsum - d_t * s1 / s0;
      info += d_t * (s2 / s0 - (s1 / s0) * (s1 / s0).transpose());
    }
    Eigen::VectorXd delta = info.ldlt().solve(grad);
    beta += delta;
    fit.n_iter = it + 1;
    if (beta.lpNorm<Eigen::Infinity>() > 30.0)
      throw std::runtime_error("cox fit: estimate diverging (separation)");
    if (grad.lpNorm<Eigen::Infinity>() < 1e-10 && delta.lpNorm<Eigen::Infinity>() < 1e-8) {
      fit.beta = beta;
      fit.information = info;
      return fit;
    }
  }
  throw std::runtime_error("cox fit: Newton-Raphson did not converge");
}

// ---------------------------------------------------------------------------
// joint-data simulator
// ---------------------------------------------------------------------------

struct SimCovariate {
  std::string name;
  enum Kind { Bernoulli, Normal } kind = Bernoulli;
  double a = 0.5;  // probability, or mean
  double b = 1.0;  // sd for Normal
};

struct SimLong {
  std::string response;
  Family family = Family::gaussian;
  int ntrials = 1;
  double sigma_eps = 1.0;
  std::vector<Term> fixed_terms;
  std::vector<double> beta;
  std::vector<Term> random_terms;
};

struct SimSurv {
  BaselineKind baseline = BaselineKind::exponential;
  double shape = 1.0;  // weibull only
  std::vector<Term> fixed_terms;  // include ["1"] to place the log-scale
  std::vector<double> gamma;
};

struct SimScenario {
  int n_subjects = 100;
  std::vector<double> visit_times;
  std::vector<SimCovariate> covariates;
  std::vector<SimLong> longitudinal;
  std::vector<SimSurv> survival;
  std::vector<std::vector<AssocKind>> assoc;
  std::map<std::string, double> phi;  // keyed by association name, e.g. CV_L1_S1
  Eigen::MatrixXd re_cov;  // joint covariance over all random terms, marker order
  double cens_admin = std::numeric_limits<double>::infinity();
  double cens_exp_rate = 0.0;
  std::uint64_t seed = 1;
  double grid_horizon = 0.0;  // hazard grid end; default cens_admin
  int grid_points = 2000;
  std::string time_column = "time";
  std::string id_column = "id";
  std::string exit_column = "stime";
};

struct SimData {
  Table longitudinal;
  Table survival;
};

/// Parse a simulation scenario from JSON (see README for the schema).
inline SimScenario scenario_from_json(const json& j) {
  SimScenario sc;
  sc.seed = j.value("seed", 1);
  sc.n_subjects = j.at("n_subjects").get<int>();
  sc.visit_times = j.value("visit_times", std::vector<double>{});
  sc.time_column = j.value("time", std::string("time"));
  sc.id_column = j.value("id", std::string("id"));
  sc.exit_column = j.value("exit", std::string("stime"));
  sc.cens_admin = j.value("cens_admin", std::numeric_limits<double>::infinity());
  sc.cens_exp_rate = j.value("cens_exp_rate", 0.0);
  sc.grid_horizon = j.value("grid_horizon", 0.0);
  sc.grid_points = j.value("grid_points", 2000);
  if (j.contains("covariates"))
    for (const auto& jc : j.at("covariates")) {
      SimCovariate cv;
      cv.name = jc.at("name").get<std::string>();
      std::string kind = jc.value("kind", std::string("bernoulli"));
      if (kind == "bernoulli") {
        cv.kind = SimCovariate::Bernoulli;
        cv.a = jc.value("p", 0.5);
      } else if (kind == "normal") {
        cv.kind = SimCovariate::Normal;
        cv.a = jc.value("mean", 0.0);
        cv.b = jc.value("sd", 1.0);
      } else {
        throw spec_error("scenario: unknown covariate kind '" + kind + "'");
      }
      sc.covariates.push_back(cv);
    }
  auto parse_sim_term = [&](const json& jt) {
    Term t;
    for (const auto& jf : jt) {
      std::string s = jf.get<std::string>();
      if (s == "1") continue;
      TermFactor f;
      f.name = s;
      f.kind = (s == sc.time_column) ? TermFactor::TimeVar : TermFactor::Column;
      t.factors.push_back(f);
    }
    return t;
  };
  if (j.contains("longitudinal"))
    for (const auto& jl : j.at("longitudinal")) {
      SimLong sl;
      sl.response = jl.at("response").get<std::string>();
      sl.family = family_from_name(jl.value("family", std::string("gaussian")));
      sl.ntrials = jl.value("ntrials", 1);
      sl.sigma_eps = jl.value("sigma_eps", 1.0);
      for (const auto& jt : jl.at("fixed")) {
        sl.fixed_terms.push_back(parse_sim_term(jt.at("term")));
        sl.beta.push_back(jt.at("value").get<double>());
      }
      if (jl.contains("random"))
        for (const auto& jt : jl.at("random")) sl.random_terms.push_back(parse_sim_term(jt));
      sc.longitudinal.push_back(std::move(sl));
    }
  if (j.contains("survival"))
    for (const auto& js : j.at("survival")) {
      SimSurv ss;
      ss.baseline = baseline_from_name(js.value("baseline", std::string("exponential")));
      ss.shape = js.value("shape", 1.0);
      for (const auto& jt : js.at("fixed")) {
        ss.fixed_terms.push_back(parse_sim_term(jt.at("term")));
        ss.gamma.push_back(jt.at("value").get<double>());
      }
      sc.survival.push_back(std::move(ss));
    }
  if (j.contains("assoc")) {
    for (const auto& row : j.at("assoc")) {
      std::vector<AssocKind> r;
      for (const auto& cell : row) r.push_back(assoc_from_name(cell.get<std::string>()));
      sc.assoc.push_back(r);
    }
  }
  if (j.contains("phi"))
    for (auto& [name, v] : j.at("phi").items()) sc.phi[name] = v.get<double>();
  if (j.contains("re_cov")) {
    const auto& m = j.at("re_cov");
    const int d = static_cast<int>(m.size());
    sc.re_cov.resize(d, d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) sc.re_cov(a, b) = m[a][b].get<double>();
  }
  return sc;
}

namespace sim_detail {

inline double term_value_sim(const Term& term, const std::map<std::string, double>& cov, double t) {
  if (term.is_intercept()) return 1.0;
  double v = 1.0;
  for (const auto& f : term.factors) {
    switch (f.kind) {
      case TermFactor::Intercept: break;
      case TermFactor::TimeVar: v *= t; break;
      case TermFactor::TimeFun:
        throw std::invalid_argument("simulator: registered time functions not supported here");
      case TermFactor::Column: v *= cov.at(f.name); break;
    }
  }
  return v;
}

}  // namespace sim_detail

/// Simulate longitudinal markers and (competing) survival outcomes from
/// known parameter values. Survival times come from inverse-transform
/// sampling of the cause-specific cumulative hazards, inverted by bisection
/// on a fine grid; longitudinal rows after the exit time are dropped.
inline SimData simulate_joint(const SimScenario& sc) {
  std::mt19937_64 rng(sc.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);

  const int K = static_cast<int>(sc.longitudinal.size());
  const int S = static_cast<int>(sc.survival.size());
  int n_re = 0;
  std::vector<int> re_offset(K, 0);
  for (int k = 0; k < K; ++k) {
    re_offset[k] = n_re;
    n_re += static_cast<int>(sc.longitudinal[k].random_terms.size());
  }
  Eigen::MatrixXd re_chol;
  if (n_re > 0) {
    if (sc.re_cov.rows() != n_re || sc.re_cov.cols() != n_re)
      throw std::invalid_argument("simulator: re_cov dimension mismatch");
    Eigen::LLT<Eigen::MatrixXd> llt(sc.re_cov);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("simulator: re_cov must be positive definite");
    re_chol = llt.matrixL();
  }

  const double horizon = sc.grid_horizon > 0
                             ? sc.grid_horizon
                             : (std::isfinite(sc.cens_admin) ? sc.cens_admin : 10.0);

  // per-subject predictor machinery
  auto eta_long = [&](int k, const std::map<std::string, double>& cov, const Eigen::VectorXd& b,
                      double t) {
    const SimLong& sl = sc.longitudinal[k];
    double v = 0.0;
    for (std::size_t j = 0; j < sl.fixed_terms.size(); ++j)
      v += sl.beta[j] * sim_detail::term_value_sim(sl.fixed_terms[j], cov, t);
    for (std::size_t j = 0; j < sl.random_terms.size(); ++j)
      v += b[re_offset[k] + static_cast<int>(j)] *
           sim_detail::term_value_sim(sl.random_terms[j], cov, t);
    return v;
  };
  auto re_dev = [&](int k, const std::map<std::string, double>& cov, const Eigen::VectorXd& b,
                    double t) {
    const SimLong& sl = sc.longitudinal[k];
    double v = 0.0;
    for (std::size_t j = 0; j < sl.random_terms.size(); ++j)
      v += b[re_offset[k] + static_cast<int>(j)] *
           sim_detail::term_value_sim(sl.random_terms[j], cov, t);
    return v;
  };

  auto log_hazard = [&](int s, const std::map<std::string, double>& cov, const Eigen::VectorXd& b,
                        double t) {
    const SimSurv& ss = sc.survival[s];
    double eta = 0.0;
    for (std::size_t j = 0; j < ss.fixed_terms.size(); ++j)
      eta += ss.gamma[j] * sim_detail::term_value_sim(ss.fixed_terms[j], cov, t);
    for (int k = 0; k < K; ++k) {
      AssocKind kind = sc.assoc.empty() ? AssocKind::none : sc.assoc[k][s];
      if (kind == AssocKind::none) continue;
      std::string suffix = "_L" + std::to_string(k + 1) + "_S" + std::to_string(s + 1);
      const double dt = 1e-5 * std::max(horizon, 1.0);
      if (kind == AssocKind::cv || kind == AssocKind::cv_cs)
        eta += sc.phi.at("CV" + suffix) * eta_long(k, cov, b, t);
      if (kind == AssocKind::cs || kind == AssocKind::cv_cs)
        eta += sc.phi.at("CS" + suffix) *
               (eta_long(k, cov, b, t + dt) - eta_long(k, cov, b, t - dt)) / (2.0 * dt);
      if (kind == AssocKind::sre) eta += sc.phi.at("SRE" + suffix) * re_dev(k, cov, b, t);
      if (kind == AssocKind::sre_ind) {
        const auto& terms = sc.longitudinal[k].random_terms;
        for (std::size_t j = 0; j < terms.size(); ++j)
          eta += sc.phi.at("SRE_" + terms[j].label() + suffix) *
                 b[re_offset[k] + static_cast<int>(j)] *
                 sim_detail::term_value_sim(terms[j], cov, t);
      }
    }
    double base;
    if (ss.baseline == BaselineKind::weibull)
      base = std::log(ss.shape) + (ss.shape - 1.0) * std::log(std::max(t, 1e-12));
    else
      base = 0.0;  // exponential / smooth baselines carry their level via gamma
    return base + eta;
  };

  std::vector<std::string> long_cols{sc.id_column, sc.time_column};
  for (const auto& cv : sc.covariates) long_cols.push_back(cv.name);
  for (const auto& sl : sc.longitudinal) long_cols.push_back(sl.response);
  std::vector<std::vector<double>> long_data(long_cols.size());

  std::vector<std::string> surv_cols{sc.id_column};
  for (const auto& cv : sc.covariates) surv_cols.push_back(cv.name);
  surv_cols.push_back(sc.exit_column);
  for (int s = 0; s < S; ++s) surv_cols.push_back("event_s" + std::to_string(s + 1));
  std::vector<std::vector<double>> surv_data(surv_cols.size());

  for (int i = 0; i < sc.n_subjects; ++i) {
    std::map<std::string, double> cov;
    for (const auto& cvd : sc.covariates) {
      double v = cvd.kind == SimCovariate::Bernoulli ? (ud(rng) < cvd.a ? 1.0 : 0.0)
                                                     : cvd.a + cvd.b * nd(rng);
      cov[cvd.name] = v;
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n_re);
    if (n_re > 0) {
      Eigen::VectorXd z(n_re);
      for (int j = 0; j < n_re; ++j) z[j] = nd(rng);
      b = re_chol * z;
    }

    // cause-specific event times by inverse transform on the grid
    double exit = std::isfinite(sc.cens_admin) ? sc.cens_admin : horizon;
    std::vector<int> events(S, 0);
    int cause = -1;
    double t_event = std::numeric_limits<double>::infinity();
    for (int s = 0; s < S; ++s) {
      const int G = sc.grid_points;
      std::vector<double> tg(G + 1), Hc(G + 1, 0.0);
      for (int g = 0; g <= G; ++g) tg[g] = horizon * g / G;
      for (int g = 1; g <= G; ++g) {
        double h0 = std::exp(log_hazard(s, cov, b, std::max(tg[g - 1], 1e-10)));
        double h1 = std::exp(log_hazard(s, cov, b, tg[g]));
        if (!(h0 >= 0) || !(h1 >= 0)) throw std::runtime_error("simulator: nonpositive hazard");
        Hc[g] = Hc[g - 1] + 0.5 * (h0 + h1) * (tg[g] - tg[g - 1]);
      }
      double target = -std::log(1.0 - ud(rng));
      if (target > Hc[G]) continue;  // survives past the grid: censored
      // bisection on the piecewise-linear cumulative hazard
      double lo = 0.0, hi = horizon;
      auto H_at = [&](double t) {
        double g = t / horizon * G;
        int gi = std::min(static_cast<int>(g), G - 1);
        double frac = g - gi;
        return Hc[gi] + frac * (Hc[gi + 1] - Hc[gi]);
      };
      for (int it = 0; it < 200 && hi - lo > 1e-8; ++it) {
        double mid = 0.5 * (lo + hi);
        (H_at(mid) < target ? lo : hi) = mid;
      }
      double tt = 0.5 * (lo + hi);
      if (tt < t_event) {
        t_event = tt;
        cause = s;
      }
    }
    double cens = std::isfinite(sc.cens_admin) ? sc.cens_admin : horizon;
    if (sc.cens_exp_rate > 0) cens = std::min(cens, -std::log(1.0 - ud(rng)) / sc.cens_exp_rate);
    if (t_event <= cens) {
      exit = t_event;
      events[cause] = 1;
    } else {
      exit = cens;
    }
    if (exit <= 0) exit = 1e-6;

    // longitudinal rows at visits up to the exit time
    for (double t : sc.visit_times) {
      if (t > exit) continue;
      std::size_t c = 0;
      long_data[c++].push_back(i + 1);
      long_data[c++].push_back(t);
      for (const auto& cvd : sc.covariates) long_data[c++].push_back(cov.at(cvd.name));
      for (int k = 0; k < K; ++k) {
        const SimLong& sl = sc.longitudinal[k];
        double eta = eta_long(k, cov, b, t);
        double y = 0.0;
        switch (sl.family) {
          case Family::gaussian: y = eta + sl.sigma_eps * nd(rng); break;
          case Family::lognormal: y = std::exp(eta + sl.sigma_eps * nd(rng)); break;
          case Family::poisson: {
            std::poisson_distribution<long> pd(std::exp(eta));
            y = static_cast<double>(pd(rng));
            break;
          }
          case Family::binomial: {
            double prob = 1.0 / (1.0 + std::exp(-eta));
            std::binomial_distribution<int> bd(sl.ntrials, prob);
            y = bd(rng);
            break;
          }
          default: throw std::invalid_argument("simulator: unsupported longitudinal family");
        }
        long_data[c++].push_back(y);
      }
    }

    std::size_t c = 0;
    surv_data[c++].push_back(i + 1);
    for (const auto& cvd : sc.covariates) surv_data[c++].push_back(cov.at(cvd.name));
    surv_data[c++].push_back(exit);
    for (int s = 0; s < S; ++s) surv_data[c++].push_back(events[s]);
  }

  SimData out;
  for (std::size_t c = 0; c < long_cols.size(); ++c)
    out.longitudinal.add_column(long_cols[c], std::move(long_data[c]));
  for (std::size_t c = 0; c < surv_cols.size(); ++c)
    out.survival.add_column(surv_cols[c], std::move(surv_data[c]));
  return out;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov test
// ---------------------------------------------------------------------------

inline double ks_statistic(std::vector<double> data, const std::function<double(double)>& cdf) {
  std::sort(data.begin(), data.end());
  const int n = static_cast<int>(data.size());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    double F = cdf(data[i]);
    d = std::max(d, std::abs(F - double(i) / n));
    d = std::max(d, std::abs(double(i + 1) / n - F));
  }
  return d;
}

inline double ks_pvalue(int n, double d) {
  double lambda = (std::sqrt(double(n)) + 0.12 + 0.11 / std::sqrt(double(n))) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k)
    p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

/// Kaplan-Meier estimate evaluated at given times.
inline std::vector<double> kaplan_meier(const std::vector<double>& exit,
                                        const std::vector<int>& event,
                                        const std::vector<double>& eval_times) {
  std::vector<int> order(exit.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return exit[a] < exit[b]; });
  std::vector<double> out;
  out.reserve(eval_times.size());
  for (double t : eval_times) {
    double s = 1.0;
    int at_risk = static_cast<int>(exit.size());
    std::size_t i = 0;
    while (i < order.size() && exit[order[i]] <= t) {
      // group ties
      double tt = exit[order[i]];
      int d = 0, c = 0;
      while (i < order.size() && exit[order[i]] == tt) {
        if (event[order[i]] == 1)
          ++d;
        else
          ++c;
        ++i;
      }
      if (d > 0) s *= 1.0 - double(d) / at_risk;
      at_risk -= d + c;
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace lgmjoint

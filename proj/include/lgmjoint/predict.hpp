#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lgmjoint/fit.hpp"

namespace lgmjoint {

struct PredictRequest {
  Table newdata;
  double horizon = 0.0;
  std::vector<double> time_points;  // explicit grid; otherwise equidistant
  int n_time_points = 50;
  int n_sample = 300;
  int n_sample_re = 50;
  bool inv_link = false;
  bool survival = false;
  bool cif = false;
  std::optional<double> csurv;  // survival curves start here (default: last observation)
  bool return_samples = false;
  std::uint64_t seed = 99;
};

struct PredictResult {
  Table pred_long;
  Table pred_surv;
  // raw per-(id,outcome,time) sampled values when return_samples is set
  std::vector<std::string> sample_id, sample_outcome;
  std::vector<double> sample_time;
  std::vector<std::vector<double>> samples;
};

/// Everything prediction needs from a fit; buildable from an in-memory
/// JointFit or from a saved fit archive.
struct PredictContext {
  ModelSpec spec;
  LatentLayout layout;
  HyperLayout hyper;
  TimeFunRegistry funs;
  Strategy strategy = Strategy::grid;
  std::vector<Eigen::VectorXd> point_omega;
  std::vector<double> point_weight;
  Eigen::MatrixXd z_basis;
  double dz = 1.0;
  Eigen::VectorXd omega_mode;
  Eigen::MatrixXd omega_cov_chol;  // lower factor
  std::vector<int> dense_idx;                 // fixed effects + baseline values
  std::vector<Eigen::VectorXd> dense_mode;    // per point
  std::vector<Eigen::MatrixXd> dense_chol;    // per point, lower factor

  int n_points() const { return static_cast<int>(point_omega.size()); }
  int sample_point(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    double r = ud(rng), acc = 0.0;
    for (std::size_t h = 0; h < point_weight.size(); ++h) {
      acc += point_weight[h];
      if (r <= acc) return static_cast<int>(h);
    }
    return n_points() - 1;
  }
};

inline std::vector<int> dense_block_indices(const ModelSpec& spec, const LatentLayout& layout) {
  std::vector<int> idx;
  for (int k = 0; k < spec.n_long(); ++k)
    for (int j = 0; j < layout.long_fixed_dim[k]; ++j)
      idx.push_back(layout.long_fixed_offset[k] + j);
  for (int s = 0; s < spec.n_surv(); ++s)
    for (int j = 0; j < layout.surv_fixed_dim[s]; ++j)
      idx.push_back(layout.surv_fixed_offset[s] + j);
  for (const auto& blk : layout.baselines)
    for (int m = 0; m < blk.n; ++m) idx.push_back(blk.offset + m);
  return idx;
}

inline PredictContext make_predict_context(const JointFit& fit) {
  PredictContext ctx;
  ctx.spec = fit.model.spec;
  ctx.layout = fit.model.layout;
  ctx.hyper = fit.model.hyper;
  ctx.funs = fit.model.funs;
  ctx.strategy = fit.strategy;
  ctx.z_basis = fit.explore.z_basis;
  ctx.dz = fit.explore.dz;
  ctx.omega_mode = fit.omega_mode;
  if (fit.model.hyper.dim() > 0) ctx.omega_cov_chol = fit.omega_cov_llt.matrixL();
  ctx.dense_idx = dense_block_indices(ctx.spec, ctx.layout);
  const int dn = static_cast<int>(ctx.dense_idx.size());
  for (const auto& pt : fit.explore.points) {
    ctx.point_omega.push_back(pt.omega);
    ctx.point_weight.push_back(pt.weight);
    Eigen::MatrixXd cov = pt.ga.dense_cov(ctx.dense_idx);
    Eigen::LLT<Eigen::MatrixXd> llt(cov + 1e-12 * Eigen::MatrixXd::Identity(dn, dn));
    ctx.dense_chol.push_back(Eigen::MatrixXd(llt.matrixL()));
    Eigen::VectorXd m(dn);
    for (int j = 0; j < dn; ++j) m[j] = pt.ga.mode[ctx.dense_idx[j]];
    ctx.dense_mode.push_back(std::move(m));
  }
  return ctx;
}

namespace predict_detail {

inline double inv_link_apply(Link link, double x) {
  switch (link) {
    case Link::identity: return x;
    case Link::log_link: return std::exp(x);
    case Link::logit: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

/// Subject-level layout of stacked random effects across all groups.
struct SubjectREMap {
  int dim = 0;
  std::vector<int> group_offset;
  std::vector<std::vector<std::pair<int, Term>>> marker_terms;  // per marker: (slot, term)
  std::vector<int> frailty_slot;                                // per survival model

  SubjectREMap(const ModelSpec& spec, const LatentLayout& layout) {
    group_offset.resize(layout.re_groups.size());
    for (std::size_t g = 0; g < layout.re_groups.size(); ++g) {
      group_offset[g] = dim;
      dim += layout.re_groups[g].dim();
    }
    marker_terms.resize(spec.n_long());
    for (int k = 0; k < spec.n_long(); ++k)
      for (std::size_t j = 0; j < spec.longitudinal[k].random_terms.size(); ++j) {
        auto pos = layout.marker_re[k][j];
        marker_terms[k].push_back(
            {group_offset[pos.group] + pos.slot, spec.longitudinal[k].random_terms[j]});
      }
    frailty_slot.assign(spec.n_surv(), -1);
    for (int s = 0; s < spec.n_surv(); ++s)
      if (layout.frailty_re[s].group >= 0)
        frailty_slot[s] = group_offset[layout.frailty_re[s].group] + layout.frailty_re[s].slot;
  }
};

struct ObservedRow {
  int marker;
  double time;
  double y;
};

inline std::array<double, 5> sample_stats(std::vector<double> v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= v.size();
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  double sd = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0;
  std::sort(v.begin(), v.end());
  auto quant = [&](double p) {
    double idx = p * (v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(idx);
    double frac = idx - lo;
    return lo + 1 < v.size() ? v[lo] * (1 - frac) + v[lo + 1] * frac : v[lo];
  };
  return {mean, sd, quant(0.025), quant(0.5), quant(0.975)};
}

}  // namespace predict_detail

/// Posterior prediction for (possibly new) subjects: longitudinal
/// trajectories, hazard curves, and survival / cumulative-incidence curves.
/// Random effects are drawn conditional on each subject's observed
/// longitudinal rows through a subject-level Gaussian approximation; with no
/// observations the marginal RE distribution is used.
inline PredictResult predict(const PredictContext& ctx, const PredictRequest& req) {
  const ModelSpec& spec = ctx.spec;
  const LatentLayout& layout = ctx.layout;
  const Table& nd = req.newdata;
  if (!(req.horizon > 0)) throw spec_error("predict: horizon must be > 0");
  if (req.n_sample < 1 || req.n_sample_re < 1)
    throw spec_error("predict: sample counts must be >= 1");

  std::vector<double> grid = req.time_points;
  if (grid.empty()) {
    grid.resize(req.n_time_points);
    for (int g = 0; g < req.n_time_points; ++g)
      grid[g] = req.horizon * g / std::max(req.n_time_points - 1, 1);
  }
  const int G = static_cast<int>(grid.size());

  std::vector<std::string> ids;
  std::map<std::string, std::vector<int>> rows_of;
  for (int r = 0; r < nd.n_rows(); ++r) {
    std::string id = nd.raw(r, nd.col_index(spec.id_column));
    if (!rows_of.count(id)) ids.push_back(id);
    rows_of[id].push_back(r);
  }

  const int dn = static_cast<int>(ctx.dense_idx.size());
  std::vector<int> dense_pos(layout.n_latent, -1);
  for (int j = 0; j < dn; ++j) dense_pos[ctx.dense_idx[j]] = j;

  std::vector<int> res_idx(spec.n_long(), -1), shape_idx(spec.n_surv(), -1);
  for (int i = 0; i < ctx.hyper.dim(); ++i) {
    const HyperEntry& e = ctx.hyper.entries[i];
    if (e.kind == HyperEntry::ResLogPrec) res_idx[e.outcome] = i;
    if (e.kind == HyperEntry::WeibullLogShape) shape_idx[e.outcome] = i;
  }
  struct AssocRef {
    int omega;
    int kind;  // 0 = CV, 1 = CS, 2 = SRE, 3 = SRE_ind
    int term;  // random-term index for SRE_ind
  };
  std::vector<std::vector<std::vector<AssocRef>>> assoc_refs(
      std::max(spec.n_long(), 1), std::vector<std::vector<AssocRef>>(std::max(spec.n_surv(), 1)));
  for (int i = 0; i < ctx.hyper.dim(); ++i) {
    const HyperEntry& e = ctx.hyper.entries[i];
    if (e.kind != HyperEntry::Assoc) continue;
    AssocRef ref{i, 0, -1};
    if (e.sre_ind) {
      ref.kind = 3;
      const auto& rterms = spec.longitudinal[e.pair_long].random_terms;
      std::string suffix =
          "_L" + std::to_string(e.pair_long + 1) + "_S" + std::to_string(e.pair_surv + 1);
      for (std::size_t j = 0; j < rterms.size(); ++j)
        if (e.name == "SRE_" + rterms[j].label() + suffix) ref.term = static_cast<int>(j);
    } else if (e.name.rfind("CV_", 0) == 0) {
      ref.kind = 0;
    } else if (e.name.rfind("CS_", 0) == 0) {
      ref.kind = 1;
    } else {
      ref.kind = 2;
    }
    assoc_refs[e.pair_long][e.pair_surv].push_back(ref);
  }

  predict_detail::SubjectREMap re_map(spec, layout);
  const double cs_delta = spec.controls.cs_delta_frac * std::max(layout.max_time, 1e-8);
  std::mt19937_64 rng(req.seed);
  std::normal_distribution<double> norm(0.0, 1.0);

  struct Block {
    std::string id, outcome;
    std::vector<std::vector<double>> samples;
  };
  std::vector<Block> long_blocks, haz_blocks, surv_blocks, cif_blocks;
  PredictResult out;

  for (const auto& id : ids) {
    const auto& rws = rows_of[id];
    int anchor = rws.front();

    std::vector<predict_detail::ObservedRow> obs;
    double last_obs_time = 0.0;
    bool any_obs = false;
    for (int r : rws) {
      double t = nd.value(r, nd.col_index(spec.time_column));
      if (std::isnan(t)) throw spec_error("predict: missing time in new data");
      for (int k = 0; k < spec.n_long(); ++k) {
        double y = nd.value(r, nd.col_index(spec.longitudinal[k].response));
        if (std::isnan(y)) continue;
        if (spec.longitudinal[k].family == Family::lognormal) {
          if (!(y > 0)) throw spec_error("predict: lognormal response must be > 0");
          y = std::log(y);
        }
        obs.push_back({k, t, y});
        last_obs_time = std::max(last_obs_time, t);
        any_obs = true;
      }
    }
    if (any_obs && req.horizon <= last_obs_time)
      throw spec_error("predict: horizon must exceed the last observation of subject '" + id +
                       "'");
    const double csurv = req.csurv.value_or(any_obs ? last_obs_time : 0.0);

    std::vector<std::size_t> lb(spec.n_long());
    for (int k = 0; k < spec.n_long(); ++k) {
      long_blocks.push_back(
          {id, spec.longitudinal[k].response, std::vector<std::vector<double>>(G)});
      lb[k] = long_blocks.size() - 1;
    }
    std::vector<std::size_t> hb(spec.n_surv()), sb(spec.n_surv()), cb(spec.n_surv());
    for (int s = 0; s < spec.n_surv(); ++s) {
      std::string name = "S_" + std::to_string(s + 1);
      haz_blocks.push_back({id, name, std::vector<std::vector<double>>(G)});
      hb[s] = haz_blocks.size() - 1;
      if (req.survival) {
        surv_blocks.push_back({id, name, std::vector<std::vector<double>>(G)});
        sb[s] = surv_blocks.size() - 1;
      }
      if (req.cif) {
        cif_blocks.push_back({id, name, std::vector<std::vector<double>>(G)});
        cb[s] = cif_blocks.size() - 1;
      }
    }

    for (int samp = 0; samp < req.n_sample; ++samp) {
      int h = ctx.sample_point(rng);
      Eigen::VectorXd omega = ctx.point_omega[h];
      if (ctx.strategy == Strategy::grid && ctx.n_points() > 1) {
        std::uniform_real_distribution<double> ud(0.0, 1.0);
        for (int i = 0; i < ctx.hyper.dim(); ++i)
          omega += ctx.z_basis.col(i) * (ctx.dz * (ud(rng) - 0.5));
      } else if (ctx.hyper.dim() > 0 && ctx.omega_cov_chol.rows() == ctx.hyper.dim()) {
        Eigen::VectorXd z(ctx.hyper.dim());
        for (int i = 0; i < ctx.hyper.dim(); ++i) z[i] = norm(rng);
        omega = ctx.omega_mode + ctx.omega_cov_chol * z;
      }
      Eigen::VectorXd zd(dn);
      for (int j = 0; j < dn; ++j) zd[j] = norm(rng);
      Eigen::VectorXd dense = ctx.dense_mode[h] + ctx.dense_chol[h] * zd;

      Eigen::MatrixXd P = Eigen::MatrixXd::Zero(re_map.dim, re_map.dim);
      for (std::size_t g = 0; g < layout.re_groups.size(); ++g) {
        int off = re_map.group_offset[g];
        int d = layout.re_groups[g].dim();
        P.block(off, off, d, d) = group_precision(ctx.hyper, layout, static_cast<int>(g), omega);
      }

      auto fixed_eta = [&](int k, double t) {
        double v = 0.0;
        const auto& terms = spec.longitudinal[k].fixed_terms;
        for (std::size_t j = 0; j < terms.size(); ++j)
          v += dense[dense_pos[layout.long_fixed_offset[k] + static_cast<int>(j)]] *
               detail::term_value(terms[j], nd, anchor, t, ctx.funs);
        return v;
      };
      auto re_design = [&](int k, double t) {
        Eigen::VectorXd zv = Eigen::VectorXd::Zero(re_map.dim);
        for (const auto& [slot, term] : re_map.marker_terms[k])
          zv[slot] = detail::term_value(term, nd, anchor, t, ctx.funs);
        return zv;
      };

      // conditional Gaussian of the subject's RE given observed rows
      Eigen::VectorXd b_hat = Eigen::VectorXd::Zero(re_map.dim);
      Eigen::MatrixXd cond_chol;
      if (re_map.dim > 0) {
        Eigen::MatrixXd Hcond = P;
        for (int it = 0; it < 60; ++it) {
          Eigen::VectorXd gvec = -(P * b_hat);
          Hcond = P;
          for (const auto& orow : obs) {
            Eigen::VectorXd zv = re_design(orow.marker, orow.time);
            double eta = fixed_eta(orow.marker, orow.time) + zv.dot(b_hat);
            ObsRow lrow;
            lrow.family = spec.longitudinal[orow.marker].family;
            lrow.y = orow.y;
            lrow.ntrials = spec.longitudinal[orow.marker].ntrials;
            lrow.hyper_res = res_idx[orow.marker];
            LoglikTerms lt = loglik(lrow, eta, omega.data());
            gvec += lt.d1 * zv;
            Hcond += std::max(-lt.d2, 1e-10) * zv * zv.transpose();
          }
          Eigen::VectorXd step = Hcond.ldlt().solve(gvec);
          b_hat += step;
          if (obs.empty() || step.lpNorm<Eigen::Infinity>() < 1e-10) break;
        }
        Eigen::MatrixXd cov = Hcond.ldlt().solve(Eigen::MatrixXd::Identity(re_map.dim, re_map.dim));
        Eigen::LLT<Eigen::MatrixXd> cllt(cov +
                                         1e-14 * Eigen::MatrixXd::Identity(re_map.dim, re_map.dim));
        cond_chol = Eigen::MatrixXd(cllt.matrixL());
      }

      for (int rs = 0; rs < req.n_sample_re; ++rs) {
        Eigen::VectorXd b = b_hat;
        if (re_map.dim > 0) {
          Eigen::VectorXd zb(re_map.dim);
          for (int j = 0; j < re_map.dim; ++j) zb[j] = norm(rng);
          b += cond_chol * zb;
        }
        auto marker_eta = [&](int k, double t) { return fixed_eta(k, t) + re_design(k, t).dot(b); };

        for (int k = 0; k < spec.n_long(); ++k)
          for (int g = 0; g < G; ++g) {
            double v = marker_eta(k, grid[g]);
            if (req.inv_link) v = predict_detail::inv_link_apply(spec.longitudinal[k].link, v);
            long_blocks[lb[k]].samples[g].push_back(v);
          }

        if (spec.n_surv() == 0) continue;
        std::vector<std::vector<double>> haz(spec.n_surv(), std::vector<double>(G));
        for (int s = 0; s < spec.n_surv(); ++s) {
          const SurvSpec& ss = spec.survival[s];
          const BaselineBlock* blk = layout.baseline_for(s);
          for (int g = 0; g < G; ++g) {
            double t = std::max(grid[g], 1e-10);
            double eta = 0.0;
            for (std::size_t j = 0; j < ss.fixed_terms.size(); ++j)
              eta += dense[dense_pos[layout.surv_fixed_offset[s] + static_cast<int>(j)]] *
                     detail::term_value(ss.fixed_terms[j], nd, anchor, t, ctx.funs);
            if (re_map.frailty_slot[s] >= 0) eta += b[re_map.frailty_slot[s]];
            for (int k = 0; k < spec.n_long(); ++k)
              for (const auto& ref : assoc_refs[k][s]) {
                double phi = omega[ref.omega];
                switch (ref.kind) {
                  case 0: eta += phi * marker_eta(k, t); break;
                  case 1:
                    eta += phi * (marker_eta(k, t + cs_delta) - marker_eta(k, t - cs_delta)) /
                           (2.0 * cs_delta);
                    break;
                  case 2: eta += phi * re_design(k, t).dot(b); break;
                  case 3: {
                    const auto& [slot, term] = re_map.marker_terms[k][ref.term];
                    eta += phi * b[slot] * detail::term_value(term, nd, anchor, t, ctx.funs);
                    break;
                  }
                }
              }
            double logbase = 0.0;
            if (ss.baseline == BaselineKind::weibull) {
              double alpha = std::exp(omega[shape_idx[s]]);
              logbase = std::log(alpha) + (alpha - 1.0) * std::log(t);
            } else if (blk) {
              // linear interpolation of rw levels on the log scale between
              // interval midpoints, constant beyond the fitted range
              auto level = [&](int m) { return dense[dense_pos[blk->offset + m]]; };
              double m0 = 0.5 * (blk->cuts[0] + blk->cuts[1]);
              double mlast = 0.5 * (blk->cuts[blk->n - 1] + blk->cuts[blk->n]);
              if (t <= m0) {
                logbase = level(0);
              } else if (t >= mlast) {
                logbase = level(blk->n - 1);
              } else {
                int m = 0;
                while (0.5 * (blk->cuts[m + 1] + blk->cuts[m + 2]) < t) ++m;
                double lo = 0.5 * (blk->cuts[m] + blk->cuts[m + 1]);
                double hi = 0.5 * (blk->cuts[m + 1] + blk->cuts[m + 2]);
                double w = (t - lo) / (hi - lo);
                logbase = (1 - w) * level(m) + w * level(m + 1);
              }
            }
            haz[s][g] = std::exp(logbase + eta);
          }
          for (int g = 0; g < G; ++g) haz_blocks[hb[s]].samples[g].push_back(haz[s][g]);
        }

        if (req.survival || req.cif) {
          // piecewise-constant hazards per grid step, integrated from csurv;
          // cause increments split proportionally so that with one cause
          // CIF(t) == 1 - S(t) exactly
          std::vector<double> cum(spec.n_surv(), 0.0), cif(spec.n_surv(), 0.0);
          double cum_tot = 0.0;
          for (int g = 0; g < G; ++g) {
            if (g > 0 && grid[g] > csurv) {
              double lo = std::max(grid[g - 1], csurv);
              double dt = grid[g] - lo;
              double htot = 0.0;
              std::vector<double> hbar(spec.n_surv());
              for (int s = 0; s < spec.n_surv(); ++s) {
                hbar[s] = 0.5 * (haz[s][g - 1] + haz[s][g]);
                htot += hbar[s];
              }
              double s_before = std::exp(-cum_tot);
              double one_minus = -std::expm1(-htot * dt);
              for (int s = 0; s < spec.n_surv(); ++s) {
                cum[s] += hbar[s] * dt;
                if (htot > 0) cif[s] += (hbar[s] / htot) * s_before * one_minus;
              }
              cum_tot += htot * dt;
            }
            for (int s = 0; s < spec.n_surv(); ++s) {
              if (req.survival) surv_blocks[sb[s]].samples[g].push_back(std::exp(-cum[s]));
              if (req.cif) cif_blocks[cb[s]].samples[g].push_back(cif[s]);
            }
          }
        }
      }
    }
  }

  // ---- assemble output tables ----
  const std::string time_name = spec.time_column.empty() ? "time" : spec.time_column;
  {
    std::vector<std::string> col_id, col_out;
    std::vector<double> col_time, m, sd, q1, q2, q3;
    for (auto& blk : long_blocks)
      for (int g = 0; g < G; ++g) {
        auto st = predict_detail::sample_stats(blk.samples[g]);
        col_id.push_back(blk.id);
        col_time.push_back(grid[g]);
        col_out.push_back(blk.outcome);
        m.push_back(st[0]);
        sd.push_back(st[1]);
        q1.push_back(st[2]);
        q2.push_back(st[3]);
        q3.push_back(st[4]);
        if (req.return_samples) {
          out.sample_id.push_back(blk.id);
          out.sample_outcome.push_back(blk.outcome);
          out.sample_time.push_back(grid[g]);
          out.samples.push_back(blk.samples[g]);
        }
      }
    if (!col_id.empty()) {
      out.pred_long.add_string_column(spec.id_column, col_id);
      out.pred_long.add_column(time_name, col_time);
      out.pred_long.add_string_column("Outcome", col_out);
      out.pred_long.add_column("Mean", m);
      out.pred_long.add_column("Sd", sd);
      out.pred_long.add_column("quant0.025", q1);
      out.pred_long.add_column("quant0.5", q2);
      out.pred_long.add_column("quant0.975", q3);
    }
  }
  if (!haz_blocks.empty()) {
    std::vector<std::string> col_id, col_out;
    std::vector<double> col_time;
    std::vector<std::vector<double>> cols(15);
    for (std::size_t bi = 0; bi < haz_blocks.size(); ++bi) {
      for (int g = 0; g < G; ++g) {
        auto st = predict_detail::sample_stats(haz_blocks[bi].samples[g]);
        col_id.push_back(haz_blocks[bi].id);
        col_time.push_back(grid[g]);
        col_out.push_back(haz_blocks[bi].outcome);
        for (int j = 0; j < 5; ++j) cols[j].push_back(st[j]);
        if (req.survival) {
          auto ss = predict_detail::sample_stats(surv_blocks[bi].samples[g]);
          for (int j = 0; j < 5; ++j) cols[5 + j].push_back(ss[j]);
        }
        if (req.cif) {
          auto cs = predict_detail::sample_stats(cif_blocks[bi].samples[g]);
          for (int j = 0; j < 5; ++j) cols[10 + j].push_back(cs[j]);
        }
        if (req.return_samples) {
          out.sample_id.push_back(haz_blocks[bi].id);
          out.sample_outcome.push_back("Haz_" + haz_blocks[bi].outcome);
          out.sample_time.push_back(grid[g]);
          out.samples.push_back(haz_blocks[bi].samples[g]);
        }
      }
    }
    out.pred_surv.add_string_column(spec.id_column, col_id);
    out.pred_surv.add_column(time_name, col_time);
    out.pred_surv.add_string_column("Outcome", col_out);
    const char* stat[5] = {"Mean", "Sd", "quant0.025", "quant0.5", "quant0.975"};
    for (int j = 0; j < 5; ++j) out.pred_surv.add_column(std::string("Haz_") + stat[j], cols[j]);
    if (req.survival)
      for (int j = 0; j < 5; ++j)
        out.pred_surv.add_column(std::string("Surv_") + stat[j], cols[5 + j]);
    if (req.cif)
      for (int j = 0; j < 5; ++j)
        out.pred_surv.add_column(std::string("CIF_") + stat[j], cols[10 + j]);
  }
  return out;
}

inline PredictResult predict(const JointFit& fit, const PredictRequest& req) {
  return predict(make_predict_context(fit), req);
}

struct ImputedValue {
  int data_row;
  int outcome;
  double value;
};

/// Posterior-mean replacements for missing longitudinal responses of the
/// fitted dataset (on the inverse-link scale when requested). The predictor
/// marginal at each likelihood-free row comes straight from the fitted
/// mixture, so survival information flows into the imputation.
inline std::vector<ImputedValue> impute_missing(const JointFit& fit, bool inv_link = false,
                                                int n_samples = 2000, std::uint64_t seed = 7) {
  const AssembledModel& model = fit.model;
  std::vector<ImputedValue> out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  for (int r = 0; r < model.n_rows(); ++r) {
    const ObsRow& row = model.rows[r];
    if (row.outcome >= model.spec.n_long() || row.has_likelihood()) continue;
    double value = 0.0;
    if (!inv_link) {
      for (int h = 0; h < fit.n_points(); ++h)
        value += fit.explore.points[h].weight * fit.explore.points[h].ga.eta[r];
    } else {
      Link link = model.spec.longitudinal[row.outcome].link;
      std::vector<double> mean_h(fit.n_points()), sd_h(fit.n_points());
      for (int h = 0; h < fit.n_points(); ++h) {
        const auto& pt = fit.explore.points[h];
        SpMat A = model.build_A(pt.omega);
        Eigen::VectorXd a = A.row(r).transpose();
        Eigen::VectorXd x = pt.ga.chol->solve(a);
        double v = a.dot(x);
        if (pt.ga.n_constraints() > 0) {
          Eigen::VectorXd va = pt.ga.V.transpose() * a;
          v -= va.dot(pt.ga.S_llt.solve(va));
        }
        mean_h[h] = pt.ga.eta[r];
        sd_h[h] = std::sqrt(std::max(v, 0.0));
      }
      double acc = 0.0;
      std::uniform_real_distribution<double> ud(0.0, 1.0);
      for (int i = 0; i < n_samples; ++i) {
        double u = ud(rng), cum = 0.0;
        int h = 0;
        for (; h < fit.n_points(); ++h) {
          cum += fit.explore.points[h].weight;
          if (u <= cum) break;
        }
        if (h == fit.n_points()) --h;
        double eta = mean_h[h] + sd_h[h] * norm(rng);
        acc += predict_detail::inv_link_apply(link, eta);
      }
      value = acc / n_samples;
    }
    out.push_back({row.data_row, row.outcome, value});
  }
  return out;
}

}  // namespace lgmjoint

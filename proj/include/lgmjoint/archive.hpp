#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgmjoint/predict.hpp"
#include "lgmjoint/summaries.hpp"

namespace lgmjoint {

constexpr const char* kArchiveFormatVersion = "lgmjoint-fit-1";

namespace archive_detail {

inline std::uint64_t fnv1a64(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash missing file: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(data.data(), data.size())));
  return buf;
}

inline void write_bin(const std::string& path, const std::vector<double>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
}

inline std::vector<double> read_bin(const std::string& path, std::size_t expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw spec_error("fit archive: missing file " + path);
  std::vector<double> data(expect);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(expect * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != expect * sizeof(double))
    throw spec_error("fit archive: truncated file " + path);
  return data;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw spec_error("fit archive: missing file " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline json term_to_json(const Term& t) {
  json a = json::array();
  for (const auto& f : t.factors) {
    const char* kind = f.kind == TermFactor::Intercept ? "intercept"
                       : f.kind == TermFactor::Column  ? "column"
                       : f.kind == TermFactor::TimeVar ? "time"
                                                       : "fun";
    a.push_back({{"kind", kind}, {"name", f.name}});
  }
  return a;
}

inline Term term_from_json(const json& a) {
  Term t;
  for (const auto& jf : a) {
    TermFactor f;
    std::string kind = jf.at("kind").get<std::string>();
    f.name = jf.at("name").get<std::string>();
    f.kind = kind == "intercept" ? TermFactor::Intercept
             : kind == "column"  ? TermFactor::Column
             : kind == "time"    ? TermFactor::TimeVar
                                 : TermFactor::TimeFun;
    t.factors.push_back(f);
  }
  return t;
}

inline json layout_to_json(const LatentLayout& layout) {
  json j;
  j["n_latent"] = layout.n_latent;
  j["max_time"] = layout.max_time;
  j["subjects"] = layout.subjects;
  j["names"] = layout.names;
  j["long_fixed_offset"] = layout.long_fixed_offset;
  j["long_fixed_dim"] = layout.long_fixed_dim;
  j["surv_fixed_offset"] = layout.surv_fixed_offset;
  j["surv_fixed_dim"] = layout.surv_fixed_dim;
  j["re_groups"] = json::array();
  for (const auto& g : layout.re_groups) {
    json jg{{"offset0", g.offset0}, {"terms", json::array()}};
    for (const auto& t : g.terms)
      jg["terms"].push_back({{"marker", t.marker},
                             {"surv", t.surv},
                             {"label", t.label},
                             {"term", term_to_json(t.term)}});
    j["re_groups"].push_back(jg);
  }
  j["baselines"] = json::array();
  for (const auto& b : layout.baselines)
    j["baselines"].push_back(
        {{"surv", b.surv}, {"offset", b.offset}, {"n", b.n}, {"cuts", b.cuts}});
  j["marker_re"] = json::array();
  for (const auto& v : layout.marker_re) {
    json jv = json::array();
    for (const auto& p : v) jv.push_back({{"group", p.group}, {"slot", p.slot}});
    j["marker_re"].push_back(jv);
  }
  j["frailty_re"] = json::array();
  for (const auto& p : layout.frailty_re)
    j["frailty_re"].push_back({{"group", p.group}, {"slot", p.slot}});
  return j;
}

inline LatentLayout layout_from_json(const json& j) {
  LatentLayout layout;
  layout.n_latent = j.at("n_latent").get<int>();
  layout.max_time = j.at("max_time").get<double>();
  layout.subjects = j.at("subjects").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < layout.subjects.size(); ++i)
    layout.subject_index[layout.subjects[i]] = static_cast<int>(i);
  layout.names = j.at("names").get<std::vector<std::string>>();
  layout.long_fixed_offset = j.at("long_fixed_offset").get<std::vector<int>>();
  layout.long_fixed_dim = j.at("long_fixed_dim").get<std::vector<int>>();
  layout.surv_fixed_offset = j.at("surv_fixed_offset").get<std::vector<int>>();
  layout.surv_fixed_dim = j.at("surv_fixed_dim").get<std::vector<int>>();
  for (const auto& jg : j.at("re_groups")) {
    REGroup g;
    g.offset0 = jg.at("offset0").get<int>();
    for (const auto& jt : jg.at("terms")) {
      REGroup::TermRef t;
      t.marker = jt.at("marker").get<int>();
      t.surv = jt.at("surv").get<int>();
      t.label = jt.at("label").get<std::string>();
      t.term = term_from_json(jt.at("term"));
      g.terms.push_back(t);
    }
    layout.re_groups.push_back(g);
  }
  for (const auto& jb : j.at("baselines")) {
    BaselineBlock b;
    b.surv = jb.at("surv").get<int>();
    b.offset = jb.at("offset").get<int>();
    b.n = jb.at("n").get<int>();
    b.cuts = jb.at("cuts").get<std::vector<double>>();
    layout.baselines.push_back(b);
  }
  for (const auto& jv : j.at("marker_re")) {
    std::vector<LatentLayout::REPos> v;
    for (const auto& jp : jv) v.push_back({jp.at("group").get<int>(), jp.at("slot").get<int>()});
    layout.marker_re.push_back(v);
  }
  for (const auto& jp : j.at("frailty_re"))
    layout.frailty_re.push_back({jp.at("group").get<int>(), jp.at("slot").get<int>()});
  return layout;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (int j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  const int r = static_cast<int>(j.size());
  if (r == 0) return Eigen::MatrixXd(0, 0);
  const int c = static_cast<int>(j[0].size());
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < c; ++k) m(i, k) = j[i][k].get<double>();
  return m;
}

}  // namespace archive_detail

/// Write a fitted model to `dir` as JSON metadata plus flat binary arrays.
/// The manifest is written last and carries content hashes of every file.
inline void save_fit(const JointFit& fit, const FitSummary& summary, const std::string& dir,
                     json manifest_extra = json::object()) {
  namespace fs = std::filesystem;
  namespace ad = archive_detail;
  fs::create_directories(dir);
  const int H = fit.n_points();
  const int n = fit.model.n_latent();

  ad::write_text(dir + "/spec.json", spec_to_json(fit.model.spec).dump(1));
  ad::write_text(dir + "/layout.json", ad::layout_to_json(fit.model.layout).dump(1));

  json points;
  points["strategy"] = fit.strategy == Strategy::eb ? "eb" : "grid";
  points["omega_mode"] = std::vector<double>(fit.omega_mode.data(),
                                             fit.omega_mode.data() + fit.omega_mode.size());
  points["omega_cov"] = ad::matrix_to_json(fit.omega_cov);
  points["z_basis"] = ad::matrix_to_json(fit.explore.z_basis);
  points["dz"] = fit.explore.dz;
  points["hess_spd"] = fit.explore.hess_spd;
  points["mlik_integration"] = fit.explore.mlik_integration;
  points["mlik_gaussian"] = fit.explore.mlik_gaussian;
  points["log_post_mode"] = fit.log_post_mode;
  points["points"] = json::array();
  for (const auto& pt : fit.explore.points)
    points["points"].push_back(
        {{"omega", std::vector<double>(pt.omega.data(), pt.omega.data() + pt.omega.size())},
         {"weight", pt.weight},
         {"log_post", pt.log_post}});
  ad::write_text(dir + "/points.json", points.dump(1));

  std::vector<double> means(H * n), sds(H * n);
  for (int h = 0; h < H; ++h)
    for (int i = 0; i < n; ++i) {
      means[h * n + i] = fit.marginals.means(h, i);
      sds[h * n + i] = fit.marginals.sds(h, i);
    }
  ad::write_bin(dir + "/marginal_means.bin", means);
  ad::write_bin(dir + "/marginal_sds.bin", sds);

  PredictContext ctx = make_predict_context(fit);
  const int dn = static_cast<int>(ctx.dense_idx.size());
  json dense{{"indices", ctx.dense_idx}};
  ad::write_text(dir + "/dense.json", dense.dump(1));
  std::vector<double> dmode(H * dn), dchol(static_cast<std::size_t>(H) * dn * dn);
  for (int h = 0; h < H; ++h) {
    for (int j = 0; j < dn; ++j) dmode[h * dn + j] = ctx.dense_mode[h][j];
    for (int a = 0; a < dn; ++a)
      for (int bcol = 0; bcol < dn; ++bcol)
        dchol[(static_cast<std::size_t>(h) * dn + a) * dn + bcol] = ctx.dense_chol[h](a, bcol);
  }
  ad::write_bin(dir + "/dense_mode.bin", dmode);
  ad::write_bin(dir + "/dense_chol.bin", dchol);

  ad::write_text(dir + "/summary.json", summary.to_json().dump(1));
  ad::write_text(dir + "/summary.txt", summary.to_text());

  json manifest = manifest_extra;
  manifest["format"] = kArchiveFormatVersion;
  manifest["n_points"] = H;
  manifest["n_latent"] = n;
  manifest["dense_dim"] = dn;
  manifest["seconds"] = fit.seconds;
  manifest["strategy"] = fit.strategy == Strategy::eb ? "eb" : "grid";
  manifest["files"] = json::object();
  for (const char* f : {"spec.json", "layout.json", "points.json", "marginal_means.bin",
                        "marginal_sds.bin", "dense.json", "dense_mode.bin", "dense_chol.bin",
                        "summary.json", "summary.txt"})
    manifest["files"][f] = ad::file_hash(dir + "/" + std::string(f));
  ad::write_text(dir + "/manifest.json", manifest.dump(1));
}

/// A fit reloaded from disk: enough to print summaries and run predictions,
/// without the original data.
struct ArchiveFit {
  ModelSpec spec;
  LatentLayout layout;
  HyperLayout hyper;
  TimeFunRegistry funs;
  Strategy strategy = Strategy::grid;
  std::vector<Eigen::VectorXd> point_omega;
  std::vector<double> point_weight, point_log_post;
  Eigen::VectorXd omega_mode;
  Eigen::MatrixXd omega_cov, omega_cov_chol, z_basis;
  double dz = 1.0;
  bool hess_spd = true;
  double mlik_integration = 0, mlik_gaussian = 0, seconds = 0;
  Eigen::MatrixXd marg_means, marg_sds;  // H x n
  std::vector<int> dense_idx;
  std::vector<Eigen::VectorXd> dense_mode;
  std::vector<Eigen::MatrixXd> dense_chol;
  json manifest;
  json summary_json;
  std::string summary_text;

  int n_points() const { return static_cast<int>(point_omega.size()); }

  PosteriorMarginal latent_marginal(int i) const {
    PosteriorMarginal m;
    const int H = n_points();
    m.means.resize(H);
    m.sds.resize(H);
    m.weights = point_weight;
    double mu = 0, m2 = 0;
    for (int h = 0; h < H; ++h) {
      m.means[h] = marg_means(h, i);
      m.sds[h] = marg_sds(h, i);
      mu += point_weight[h] * m.means[h];
      m2 += point_weight[h] * (m.sds[h] * m.sds[h] + m.means[h] * m.means[h]);
    }
    m.mean = mu;
    m.sd = std::sqrt(std::max(m2 - mu * mu, 0.0));
    return m;
  }

  Eigen::VectorXd sample_omega(std::mt19937_64& rng) const {
    const int p = hyper.dim();
    if (p == 0) return omega_mode;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    if (strategy == Strategy::eb || n_points() == 1) {
      std::normal_distribution<double> nd(0.0, 1.0);
      Eigen::VectorXd z(p);
      for (int i = 0; i < p; ++i) z[i] = nd(rng);
      return omega_mode + omega_cov_chol * z;
    }
    double r = ud(rng);
    std::size_t h = 0;
    double acc = 0.0;
    for (; h < point_weight.size(); ++h) {
      acc += point_weight[h];
      if (r <= acc) break;
    }
    if (h == point_weight.size()) --h;
    Eigen::VectorXd w = point_omega[h];
    for (int i = 0; i < p; ++i) w += z_basis.col(i) * (dz * (ud(rng) - 0.5));
    return w;
  }

  SummarySource summary_source() const {
    SummarySource src;
    src.spec = &spec;
    src.layout = &layout;
    src.hyper = &hyper;
    src.latent_marginal = [this](int i) { return latent_marginal(i); };
    src.sample_omega = [this](std::mt19937_64& rng) { return sample_omega(rng); };
    src.mlik_integration = mlik_integration;
    src.mlik_gaussian = mlik_gaussian;
    src.seconds = seconds;
    return src;
  }

  PredictContext predict_context() const {
    PredictContext ctx;
    ctx.spec = spec;
    ctx.layout = layout;
    ctx.hyper = hyper;
    ctx.funs = funs;
    ctx.strategy = strategy;
    ctx.point_omega = point_omega;
    ctx.point_weight = point_weight;
    ctx.z_basis = z_basis;
    ctx.dz = dz;
    ctx.omega_mode = omega_mode;
    ctx.omega_cov_chol = omega_cov_chol;
    ctx.dense_idx = dense_idx;
    ctx.dense_mode = dense_mode;
    ctx.dense_chol = dense_chol;
    return ctx;
  }
};

inline ArchiveFit load_fit(const std::string& dir, bool check_hashes = true) {
  namespace ad = archive_detail;
  ArchiveFit af;
  af.manifest = json::parse(ad::read_text(dir + "/manifest.json"));
  if (af.manifest.value("format", "") != kArchiveFormatVersion)
    throw spec_error("fit archive: unsupported format in " + dir);
  if (check_hashes)
    for (auto& [name, hash] : af.manifest.at("files").items())
      if (ad::file_hash(dir + "/" + name) != hash.get<std::string>())
        throw spec_error("fit archive: hash mismatch for " + name);

  af.spec = spec_from_json(json::parse(ad::read_text(dir + "/spec.json")));
  af.layout = ad::layout_from_json(json::parse(ad::read_text(dir + "/layout.json")));
  af.hyper = build_hyper_layout(af.spec, af.layout);
  af.funs = TimeFunRegistry(af.spec.time_functions, af.layout.max_time);

  json points = json::parse(ad::read_text(dir + "/points.json"));
  af.strategy = points.at("strategy") == "eb" ? Strategy::eb : Strategy::grid;
  auto om = points.at("omega_mode").get<std::vector<double>>();
  af.omega_mode = Eigen::Map<Eigen::VectorXd>(om.data(), om.size());
  af.omega_cov = ad::matrix_from_json(points.at("omega_cov"));
  if (af.omega_cov.rows() > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(af.omega_cov +
                                    1e-12 * Eigen::MatrixXd::Identity(af.omega_cov.rows(),
                                                                      af.omega_cov.cols()));
    af.omega_cov_chol = llt.matrixL();
  }
  af.z_basis = ad::matrix_from_json(points.at("z_basis"));
  af.dz = points.at("dz").get<double>();
  af.hess_spd = points.value("hess_spd", true);
  af.mlik_integration = points.at("mlik_integration").get<double>();
  af.mlik_gaussian = points.at("mlik_gaussian").get<double>();
  for (const auto& jp : points.at("points")) {
    auto w = jp.at("omega").get<std::vector<double>>();
    af.point_omega.push_back(Eigen::Map<Eigen::VectorXd>(w.data(), w.size()));
    af.point_weight.push_back(jp.at("weight").get<double>());
    af.point_log_post.push_back(jp.at("log_post").get<double>());
  }

  const int H = af.n_points();
  const int n = af.layout.n_latent;
  auto means = ad::read_bin(dir + "/marginal_means.bin", static_cast<std::size_t>(H) * n);
  auto sds = ad::read_bin(dir + "/marginal_sds.bin", static_cast<std::size_t>(H) * n);
  af.marg_means.resize(H, n);
  af.marg_sds.resize(H, n);
  for (int h = 0; h < H; ++h)
    for (int i = 0; i < n; ++i) {
      af.marg_means(h, i) = means[h * n + i];
      af.marg_sds(h, i) = sds[h * n + i];
    }

  json dense = json::parse(ad::read_text(dir + "/dense.json"));
  af.dense_idx = dense.at("indices").get<std::vector<int>>();
  const int dn = static_cast<int>(af.dense_idx.size());
  auto dmode = ad::read_bin(dir + "/dense_mode.bin", static_cast<std::size_t>(H) * dn);
  auto dchol = ad::read_bin(dir + "/dense_chol.bin", static_cast<std::size_t>(H) * dn * dn);
  for (int h = 0; h < H; ++h) {
    Eigen::VectorXd m(dn);
    for (int j = 0; j < dn; ++j) m[j] = dmode[h * dn + j];
    af.dense_mode.push_back(m);
    Eigen::MatrixXd c(dn, dn);
    for (int a = 0; a < dn; ++a)
      for (int bcol = 0; bcol < dn; ++bcol)
        c(a, bcol) = dchol[(static_cast<std::size_t>(h) * dn + a) * dn + bcol];
    af.dense_chol.push_back(c);
  }

  af.summary_json = json::parse(ad::read_text(dir + "/summary.json"));
  af.summary_text = ad::read_text(dir + "/summary.txt");
  af.seconds = af.manifest.value("seconds", 0.0);
  return af;
}

}  // namespace lgmjoint

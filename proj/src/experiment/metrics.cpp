#include <algorithm>
#include <sstream>

#include "ensmooth/error.hpp"
#include "ensmooth/experiment.hpp"
#include "ensmooth/io.hpp"
#include "ensmooth/stats.hpp"

namespace ensmooth::experiment {

namespace fs = std::filesystem;

std::string Summary::value(const std::string& key) const {
  for (const auto& [k, v] : rows)
    if (k == key) return v;
  throw InvalidInput("summary has no metric '" + key + "'");
}

double Summary::number(const std::string& key) const { return std::stod(value(key)); }

Summary read_summary(const fs::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  Summary s;
  std::getline(in, line);
  if (line != "metric,value") throw LoadError("not a summary file: " + path.string());
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw LoadError("bad summary row: " + line);
    s.rows.emplace_back(line.substr(0, comma), line.substr(comma + 1));
  }
  return s;
}

namespace {

Eigen::MatrixXd member_fields(const Ensemble& e, const ExperimentConfig& cfg,
                              const param::KLBasis* basis) {
  if (cfg.model == Model::channel) return e.params;
  const Eigen::Index nkl = basis->terms();
  Eigen::MatrixXd f = basis->modes() * e.params.topRows(nkl);
  f.array() += basis->mean;
  return f;
}

Eigen::VectorXd per_member_rmse(const Eigen::MatrixXd& outputs, const ObservationSet& obs,
                                const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd r(outputs.cols());
  for (Eigen::Index m = 0; m < outputs.cols(); ++m) {
    double sq = 0.0;
    for (Eigen::Index k : rows) {
      const double d = outputs(k, m) - obs.values[k];
      sq += d * d;
    }
    r[m] = std::sqrt(sq / static_cast<double>(rows.size()));
  }
  return r;
}

}  // namespace

Summary metrics(const fs::path& dir) {
  const ExperimentConfig cfg =
      config_from_json(nlohmann::json::parse(io::read_text(dir / "config.json")));
  const ObservationSet obs = io::load_observations(dir / "observations.json");
  const ScalarField truth = io::load_field(dir / "truth_field");
  const Eigen::VectorXd truth_params = io::load_matrix(dir / "truth_params").col(0);
  const std::string last = "ens_t" + std::to_string(cfg.n_iter);
  for (const std::string& name : {std::string("ens_t0"), last})
    if (!fs::exists(io::artifact_paths(dir / name).manifest))
      throw LoadError("missing snapshot " + (dir / name).string());
  const Ensemble prior = io::load_ensemble(dir / "ens_t0");
  const Ensemble post = io::load_ensemble(dir / last);
  if (!prior.outputs || !post.outputs)
    throw LoadError("snapshots lack simulated outputs needed for misfits");

  std::optional<param::KLBasis> basis;
  if (cfg.model == Model::gaussian) basis = param::load_kl_basis(dir / "kl_basis");
  const param::KLBasis* bp = basis ? &*basis : nullptr;
  const Grid2D& grid = truth.grid();
  const EnsembleStats fprior = column_stats(member_fields(prior, cfg, bp));
  const EnsembleStats fpost = column_stats(member_fields(post, cfg, bp));

  Summary s;
  auto add = [&s](const std::string& k, double v) { s.rows.emplace_back(k, io::format_number(v)); };
  s.rows.emplace_back("preset", cfg.preset);
  s.rows.emplace_back("method", smoother::to_string(cfg.method));
  add("ensemble_size", cfg.ensemble_size);
  add("n_iter", cfg.n_iter);
  add("field_rmse_prior", rmse(fprior.mean, truth.values()));
  add("field_rmse_posterior", rmse(fpost.mean, truth.values()));
  add("field_std_mean_prior", fprior.std.mean());
  add("field_std_mean_posterior", fpost.std.mean());

  if (cfg.model == Model::gaussian) {
    const Eigen::Index ns = 8;
    const Eigen::VectorXd st = truth_params.tail(ns);
    const Eigen::VectorXd prior_mean = prior.params.bottomRows(ns).rowwise().mean();
    const Eigen::VectorXd post_mean = post.params.bottomRows(ns).rowwise().mean();
    add("source_rmsre_prior", rmsre(prior_mean, st));
    add("source_rmsre_posterior", rmsre(post_mean, st));
    static const char* names[] = {"x_s", "y_s", "S_1", "S_2", "S_3", "S_4", "S_5", "S_6"};
    for (Eigen::Index k = 0; k < ns; ++k)
      add(std::string("source_mean_") + names[k], post_mean[k]);

    std::vector<std::string> header{"stage", "member"};
    header.insert(header.end(), std::begin(names), std::end(names));
    io::CsvWriter marg(dir / "source_marginals.csv", header);
    for (const auto& [stage, e] : {std::pair<std::string, const Ensemble*>{"prior", &prior},
                                   {"posterior", &post}})
      for (Eigen::Index m = 0; m < e->members(); ++m) {
        std::vector<std::string> row{stage, std::to_string(m)};
        for (Eigen::Index k = 0; k < ns; ++k)
          row.push_back(io::format_number(e->params(e->param_dim() - ns + k, m)));
        marg.row(row);
      }
  }

  add("bimodality_truth", bimodality_index(truth.values()));
  add("bimodality_prior", bimodality_index(fprior.mean));
  add("bimodality_posterior", bimodality_index(fpost.mean));

  std::vector<Eigen::Index> head_rows, all_rows;
  for (Eigen::Index k = 0; k < obs.size(); ++k) {
    all_rows.push_back(k);
    if (obs.labels[static_cast<std::size_t>(k)].kind == ObsKind::head) head_rows.push_back(k);
  }
  const Eigen::VectorXd hm_prior = per_member_rmse(*prior.outputs, obs, head_rows);
  const Eigen::VectorXd hm_post = per_member_rmse(*post.outputs, obs, head_rows);
  add("head_misfit_median_prior", median({hm_prior.data(), hm_prior.data() + hm_prior.size()}));
  add("head_misfit_median_posterior", median({hm_post.data(), hm_post.data() + hm_post.size()}));
  add("data_misfit_mean_prior", per_member_rmse(*prior.outputs, obs, all_rows).mean());
  add("data_misfit_mean_posterior", per_member_rmse(*post.outputs, obs, all_rows).mean());

  {
    io::CsvWriter hm(dir / "head_misfit.csv", {"member", "prior", "posterior"});
    const Eigen::Index n = std::max(hm_prior.size(), hm_post.size());
    for (Eigen::Index m = 0; m < n; ++m)
      hm.row({std::to_string(m), m < hm_prior.size() ? io::format_number(hm_prior[m]) : "",
              m < hm_post.size() ? io::format_number(hm_post[m]) : ""});
  }
  {
    io::CsvWriter f(dir / "fields.csv", {"node", "x", "y", "truth", "prior_mean", "prior_std",
                                         "posterior_mean", "posterior_std"});
    for (int n = 0; n < grid.size(); ++n)
      f.row(std::vector<double>{static_cast<double>(n), grid.x(grid.col(n)), grid.y(grid.row(n)),
                                truth[n], fprior.mean[n], fprior.std[n], fpost.mean[n],
                                fpost.std[n]});
  }
  io::save_field(ScalarField(grid, fpost.mean), dir / "posterior_mean");
  io::save_field(ScalarField(grid, fpost.std), dir / "posterior_std");
  {
    const double lo = std::min({truth.values().minCoeff(), fprior.mean.minCoeff(),
                                fpost.mean.minCoeff()});
    const double hi = std::max({truth.values().maxCoeff(), fprior.mean.maxCoeff(),
                                fpost.mean.maxCoeff()});
    const int bins = 40;
    const Histogram ht = histogram(truth.values(), lo, hi, bins);
    const Histogram hp = histogram(fprior.mean, lo, hi, bins);
    const Histogram hq = histogram(fpost.mean, lo, hi, bins);
    io::CsvWriter h(dir / "histogram.csv",
                    {"bin_lo", "bin_hi", "truth", "prior_mean", "posterior_mean"});
    for (int b = 0; b < bins; ++b) {
      const auto k = static_cast<std::size_t>(b);
      h.row(std::vector<double>{ht.edges[k], ht.edges[k + 1], static_cast<double>(ht.counts[k]),
                                static_cast<double>(hp.counts[k]),
                                static_cast<double>(hq.counts[k])});
    }
  }

  io::CsvWriter out(dir / "summary.csv", {"metric", "value"});
  for (const auto& [k, v] : s.rows) out.row({k, v});
  return s;
}

}  // namespace ensmooth::experiment

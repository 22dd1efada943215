#include "ensmooth/stats.hpp"

#include <algorithm>
#include <cmath>

#include "ensmooth/error.hpp"

namespace ensmooth {

EnsembleStats column_stats(const Eigen::MatrixXd& members) {
  const Eigen::Index n = members.cols();
  if (n < 2) throw InvalidInput("statistics need at least 2 members");
  EnsembleStats s;
  s.mean = members.rowwise().mean();
  const Eigen::MatrixXd anomalies = members.colwise() - s.mean;
  s.std = (anomalies.rowwise().squaredNorm() / static_cast<double>(n - 1))
              .cwiseSqrt();
  return s;
}

EnsembleStats ensemble_stats(const Ensemble& e) {
  if (e.members() == 0) throw InvalidInput("empty ensemble");
  return column_stats(e.params);
}

Eigen::MatrixXd perturb_observations(const ObservationSet& obs, double alpha,
                                     Eigen::Index n, RngStream& rng) {
  if (!(alpha > 0.0)) throw InvalidInput("inflation factor must be positive");
  obs.validate();
  Eigen::MatrixXd eps = rng.normal_matrix(obs.size(), n);
  eps = (alpha * obs.noise_std).asDiagonal() * eps;
  eps.colwise() += obs.values;
  return eps;
}

double rmse(const Eigen::Ref<const Eigen::VectorXd>& a,
            const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw InvalidInput("rmse: length mismatch");
  if (a.size() == 0) throw InvalidInput("rmse: empty input");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

double rmse(const ScalarField& a, const ScalarField& b) {
  return rmse(a.values(), b.values());
}

double rmsre(const Eigen::Ref<const Eigen::VectorXd>& est,
             const Eigen::Ref<const Eigen::VectorXd>& truth) {
  if (est.size() != truth.size()) throw InvalidInput("rmsre: length mismatch");
  if (truth.size() == 0) throw InvalidInput("rmsre: empty input");
  if ((truth.array() == 0.0).any())
    throw InvalidInput("rmsre: truth has a zero entry");
  const Eigen::ArrayXd rel = (est - truth).array() / truth.array();
  return std::sqrt(rel.square().mean());
}

Histogram histogram(const Eigen::Ref<const Eigen::VectorXd>& v, double lo,
                    double hi, int bins) {
  if (bins < 1 || !(hi > lo)) throw InvalidInput("histogram: bad bin spec");
  Histogram h;
  h.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) h.edges[b] = lo + (hi - lo) * b / bins;
  h.counts.assign(bins, 0);
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    int b = static_cast<int>(std::floor((v[k] - lo) / (hi - lo) * bins));
    h.counts[std::clamp(b, 0, bins - 1)]++;
  }
  return h;
}

double bimodality_index(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() == 0) throw InvalidInput("bimodality_index: empty input");
  long hits = 0;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    const double x = v[k];
    if ((x >= 0.35 && x <= 0.65) || (x >= 2.0 && x <= 2.6)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidInput("median of empty sample");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double hi = v[mid];
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

}  // namespace ensmooth

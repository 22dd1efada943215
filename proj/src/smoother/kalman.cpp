#include <cmath>

#include "ensmooth/error.hpp"
#include "ensmooth/smoother.hpp"
#include "ensmooth/stats.hpp"

namespace ensmooth::smoother {

void MdaSchedule::validate() const {
  if (alphas.empty()) throw InvalidInput("MDA schedule needs at least one iteration");
  double sum = 0.0;
  for (double a : alphas) {
    if (!(a > 0.0) || !std::isfinite(a)) throw InvalidInput("MDA factors must be positive");
    sum += 1.0 / (a * a);
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw InvalidInput("MDA factors must satisfy sum(1/alpha^2) = 1");
}

MdaSchedule MdaSchedule::custom(std::vector<double> alphas) {
  MdaSchedule s{std::move(alphas)};
  s.validate();
  return s;
}

MdaSchedule mda_schedule(int n_iter) {
  if (n_iter < 1) throw InvalidInput("MDA schedule needs at least one iteration");
  MdaSchedule s{std::vector<double>(static_cast<std::size_t>(n_iter),
                                    std::sqrt(static_cast<double>(n_iter)))};
  s.validate();
  return s;
}

KalmanContext kalman_context(const Ensemble& e, const ObservationSet& obs) {
  e.validate();
  obs.validate();
  if (!e.outputs) throw InvalidInput("Kalman update needs simulated outputs");
  if (e.output_dim() != obs.size())
    throw InvalidInput("ensemble outputs and observations differ in length");
  if (e.members() < 2) throw InvalidInput("Kalman update needs at least 2 members");
  const double denom = static_cast<double>(e.members() - 1);
  const Eigen::MatrixXd m = e.params.colwise() - e.params.rowwise().mean();
  const Eigen::MatrixXd y = e.outputs->colwise() - e.outputs->rowwise().mean();
  KalmanContext k;
  k.c_my = m * y.transpose() / denom;
  k.c_yy = y * y.transpose() / denom;
  k.r = obs.noise_std.cwiseAbs2();
  return k;
}

ParamConstraints ParamConstraints::unbounded(Eigen::Index dim) {
  ParamConstraints c;
  c.bounds.resize(static_cast<std::size_t>(dim));
  return c;
}

void ParamConstraints::set(Eigen::Index index, std::optional<double> lower,
                           std::optional<double> upper) {
  if (index < 0 || static_cast<std::size_t>(index) >= bounds.size())
    throw InvalidInput("constraint index out of range");
  if (lower && upper && !(*lower < *upper))
    throw InvalidInput("lower bound must be below upper bound");
  bounds[static_cast<std::size_t>(index)] = {lower, upper};
}

void ParamConstraints::validate(Eigen::Index dim) const {
  if (bounds.empty()) return;
  if (static_cast<Eigen::Index>(bounds.size()) != dim)
    throw InvalidInput("constraint count does not match the parameter dimension");
  for (const Bound& b : bounds)
    if (b.lower && b.upper && !(*b.lower < *b.upper))
      throw InvalidInput("lower bound must be below upper bound");
}

void ParamConstraints::apply(Eigen::MatrixXd& params) const {
  validate(params.rows());
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    auto row = params.row(static_cast<Eigen::Index>(k));
    if (bounds[k].lower) row = row.cwiseMax(*bounds[k].lower);
    if (bounds[k].upper) row = row.cwiseMin(*bounds[k].upper);
  }
}

bool ParamConstraints::satisfied(const Eigen::MatrixXd& params) const {
  validate(params.rows());
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    auto row = params.row(static_cast<Eigen::Index>(k));
    if (bounds[k].lower && row.minCoeff() < *bounds[k].lower) return false;
    if (bounds[k].upper && row.maxCoeff() > *bounds[k].upper) return false;
  }
  return true;
}

Eigen::MatrixXd es_kalman_update(const Ensemble& e, const ObservationSet& obs,
                                 double alpha, const ParamConstraints& constraints,
                                 RngStream& rng) {
  const KalmanContext k = kalman_context(e, obs);
  constraints.validate(e.param_dim());
  Eigen::MatrixXd a = k.c_yy;
  a.diagonal() += alpha * alpha * k.r;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success)
    throw NumericError("C_YY + alpha^2 R is not positive definite");
  if (llt.rcond() < 1e-14)
    throw NumericError("C_YY + alpha^2 R is ill-conditioned");
  const Eigen::MatrixXd innovations =
      perturb_observations(obs, alpha, e.members(), rng) - *e.outputs;
  Eigen::MatrixXd updated = e.params + k.c_my * llt.solve(innovations);
  constraints.apply(updated);
  return updated;
}

}  // namespace ensmooth::smoother

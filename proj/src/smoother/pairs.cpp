#include "ensmooth/error.hpp"
#include "ensmooth/smoother.hpp"
#include "ensmooth/stats.hpp"

namespace ensmooth::smoother {

TrainingPairs generate_training_pairs(const Ensemble& e, const ObservationSet& obs,
                                      double alpha, RngStream& rng) {
  e.validate();
  obs.validate();
  if (!e.outputs) throw InvalidInput("pair generation needs simulated outputs");
  if (e.output_dim() != obs.size())
    throw InvalidInput("ensemble outputs and observations differ in length");
  if (!(alpha > 0.0)) throw InvalidInput("inflation factor must be positive");
  const Eigen::Index n = e.members();
  if (n < 2) throw InvalidInput("pair generation needs at least 2 members");
  const Eigen::Index count = n * (n - 1) / 2;
  TrainingPairs p{Eigen::MatrixXd(e.output_dim(), count),
                  Eigen::MatrixXd(e.param_dim(), count)};
  const Eigen::VectorXd scale = alpha * obs.noise_std;
  const Eigen::MatrixXd& y = *e.outputs;
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j, ++c) {
      p.inputs.col(c) = y.col(i) - y.col(j) +
                        scale.cwiseProduct(rng.normal_vector(e.output_dim()));
      p.outputs.col(c) = e.params.col(i) - e.params.col(j);
    }
  return p;
}

Eigen::MatrixXd es_dl_update(const Ensemble& e, const neural::Network& net,
                             const neural::Scaler& scaler, const ObservationSet& obs,
                             double alpha, const ParamConstraints& constraints,
                             RngStream& rng) {
  e.validate();
  if (!e.outputs) throw InvalidInput("DL update needs simulated outputs");
  if (e.output_dim() != obs.size())
    throw InvalidInput("ensemble outputs and observations differ in length");
  if (net.spec().input_dim != e.output_dim() || net.spec().output_dim != e.param_dim())
    throw InvalidInput("network dims do not match the ensemble");
  constraints.validate(e.param_dim());
  const Eigen::MatrixXd innovations =
      perturb_observations(obs, alpha, e.members(), rng) - *e.outputs;
  Eigen::MatrixXd updated = e.params + neural::predict_updates(net, scaler, innovations);
  constraints.apply(updated);
  return updated;
}

}  // namespace ensmooth::smoother

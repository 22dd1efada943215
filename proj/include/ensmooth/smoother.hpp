#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "ensmooth/neural.hpp"
#include "ensmooth/rng.hpp"
#include "ensmooth/types.hpp"

namespace ensmooth::smoother {

/// Inflation factors for multiple data assimilation. Valid schedules satisfy
/// sum(1 / alpha^2) = 1.
struct MdaSchedule {
  std::vector<double> alphas;

  int n_iter() const noexcept { return static_cast<int>(alphas.size()); }
  void validate() const;
  static MdaSchedule custom(std::vector<double> alphas);
};

/// Constant schedule alpha_t = sqrt(n_iter).
MdaSchedule mda_schedule(int n_iter);

struct KalmanContext {
  Eigen::MatrixXd c_my;
  Eigen::MatrixXd c_yy;
  Eigen::VectorXd r;  // diagonal of the observation-error covariance
};

KalmanContext kalman_context(const Ensemble& e, const ObservationSet& obs);

struct Bound {
  std::optional<double> lower;
  std::optional<double> upper;
};

/// Optional per-parameter box bounds. An empty bound list means unbounded.
struct ParamConstraints {
  std::vector<Bound> bounds;

  static ParamConstraints unbounded(Eigen::Index dim);
  void set(Eigen::Index index, std::optional<double> lower, std::optional<double> upper);
  void validate(Eigen::Index dim) const;
  void apply(Eigen::MatrixXd& params) const;
  bool satisfied(const Eigen::MatrixXd& params) const;
};

/// Perturbed-observation Kalman update of every member. Returns the new
/// parameter matrix.
Eigen::MatrixXd es_kalman_update(const Ensemble& e, const ObservationSet& obs,
                                 double alpha, const ParamConstraints& constraints,
                                 RngStream& rng);

struct TrainingPairs {
  Eigen::MatrixXd inputs;   // output differences plus noise
  Eigen::MatrixXd outputs;  // parameter differences
};

/// One column per unordered pair i < j, in lexicographic (i, j) order.
TrainingPairs generate_training_pairs(const Ensemble& e, const ObservationSet& obs,
                                      double alpha, RngStream& rng);

/// Update with a learned innovation-to-update mapping in place of the gain.
Eigen::MatrixXd es_dl_update(const Ensemble& e, const neural::Network& net,
                             const neural::Scaler& scaler, const ObservationSet& obs,
                             double alpha, const ParamConstraints& constraints,
                             RngStream& rng);

enum class Method { kalman, dl };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

/// Maps one member's parameters to its simulated outputs. Called
/// concurrently from worker threads, so it must not share mutable state.
using ForwardModel = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct AssimilationConfig {
  Method method = Method::kalman;
  MdaSchedule schedule = mda_schedule(1);
  ParamConstraints constraints;
  /// Input and output dims are filled in from the ensemble.
  neural::NetworkSpec network;
  neural::TrainConfig train;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Also run the forward model on the final posterior.
  bool evaluate_posterior = true;
  std::function<void(const Ensemble&)> on_snapshot;
  std::function<void(const std::string&)> on_log;
};

struct IterationRecord {
  int iteration = 0;
  double alpha = 0.0;
  double mean_misfit = 0.0;  // mean over members of the output RMSE
  int epochs = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct AssimilationResult {
  std::vector<Ensemble> history;  // prior first
  std::vector<neural::FitResult> networks;
  std::vector<IterationRecord> log;
};

/// Runs the forward model on every member (workers threads). A failing
/// member raises ForwardModelError naming the lowest failing index.
Eigen::MatrixXd evaluate_members(const Eigen::MatrixXd& params,
                                 const ForwardModel& forward, int workers);

AssimilationResult run_assimilation(Ensemble prior, const ObservationSet& obs,
                                    const ForwardModel& forward,
                                    const AssimilationConfig& cfg);

/// Mean over members of RMSE(outputs_i, observed values).
double mean_misfit(const Eigen::MatrixXd& outputs, const ObservationSet& obs);

}  // namespace ensmooth::smoother

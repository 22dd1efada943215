#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ensmooth/flow.hpp"
#include "ensmooth/kl.hpp"
#include "ensmooth/mps.hpp"
#include "ensmooth/neural.hpp"
#include "ensmooth/smoother.hpp"
#include "ensmooth/types.hpp"

namespace ensmooth::experiment {

/// Which forward model a run uses: a Gaussian log-conductivity field with an
/// unknown contaminant source, or a channelized two-facies field.
enum class Model { gaussian, channel };

/// Four independent seeds, so tests can vary one source of randomness while
/// holding the others fixed.
struct SeedBundle {
  std::uint64_t truth = 1;
  std::uint64_t prior = 2;
  std::uint64_t noise = 3;
  std::uint64_t training = 4;

  static SeedBundle from_index(std::uint64_t n);
};

struct GaussianCase {
  param::CovarianceSpec covariance{1.0, 10.0, 5.0, 2.0};
  int n_kl = 100;
  double head_left = 12.0;
  double head_right = 11.0;
  double porosity = 0.25;
  double alpha_l = 0.3;
  double alpha_t = 0.03;
  double transport_dt = 0.05;
  std::vector<double> well_x{4.0, 7.0, 10.0, 13.0, 16.0};
  std::vector<double> well_y{2.5, 5.0, 7.5};
  std::vector<double> obs_times{4, 5, 6, 7, 8, 9, 10, 11, 12};
  double noise_head = 0.005;
  double noise_conc = 0.005;
  double release_start = 1.0;
  double release_interval = 1.0;
  /// x_s, y_s, S_1..S_6
  std::vector<double> source_truth{3.52, 4.44, 5.69, 7.88, 6.31, 1.49, 6.87, 5.55};
  std::vector<double> source_lower{3, 4, 0, 0, 0, 0, 0, 0};
  std::vector<double> source_upper{5, 6, 8, 8, 8, 8, 8, 8};
};

struct ChannelCase {
  double head_left = 202.0;
  double head_right = 198.0;
  double initial_head = 198.0;
  double specific_storage = 1e-4;
  double well_rate = 150.0;
  std::vector<int> injection_node{12, 20};  // (i, j)
  std::vector<int> pumping_node{28, 20};
  std::vector<int> obs_nodes{5, 10, 15, 20, 25, 30, 35};  // lattice in i and j
  double obs_interval = 0.6;
  int obs_count = 10;
  double flow_dt = 0.1;
  double noise_std = 0.01;
  double k_low = 0.5;
  double k_high = 2.3;
  int ti_size = 250;
  std::uint64_t ti_seed = 11;
  param::ChannelOptions channels;
  param::DsParams ds;
};

struct NetworkConfig {
  std::vector<int> widths;
  int preserving_per_stage = 1;
  neural::OutputActivation output_activation = neural::OutputActivation::linear;
  bool batchnorm = true;
  neural::TrainConfig train;
};

struct ExperimentConfig {
  std::string preset = "gaussian_case1";
  Model model = Model::gaussian;
  smoother::Method method = smoother::Method::kalman;
  int nx = 81;
  int ny = 41;
  double lx = 20.0;
  double ly = 10.0;
  int ensemble_size = 500;
  int n_iter = 5;
  /// Inflation factors; empty selects the constant sqrt(n_iter) schedule.
  std::vector<double> mda_alphas;
  SeedBundle seeds;
  flow::SolverOptions solver;
  GaussianCase gaussian;
  ChannelCase channel;
  NetworkConfig network;
  int workers = 1;
  std::filesystem::path out_dir = "run";

  void validate() const;
};

/// Known preset names: gaussian_case1, gaussian_case1_desk, channel_case2,
/// channel_case2_desk, custom. "custom" starts from the gaussian_case1
/// constants and expects the config file to set whatever differs.
std::vector<std::string> preset_names();
ExperimentConfig preset_config(const std::string& name);

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Applies `overrides` on top of `base`. Keys that `base` does not have are
/// rejected with InvalidInput, at any nesting depth.
ExperimentConfig apply_overrides(const ExperimentConfig& base,
                                 const nlohmann::json& overrides);
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Everything a run needs: truth, data, prior, forward model and the map
/// from a member's parameters to its conductivity-type field.
struct CaseSetup {
  Grid2D grid;
  ObservationSet observations;
  Ensemble prior;
  smoother::ForwardModel forward;
  smoother::ParamConstraints constraints;
  Eigen::VectorXd truth_params;
  ScalarField truth_field;
  /// Leading parameters that describe the field (KL coefficients or nodes).
  Eigen::Index field_params = 0;
  std::vector<std::string> source_names;  // trailing parameters, if any
  std::function<ScalarField(const Eigen::VectorXd&)> field_of;
  std::shared_ptr<const param::KLBasis> basis;  // gaussian model only
  std::shared_ptr<const param::TrainingImage> training_image;  // channel only
};

CaseSetup build_case1(const ExperimentConfig& cfg);
CaseSetup build_case2(const ExperimentConfig& cfg);
CaseSetup build_case(const ExperimentConfig& cfg);

/// Forward model for one set of source parameters and a log-conductivity
/// field; exposed for standalone use.
Eigen::VectorXd gaussian_forward(const ExperimentConfig& cfg, const ScalarField& log_k,
                                 const Eigen::Ref<const Eigen::VectorXd>& source);
Eigen::VectorXd channel_forward(const ExperimentConfig& cfg, const ScalarField& k);

/// Forward model alone, without drawing truth or prior.
smoother::ForwardModel make_forward(const ExperimentConfig& cfg);

smoother::AssimilationConfig assimilation_config(const ExperimentConfig& cfg,
                                                 const CaseSetup& setup);

/// build -> assimilate -> metrics. Writes every artifact under cfg.out_dir;
/// on failure leaves a FAILED marker and rethrows.
void run(const ExperimentConfig& cfg, std::ostream* log = nullptr);

struct Summary {
  std::vector<std::pair<std::string, std::string>> rows;
  std::string value(const std::string& key) const;
  double number(const std::string& key) const;
};

/// Recomputes every derived artifact and the summary from the snapshots in a
/// run directory. Returns the summary it wrote.
Summary metrics(const std::filesystem::path& run_dir);
Summary read_summary(const std::filesystem::path& path);

}  // namespace ensmooth::experiment

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ensmooth/rng.hpp"
#include "ensmooth/types.hpp"

namespace ensmooth {

struct EnsembleStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

/// Per-parameter mean and unbiased (N_e - 1) standard deviation.
EnsembleStats ensemble_stats(const Ensemble& e);
EnsembleStats column_stats(const Eigen::MatrixXd& members);

/// Columns y + alpha * eps_i, eps_i ~ N(0, diag(noise_std^2)).
Eigen::MatrixXd perturb_observations(const ObservationSet& obs, double alpha,
                                     Eigen::Index n, RngStream& rng);

double rmse(const Eigen::Ref<const Eigen::VectorXd>& a,
            const Eigen::Ref<const Eigen::VectorXd>& b);
double rmse(const ScalarField& a, const ScalarField& b);

/// Root-mean-square relative error; truth must have no zero entries.
double rmsre(const Eigen::Ref<const Eigen::VectorXd>& est,
             const Eigen::Ref<const Eigen::VectorXd>& truth);

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<long> counts;
};

/// Equal-width bins over [lo, hi]; values outside are clamped into the end
/// bins so counts always sum to the sample size.
Histogram histogram(const Eigen::Ref<const Eigen::VectorXd>& v, double lo,
                    double hi, int bins);

/// Fraction of entries inside [0.35, 0.65] or [2.0, 2.6], i.e. near one of
/// the two channel-facies conductivities.
double bimodality_index(const Eigen::Ref<const Eigen::VectorXd>& v);

double median(std::vector<double> v);

}  // namespace ensmooth

#pragma once

#include <Eigen/Dense>
#include <filesystem>

#include "ensmooth/types.hpp"

namespace ensmooth::param {

/// Separable exponential covariance
///   C(p1, p2) = variance * exp(-|x1 - x2| / corr_x - |y1 - y2| / corr_y).
struct CovarianceSpec {
  double variance = 1.0;
  double corr_x = 1.0;
  double corr_y = 1.0;
  double mean = 0.0;

  void validate() const;
  double operator()(double x1, double y1, double x2, double y2) const noexcept;
};

/// Truncated Karhunen-Loeve basis on a grid. Eigenfields are orthonormal under
/// the cell-area-weighted inner product.
struct KLBasis {
  Grid2D grid;
  Eigen::VectorXd eigenvalues;  // descending, >= 0
  Eigen::MatrixXd eigenfields;  // nodes x terms, column n is s_n
  double mean = 0.0;
  double captured_fraction = 0.0;

  int terms() const noexcept { return static_cast<int>(eigenvalues.size()); }
  ScalarField eigenfield(int n) const;
  /// Gram matrix S^T W S (identity up to round-off).
  Eigen::MatrixXd gram() const;
  /// Columns sqrt(tau_n) * s_n, so realize(xi) = mean + modes() * xi.
  Eigen::MatrixXd modes() const;
};

KLBasis build_kl_basis(const CovarianceSpec& spec, const Grid2D& grid, int n_kl);

/// mean + sum_n sqrt(tau_n) s_n xi_n
ScalarField kl_realize(const KLBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& xi);

void save_kl_basis(const KLBasis& basis, const std::filesystem::path& base);
KLBasis load_kl_basis(const std::filesystem::path& base);

}  // namespace ensmooth::param

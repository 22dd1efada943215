#pragma once

#include <Eigen/Dense>

#include "ensmooth/types.hpp"

namespace ensmooth {

/// Volumetric water fluxes (per unit aquifer thickness) across the faces of
/// the node control volumes. qx(i, j) is the flow from node (i, j) to
/// (i + 1, j); qy(i, j) from (i, j) to (i, j + 1). `outflow` is the rate at
/// which water leaves the domain at each node (through a fixed-head boundary
/// or a pumping well); negative entries are inflow.
struct FaceFluxes {
  Eigen::MatrixXd qx;  // (nx - 1) x ny
  Eigen::MatrixXd qy;  // nx x (ny - 1)
  Eigen::VectorXd outflow;
};

}  // namespace ensmooth

#include "ensmooth/types.hpp"

#include <cmath>

#include "ensmooth/error.hpp"

namespace ensmooth {

Grid2D::Grid2D(int nx, int ny, double lx, double ly)
    : nx_(nx), ny_(ny), lx_(lx), ly_(ly) {
  if (nx < 2 || ny < 2) throw InvalidInput("grid needs at least 2x2 nodes");
  if (!(lx > 0.0) || !(ly > 0.0) || !std::isfinite(lx) || !std::isfinite(ly))
    throw InvalidInput("grid extents must be positive and finite");
}

double Grid2D::width(int i) const noexcept {
  return (i == 0 || i == nx_ - 1) ? 0.5 * dx() : dx();
}

double Grid2D::height(int j) const noexcept {
  return (j == 0 || j == ny_ - 1) ? 0.5 * dy() : dy();
}

bool Grid2D::contains(double x, double y) const noexcept {
  return x >= 0.0 && x <= lx_ && y >= 0.0 && y <= ly_;
}

int Grid2D::nearest_node(double x, double y) const {
  if (!contains(x, y)) throw InvalidInput("location outside the grid");
  const int i = static_cast<int>(std::lround(x / dx()));
  const int j = static_cast<int>(std::lround(y / dy()));
  return index(std::min(i, nx_ - 1), std::min(j, ny_ - 1));
}

ScalarField::ScalarField(Grid2D grid, Eigen::VectorXd values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size())
    throw InvalidInput("field length does not match grid node count");
  if (!values_.allFinite()) throw InvalidInput("field holds non-finite values");
}

ScalarField ScalarField::constant(const Grid2D& grid, double value) {
  return ScalarField(grid, Eigen::VectorXd::Constant(grid.size(), value));
}

void Ensemble::validate() const {
  if (params.cols() < 2) throw InvalidInput("ensemble needs at least 2 members");
  if (params.hasNaN()) throw InvalidInput("ensemble parameters contain NaN");
  if (outputs) {
    if (outputs->cols() != params.cols())
      throw InvalidInput("ensemble outputs/params member counts differ");
    if (outputs->hasNaN()) throw InvalidInput("ensemble outputs contain NaN");
  }
}

std::string to_string(ObsKind kind) {
  return kind == ObsKind::head ? "head" : "concentration";
}

ObsKind obs_kind_from_string(const std::string& s) {
  if (s == "head") return ObsKind::head;
  if (s == "concentration") return ObsKind::concentration;
  throw InvalidInput("unknown observation kind: " + s);
}

void ObservationSet::validate() const {
  if (values.size() != noise_std.size())
    throw InvalidInput("observation values/noise lengths differ");
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != values.size())
    throw InvalidInput("observation labels length differs from values");
  if ((noise_std.array() <= 0.0).any())
    throw InvalidInput("observation noise std must be positive");
  if (!values.allFinite()) throw InvalidInput("observations are not finite");
}

}  // namespace ensmooth

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace ensmooth {

/// Node-centred 2D grid. Nodes sit on the domain boundary, so the spacing is
/// extent / (count - 1). Node (i, j) has flat index j * nx + i (rows run
/// along x, one row per y level).
class Grid2D {
 public:
  Grid2D(int nx, int ny, double lx, double ly);

  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  double lx() const noexcept { return lx_; }
  double ly() const noexcept { return ly_; }
  double dx() const noexcept { return lx_ / (nx_ - 1); }
  double dy() const noexcept { return ly_ / (ny_ - 1); }
  int size() const noexcept { return nx_ * ny_; }

  int index(int i, int j) const noexcept { return j * nx_ + i; }
  int col(int node) const noexcept { return node % nx_; }
  int row(int node) const noexcept { return node / nx_; }
  double x(int i) const noexcept { return i * dx(); }
  double y(int j) const noexcept { return j * dy(); }

  /// Width of the control volume around column i (half cells at the edges).
  double width(int i) const noexcept;
  double height(int j) const noexcept;
  double cell_area(int node) const noexcept {
    return width(col(node)) * height(row(node));
  }

  /// Nearest node to a physical location; throws InvalidInput outside.
  int nearest_node(double x, double y) const;
  bool contains(double x, double y) const noexcept;

  bool operator==(const Grid2D&) const = default;

 private:
  int nx_;
  int ny_;
  double lx_;
  double ly_;
};

class ScalarField {
 public:
  ScalarField(Grid2D grid, Eigen::VectorXd values);
  static ScalarField constant(const Grid2D& grid, double value);

  const Grid2D& grid() const noexcept { return grid_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  Eigen::VectorXd& values() noexcept { return values_; }
  double operator()(int i, int j) const { return values_[grid_.index(i, j)]; }
  double operator[](int node) const { return values_[node]; }

 private:
  Grid2D grid_;
  Eigen::VectorXd values_;
};

/// Parameter matrix (one member per column) paired with optional simulated
/// outputs for the same members.
struct Ensemble {
  Eigen::MatrixXd params;
  std::optional<Eigen::MatrixXd> outputs;
  int iteration = 0;

  Eigen::Index members() const noexcept { return params.cols(); }
  Eigen::Index param_dim() const noexcept { return params.rows(); }
  Eigen::Index output_dim() const noexcept {
    return outputs ? outputs->rows() : 0;
  }

  /// Throws InvalidInput if the invariants do not hold.
  void validate() const;
};

enum class ObsKind { head, concentration };

std::string to_string(ObsKind kind);
ObsKind obs_kind_from_string(const std::string& s);

struct ObsLabel {
  ObsKind kind = ObsKind::head;
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
};

/// Measured data with independent Gaussian noise (diagonal R).
struct ObservationSet {
  Eigen::VectorXd values;
  Eigen::VectorXd noise_std;
  std::vector<ObsLabel> labels;

  Eigen::Index size() const noexcept { return values.size(); }
  void validate() const;
};

}  // namespace ensmooth

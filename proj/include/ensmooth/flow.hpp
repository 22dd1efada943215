#pragma once

#include <optional>
#include <vector>

#include "ensmooth/fluxes.hpp"
#include "ensmooth/types.hpp"

namespace ensmooth::flow {

/// Point source/sink assigned wholly to one node. Positive rate injects.
struct Well {
  int node = 0;
  double rate = 0.0;
};

/// Fixed heads on the left (x = 0) and right (x = lx) edges. Missing sides and
/// the top/bottom edges are no-flux.
struct FixedHeads {
  std::optional<double> left;
  std::optional<double> right;
};

struct SolverOptions {
  double tolerance = 1e-10;
  /// 0 selects 10 * node count.
  int max_iterations = 0;
};

struct FlowProblem {
  Grid2D grid;
  ScalarField conductivity;
  FixedHeads boundary;
  std::vector<Well> wells;
  double specific_storage = 0.0;
  std::optional<ScalarField> initial_head;
  SolverOptions solver;

  void validate() const;
  bool is_fixed(int node) const noexcept;
  double fixed_value(int node) const;
};

struct HeadSolution {
  std::vector<double> times;
  std::vector<ScalarField> heads;

  bool transient() const noexcept { return heads.size() > 1 || !times.empty(); }
  const ScalarField& steady() const;
  const ScalarField& at(std::size_t step) const { return heads.at(step); }
};

/// Harmonic-mean conductance between two nodes for a face of the given length
/// and node separation.
double conductance(double k1, double k2, double face_length, double distance);

HeadSolution solve_steady_flow(const FlowProblem& p);

/// Backward-Euler stepping from the initial head; records the head at t = 0
/// and after every step. t_end is rounded to a whole number of steps.
HeadSolution solve_transient_flow(const FlowProblem& p, double t_end, double dt);

struct VelocityField {
  ScalarField vx;
  ScalarField vy;
};

/// Node pore velocity v = -(K / porosity) grad h, central differences in the
/// interior and one-sided at the edges.
VelocityField darcy_velocity(const ScalarField& head, const FlowProblem& p,
                             double porosity);
VelocityField darcy_velocity(const HeadSolution& h, const FlowProblem& p,
                             double porosity);

/// Discrete face fluxes consistent with the flow discretization.
FaceFluxes face_fluxes(const ScalarField& head, const FlowProblem& p);

struct FlowBudget {
  double boundary_inflow = 0.0;
  double well_total = 0.0;
  /// |boundary_inflow + well_total| / sum |well rates| (or absolute when no
  /// wells are present).
  double relative_imbalance = 0.0;
};

FlowBudget steady_budget(const ScalarField& head, const FlowProblem& p);

}  // namespace ensmooth::flow

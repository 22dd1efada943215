#pragma once

#include <optional>
#include <vector>

#include "ensmooth/fluxes.hpp"
#include "ensmooth/types.hpp"

namespace ensmooth::transport {

struct DispersionTensorField {
  ScalarField d11;
  ScalarField d22;
  ScalarField d12;
};

/// Hydrodynamic dispersion from node velocities. Zero where |v| = 0.
DispersionTensorField dispersion_tensor(const ScalarField& vx,
                                        const ScalarField& vy, double alpha_l,
                                        double alpha_t);

/// Point mass source with a stepwise loading history: rates[k] (mass per
/// time) is active on [start + k * interval, start + (k + 1) * interval).
struct PointSource {
  double x = 0.0;
  double y = 0.0;
  std::vector<double> rates;
  double start = 1.0;
  double interval = 1.0;

  double rate_at(double t) const noexcept;
};

struct TransportProblem {
  Grid2D grid;
  double porosity = 0.25;
  double alpha_l = 0.0;
  double alpha_t = 0.0;
  ScalarField vx;
  ScalarField vy;
  /// Advective fluxes. When absent they are built from (vx, vy) with the left
  /// and right edges open to outflow.
  std::optional<FaceFluxes> fluxes;
  PointSource source;
  ScalarField initial;
  std::vector<double> output_times;
  double dt = 0.05;

  void validate() const;
};

/// Mass accounting for one time step (unit aquifer thickness).
struct StepBudget {
  double mass_before = 0.0;
  double mass_after = 0.0;
  double source_mass = 0.0;
  double outflow_mass = 0.0;

  double relative_error() const noexcept;
};

struct TransportResult {
  std::vector<ScalarField> concentrations;  // one per output time
  std::vector<StepBudget> budget;           // one per step
  double min_concentration = 0.0;           // over every step
};

/// Face fluxes theta * v averaged onto faces; left/right edges may be open.
FaceFluxes fluxes_from_velocity(const ScalarField& vx, const ScalarField& vy,
                                double porosity, bool open_left = true,
                                bool open_right = true);

/// Concentrations at the requested output times.
std::vector<ScalarField> solve_transport(const TransportProblem& p);
TransportResult solve_transport_detailed(const TransportProblem& p);

/// Dissolved mass sum(theta * area * C).
double dissolved_mass(const ScalarField& c, double porosity);

}  // namespace ensmooth::transport

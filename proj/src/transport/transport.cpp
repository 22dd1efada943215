#include "ensmooth/transport.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>

#include "ensmooth/error.hpp"

namespace ensmooth::transport {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

long step_index(double t, double dt) {
  const double r = t / dt;
  const long n = std::lround(r);
  if (std::abs(r - static_cast<double>(n)) > 1e-9 * std::max(1.0, r))
    throw InvalidInput("output time is not a multiple of the transport step");
  return n;
}

// Bilinear split of a point over the four nodes of its containing cell.
std::vector<std::pair<int, double>> source_weights(const Grid2D& g, double x,
                                                   double y) {
  const double fx_raw = x / g.dx(), fy_raw = y / g.dy();
  const int i0 = std::clamp(static_cast<int>(std::floor(fx_raw)), 0, g.nx() - 2);
  const int j0 = std::clamp(static_cast<int>(std::floor(fy_raw)), 0, g.ny() - 2);
  const double fx = fx_raw - i0, fy = fy_raw - j0;
  return {{g.index(i0, j0), (1 - fx) * (1 - fy)},
          {g.index(i0 + 1, j0), fx * (1 - fy)},
          {g.index(i0, j0 + 1), (1 - fx) * fy},
          {g.index(i0 + 1, j0 + 1), fx * fy}};
}

}  // namespace

DispersionTensorField dispersion_tensor(const ScalarField& vx,
                                        const ScalarField& vy, double alpha_l,
                                        double alpha_t) {
  if (alpha_l < 0.0 || alpha_t < 0.0)
    throw InvalidInput("dispersivities must be nonnegative");
  if (!(vx.grid() == vy.grid())) throw InvalidInput("velocity grids differ");
  const auto n = vx.values().size();
  Eigen::VectorXd d11(n), d22(n), d12(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double v1 = vx[k], v2 = vy[k];
    const double speed = std::hypot(v1, v2);
    if (speed == 0.0) {
      d11[k] = d22[k] = d12[k] = 0.0;
      continue;
    }
    d11[k] = (alpha_l * v1 * v1 + alpha_t * v2 * v2) / speed;
    d22[k] = (alpha_l * v2 * v2 + alpha_t * v1 * v1) / speed;
    d12[k] = (alpha_l - alpha_t) * v1 * v2 / speed;
  }
  return {ScalarField(vx.grid(), d11), ScalarField(vx.grid(), d22),
          ScalarField(vx.grid(), d12)};
}

double PointSource::rate_at(double t) const noexcept {
  const double k = std::floor((t - start) / interval);
  if (k < 0.0 || k >= static_cast<double>(rates.size())) return 0.0;
  return rates[static_cast<std::size_t>(k)];
}

void TransportProblem::validate() const {
  if (!(porosity > 0.0 && porosity < 1.0))
    throw InvalidInput("porosity must lie in (0, 1)");
  if (alpha_t < 0.0 || alpha_l < alpha_t)
    throw InvalidInput("dispersivities must satisfy alpha_L >= alpha_T >= 0");
  if (!(vx.grid() == grid) || !(vy.grid() == grid) || !(initial.grid() == grid))
    throw InvalidInput("transport fields are on a different grid");
  if (!grid.contains(source.x, source.y))
    throw InvalidInput("source lies outside the domain");
  for (double r : source.rates)
    if (!(r >= 0.0)) throw InvalidInput("source rates must be nonnegative");
  if (!(source.interval > 0.0)) throw InvalidInput("source interval must be positive");
  if (!(dt > 0.0)) throw InvalidInput("transport step must be positive");
  for (std::size_t k = 0; k < output_times.size(); ++k) {
    if (output_times[k] < 0.0) throw InvalidInput("negative output time");
    if (k > 0 && !(output_times[k] > output_times[k - 1]))
      throw InvalidInput("output times must be strictly increasing");
  }
  if ((initial.values().array() < 0.0).any())
    throw InvalidInput("initial concentration must be nonnegative");
  if (fluxes) {
    if (fluxes->qx.rows() != grid.nx() - 1 || fluxes->qx.cols() != grid.ny() ||
        fluxes->qy.rows() != grid.nx() || fluxes->qy.cols() != grid.ny() - 1 ||
        fluxes->outflow.size() != grid.size())
      throw InvalidInput("face flux shapes do not match the grid");
  }
}

double StepBudget::relative_error() const noexcept {
  const double expected = source_mass - outflow_mass;
  const double actual = mass_after - mass_before;
  const double scale =
      std::max({std::abs(mass_after), std::abs(mass_before), std::abs(source_mass),
                std::abs(outflow_mass)});
  return scale > 0.0 ? std::abs(actual - expected) / scale : 0.0;
}

FaceFluxes fluxes_from_velocity(const ScalarField& vx, const ScalarField& vy,
                                double porosity, bool open_left, bool open_right) {
  const Grid2D& g = vx.grid();
  FaceFluxes f;
  f.qx.resize(g.nx() - 1, g.ny());
  f.qy.resize(g.nx(), g.ny() - 1);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i + 1 < g.nx(); ++i)
      f.qx(i, j) = porosity * 0.5 * (vx[g.index(i, j)] + vx[g.index(i + 1, j)]) *
                   g.height(j);
  for (int j = 0; j + 1 < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      f.qy(i, j) = porosity * 0.5 * (vy[g.index(i, j)] + vy[g.index(i, j + 1)]) *
                   g.width(i);
  f.outflow = Eigen::VectorXd::Zero(g.size());
  for (int j = 0; j < g.ny(); ++j) {
    if (open_left)
      f.outflow[g.index(0, j)] = -porosity * vx[g.index(0, j)] * g.height(j);
    if (open_right) {
      const int n = g.index(g.nx() - 1, j);
      f.outflow[n] = porosity * vx[n] * g.height(j);
    }
  }
  return f;
}

double dissolved_mass(const ScalarField& c, double porosity) {
  const Grid2D& g = c.grid();
  double m = 0.0;
  for (int n = 0; n < g.size(); ++n) m += porosity * g.cell_area(n) * c[n];
  return m;
}

TransportResult solve_transport_detailed(const TransportProblem& p) {
  p.validate();
  const Grid2D& g = p.grid;
  const int nn = g.size();
  const FaceFluxes f =
      p.fluxes ? *p.fluxes : fluxes_from_velocity(p.vx, p.vy, p.porosity);
  // Cross-dispersion (D12) is not represented: the five-point stencil keeps
  // the implicit operator an M-matrix, which is what makes C >= 0.
  const DispersionTensorField d =
      dispersion_tensor(p.vx, p.vy, p.alpha_l, p.alpha_t);

  Eigen::VectorXd storage(nn);
  for (int n = 0; n < nn; ++n) storage[n] = p.porosity * g.cell_area(n) / p.dt;

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(7 * nn);
  Eigen::VectorXd diag = storage;
  auto advect = [&](int a, int b, double q) {
    // q > 0 carries C_a from a to b.
    if (q > 0.0) {
      diag[a] += q;
      trip.emplace_back(b, a, -q);
    } else if (q < 0.0) {
      diag[b] -= q;
      trip.emplace_back(a, b, q);
    }
  };
  auto disperse = [&](int a, int b, double c) {
    diag[a] += c;
    diag[b] += c;
    trip.emplace_back(a, b, -c);
    trip.emplace_back(b, a, -c);
  };
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i + 1 < g.nx(); ++i) {
      const int a = g.index(i, j), b = g.index(i + 1, j);
      advect(a, b, f.qx(i, j));
      disperse(a, b,
               p.porosity * 0.5 * (d.d11[a] + d.d11[b]) * g.height(j) / g.dx());
    }
  for (int j = 0; j + 1 < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const int a = g.index(i, j), b = g.index(i, j + 1);
      advect(a, b, f.qy(i, j));
      disperse(a, b,
               p.porosity * 0.5 * (d.d22[a] + d.d22[b]) * g.width(i) / g.dy());
    }
  for (int n = 0; n < nn; ++n)
    if (f.outflow[n] > 0.0) diag[n] += f.outflow[n];
  for (int n = 0; n < nn; ++n) trip.emplace_back(n, n, diag[n]);

  SpMat a(nn, nn);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success)
    throw NumericError("transport: sparse LU factorization failed");

  std::vector<long> out_steps;
  for (double t : p.output_times) out_steps.push_back(step_index(t, p.dt));
  const long steps = out_steps.empty() ? 0 : out_steps.back();
  const auto weights = source_weights(g, p.source.x, p.source.y);

  TransportResult r;
  r.budget.reserve(steps);
  Eigen::VectorXd c = p.initial.values();
  r.min_concentration = c.size() ? c.minCoeff() : 0.0;
  std::size_t next_out = 0;
  auto emit = [&](long n) {
    while (next_out < out_steps.size() && out_steps[next_out] == n) {
      r.concentrations.emplace_back(g, c);
      ++next_out;
    }
  };
  emit(0);
  Eigen::VectorXd rhs(nn);
  double mass = dissolved_mass(ScalarField(g, c), p.porosity);
  for (long n = 0; n < steps; ++n) {
    const double rate = p.source.rate_at((static_cast<double>(n) + 0.5) * p.dt);
    rhs = storage.cwiseProduct(c);
    for (const auto& [node, w] : weights) rhs[node] += rate * w;
    c = lu.solve(rhs);
    StepBudget b;
    b.mass_before = mass;
    mass = 0.0;
    for (int k = 0; k < nn; ++k) mass += p.porosity * g.cell_area(k) * c[k];
    b.mass_after = mass;
    b.source_mass = rate * p.dt;
    for (int k = 0; k < nn; ++k)
      if (f.outflow[k] > 0.0) b.outflow_mass += f.outflow[k] * c[k] * p.dt;
    r.budget.push_back(b);
    r.min_concentration = std::min(r.min_concentration, c.minCoeff());
    emit(n + 1);
  }
  return r;
}

std::vector<ScalarField> solve_transport(const TransportProblem& p) {
  return solve_transport_detailed(p).concentrations;
}

}  // namespace ensmooth::transport

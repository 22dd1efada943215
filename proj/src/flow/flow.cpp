#include "ensmooth/flow.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <cmath>
#include <string>

#include "ensmooth/error.hpp"

namespace ensmooth::flow {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

struct Link {
  int a;
  int b;
  double t;
};

// Every interior face of the control-volume mesh with its conductance.
std::vector<Link> links(const FlowProblem& p) {
  const auto& g = p.grid;
  const auto& k = p.conductivity.values();
  std::vector<Link> out;
  out.reserve(2 * g.size());
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i + 1 < g.nx(); ++i) {
      const int a = g.index(i, j), b = g.index(i + 1, j);
      out.push_back({a, b, conductance(k[a], k[b], g.height(j), g.dx())});
    }
  for (int j = 0; j + 1 < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const int a = g.index(i, j), b = g.index(i, j + 1);
      out.push_back({a, b, conductance(k[a], k[b], g.width(i), g.dy())});
    }
  return out;
}

// Linear system over the free (non-fixed) nodes:
//   (storage_i + sum_j T_ij) h_i - sum_{j free} T_ij h_j = rhs_i
struct System {
  std::vector<int> free_index;  // node -> row, or -1 when fixed
  std::vector<int> free_nodes;
  SpMat a;
  Eigen::VectorXd rhs;  // fixed-head and well contributions
};

System assemble(const FlowProblem& p, double storage_over_dt) {
  const auto& g = p.grid;
  System s;
  s.free_index.assign(g.size(), -1);
  for (int n = 0; n < g.size(); ++n)
    if (!p.is_fixed(n)) {
      s.free_index[n] = static_cast<int>(s.free_nodes.size());
      s.free_nodes.push_back(n);
    }
  const int nf = static_cast<int>(s.free_nodes.size());
  s.rhs = Eigen::VectorXd::Zero(nf);
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(nf);
  for (int r = 0; r < nf; ++r)
    diag[r] = storage_over_dt * g.cell_area(s.free_nodes[r]);
  for (const Link& l : links(p)) {
    const int ra = s.free_index[l.a], rb = s.free_index[l.b];
    if (ra >= 0) diag[ra] += l.t;
    if (rb >= 0) diag[rb] += l.t;
    if (ra >= 0 && rb >= 0) {
      trip.emplace_back(ra, rb, -l.t);
      trip.emplace_back(rb, ra, -l.t);
    } else if (ra >= 0) {
      s.rhs[ra] += l.t * p.fixed_value(l.b);
    } else if (rb >= 0) {
      s.rhs[rb] += l.t * p.fixed_value(l.a);
    }
  }
  for (int r = 0; r < nf; ++r) trip.emplace_back(r, r, diag[r]);
  for (const Well& w : p.wells)
    if (s.free_index[w.node] >= 0) s.rhs[s.free_index[w.node]] += w.rate;
  s.a.resize(nf, nf);
  s.a.setFromTriplets(trip.begin(), trip.end());
  s.a.makeCompressed();
  return s;
}

class SpdSolver {
 public:
  SpdSolver(const SpMat& a, const SolverOptions& opt) {
    cg_.setTolerance(opt.tolerance);
    cg_.setMaxIterations(opt.max_iterations > 0 ? opt.max_iterations
                                                : 10 * static_cast<int>(a.rows()));
    cg_.compute(a);
    if (cg_.info() != Eigen::Success)
      throw NumericError("flow: preconditioner setup failed");
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b, const Eigen::VectorXd& guess) {
    Eigen::VectorXd x = cg_.solveWithGuess(b, guess);
    if (cg_.info() != Eigen::Success)
      throw NumericError("flow: conjugate gradient did not converge after " +
                         std::to_string(cg_.iterations()) +
                         " iterations, relative residual " +
                         std::to_string(cg_.error()));
    return x;
  }

 private:
  Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper,
                           Eigen::IncompleteCholesky<double>>
      cg_;
};

Eigen::VectorXd scatter(const FlowProblem& p, const System& s,
                        const Eigen::VectorXd& free_values) {
  Eigen::VectorXd h(p.grid.size());
  for (int n = 0; n < p.grid.size(); ++n)
    h[n] = s.free_index[n] >= 0 ? free_values[s.free_index[n]] : p.fixed_value(n);
  return h;
}

}  // namespace

void FlowProblem::validate() const {
  if (!(conductivity.grid() == grid))
    throw InvalidInput("conductivity field is on a different grid");
  if ((conductivity.values().array() <= 0.0).any())
    throw InvalidInput("conductivity must be positive everywhere");
  for (const auto& side : {boundary.left, boundary.right})
    if (side && !std::isfinite(*side)) throw InvalidInput("fixed head is not finite");
  for (const Well& w : wells) {
    if (w.node < 0 || w.node >= grid.size())
      throw InvalidInput("well node outside the grid");
    if (!std::isfinite(w.rate)) throw InvalidInput("well rate is not finite");
  }
  if (initial_head && !(initial_head->grid() == grid))
    throw InvalidInput("initial head is on a different grid");
}

bool FlowProblem::is_fixed(int node) const noexcept {
  const int i = grid.col(node);
  return (i == 0 && boundary.left) || (i == grid.nx() - 1 && boundary.right);
}

double FlowProblem::fixed_value(int node) const {
  const int i = grid.col(node);
  if (i == 0 && boundary.left) return *boundary.left;
  if (i == grid.nx() - 1 && boundary.right) return *boundary.right;
  throw InvalidInput("node is not a fixed-head node");
}

const ScalarField& HeadSolution::steady() const {
  if (heads.empty()) throw InvalidInput("empty head solution");
  return heads.back();
}

double conductance(double k1, double k2, double face_length, double distance) {
  return 2.0 * k1 * k2 / (k1 + k2) * face_length / distance;
}

HeadSolution solve_steady_flow(const FlowProblem& p) {
  p.validate();
  if (!p.boundary.left && !p.boundary.right)
    throw SetupError("steady flow needs at least one fixed-head boundary");
  System s = assemble(p, 0.0);
  SpdSolver solver(s.a, p.solver);
  // Start from the mean fixed head; the homogeneous part converges fastest.
  const double h0 = 0.5 * (p.boundary.left.value_or(*p.boundary.right) +
                           p.boundary.right.value_or(*p.boundary.left));
  Eigen::VectorXd x =
      solver.solve(s.rhs, Eigen::VectorXd::Constant(s.rhs.size(), h0));
  HeadSolution out;
  out.heads.emplace_back(p.grid, scatter(p, s, x));
  return out;
}

HeadSolution solve_transient_flow(const FlowProblem& p, double t_end, double dt) {
  p.validate();
  if (!(dt > 0.0)) throw InvalidInput("time step must be positive");
  if (!(t_end > 0.0)) throw InvalidInput("horizon must be positive");
  if (!(p.specific_storage > 0.0))
    throw InvalidInput("transient flow needs positive specific storage");
  if (!p.initial_head) throw InvalidInput("transient flow needs an initial head");

  const double storage = p.specific_storage / dt;
  System s = assemble(p, storage);
  SpdSolver solver(s.a, p.solver);

  Eigen::VectorXd h = p.initial_head->values();
  for (int n = 0; n < p.grid.size(); ++n)
    if (p.is_fixed(n)) h[n] = p.fixed_value(n);

  const long steps = std::max(1L, std::lround(t_end / dt));
  HeadSolution out;
  out.times.reserve(steps + 1);
  out.heads.reserve(steps + 1);
  out.times.push_back(0.0);
  out.heads.emplace_back(p.grid, h);

  const int nf = static_cast<int>(s.free_nodes.size());
  Eigen::VectorXd x(nf), b(nf);
  for (int r = 0; r < nf; ++r) x[r] = h[s.free_nodes[r]];
  for (long n = 1; n <= steps; ++n) {
    for (int r = 0; r < nf; ++r)
      b[r] = s.rhs[r] + storage * p.grid.cell_area(s.free_nodes[r]) * x[r];
    x = solver.solve(b, x);
    out.times.push_back(static_cast<double>(n) * dt);
    out.heads.emplace_back(p.grid, scatter(p, s, x));
  }
  return out;
}

VelocityField darcy_velocity(const ScalarField& head, const FlowProblem& p,
                             double porosity) {
  if (!(porosity > 0.0 && porosity < 1.0))
    throw InvalidInput("porosity must lie in (0, 1)");
  const auto& g = p.grid;
  if (!(head.grid() == g)) throw InvalidInput("head is on a different grid");
  const auto& h = head.values();
  const auto& k = p.conductivity.values();
  Eigen::VectorXd vx(g.size()), vy(g.size());
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const int n = g.index(i, j);
      double dhdx, dhdy;
      if (i == 0)
        dhdx = (h[g.index(1, j)] - h[n]) / g.dx();
      else if (i == g.nx() - 1)
        dhdx = (h[n] - h[g.index(i - 1, j)]) / g.dx();
      else
        dhdx = (h[g.index(i + 1, j)] - h[g.index(i - 1, j)]) / (2.0 * g.dx());
      if (j == 0)
        dhdy = (h[g.index(i, 1)] - h[n]) / g.dy();
      else if (j == g.ny() - 1)
        dhdy = (h[n] - h[g.index(i, j - 1)]) / g.dy();
      else
        dhdy = (h[g.index(i, j + 1)] - h[g.index(i, j - 1)]) / (2.0 * g.dy());
      vx[n] = -k[n] / porosity * dhdx;
      vy[n] = -k[n] / porosity * dhdy;
    }
  return {ScalarField(g, std::move(vx)), ScalarField(g, std::move(vy))};
}

VelocityField darcy_velocity(const HeadSolution& h, const FlowProblem& p,
                             double porosity) {
  return darcy_velocity(h.steady(), p, porosity);
}

FaceFluxes face_fluxes(const ScalarField& head, const FlowProblem& p) {
  const auto& g = p.grid;
  const auto& h = head.values();
  FaceFluxes f;
  f.qx.resize(g.nx() - 1, g.ny());
  f.qy.resize(g.nx(), g.ny() - 1);
  // Net inflow per node from its neighbours.
  Eigen::VectorXd inflow = Eigen::VectorXd::Zero(g.size());
  const auto& k = p.conductivity.values();
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i + 1 < g.nx(); ++i) {
      const int a = g.index(i, j), b = g.index(i + 1, j);
      const double q = conductance(k[a], k[b], g.height(j), g.dx()) * (h[a] - h[b]);
      f.qx(i, j) = q;
      inflow[b] += q;
      inflow[a] -= q;
    }
  for (int j = 0; j + 1 < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const int a = g.index(i, j), b = g.index(i, j + 1);
      const double q = conductance(k[a], k[b], g.width(i), g.dy()) * (h[a] - h[b]);
      f.qy(i, j) = q;
      inflow[b] += q;
      inflow[a] -= q;
    }
  f.outflow = Eigen::VectorXd::Zero(g.size());
  for (int n = 0; n < g.size(); ++n)
    if (p.is_fixed(n)) f.outflow[n] = inflow[n];
  // Water injected at a pinned node leaves through the boundary with it.
  for (const Well& w : p.wells)
    f.outflow[w.node] += p.is_fixed(w.node) ? w.rate : -w.rate;
  return f;
}

FlowBudget steady_budget(const ScalarField& head, const FlowProblem& p) {
  const FaceFluxes f = face_fluxes(head, p);
  FlowBudget b;
  double well_abs = 0.0;
  for (const Well& w : p.wells) {
    if (p.is_fixed(w.node)) continue;  // pinned nodes absorb their wells
    b.well_total += w.rate;
    well_abs += std::abs(w.rate);
  }
  for (int n = 0; n < p.grid.size(); ++n)
    if (p.is_fixed(n)) b.boundary_inflow -= f.outflow[n];
  for (const Well& w : p.wells)
    if (p.is_fixed(w.node)) b.boundary_inflow += w.rate;
  const double imbalance = std::abs(b.boundary_inflow + b.well_total);
  b.relative_imbalance = well_abs > 0.0 ? imbalance / well_abs : imbalance;
  return b;
}

}  // namespace ensmooth::flow

#include <doctest.h>

#include <cmath>

#include "ensmooth/error.hpp"
#include "ensmooth/flow.hpp"
#include "ensmooth/kl.hpp"
#include "ensmooth/rng.hpp"

using namespace ensmooth;
using namespace ensmooth::flow;

namespace {

FlowProblem homogeneous(const Grid2D& g, double k) {
  return {.grid = g,
          .conductivity = ScalarField::constant(g, k),
          .boundary = {12.0, 11.0},
          .wells = {},
          .specific_storage = 0.0,
          .initial_head = std::nullopt,
          .solver = {}};
}

ScalarField rough_conductivity(const Grid2D& g) {
  const param::KLBasis b = param::build_kl_basis({1.0, 4.0, 2.0, 0.0}, g, 20);
  RngStream rng(17);
  ScalarField y = param::kl_realize(b, rng.normal_vector(20));
  return ScalarField(g, y.values().array().exp().matrix());
}

}  // namespace

TEST_SUITE("flow") {

TEST_CASE("harmonic conductance") {
  CHECK(conductance(1.0, 3.0, 2.0, 1.0) == doctest::Approx(3.0));
  CHECK(conductance(2.0, 2.0, 1.0, 0.5) == doctest::Approx(4.0));
}

TEST_CASE("homogeneous steady flow reproduces the linear profile") {
  const Grid2D g(41, 21, 20.0, 10.0);
  const ScalarField h = solve_steady_flow(homogeneous(g, 7.4)).steady();
  double worst = 0.0;
  for (int n = 0; n < g.size(); ++n)
    worst = std::max(worst, std::abs(h[n] - (12.0 - g.x(g.col(n)) / 20.0)));
  CHECK(worst < 1e-8);
}

TEST_CASE("steady global and local mass balance with two wells") {
  const Grid2D g(31, 21, 20.0, 10.0);
  FlowProblem p = homogeneous(g, 1.0);
  p.conductivity = rough_conductivity(g);
  p.wells = {{g.index(8, 10), 2.5}, {g.index(22, 6), -1.75}};
  const ScalarField h = solve_steady_flow(p).steady();
  const FlowBudget b = steady_budget(h, p);
  CHECK(b.relative_imbalance < 1e-8);
  CHECK(b.well_total == doctest::Approx(0.75));

  // each free node: net outflow through its faces equals its well rate
  const FaceFluxes f = face_fluxes(h, p);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 1; i + 1 < g.nx(); ++i) {
      const int n = g.index(i, j);
      double out = f.qx(i, j) - f.qx(i - 1, j);
      if (j + 1 < g.ny()) out += f.qy(i, j);
      if (j > 0) out -= f.qy(i, j - 1);
      double source = 0.0;
      for (const Well& w : p.wells)
        if (w.node == n) source = w.rate;
      CHECK(std::abs(out - source) < 1e-7);
    }
}

TEST_CASE("transient flow converges to the steady solution") {
  const Grid2D g(21, 11, 20.0, 10.0);
  FlowProblem p = homogeneous(g, 1.0);
  p.conductivity = rough_conductivity(g);
  const ScalarField steady = solve_steady_flow(p).steady();
  p.specific_storage = 1e-3;
  p.initial_head = ScalarField::constant(g, 11.0);
  const HeadSolution tr = solve_transient_flow(p, 20.0, 0.5);
  CHECK(tr.heads.size() == 41u);
  CHECK(tr.times.back() == doctest::Approx(20.0));
  CHECK((tr.heads.back().values() - steady.values()).cwiseAbs().maxCoeff() < 1e-6);
  // fixed nodes hold their boundary value from the first record on
  CHECK(tr.heads.front()[g.index(0, 3)] == 12.0);
}

TEST_CASE("pore velocity of uniform flow") {
  const Grid2D g(21, 11, 20.0, 10.0);
  const FlowProblem p = homogeneous(g, 2.0);
  const ScalarField h = solve_steady_flow(p).steady();
  const VelocityField v = darcy_velocity(h, p, 0.25);
  CHECK(v.vx[g.index(10, 5)] == doctest::Approx(2.0 / 0.25 / 20.0));
  CHECK(std::abs(v.vy[g.index(10, 5)]) < 1e-8);
  CHECK_THROWS_AS(darcy_velocity(h, p, 0.0), InvalidInput);
}

TEST_CASE("invalid flow setups") {
  const Grid2D g(5, 5, 1.0, 1.0);
  FlowProblem p = homogeneous(g, 1.0);
  p.boundary = {};
  CHECK_THROWS_AS(solve_steady_flow(p), SetupError);
  p = homogeneous(g, 1.0);
  p.conductivity.values()[3] = -1.0;
  CHECK_THROWS_AS(solve_steady_flow(p), InvalidInput);
  p = homogeneous(g, 1.0);
  CHECK_THROWS_AS(solve_transient_flow(p, 1.0, 0.1), InvalidInput);
}

}  // TEST_SUITE

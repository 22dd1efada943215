#include <doctest.h>

#include <cmath>

#include "ensmooth/error.hpp"
#include "ensmooth/flow.hpp"
#include "ensmooth/kl.hpp"
#include "ensmooth/rng.hpp"
#include "ensmooth/transport.hpp"

using namespace ensmooth;
using namespace ensmooth::transport;

namespace {

TransportProblem case1_style(int steps) {
  const Grid2D g(41, 21, 20.0, 10.0);
  const param::KLBasis b = param::build_kl_basis({1.0, 10.0, 5.0, 2.0}, g, 30);
  RngStream rng(4);
  const ScalarField y = param::kl_realize(b, rng.normal_vector(30));
  flow::FlowProblem fp{.grid = g,
                       .conductivity = ScalarField(g, y.values().array().exp().matrix()),
                       .boundary = {12.0, 11.0},
                       .wells = {},
                       .specific_storage = 0.0,
                       .initial_head = std::nullopt,
                       .solver = {}};
  const ScalarField h = flow::solve_steady_flow(fp).steady();
  const flow::VelocityField v = flow::darcy_velocity(h, fp, 0.25);
  return {.grid = g,
          .porosity = 0.25,
          .alpha_l = 0.3,
          .alpha_t = 0.03,
          .vx = v.vx,
          .vy = v.vy,
          .fluxes = flow::face_fluxes(h, fp),
          .source = {3.52, 4.44, {5.69, 7.88, 6.31, 1.49, 6.87, 5.55}, 1.0, 1.0},
          .initial = ScalarField::constant(g, 0.0),
          .output_times = {steps * 0.05},
          .dt = 0.05};
}

}  // namespace

TEST_SUITE("transport") {

TEST_CASE("dispersion tensor matches the closed form") {
  const Grid2D g(2, 2, 1.0, 1.0);
  const DispersionTensorField d = dispersion_tensor(
      ScalarField(g, Eigen::Vector4d(3, 0, 3, 0)), ScalarField(g, Eigen::Vector4d(4, 0, 4, 0)),
      0.3, 0.03);
  CHECK(d.d11[0] == doctest::Approx(0.636));
  CHECK(d.d22[0] == doctest::Approx(1.014));
  CHECK(d.d12[0] == doctest::Approx(0.648));
  CHECK(d.d11[1] == 0.0);
  CHECK(d.d22[1] == 0.0);
  CHECK(d.d12[1] == 0.0);
  CHECK_THROWS_AS(dispersion_tensor(d.d11, d.d11, -0.1, 0.0), InvalidInput);
}

TEST_CASE("stepwise source history") {
  PointSource s{1.0, 1.0, {1.0, 2.0}, 1.0, 1.0};
  CHECK(s.rate_at(0.5) == 0.0);
  CHECK(s.rate_at(1.0) == 1.0);
  CHECK(s.rate_at(1.99) == 1.0);
  CHECK(s.rate_at(2.5) == 2.0);
  CHECK(s.rate_at(3.0) == 0.0);
}

TEST_CASE("mass budget closes every step and concentrations stay nonnegative") {
  const TransportResult r = solve_transport_detailed(case1_style(100));
  REQUIRE(r.budget.size() == 100u);
  double worst = 0.0;
  for (const StepBudget& b : r.budget) worst = std::max(worst, b.relative_error());
  CHECK(worst < 1e-6);
  CHECK(r.min_concentration >= 0.0);
  double injected = 0.0;
  for (const StepBudget& b : r.budget) injected += b.source_mass;
  // sources active for t in [1, 5): 5.69 + 7.88 + 6.31 + 1.49
  CHECK(injected == doctest::Approx(21.37).epsilon(1e-9));
}

TEST_CASE("no source and clean water leave the domain clean") {
  TransportProblem p = case1_style(20);
  p.source.rates.assign(6, 0.0);
  const std::vector<ScalarField> c = solve_transport(p);
  CHECK(c.at(0).values().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a pulse in uniform flow moves with the pore velocity") {
  const Grid2D g(101, 5, 50.0, 2.0);
  const ScalarField vx = ScalarField::constant(g, 1.0), vy = ScalarField::constant(g, 0.0);
  Eigen::VectorXd c0 = Eigen::VectorXd::Zero(g.size());
  for (int j = 0; j < g.ny(); ++j) c0[g.index(20, j)] = 1.0;
  TransportProblem p{.grid = g,
                     .porosity = 0.3,
                     .alpha_l = 0.1,
                     .alpha_t = 0.01,
                     .vx = vx,
                     .vy = vy,
                     .fluxes = std::nullopt,
                     .source = {1.0, 1.0, {}, 1.0, 1.0},
                     .initial = ScalarField(g, c0),
                     .output_times = {0.0, 10.0},
                     .dt = 0.05};
  const std::vector<ScalarField> c = solve_transport(p);
  auto centroid = [&g](const ScalarField& f) {
    double m = 0.0, mx = 0.0;
    for (int n = 0; n < g.size(); ++n) {
      m += f[n] * g.cell_area(n);
      mx += f[n] * g.cell_area(n) * g.x(g.col(n));
    }
    return mx / m;
  };
  CHECK(centroid(c[1]) - centroid(c[0]) == doctest::Approx(10.0).epsilon(0.03));
  CHECK(dissolved_mass(c[1], 0.3) == doctest::Approx(dissolved_mass(c[0], 0.3)).epsilon(1e-9));
}

TEST_CASE("output times must fall on the step grid") {
  TransportProblem p = case1_style(10);
  p.output_times = {0.512};
  CHECK_THROWS_AS(solve_transport(p), InvalidInput);
  p.output_times = {1.0};
  p.porosity = 1.5;
  CHECK_THROWS_AS(solve_transport(p), InvalidInput);
}

}  // TEST_SUITE

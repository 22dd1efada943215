#include <doctest.h>

#include <cmath>
#include <fstream>

#include "ensmooth/error.hpp"
#include "ensmooth/io.hpp"
#include "ensmooth/rng.hpp"
#include "ensmooth/stats.hpp"
#include "ensmooth/types.hpp"
#include "util.hpp"

using namespace ensmooth;

TEST_SUITE("core") {

TEST_CASE("grid geometry and indexing") {
  const Grid2D g(5, 3, 4.0, 2.0);
  CHECK(g.dx() == doctest::Approx(1.0));
  CHECK(g.dy() == doctest::Approx(1.0));
  CHECK(g.index(2, 1) == 7);
  CHECK(g.col(7) == 2);
  CHECK(g.row(7) == 1);
  CHECK(g.width(0) == doctest::Approx(0.5));
  CHECK(g.width(2) == doctest::Approx(1.0));
  double area = 0.0;
  for (int n = 0; n < g.size(); ++n) area += g.cell_area(n);
  CHECK(area == doctest::Approx(8.0));
  CHECK(g.nearest_node(2.4, 0.6) == g.index(2, 1));
  CHECK_THROWS_AS(g.nearest_node(5.0, 0.0), InvalidInput);
  CHECK_THROWS_AS(Grid2D(1, 3, 1.0, 1.0), InvalidInput);
}

TEST_CASE("scalar field rejects non-finite values and wrong sizes") {
  const Grid2D g(3, 3, 1.0, 1.0);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(9);
  v[4] = std::nan("");
  CHECK_THROWS_AS(ScalarField(g, v), InvalidInput);
  CHECK_THROWS_AS(ScalarField(g, Eigen::VectorXd::Zero(8)), InvalidInput);
}

TEST_CASE("rng streams are reproducible and children independent") {
  RngStream a(42, 0), b(42, 0), c(42, 1);
  const Eigen::VectorXd va = a.normal_vector(8);
  CHECK(va == b.normal_vector(8));
  CHECK(va != c.normal_vector(8));
  CHECK(RngStream(42).child(3).normal() == RngStream(42).child(3).normal());
  // a matrix draw equals successive column draws
  RngStream m1(7), m2(7);
  const Eigen::MatrixXd mat = m1.normal_matrix(3, 4);
  for (int k = 0; k < 4; ++k) CHECK(mat.col(k) == m2.normal_vector(3));
  RngStream u(9);
  for (int k = 0; k < 1000; ++k) {
    const double x = u.uniform(3.0, 5.0);
    CHECK((x >= 3.0 && x < 5.0));
    CHECK(u.below(7) < 7u);
  }
}

TEST_CASE("column statistics use the N-1 denominator") {
  Eigen::MatrixXd m(1, 3);
  m << 1.0, 2.0, 6.0;
  const EnsembleStats s = column_stats(m);
  CHECK(s.mean[0] == doctest::Approx(3.0));
  CHECK(s.std[0] == doctest::Approx(std::sqrt(7.0)));
  CHECK_THROWS_AS(column_stats(Eigen::MatrixXd::Ones(2, 1)), InvalidInput);
}

TEST_CASE("perturbed observations have the requested spread") {
  ObservationSet obs;
  obs.values = Eigen::Vector2d(1.0, -2.0);
  obs.noise_std = Eigen::Vector2d(0.5, 2.0);
  obs.labels.resize(2);
  RngStream rng(5);
  const Eigen::MatrixXd d = perturb_observations(obs, 2.0, 20000, rng);
  const EnsembleStats s = column_stats(d);
  CHECK(s.mean[0] == doctest::Approx(1.0).epsilon(0.02));
  CHECK(s.mean[1] == doctest::Approx(-2.0).epsilon(0.05));
  CHECK(s.std[0] == doctest::Approx(1.0).epsilon(0.03));
  CHECK(s.std[1] == doctest::Approx(4.0).epsilon(0.03));
  CHECK_THROWS_AS(perturb_observations(obs, 0.0, 3, rng), InvalidInput);
}

TEST_CASE("error metrics") {
  const Eigen::Vector3d a(1, 2, 3), b(1, 2, 5);
  CHECK(rmse(a, b) == doctest::Approx(std::sqrt(4.0 / 3.0)));
  CHECK(rmsre(Eigen::Vector2d(2, 3), Eigen::Vector2d(1, 3)) ==
        doctest::Approx(std::sqrt(0.5)));
  CHECK_THROWS_AS(rmsre(Eigen::Vector2d(2, 3), Eigen::Vector2d(0, 3)), InvalidInput);
  CHECK_THROWS_AS(rmse(a, Eigen::Vector2d(1, 2)), InvalidInput);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("histogram counts cover every sample") {
  RngStream rng(3);
  const Eigen::VectorXd v = rng.normal_vector(1681);
  const Histogram h = histogram(v, -1.0, 1.0, 10);
  long total = 0;
  for (long c : h.counts) total += c;
  CHECK(total == 1681);
  CHECK(h.edges.size() == 11u);
}

TEST_CASE("bimodality index of a two-valued field is one") {
  Eigen::VectorXd v(6);
  v << 0.5, 2.3, 0.5, 0.5, 2.3, 2.3;
  CHECK(bimodality_index(v) == 1.0);
  CHECK(bimodality_index(Eigen::VectorXd::Constant(4, 1.2)) == 0.0);
}

TEST_CASE("ensemble and field round trips") {
  testutil::TempDir dir("core_io");
  Ensemble e;
  RngStream rng(1);
  e.params = rng.normal_matrix(4, 3);
  e.outputs = rng.normal_matrix(2, 3);
  e.iteration = 2;
  io::save_ensemble(e, dir / "ens");
  const Ensemble back = io::load_ensemble(dir / "ens");
  CHECK(back.params == e.params);
  CHECK(*back.outputs == *e.outputs);
  CHECK(back.iteration == 2);

  Ensemble no_outputs{e.params, std::nullopt, 0};
  io::save_ensemble(no_outputs, dir / "bare");
  CHECK_FALSE(io::load_ensemble(dir / "bare").outputs.has_value());

  const ScalarField f(Grid2D(3, 2, 2.0, 1.0), rng.normal_vector(6));
  io::save_field(f, dir / "field");
  const ScalarField g = io::load_field(dir / "field");
  CHECK(g.grid() == f.grid());
  CHECK(g.values() == f.values());

  ObservationSet obs{Eigen::Vector2d(1.5, 2.5), Eigen::Vector2d(0.1, 0.2),
                     {{ObsKind::head, 1, 2, 0}, {ObsKind::concentration, 3, 4, 5}}};
  io::save_observations(obs, dir / "obs.json");
  const ObservationSet o2 = io::load_observations(dir / "obs.json");
  CHECK(o2.values == obs.values);
  CHECK(o2.labels[1].kind == ObsKind::concentration);
  CHECK(o2.labels[1].t == 5.0);
}

TEST_CASE("corrupted artifacts raise distinct load errors") {
  testutil::TempDir dir("core_corrupt");
  const Eigen::MatrixXd m = Eigen::MatrixXd::Random(3, 4);
  const auto paths = io::artifact_paths(dir / "m");

  io::save_matrix(m, dir / "m");
  std::filesystem::resize_file(paths.payload, 8 * 11);
  CHECK_THROWS_AS(io::load_matrix(dir / "m"), TruncatedPayload);

  io::save_matrix(m, dir / "m");
  std::filesystem::resize_file(paths.payload, 8 * 11 + 3);
  CHECK_THROWS_AS(io::load_matrix(dir / "m"), TruncatedPayload);

  io::save_matrix(m, dir / "m");
  {
    std::ofstream out(paths.payload, std::ios::binary | std::ios::app);
    const double extra = 1.0;
    out.write(reinterpret_cast<const char*>(&extra), sizeof extra);
  }
  CHECK_THROWS_AS(io::load_matrix(dir / "m"), DimensionMismatch);

  io::save_matrix(m, dir / "m");
  {
    std::fstream io(paths.payload, std::ios::binary | std::ios::in | std::ios::out);
    io.seekp(5);
    io.put('\x7f');
  }
  CHECK_THROWS_AS(io::load_matrix(dir / "m"), ChecksumMismatch);

  io::save_matrix(m, dir / "m");
  io::write_text(paths.manifest, "{not json");
  CHECK_THROWS_AS(io::load_matrix(dir / "m"), MalformedManifest);

  io::save_matrix(m, dir / "m");
  CHECK_THROWS_AS(io::load_field(dir / "m"), MalformedManifest);
}

TEST_CASE("number formatting is shortest round-trip") {
  CHECK(io::format_number(0.1) == "0.1");
  CHECK(io::format_number(2.0) == "2");
  const double x = 1.0 / 3.0;
  CHECK(std::stod(io::format_number(x)) == x);
}

}  // TEST_SUITE

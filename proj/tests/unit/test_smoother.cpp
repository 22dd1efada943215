#include <doctest.h>

#include <cmath>

#include "ensmooth/error.hpp"
#include "ensmooth/smoother.hpp"
#include "ensmooth/stats.hpp"

using namespace ensmooth;
using namespace ensmooth::smoother;

namespace {

ObservationSet make_obs(const Eigen::VectorXd& values, double sd) {
  ObservationSet o;
  o.values = values;
  o.noise_std = Eigen::VectorXd::Constant(values.size(), sd);
  o.labels.resize(static_cast<std::size_t>(values.size()));
  return o;
}

// m ~ N(0, 1), y = m, d = 1 observed with std 0.5
Ensemble scalar_prior(int n, std::uint64_t seed) {
  RngStream rng(seed);
  Ensemble e;
  e.params = rng.normal_matrix(1, n);
  e.outputs = e.params;
  return e;
}

double var_of(const Eigen::RowVectorXd& v) {
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST_SUITE("smoother") {

TEST_CASE("MDA schedules") {
  const MdaSchedule s = mda_schedule(4);
  CHECK(s.n_iter() == 4);
  for (double a : s.alphas) CHECK(a == doctest::Approx(2.0));
  CHECK(mda_schedule(1).alphas == std::vector<double>{1.0});
  CHECK_NOTHROW(MdaSchedule::custom({std::sqrt(28.0 / 3.0), std::sqrt(7.0), 2.0, std::sqrt(2.0)}));
  CHECK_THROWS_AS(MdaSchedule::custom({4.0, 2.0, 2.0, 2.0}), InvalidInput);
  CHECK_THROWS_AS(MdaSchedule::custom({}), InvalidInput);
  CHECK_THROWS_AS(MdaSchedule::custom({-1.0}), InvalidInput);
  CHECK_THROWS_AS(mda_schedule(0), InvalidInput);
}

TEST_CASE("cross and output covariances use N-1") {
  RngStream rng(1);
  Ensemble e;
  e.params = rng.normal_matrix(3, 6);
  e.outputs = rng.normal_matrix(2, 6);
  const KalmanContext k = kalman_context(e, make_obs(Eigen::VectorXd::Zero(2), 0.3));
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 2; ++b) {
      double s = 0;
      const double ma = e.params.row(a).mean(), mb = e.outputs->row(b).mean();
      for (int m = 0; m < 6; ++m) s += (e.params(a, m) - ma) * ((*e.outputs)(b, m) - mb);
      CHECK(k.c_my(a, b) == doctest::Approx(s / 5.0).epsilon(1e-12));
    }
  CHECK(k.c_yy(0, 0) == doctest::Approx(var_of(e.outputs->row(0))).epsilon(1e-12));
  CHECK(k.r[1] == doctest::Approx(0.09));
}

TEST_CASE("uninformative outputs leave members in place") {
  RngStream rng(2);
  Ensemble e;
  e.params = rng.normal_matrix(2, 10);
  e.outputs = Eigen::MatrixXd::Constant(3, 10, 4.0);
  RngStream r(3);
  const Eigen::MatrixXd up =
      es_kalman_update(e, make_obs(Eigen::VectorXd::Ones(3), 0.1), 1.0, {}, r);
  CHECK((up - e.params).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("scalar conjugate problem: Kalman posterior") {
  const Ensemble e = scalar_prior(40000, 4);
  const ObservationSet obs = make_obs(Eigen::VectorXd::Ones(1), 0.5);
  RngStream r(5);
  const Eigen::MatrixXd up = es_kalman_update(e, obs, 1.0, {}, r);
  CHECK(up.row(0).mean() == doctest::Approx(0.8).epsilon(0.02));
  CHECK(var_of(up.row(0)) == doctest::Approx(0.2).epsilon(0.03));

  // larger inflation means a weaker pull toward the data
  double last = 1.0;
  for (double a : {1.0, 1.5, 2.0, 3.0}) {
    RngStream ra(6);
    const double mean = es_kalman_update(e, obs, a, {}, ra).row(0).mean();
    CHECK(mean < last);
    last = mean;
    const double sample_gain = kalman_context(e, obs).c_my(0, 0) /
                               (kalman_context(e, obs).c_yy(0, 0) + a * a * 0.25);
    CHECK(mean == doctest::Approx(sample_gain * 1.0 + (1 - sample_gain) * e.params.mean())
                      .epsilon(0.02));
  }
}

TEST_CASE("MDA on a linear problem matches the single-step posterior") {
  const Ensemble e = scalar_prior(40000, 7);
  const ObservationSet obs = make_obs(Eigen::VectorXd::Ones(1), 0.5);
  AssimilationConfig cfg;
  cfg.schedule = mda_schedule(4);
  cfg.seed = 8;
  const AssimilationResult r =
      run_assimilation(e, obs, [](const Eigen::VectorXd& m) { return m; }, cfg);
  CHECK(r.history.size() == 5);
  CHECK(r.log.size() == 5);
  const Eigen::RowVectorXd post = r.history.back().params.row(0);
  CHECK(post.mean() == doctest::Approx(0.8).epsilon(0.02));
  CHECK(var_of(post) == doctest::Approx(0.2).epsilon(0.05));
  CHECK(r.log.back().mean_misfit < r.log.front().mean_misfit);
}

TEST_CASE("training pairs") {
  RngStream rng(9);
  Ensemble e;
  e.params = rng.normal_matrix(2, 5);
  e.outputs = rng.normal_matrix(3, 5);
  const ObservationSet obs = make_obs(Eigen::VectorXd::Zero(3), 0.2);
  RngStream r(10);
  const TrainingPairs p = generate_training_pairs(e, obs, 1.5, r);
  REQUIRE(p.inputs.cols() == 10);
  REQUIRE(p.outputs.cols() == 10);
  int c = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j, ++c)
      CHECK(p.outputs.col(c) == Eigen::VectorXd(e.params.col(i) - e.params.col(j)));

  // pair (0, 1) is column 0; swapping members flips the parameter target
  Ensemble sw = e;
  sw.params.col(0).swap(sw.params.col(1));
  sw.outputs->col(0).swap(sw.outputs->col(1));
  RngStream r2(10);
  const TrainingPairs q = generate_training_pairs(sw, obs, 1.5, r2);
  CHECK(q.outputs.col(0) == Eigen::VectorXd(-p.outputs.col(0)));
  // identical noise draw, so the input differences are mirrored too
  const Eigen::VectorXd noise = p.inputs.col(0) - (e.outputs->col(0) - e.outputs->col(1));
  CHECK((q.inputs.col(0) - noise + p.inputs.col(0) - noise).cwiseAbs().maxCoeff() < 1e-12);

  Ensemble two = e;
  two.params.conservativeResize(Eigen::NoChange, 2);
  two.outputs->conservativeResize(Eigen::NoChange, 2);
  CHECK(generate_training_pairs(two, obs, 1.0, r).inputs.cols() == 1);
  Ensemble one = e;
  one.params.conservativeResize(Eigen::NoChange, 1);
  one.outputs->conservativeResize(Eigen::NoChange, 1);
  CHECK_THROWS_AS(generate_training_pairs(one, obs, 1.0, r), InvalidInput);
}

TEST_CASE("pair noise has std alpha*sigma and the pair regression slope") {
  // least squares through the pairs: cov(dm, dy) / var(dy + noise) = 2 / (2 + 0.25)
  const Ensemble e = scalar_prior(300, 11);
  const ObservationSet obs = make_obs(Eigen::VectorXd::Ones(1), 0.5);
  RngStream r(12);
  const TrainingPairs p = generate_training_pairs(e, obs, 1.0, r);
  const Eigen::RowVectorXd noise = p.inputs.row(0) - p.outputs.row(0);
  CHECK(std::sqrt(noise.squaredNorm() / static_cast<double>(noise.size())) ==
        doctest::Approx(0.5).epsilon(0.02));
  const double slope = p.inputs.row(0).dot(p.outputs.row(0)) / p.inputs.row(0).squaredNorm();
  CHECK(slope == doctest::Approx(2.0 / 2.25).epsilon(0.03));
}

TEST_CASE("DL update applies the network to perturbed innovations") {
  RngStream rng(13);
  Ensemble e;
  e.params = rng.normal_matrix(2, 6);
  e.outputs = rng.normal_matrix(3, 6);
  const ObservationSet obs = make_obs(Eigen::VectorXd::Constant(3, 0.5), 0.1);
  neural::NetworkSpec spec = neural::NetworkSpec::residual_stack(3, 2, {4}, 1);
  neural::Network net(spec);
  net.parameters().setZero();
  neural::Scaler s;
  s.fit(rng.normal_matrix(3, 10), rng.normal_matrix(2, 10));
  s.out_mean.setZero();
  RngStream r(14);
  CHECK((es_dl_update(e, net, s, obs, 1.0, {}, r) - e.params).cwiseAbs().maxCoeff() < 1e-12);

  RngStream ri(15);
  net.initialize(ri);
  RngStream ra(16), rb(16);
  const Eigen::MatrixXd up = es_dl_update(e, net, s, obs, 2.0, {}, ra);
  const Eigen::MatrixXd innov = perturb_observations(obs, 2.0, 6, rb) - *e.outputs;
  CHECK((up - e.params - neural::predict_updates(net, s, innov)).cwiseAbs().maxCoeff() < 1e-12);

  neural::Network wrong(neural::NetworkSpec::residual_stack(4, 2, {4}, 1));
  CHECK_THROWS_AS(es_dl_update(e, wrong, s, obs, 1.0, {}, r), InvalidInput);
}

TEST_CASE("box constraints") {
  ParamConstraints c = ParamConstraints::unbounded(3);
  c.set(0, 0.0, 1.0);
  c.set(2, std::nullopt, -1.0);
  Eigen::MatrixXd p(3, 2);
  p << -0.5, 2.0, 100.0, -100.0, 0.0, -3.0;
  CHECK_FALSE(c.satisfied(p));
  c.apply(p);
  CHECK(c.satisfied(p));
  CHECK(p(0, 0) == 0.0);
  CHECK(p(0, 1) == 1.0);
  CHECK(p(1, 0) == 100.0);
  CHECK(p(2, 0) == -1.0);
  CHECK(p(2, 1) == -3.0);
  CHECK_THROWS_AS(c.set(5, 0.0, 1.0), InvalidInput);
  CHECK_THROWS_AS(c.set(0, 1.0, 0.0), InvalidInput);
  CHECK_THROWS_AS(c.validate(4), InvalidInput);
  CHECK_NOTHROW(ParamConstraints{}.validate(4));

  Ensemble e = scalar_prior(200, 17);
  ParamConstraints pos = ParamConstraints::unbounded(1);
  pos.set(0, 0.9, std::nullopt);
  RngStream r(18);
  CHECK(es_kalman_update(e, make_obs(Eigen::VectorXd::Ones(1), 0.5), 1.0, pos, r).minCoeff() >= 0.9);
}

TEST_CASE("forward evaluation in parallel and failures") {
  RngStream rng(19);
  const Eigen::MatrixXd p = rng.normal_matrix(2, 13);
  const ForwardModel f = [](const Eigen::VectorXd& m) {
    Eigen::VectorXd y(3);
    y << m[0] * m[1], std::sin(m[0]), m[1];
    return y;
  };
  CHECK(evaluate_members(p, f, 1) == evaluate_members(p, f, 4));

  const ForwardModel bad = [](const Eigen::VectorXd& m) {
    if (m[0] > 0.0) throw std::runtime_error("diverged");
    return Eigen::VectorXd(m);
  };
  Eigen::MatrixXd q = Eigen::MatrixXd::Constant(2, 6, -1.0);
  q(0, 4) = 1.0;
  q(0, 2) = 1.0;
  try {
    evaluate_members(q, bad, 3);
    FAIL("expected ForwardModelError");
  } catch (const ForwardModelError& err) {
    CHECK(err.member() == 2);
  }
  const ForwardModel nan = [](const Eigen::VectorXd& m) {
    return Eigen::VectorXd::Constant(1, m[0] > 0 ? std::nan("") : 0.0);
  };
  CHECK_THROWS_AS(evaluate_members(q, nan, 1), ForwardModelError);
}

TEST_CASE("DL assimilation runs end to end on a small linear problem") {
  RngStream rng(20);
  Ensemble prior;
  prior.params = rng.normal_matrix(2, 60);
  const Eigen::MatrixXd g = (Eigen::MatrixXd(3, 2) << 1, 0, 0, 1, 1, 1).finished();
  const ForwardModel f = [g](const Eigen::VectorXd& m) { return Eigen::VectorXd(g * m); };
  const ObservationSet obs = make_obs(g * Eigen::Vector2d(0.7, -0.4), 0.2);
  AssimilationConfig cfg;
  cfg.method = Method::dl;
  cfg.schedule = mda_schedule(2);
  cfg.network = neural::NetworkSpec::residual_stack(0, 0, {16}, 1);
  cfg.train.max_epochs = 30;
  cfg.train.batch_size = 64;
  cfg.train.learning_rate = 3e-3;
  cfg.seed = 21;
  int snaps = 0;
  cfg.on_snapshot = [&snaps](const Ensemble&) { ++snaps; };
  const AssimilationResult r = run_assimilation(prior, obs, f, cfg);
  CHECK(snaps == 3);
  CHECK(r.networks.size() == 2);
  CHECK(r.history.size() == 3);
  CHECK(r.log[1].epochs > 0);
  CHECK(r.log.back().mean_misfit < r.log.front().mean_misfit);
}

}  // TEST_SUITE

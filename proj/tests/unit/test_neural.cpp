#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ensmooth/error.hpp"
#include "ensmooth/neural.hpp"
#include "util.hpp"

using namespace ensmooth;
using namespace ensmooth::neural;

namespace {

Network small_net(bool bn, OutputActivation act, std::uint64_t seed) {
  NetworkSpec spec = NetworkSpec::residual_stack(4, 3, {6, 5}, 1);
  spec.batchnorm = bn;
  spec.output_activation = act;
  Network net(spec);
  RngStream rng(seed);
  net.initialize(rng);
  // perturb so BN scales and biases are not at their trivial init values
  net.parameters() += 0.1 * rng.normal_vector(net.parameters().size());
  return net;
}

double max_rel_grad_error(Network net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const Eigen::VectorXd g = loss_and_gradients(net, x, y).gradient;
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < net.parameters().size(); ++k) {
    const double p = net.parameters()[k];
    net.parameters()[k] = p + h;
    const double lp = loss_and_gradients(net, x, y).loss;
    net.parameters()[k] = p - h;
    const double lm = loss_and_gradients(net, x, y).loss;
    net.parameters()[k] = p;
    const double fd = (lp - lm) / (2 * h);
    worst = std::max(worst, std::abs(fd - g[k]) / std::max(1e-4, std::abs(fd) + std::abs(g[k])));
  }
  return worst;
}

}  // namespace

TEST_SUITE("neural") {

TEST_CASE("gradients match central differences") {
  RngStream rng(21);
  const Eigen::MatrixXd x = rng.normal_matrix(4, 7);
  const Eigen::MatrixXd y = rng.normal_matrix(3, 7);
  CHECK(max_rel_grad_error(small_net(true, OutputActivation::linear, 1), x, y) < 1e-5);
  CHECK(max_rel_grad_error(small_net(true, OutputActivation::tanh, 2), x, y) < 1e-5);
  CHECK(max_rel_grad_error(small_net(false, OutputActivation::linear, 3), x, y) < 1e-5);
}

TEST_CASE("loss is the mean over batch and output dims") {
  Network net = small_net(false, OutputActivation::linear, 4);
  RngStream rng(5);
  const Eigen::MatrixXd x = rng.normal_matrix(4, 9);
  const Eigen::MatrixXd y = rng.normal_matrix(3, 9);
  const Eigen::MatrixXd out = net.forward(x, Mode::train);
  CHECK(loss_and_gradients(net, x, y).loss ==
        doctest::Approx((out - y).array().square().mean()).epsilon(1e-12));
}

TEST_CASE("Adam follows the bias-corrected recurrence") {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  Eigen::VectorXd p(2);
  p << 1.0, -2.0;
  AdamState st(2);
  Eigen::VectorXd g1(2), g2(2);
  g1 << 0.5, -3.0;
  g2 << -1.0, 2.0;
  adam_step(p, g1, st, cfg);
  adam_step(p, g2, st, cfg);
  for (int k = 0; k < 2; ++k) {
    double q = k == 0 ? 1.0 : -2.0, m = 0, v = 0;
    const double gs[2] = {g1[k], g2[k]};
    for (int t = 1; t <= 2; ++t) {
      m = 0.9 * m + 0.1 * gs[t - 1];
      v = 0.999 * v + 0.001 * gs[t - 1] * gs[t - 1];
      const double mh = m / (1 - std::pow(0.9, t));
      const double vh = v / (1 - std::pow(0.999, t));
      q -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(p[k] == doctest::Approx(q).epsilon(1e-14));
  }
  CHECK(st.step == 2);
}

TEST_CASE("scaler standardizes, restores, and floors constant dims") {
  RngStream rng(6);
  Eigen::MatrixXd x = rng.normal_matrix(3, 50);
  x.row(0) = x.row(0) * 4.0 + Eigen::RowVectorXd::Constant(50, 7.0);
  x.row(2).setConstant(1.5);
  const Eigen::MatrixXd y = rng.normal_matrix(2, 50) * 0.01;
  Scaler s;
  CHECK(s.fit(x, y) == 1);
  const Eigen::MatrixXd z = s.standardize_inputs(x);
  for (int r = 0; r < 2; ++r) {
    CHECK(std::abs(z.row(r).mean()) < 1e-12);
    const double var = (z.row(r).array() - z.row(r).mean()).square().sum() / 49.0;
    CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(z.row(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s.restore_inputs(z) - x).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((s.restore_outputs(s.standardize_outputs(y)) - y).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("inference is per column and matches batched inference mode") {
  Network net = small_net(true, OutputActivation::linear, 7);
  net.running_stats() += Eigen::VectorXd::Constant(net.running_stats().size(), 0.3);
  RngStream rng(8);
  const Eigen::MatrixXd x = rng.normal_matrix(4, 5);
  const Eigen::MatrixXd all = net.infer(x);
  for (int c = 0; c < 5; ++c)
    CHECK((all.col(c) - net.infer(Eigen::VectorXd(x.col(c)))).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((net.forward(x, Mode::inference) - all).cwiseAbs().maxCoeff() < 1e-12);
  // train mode depends on the batch, inference does not
  CHECK((net.forward(x, Mode::train).col(0) -
         net.forward(x.leftCols(3), Mode::train).col(0)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("fit learns a linear map and keeps the best epoch") {
  RngStream rng(9);
  const Eigen::MatrixXd a = rng.normal_matrix(3, 4);
  const Eigen::MatrixXd x = rng.normal_matrix(4, 600);
  const Eigen::MatrixXd y = a * x;
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 64;
  cfg.max_epochs = 60;
  cfg.seed = 3;
  const NetworkSpec spec = NetworkSpec::residual_stack(4, 3, {32, 16}, 1);
  const FitResult r = fit(spec, x, y, cfg);
  REQUIRE(r.history.validation_loss.size() >= 2);
  const auto& vl = r.history.validation_loss;
  CHECK(vl[static_cast<std::size_t>(r.history.best_epoch)] < 0.1 * vl.front());
  CHECK(*std::min_element(vl.begin(), vl.end()) == vl[static_cast<std::size_t>(r.history.best_epoch)]);
  const Eigen::MatrixXd xt = rng.normal_matrix(4, 100);
  const double err = (predict_updates(r.net, r.scaler, xt) - a * xt).array().square().mean();
  CHECK(err < 0.1 * (a * xt).array().square().mean());

  const FitResult again = fit(spec, x, y, cfg);
  CHECK(again.net.parameters() == r.net.parameters());
}

TEST_CASE("training arguments are checked") {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = TrainConfig{};
  cfg.validation_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  const NetworkSpec spec = NetworkSpec::residual_stack(4, 3, {8}, 1);
  CHECK_THROWS_AS(fit(spec, Eigen::MatrixXd::Zero(5, 20), Eigen::MatrixXd::Zero(3, 20), TrainConfig{}),
                  InvalidInput);
}

TEST_CASE("saved networks reload bit for bit") {
  testutil::TempDir dir("neural_io");
  Network net = small_net(true, OutputActivation::tanh, 10);
  RngStream rng(11);
  Scaler s;
  s.fit(rng.normal_matrix(4, 20), rng.normal_matrix(3, 20));
  save_network(net, s, dir / "net");
  const auto [n2, s2] = load_network(dir / "net");
  CHECK(n2.parameters() == net.parameters());
  CHECK(n2.running_stats() == net.running_stats());
  CHECK(s2.in_std == s.in_std);
  CHECK(s2.out_mean == s.out_mean);
  const Eigen::VectorXd v = rng.normal_vector(4);
  CHECK(predict_update(n2, s2, v) == predict_update(net, s, v));
}

}  // TEST_SUITE

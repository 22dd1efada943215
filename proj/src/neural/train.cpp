#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ensmooth/error.hpp"
#include "ensmooth/neural.hpp"

namespace ensmooth::neural {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidInput("learning rate must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction <= 0.5))
    throw InvalidInput("validation fraction must lie in [0, 0.5]");
  if (batch_size < 1 || max_epochs < 1 || patience < 1)
    throw InvalidInput("batch size, epochs and patience must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(epsilon > 0.0))
    throw InvalidInput("bad Adam hyperparameters");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0))
    throw InvalidInput("batchnorm momentum must lie in (0, 1]");
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state, const TrainConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw InvalidInput("Adam: parameter/gradient/state shapes differ");
  ++state.step;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  params.array() -= cfg.learning_rate * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + cfg.epsilon);
}

void adam_step(Network& net, const Eigen::VectorXd& grads, AdamState& state,
               const TrainConfig& cfg) {
  adam_step(net.parameters(), grads, state, cfg);
}

int Scaler::fit(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs) {
  if (inputs.cols() == 0 || inputs.cols() != outputs.cols())
    throw InvalidInput("scaler needs matching, nonempty samples");
  const double n = static_cast<double>(inputs.cols());
  const double denom = n > 1.0 ? n - 1.0 : 1.0;
  int floored = 0;
  auto stats = [&](const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
    mean = m.rowwise().mean();
    sd = ((m.colwise() - mean).rowwise().squaredNorm() / denom).cwiseSqrt();
    for (Eigen::Index k = 0; k < sd.size(); ++k)
      if (!(sd[k] >= kStdFloor)) {
        sd[k] = kStdFloor;
        ++floored;
      }
  };
  stats(inputs, in_mean, in_std);
  stats(outputs, out_mean, out_std);
  return floored;
}

Eigen::MatrixXd Scaler::standardize_inputs(const Eigen::MatrixXd& x) const {
  if (x.rows() != in_mean.size()) throw InvalidInput("scaler: input dimension mismatch");
  return in_std.cwiseInverse().asDiagonal() * (x.colwise() - in_mean);
}

Eigen::MatrixXd Scaler::standardize_outputs(const Eigen::MatrixXd& y) const {
  if (y.rows() != out_mean.size()) throw InvalidInput("scaler: output dimension mismatch");
  return out_std.cwiseInverse().asDiagonal() * (y.colwise() - out_mean);
}

Eigen::MatrixXd Scaler::restore_inputs(const Eigen::MatrixXd& z) const {
  if (z.rows() != in_mean.size()) throw InvalidInput("scaler: input dimension mismatch");
  return (in_std.asDiagonal() * z).colwise() + in_mean;
}

Eigen::MatrixXd Scaler::restore_outputs(const Eigen::MatrixXd& z) const {
  if (z.rows() != out_mean.size()) throw InvalidInput("scaler: output dimension mismatch");
  return (out_std.asDiagonal() * z).colwise() + out_mean;
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols,
                       std::size_t begin, std::size_t end) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t k = begin; k < end; ++k)
    out.col(static_cast<Eigen::Index>(k - begin)) = m.col(cols[k]);
  return out;
}

}  // namespace

FitResult fit(const NetworkSpec& spec, const Eigen::MatrixXd& inputs,
              const Eigen::MatrixXd& outputs, const TrainConfig& cfg) {
  cfg.validate();
  spec.validate();
  if (inputs.cols() == 0) throw InvalidInput("no training pairs");
  if (inputs.cols() != outputs.cols())
    throw InvalidInput("training inputs and outputs differ in sample count");
  if (inputs.rows() != spec.input_dim || outputs.rows() != spec.output_dim)
    throw InvalidInput("training pairs do not match the network dims");

  RngStream root(cfg.seed, 0);
  RngStream split_rng = root.child(1), init_rng = root.child(2),
            shuffle_rng = root.child(3);

  const auto n = static_cast<std::size_t>(inputs.cols());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[split_rng.below(k)]);
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * n));
  const std::size_t n_train = n - n_val;
  if (n_train < 1) throw InvalidInput("validation split leaves no training data");

  FitResult r{Network(spec), Scaler{}, TrainHistory{}};
  const Eigen::MatrixXd x_train_raw = gather(inputs, order, 0, n_train);
  const Eigen::MatrixXd y_train_raw = gather(outputs, order, 0, n_train);
  const int floored = r.scaler.fit(x_train_raw, y_train_raw);
  if (floored > 0)
    r.history.warnings.push_back(std::to_string(floored) +
                                 " constant dimension(s): scaler std floor engaged");
  const Eigen::MatrixXd x_train = r.scaler.standardize_inputs(x_train_raw);
  const Eigen::MatrixXd y_train = r.scaler.standardize_outputs(y_train_raw);
  Eigen::MatrixXd x_val, y_val;
  if (n_val > 0) {
    x_val = r.scaler.standardize_inputs(gather(inputs, order, n_train, n));
    y_val = r.scaler.standardize_outputs(gather(outputs, order, n_train, n));
  }

  Network& net = r.net;
  net.initialize(init_rng);
  AdamState adam(net.parameters().size());
  Eigen::VectorXd best_params = net.parameters();
  Eigen::VectorXd best_running = net.running_stats();
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<Eigen::Index> idx(n_train);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  // Batchnorm statistics are undefined for a single sample.
  const std::size_t min_batch = spec.batchnorm ? 2 : 1;

  ForwardCache cache;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t k = n_train; k > 1; --k)
      std::swap(idx[k - 1], idx[shuffle_rng.below(k)]);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < n_train; b += batch) {
      const std::size_t e = std::min(n_train, b + batch);
      if (e - b < min_batch) continue;
      const Eigen::MatrixXd xb = gather(x_train, idx, b, e);
      const Eigen::MatrixXd yb = gather(y_train, idx, b, e);
      const LossAndGradient lg = loss_and_gradients(net, xb, yb, &cache);
      adam_step(net, lg.gradient, adam, cfg);
      net.update_running_stats(cache, cfg.bn_momentum);
      loss_sum += lg.loss * static_cast<double>(e - b);
      seen += e - b;
    }
    if (seen == 0) throw InvalidInput("training split too small for one batch");
    r.history.train_loss.push_back(loss_sum / static_cast<double>(seen));

    if (n_val == 0) {
      r.history.best_epoch = epoch;
      continue;
    }
    const double val =
        (net.forward(x_val, Mode::inference) - y_val).squaredNorm() /
        static_cast<double>(y_val.size());
    r.history.validation_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_params = net.parameters();
      best_running = net.running_stats();
      r.history.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (n_val > 0) {
    net.parameters() = best_params;
    net.running_stats() = best_running;
  }
  return r;
}

Eigen::VectorXd predict_update(const Network& net, const Scaler& scaler,
                               const Eigen::VectorXd& innovation) {
  return predict_updates(net, scaler, innovation);
}

Eigen::MatrixXd predict_updates(const Network& net, const Scaler& scaler,
                                const Eigen::MatrixXd& innovations) {
  if (innovations.rows() != net.spec().input_dim)
    throw InvalidInput("innovation dimension does not match the network");
  return scaler.restore_outputs(net.infer(scaler.standardize_inputs(innovations)));
}

}  // namespace ensmooth::neural

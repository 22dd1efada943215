#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "ensmooth/error.hpp"
#include "ensmooth/smoother.hpp"

namespace ensmooth::smoother {

std::string to_string(Method m) { return m == Method::kalman ? "kalman" : "dl"; }

Method method_from_string(const std::string& s) {
  if (s == "kalman") return Method::kalman;
  if (s == "dl") return Method::dl;
  throw InvalidInput("unknown method '" + s + "' (expected kalman or dl)");
}

double mean_misfit(const Eigen::MatrixXd& outputs, const ObservationSet& obs) {
  if (outputs.rows() != obs.size() || outputs.cols() == 0)
    throw InvalidInput("misfit: outputs do not match the observations");
  const Eigen::MatrixXd diff = outputs.colwise() - obs.values;
  const Eigen::ArrayXd per_member =
      (diff.colwise().squaredNorm().array() / static_cast<double>(obs.size())).sqrt();
  return per_member.mean();
}

Eigen::MatrixXd evaluate_members(const Eigen::MatrixXd& params,
                                 const ForwardModel& forward, int workers) {
  const auto n = static_cast<std::size_t>(params.cols());
  if (n == 0) throw InvalidInput("no members to evaluate");
  std::vector<Eigen::VectorXd> results(n);
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        results[k] = forward(params.col(static_cast<Eigen::Index>(k)));
        if (!results[k].allFinite()) errors[k] = "non-finite output";
      } catch (const std::exception& ex) {
        errors[k] = ex.what();
      }
    }
  };
  const std::size_t threads =
      std::min(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (std::size_t k = 0; k < n; ++k)
    if (!errors[k].empty()) throw ForwardModelError(k, errors[k]);
  Eigen::MatrixXd out(results[0].size(), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    if (results[k].size() != out.rows())
      throw ForwardModelError(k, "output length differs from member 0");
    out.col(static_cast<Eigen::Index>(k)) = results[k];
  }
  return out;
}

AssimilationResult run_assimilation(Ensemble prior, const ObservationSet& obs,
                                    const ForwardModel& forward,
                                    const AssimilationConfig& cfg) {
  prior.validate();
  obs.validate();
  cfg.schedule.validate();
  cfg.constraints.validate(prior.param_dim());
  if (prior.members() < 2) throw InvalidInput("assimilation needs at least 2 members");

  auto log = [&cfg](const std::string& msg) {
    if (cfg.on_log) cfg.on_log(msg);
  };
  const RngStream root(cfg.seed, 0);
  AssimilationResult result;

  Ensemble current = std::move(prior);
  current.iteration = 0;
  if (!current.outputs) current.outputs = evaluate_members(current.params, forward, cfg.workers);
  result.log.push_back({0, 0.0, mean_misfit(*current.outputs, obs), 0, 0.0, 0.0});
  if (cfg.on_snapshot) cfg.on_snapshot(current);
  result.history.push_back(current);

  for (int t = 1; t <= cfg.schedule.n_iter(); ++t) {
    const double alpha = cfg.schedule.alphas[static_cast<std::size_t>(t - 1)];
    const RngStream iter_rng = root.child(static_cast<std::uint64_t>(t));
    // Outputs must describe the current parameters before any update.
    if (!current.outputs)
      current.outputs = evaluate_members(current.params, forward, cfg.workers);
    IterationRecord rec{t, alpha, 0.0, 0, 0.0, 0.0};

    RngStream update_rng = iter_rng.child(1);
    Eigen::MatrixXd params;
    if (cfg.method == Method::kalman) {
      params = es_kalman_update(current, obs, alpha, cfg.constraints, update_rng);
    } else {
      RngStream pair_rng = iter_rng.child(2);
      neural::NetworkSpec spec = cfg.network;
      spec.input_dim = static_cast<int>(current.output_dim());
      spec.output_dim = static_cast<int>(current.param_dim());
      neural::TrainConfig train = cfg.train;
      train.seed = splitmix64(cfg.train.seed ^ splitmix64(static_cast<std::uint64_t>(t)));
      neural::FitResult fitted = [&] {
        const TrainingPairs pairs = generate_training_pairs(current, obs, alpha, pair_rng);
        log("iteration " + std::to_string(t) + ": training on " +
            std::to_string(pairs.inputs.cols()) + " pairs");
        return neural::fit(spec, pairs.inputs, pairs.outputs, train);
      }();
      for (const std::string& w : fitted.history.warnings) log("warning: " + w);
      rec.epochs = static_cast<int>(fitted.history.train_loss.size());
      rec.train_loss = fitted.history.train_loss.back();
      if (!fitted.history.validation_loss.empty())
        rec.validation_loss =
            fitted.history.validation_loss[static_cast<std::size_t>(fitted.history.best_epoch)];
      params = es_dl_update(current, fitted.net, fitted.scaler, obs, alpha, cfg.constraints,
                            update_rng);
      result.networks.push_back(std::move(fitted));
    }

    Ensemble next{std::move(params), std::nullopt, t};
    if (t < cfg.schedule.n_iter() || cfg.evaluate_posterior)
      next.outputs = evaluate_members(next.params, forward, cfg.workers);
    rec.mean_misfit = next.outputs ? mean_misfit(*next.outputs, obs)
                                   : std::numeric_limits<double>::quiet_NaN();
    log("iteration " + std::to_string(t) + ": mean misfit " + std::to_string(rec.mean_misfit));
    result.log.push_back(rec);
    if (cfg.on_snapshot) cfg.on_snapshot(next);
    result.history.push_back(next);
    current = std::move(next);
  }
  return result;
}

}  // namespace ensmooth::smoother

#include <cmath>

#include "ensmooth/error.hpp"
#include "ensmooth/experiment.hpp"

using nlohmann::json;

namespace ensmooth::neural {
NLOHMANN_JSON_SERIALIZE_ENUM(OutputActivation, {{OutputActivation::linear, "linear"},
                                                {OutputActivation::tanh, "tanh"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainConfig, learning_rate, beta1, beta2, epsilon,
                                   batch_size, max_epochs, validation_fraction, patience,
                                   bn_momentum, seed)
}  // namespace ensmooth::neural

namespace ensmooth::smoother {
NLOHMANN_JSON_SERIALIZE_ENUM(Method, {{Method::kalman, "kalman"}, {Method::dl, "dl"}})
}  // namespace ensmooth::smoother

namespace ensmooth::flow {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SolverOptions, tolerance, max_iterations)
}  // namespace ensmooth::flow

namespace ensmooth::param {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CovarianceSpec, variance, corr_x, corr_y, mean)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DsParams, n_neighbors, threshold, scan_fraction)

// target_fraction is optional, so this one is spelled out by hand.
void to_json(json& j, const ChannelOptions& o) {
  j = {{"n_channels", o.n_channels},         {"amplitude_min", o.amplitude_min},
       {"amplitude_max", o.amplitude_max},   {"wavelength_min", o.wavelength_min},
       {"wavelength_max", o.wavelength_max}, {"width_min", o.width_min},
       {"width_max", o.width_max},           {"low", o.low},
       {"high", o.high},
       {"target_fraction", o.target_fraction ? json(*o.target_fraction) : json(nullptr)}};
}

void from_json(const json& j, ChannelOptions& o) {
  j.at("n_channels").get_to(o.n_channels);
  j.at("amplitude_min").get_to(o.amplitude_min);
  j.at("amplitude_max").get_to(o.amplitude_max);
  j.at("wavelength_min").get_to(o.wavelength_min);
  j.at("wavelength_max").get_to(o.wavelength_max);
  j.at("width_min").get_to(o.width_min);
  j.at("width_max").get_to(o.width_max);
  j.at("low").get_to(o.low);
  j.at("high").get_to(o.high);
  const json& t = j.at("target_fraction");
  o.target_fraction = t.is_null() ? std::nullopt : std::optional<double>(t.get<double>());
}
}  // namespace ensmooth::param

namespace ensmooth::experiment {

NLOHMANN_JSON_SERIALIZE_ENUM(Model, {{Model::gaussian, "gaussian"}, {Model::channel, "channel"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SeedBundle, truth, prior, noise, training)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GaussianCase, covariance, n_kl, head_left, head_right,
                                   porosity, alpha_l, alpha_t, transport_dt, well_x, well_y,
                                   obs_times, noise_head, noise_conc, release_start,
                                   release_interval, source_truth, source_lower, source_upper)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ChannelCase, head_left, head_right, initial_head,
                                   specific_storage, well_rate, injection_node, pumping_node,
                                   obs_nodes, obs_interval, obs_count, flow_dt, noise_std, k_low,
                                   k_high, ti_size, ti_seed, channels, ds)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(NetworkConfig, widths, preserving_per_stage,
                                   output_activation, batchnorm, train)

SeedBundle SeedBundle::from_index(std::uint64_t n) {
  const std::uint64_t base = splitmix64(n + 0x5eedULL);
  return {splitmix64(base ^ 1), splitmix64(base ^ 2), splitmix64(base ^ 3),
          splitmix64(base ^ 4)};
}

void ExperimentConfig::validate() const {
  if (nx < 3 || ny < 3) throw InvalidInput("grid needs at least 3 nodes per axis");
  if (!(lx > 0.0 && ly > 0.0)) throw InvalidInput("domain extents must be positive");
  if (ensemble_size < 2) throw InvalidInput("ensemble needs at least 2 members");
  if (n_iter < 1) throw InvalidInput("n_iter must be at least 1");
  if (workers < 1) throw InvalidInput("workers must be at least 1");
  if (!mda_alphas.empty()) {
    if (static_cast<int>(mda_alphas.size()) != n_iter)
      throw InvalidInput("mda_alphas needs one factor per iteration");
    smoother::MdaSchedule{mda_alphas}.validate();
  }
  if (network.widths.empty()) throw InvalidInput("network needs at least one width");
  network.train.validate();
  if (model == Model::gaussian) {
    const GaussianCase& g = gaussian;
    g.covariance.validate();
    if (g.n_kl < 1 || g.n_kl > nx * ny) throw InvalidInput("n_kl out of range");
    if (g.well_x.empty() || g.well_y.empty() || g.obs_times.empty())
      throw InvalidInput("gaussian case needs wells and observation times");
    if (g.source_truth.size() != 8 || g.source_lower.size() != 8 || g.source_upper.size() != 8)
      throw InvalidInput("source vectors need 8 entries (x_s, y_s, S_1..S_6)");
    for (std::size_t k = 0; k < 8; ++k)
      if (!(g.source_lower[k] < g.source_upper[k]))
        throw InvalidInput("source lower bound must be below upper bound");
    if (!(g.noise_head > 0.0 && g.noise_conc > 0.0)) throw InvalidInput("noise must be positive");
    if (!(g.transport_dt > 0.0)) throw InvalidInput("transport dt must be positive");
    for (double t : g.obs_times) {
      const double steps = t / g.transport_dt;
      if (!(t > 0.0) || std::abs(steps - std::round(steps)) > 1e-9)
        throw InvalidInput("observation times must be positive multiples of transport dt");
    }
  } else {
    const ChannelCase& c = channel;
    if (c.injection_node.size() != 2 || c.pumping_node.size() != 2)
      throw InvalidInput("well nodes are (i, j) pairs");
    for (int v : c.injection_node)
      if (v < 0 || v >= std::min(nx, ny)) throw InvalidInput("injection node outside the grid");
    for (int v : c.pumping_node)
      if (v < 0 || v >= std::min(nx, ny)) throw InvalidInput("pumping node outside the grid");
    for (int v : c.obs_nodes)
      if (v < 0 || v >= std::min(nx, ny)) throw InvalidInput("observation node outside the grid");
    if (c.obs_nodes.empty() || c.obs_count < 1) throw InvalidInput("no observations configured");
    if (!(c.flow_dt > 0.0) || !(c.obs_interval > 0.0)) throw InvalidInput("bad time stepping");
    const double ratio = c.obs_interval / c.flow_dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
      throw InvalidInput("observation interval must be a multiple of the flow dt");
    if (!(c.noise_std > 0.0)) throw InvalidInput("noise must be positive");
    if (!(c.k_low < c.k_high)) throw InvalidInput("k_low must be below k_high");
    c.ds.validate();
  }
}

std::vector<std::string> preset_names() {
  return {"gaussian_case1", "gaussian_case1_desk", "channel_case2", "channel_case2_desk",
          "custom"};
}

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  c.network.widths = {150, 140, 130, 120};
  c.network.train.learning_rate = 3e-3;
  if (name == "gaussian_case1" || name == "custom") return c;
  if (name == "gaussian_case1_desk") {
    c.nx = 41;
    c.ny = 21;
    c.gaussian.n_kl = 50;
    c.ensemble_size = 200;
    c.n_iter = 4;
    c.network.train.max_epochs = 40;
    c.network.train.patience = 8;
    return c;
  }
  if (name == "channel_case2" || name == "channel_case2_desk") {
    c.model = Model::channel;
    c.nx = c.ny = 41;
    c.lx = c.ly = 800.0;
    c.ensemble_size = name == "channel_case2" ? 499 : 150;
    c.n_iter = 1;
    c.network.widths = {512, 512};
    c.network.train.learning_rate = 1e-3;
    c.network.train.max_epochs = name == "channel_case2" ? 100 : 40;
    c.network.train.patience = name == "channel_case2" ? 10 : 8;
    return c;
  }
  throw InvalidInput("unknown preset '" + name + "'");
}

json to_json(const ExperimentConfig& c) {
  return {{"preset", c.preset},
          {"model", c.model},
          {"method", c.method},
          {"nx", c.nx},
          {"ny", c.ny},
          {"lx", c.lx},
          {"ly", c.ly},
          {"ensemble_size", c.ensemble_size},
          {"n_iter", c.n_iter},
          {"mda_alphas", c.mda_alphas},
          {"seeds", c.seeds},
          {"solver", c.solver},
          {"gaussian", c.gaussian},
          {"channel", c.channel},
          {"network", c.network},
          {"workers", c.workers},
          {"out_dir", c.out_dir.string()}};
}

ExperimentConfig config_from_json(const json& j) {
  try {
    ExperimentConfig c;
    j.at("preset").get_to(c.preset);
    j.at("model").get_to(c.model);
    j.at("method").get_to(c.method);
    j.at("nx").get_to(c.nx);
    j.at("ny").get_to(c.ny);
    j.at("lx").get_to(c.lx);
    j.at("ly").get_to(c.ly);
    j.at("ensemble_size").get_to(c.ensemble_size);
    j.at("n_iter").get_to(c.n_iter);
    j.at("mda_alphas").get_to(c.mda_alphas);
    j.at("seeds").get_to(c.seeds);
    j.at("solver").get_to(c.solver);
    j.at("gaussian").get_to(c.gaussian);
    j.at("channel").get_to(c.channel);
    j.at("network").get_to(c.network);
    j.at("workers").get_to(c.workers);
    c.out_dir = j.at("out_dir").get<std::string>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad config: ") + e.what());
  }
}

namespace {

void check_keys(const json& base, const json& over, const std::string& path) {
  if (!over.is_object()) throw InvalidInput("config " + path + " must be an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string where = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw InvalidInput("unknown config key '" + where + "'");
    if (base.at(it.key()).is_object()) check_keys(base.at(it.key()), *it, where);
  }
}

}  // namespace

ExperimentConfig apply_overrides(const ExperimentConfig& base, const json& overrides) {
  json full = to_json(base);
  check_keys(full, overrides, "");
  // merge_patch drops keys set to null, so nulls are applied explicitly.
  json patched = full;
  patched.merge_patch(overrides);
  if (overrides.contains("channel") && overrides["channel"].contains("channels") &&
      overrides["channel"]["channels"].contains("target_fraction") &&
      overrides["channel"]["channels"]["target_fraction"].is_null())
    patched["channel"]["channels"]["target_fraction"] = nullptr;
  return config_from_json(patched);
}

}  // namespace ensmooth::experiment

#include <atomic>
#include <cmath>
#include <thread>

#include "ensmooth/error.hpp"
#include "ensmooth/experiment.hpp"
#include "ensmooth/transport.hpp"

namespace ensmooth::experiment {

namespace {

std::vector<int> gaussian_well_nodes(const ExperimentConfig& cfg, const Grid2D& grid) {
  std::vector<int> nodes;
  for (double y : cfg.gaussian.well_y)
    for (double x : cfg.gaussian.well_x) nodes.push_back(grid.nearest_node(x, y));
  return nodes;
}

std::vector<int> channel_obs_nodes(const ExperimentConfig& cfg, const Grid2D& grid) {
  std::vector<int> nodes;
  for (int j : cfg.channel.obs_nodes)
    for (int i : cfg.channel.obs_nodes) nodes.push_back(grid.index(i, j));
  return nodes;
}

int obs_step(const ChannelCase& c, int k) {
  return static_cast<int>(std::lround(k * c.obs_interval / c.flow_dt));
}

// Runs fn(k) for k in [0, n) on up to `workers` threads.
void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  std::atomic<int> next{0};
  std::vector<std::string> errors(static_cast<std::size_t>(n));
  auto work = [&] {
    for (int k = next++; k < n; k = next++) {
      try {
        fn(k);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(k)] = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min(workers, n));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  for (const std::string& e : errors)
    if (!e.empty()) throw Error(e);
}

}  // namespace

Eigen::VectorXd gaussian_forward(const ExperimentConfig& cfg, const ScalarField& log_k,
                                 const Eigen::Ref<const Eigen::VectorXd>& source) {
  const GaussianCase& g = cfg.gaussian;
  if (source.size() != 8) throw InvalidInput("source parameters are (x_s, y_s, S_1..S_6)");
  const Grid2D& grid = log_k.grid();
  flow::FlowProblem fp{.grid = grid,
                       .conductivity = ScalarField(grid, log_k.values().array().exp().matrix()),
                       .boundary = {g.head_left, g.head_right},
                       .wells = {},
                       .specific_storage = 0.0,
                       .initial_head = std::nullopt,
                       .solver = cfg.solver};
  const ScalarField head = flow::solve_steady_flow(fp).steady();
  const flow::VelocityField v = flow::darcy_velocity(head, fp, g.porosity);

  transport::TransportProblem tp{
      .grid = grid,
      .porosity = g.porosity,
      .alpha_l = g.alpha_l,
      .alpha_t = g.alpha_t,
      .vx = v.vx,
      .vy = v.vy,
      .fluxes = flow::face_fluxes(head, fp),
      .source = {source[0], source[1],
                 std::vector<double>(source.data() + 2, source.data() + 8), g.release_start,
                 g.release_interval},
      .initial = ScalarField::constant(grid, 0.0),
      .output_times = g.obs_times,
      .dt = g.transport_dt};
  const std::vector<ScalarField> conc = transport::solve_transport(tp);

  const std::vector<int> wells = gaussian_well_nodes(cfg, grid);
  const auto nw = static_cast<Eigen::Index>(wells.size());
  Eigen::VectorXd out(nw * static_cast<Eigen::Index>(1 + conc.size()));
  for (Eigen::Index w = 0; w < nw; ++w) out[w] = head[wells[static_cast<std::size_t>(w)]];
  for (std::size_t t = 0; t < conc.size(); ++t)
    for (Eigen::Index w = 0; w < nw; ++w)
      out[nw * static_cast<Eigen::Index>(t + 1) + w] = conc[t][wells[static_cast<std::size_t>(w)]];
  return out;
}

Eigen::VectorXd channel_forward(const ExperimentConfig& cfg, const ScalarField& k) {
  const ChannelCase& c = cfg.channel;
  const Grid2D& grid = k.grid();
  // Updated members may leave the facies range; the simulator sees the
  // clamped field so every member stays physically admissible.
  const Eigen::VectorXd clamped = k.values().cwiseMax(c.k_low).cwiseMin(c.k_high);
  flow::FlowProblem fp{
      .grid = grid,
      .conductivity = ScalarField(grid, clamped),
      .boundary = {c.head_left, c.head_right},
      .wells = {{grid.index(c.injection_node[0], c.injection_node[1]), c.well_rate},
                {grid.index(c.pumping_node[0], c.pumping_node[1]), -c.well_rate}},
      .specific_storage = c.specific_storage,
      .initial_head = ScalarField::constant(grid, c.initial_head),
      .solver = cfg.solver};
  const flow::HeadSolution sol =
      flow::solve_transient_flow(fp, c.obs_count * c.obs_interval, c.flow_dt);

  const std::vector<int> nodes = channel_obs_nodes(cfg, grid);
  const auto nn = static_cast<Eigen::Index>(nodes.size());
  Eigen::VectorXd out(nn * c.obs_count);
  for (int t = 0; t < c.obs_count; ++t) {
    const ScalarField& h = sol.at(static_cast<std::size_t>(obs_step(c, t + 1)));
    for (Eigen::Index w = 0; w < nn; ++w) out[t * nn + w] = h[nodes[static_cast<std::size_t>(w)]];
  }
  return out;
}

CaseSetup build_case1(const ExperimentConfig& cfg) {
  if (cfg.model != Model::gaussian) throw InvalidInput("build_case1 needs the gaussian model");
  cfg.validate();
  const GaussianCase& g = cfg.gaussian;
  const Grid2D grid(cfg.nx, cfg.ny, cfg.lx, cfg.ly);
  auto basis = std::make_shared<const param::KLBasis>(
      param::build_kl_basis(g.covariance, grid, g.n_kl));
  const Eigen::Index nkl = g.n_kl;
  const Eigen::Map<const Eigen::VectorXd> source_truth(g.source_truth.data(), 8);

  RngStream truth_rng(cfg.seeds.truth, 1);
  Eigen::VectorXd truth(nkl + 8);
  truth << truth_rng.normal_vector(nkl), source_truth;
  ScalarField truth_field = param::kl_realize(*basis, truth.head(nkl));

  const Eigen::VectorXd clean = gaussian_forward(cfg, truth_field, source_truth);
  const std::vector<int> wells = gaussian_well_nodes(cfg, grid);
  ObservationSet obs;
  obs.noise_std.resize(clean.size());
  for (Eigen::Index r = 0; r < clean.size(); ++r) {
    const auto w = static_cast<std::size_t>(r % static_cast<Eigen::Index>(wells.size()));
    const auto block = static_cast<std::size_t>(r / static_cast<Eigen::Index>(wells.size()));
    const bool head = block == 0;
    obs.noise_std[r] = head ? g.noise_head : g.noise_conc;
    obs.labels.push_back({head ? ObsKind::head : ObsKind::concentration,
                          grid.x(grid.col(wells[w])), grid.y(grid.row(wells[w])),
                          head ? 0.0 : g.obs_times[block - 1]});
  }
  RngStream noise_rng(cfg.seeds.noise, 1);
  obs.values = clean + obs.noise_std.cwiseProduct(noise_rng.normal_vector(clean.size()));

  const RngStream prior_root(cfg.seeds.prior, 1);
  RngStream xi_rng = prior_root.child(1), source_rng = prior_root.child(2);
  Ensemble prior;
  prior.params.resize(nkl + 8, cfg.ensemble_size);
  prior.params.topRows(nkl) = xi_rng.normal_matrix(nkl, cfg.ensemble_size);
  for (int m = 0; m < cfg.ensemble_size; ++m)
    for (int k = 0; k < 8; ++k)
      prior.params(nkl + k, m) = source_rng.uniform(g.source_lower[static_cast<std::size_t>(k)],
                                                    g.source_upper[static_cast<std::size_t>(k)]);

  smoother::ParamConstraints constraints = smoother::ParamConstraints::unbounded(nkl + 8);
  for (int k = 0; k < 8; ++k)
    constraints.set(nkl + k, g.source_lower[static_cast<std::size_t>(k)],
                    g.source_upper[static_cast<std::size_t>(k)]);

  CaseSetup s{.grid = grid,
              .observations = std::move(obs),
              .prior = std::move(prior),
              .forward = {},
              .constraints = std::move(constraints),
              .truth_params = truth,
              .truth_field = std::move(truth_field),
              .field_params = nkl,
              .source_names = {"x_s", "y_s", "S_1", "S_2", "S_3", "S_4", "S_5", "S_6"},
              .field_of = {},
              .basis = basis,
              .training_image = nullptr};
  s.forward = [cfg, basis, nkl](const Eigen::VectorXd& m) {
    return gaussian_forward(cfg, param::kl_realize(*basis, m.head(nkl)), m.tail(8));
  };
  s.field_of = [basis, nkl](const Eigen::VectorXd& m) {
    return param::kl_realize(*basis, m.head(nkl));
  };
  return s;
}

CaseSetup build_case2(const ExperimentConfig& cfg) {
  if (cfg.model != Model::channel) throw InvalidInput("build_case2 needs the channel model");
  cfg.validate();
  const ChannelCase& c = cfg.channel;
  const Grid2D grid(cfg.nx, cfg.ny, cfg.lx, cfg.ly);
  const Grid2D ti_grid(c.ti_size, c.ti_size, c.ti_size - 1.0, c.ti_size - 1.0);
  RngStream ti_rng(c.ti_seed, 7);
  auto ti = std::make_shared<const param::TrainingImage>(
      param::generate_channel_ti(ti_grid, c.channels, ti_rng));

  RngStream truth_rng(cfg.seeds.truth, 2);
  ScalarField truth_field = param::direct_sampling(*ti, grid, {}, c.ds, truth_rng);

  const Eigen::VectorXd clean = channel_forward(cfg, truth_field);
  const std::vector<int> nodes = channel_obs_nodes(cfg, grid);
  ObservationSet obs;
  obs.noise_std = Eigen::VectorXd::Constant(clean.size(), c.noise_std);
  for (int t = 0; t < c.obs_count; ++t)
    for (int n : nodes)
      obs.labels.push_back({ObsKind::head, grid.x(grid.col(n)), grid.y(grid.row(n)),
                            obs_step(c, t + 1) * c.flow_dt});
  RngStream noise_rng(cfg.seeds.noise, 1);
  obs.values = clean + obs.noise_std.cwiseProduct(noise_rng.normal_vector(clean.size()));

  Ensemble prior;
  prior.params.resize(grid.size(), cfg.ensemble_size);
  parallel_for(cfg.ensemble_size, cfg.workers, [&](int m) {
    RngStream rng(cfg.seeds.prior, static_cast<std::uint64_t>(m) + 1);
    prior.params.col(m) = param::direct_sampling(*ti, grid, {}, c.ds, rng).values();
  });

  CaseSetup s{.grid = grid,
              .observations = std::move(obs),
              .prior = std::move(prior),
              .forward = {},
              .constraints = {},
              .truth_params = truth_field.values(),
              .truth_field = std::move(truth_field),
              .field_params = grid.size(),
              .source_names = {},
              .field_of = {},
              .basis = nullptr,
              .training_image = ti};
  s.forward = [cfg, grid](const Eigen::VectorXd& m) {
    return channel_forward(cfg, ScalarField(grid, m));
  };
  s.field_of = [grid](const Eigen::VectorXd& m) { return ScalarField(grid, m); };
  return s;
}

smoother::ForwardModel make_forward(const ExperimentConfig& cfg) {
  cfg.validate();
  const Grid2D grid(cfg.nx, cfg.ny, cfg.lx, cfg.ly);
  if (cfg.model == Model::channel)
    return [cfg, grid](const Eigen::VectorXd& m) {
      return channel_forward(cfg, ScalarField(grid, m));
    };
  auto basis = std::make_shared<const param::KLBasis>(
      param::build_kl_basis(cfg.gaussian.covariance, grid, cfg.gaussian.n_kl));
  const Eigen::Index nkl = cfg.gaussian.n_kl;
  return [cfg, basis, nkl](const Eigen::VectorXd& m) {
    if (m.size() != nkl + 8) throw InvalidInput("member has the wrong parameter count");
    return gaussian_forward(cfg, param::kl_realize(*basis, m.head(nkl)), m.tail(8));
  };
}

CaseSetup build_case(const ExperimentConfig& cfg) {
  return cfg.model == Model::gaussian ? build_case1(cfg) : build_case2(cfg);
}

smoother::AssimilationConfig assimilation_config(const ExperimentConfig& cfg,
                                                 const CaseSetup& setup) {
  smoother::AssimilationConfig a;
  a.method = cfg.method;
  a.schedule = cfg.mda_alphas.empty() ? smoother::mda_schedule(cfg.n_iter)
                                      : smoother::MdaSchedule::custom(cfg.mda_alphas);
  a.constraints = setup.constraints;
  a.network = neural::NetworkSpec::residual_stack(
      static_cast<int>(setup.observations.size()), static_cast<int>(setup.prior.param_dim()),
      cfg.network.widths, cfg.network.preserving_per_stage);
  a.network.output_activation = cfg.network.output_activation;
  a.network.batchnorm = cfg.network.batchnorm;
  a.train = cfg.network.train;
  a.train.seed = cfg.seeds.training;
  a.seed = splitmix64(cfg.seeds.noise ^ 0x9e3779b97f4a7c15ULL);
  a.workers = cfg.workers;
  return a;
}

}  // namespace ensmooth::experiment

#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "ensmooth/error.hpp"
#include "ensmooth/experiment.hpp"
#include "ensmooth/io.hpp"

namespace ex = ensmooth::experiment;
namespace io = ensmooth::io;

namespace {

struct CommonOptions {
  std::string preset;
  std::string config;
  std::optional<std::uint64_t> seed_bundle;
  std::optional<int> workers;
  std::string out;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--preset", o.preset, "preset name (see `ensmooth presets`)");
  app->add_option("--config", o.config, "JSON config applied on top of the preset");
  app->add_option("--seed-bundle", o.seed_bundle, "derive all four seeds from this index");
  app->add_option("--workers", o.workers, "threads for forward-model runs")
      ->check(CLI::PositiveNumber);
}

ex::ExperimentConfig resolve(const CommonOptions& o) {
  nlohmann::json overrides = nlohmann::json::object();
  if (!o.config.empty()) {
    try {
      overrides = nlohmann::json::parse(io::read_text(o.config));
    } catch (const nlohmann::json::exception& e) {
      throw ensmooth::InvalidInput("cannot parse " + o.config + ": " + e.what());
    }
  }
  std::string preset = o.preset;
  if (preset.empty() && overrides.is_object() && overrides.contains("preset"))
    preset = overrides["preset"].get<std::string>();
  if (preset.empty()) preset = "gaussian_case1";
  if (overrides.is_object() && overrides.contains("preset") &&
      overrides["preset"].get<std::string>() != preset)
    throw ensmooth::InvalidInput("--preset disagrees with the config file's preset");
  ex::ExperimentConfig cfg = ex::apply_overrides(ex::preset_config(preset), overrides);
  if (o.seed_bundle) cfg.seeds = ex::SeedBundle::from_index(*o.seed_bundle);
  if (o.workers) cfg.workers = *o.workers;
  if (!o.out.empty()) cfg.out_dir = o.out;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble smoother experiments with Kalman or learned updates"};
  app.require_subcommand(1);

  CommonOptions run_opt;
  std::string method;
  auto* run = app.add_subcommand("run", "build a case, assimilate, write metrics");
  add_common(run, run_opt);
  run->add_option("--method", method, "kalman or dl")->check(CLI::IsMember({"kalman", "dl"}));
  run->add_option("--out", run_opt.out, "output directory");

  std::string metrics_dir;
  auto* metrics = app.add_subcommand("metrics", "recompute metrics from a run directory");
  metrics->add_option("dir", metrics_dir, "run directory")->required();

  CommonOptions prior_opt;
  auto* gen = app.add_subcommand("gen-prior", "write truth, observations and prior ensemble");
  add_common(gen, prior_opt);
  gen->add_option("--out", prior_opt.out, "output directory")->required();

  CommonOptions fwd_opt;
  std::string ensemble_in, ensemble_out;
  auto* fwd = app.add_subcommand("forward", "simulate outputs for an ensemble snapshot");
  add_common(fwd, fwd_opt);
  fwd->add_option("--ensemble", ensemble_in, "input snapshot base path")->required();
  fwd->add_option("--out", ensemble_out, "output snapshot base path")->required();

  auto* presets = app.add_subcommand("presets", "list presets, or print one as JSON");
  std::string show;
  presets->add_option("name", show, "preset to print");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ex::ExperimentConfig cfg = resolve(run_opt);
      if (!method.empty()) cfg.method = ensmooth::smoother::method_from_string(method);
      ex::run(cfg, &std::cerr);
      std::cout << io::read_text(cfg.out_dir / "summary.csv");
    } else if (*metrics) {
      ex::metrics(metrics_dir);
      std::cout << io::read_text(std::filesystem::path(metrics_dir) / "summary.csv");
    } else if (*gen) {
      const ex::ExperimentConfig cfg = resolve(prior_opt);
      std::filesystem::create_directories(cfg.out_dir);
      const ex::CaseSetup setup = ex::build_case(cfg);
      io::write_text(cfg.out_dir / "config.json", ex::to_json(cfg).dump(2) + "\n");
      io::save_field(setup.truth_field, cfg.out_dir / "truth_field");
      io::save_matrix(setup.truth_params, cfg.out_dir / "truth_params");
      io::save_observations(setup.observations, cfg.out_dir / "observations.json");
      io::save_ensemble(setup.prior, cfg.out_dir / "prior");
      std::cout << "wrote " << setup.prior.members() << " members to "
                << (cfg.out_dir / "prior").string() << "\n";
    } else if (*fwd) {
      const ex::ExperimentConfig cfg = resolve(fwd_opt);
      ensmooth::Ensemble e = io::load_ensemble(ensemble_in);
      e.outputs = ensmooth::smoother::evaluate_members(e.params, ex::make_forward(cfg),
                                                       cfg.workers);
      io::save_ensemble(e, ensemble_out);
      std::cout << "simulated " << e.members() << " members, " << e.output_dim()
                << " outputs each\n";
    } else if (*presets) {
      if (show.empty()) {
        for (const auto& n : ex::preset_names()) std::cout << n << "\n";
      } else {
        std::cout << ex::to_json(ex::preset_config(show)).dump(2) << "\n";
      }
    }
  } catch (const ensmooth::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <chrono>
#include <ostream>

#include "ensmooth/error.hpp"
#include "ensmooth/experiment.hpp"
#include "ensmooth/io.hpp"

namespace ensmooth::experiment {

namespace fs = std::filesystem;

void run(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  fs::remove(out / "FAILED");
  const auto started = std::chrono::steady_clock::now();
  auto note = [&](const std::string& msg) {
    if (!log) return;
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    *log << "[" << static_cast<long>(s) << "s] " << msg << std::endl;
  };

  try {
    io::write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
    note("building " + cfg.preset + " (" + std::to_string(cfg.ensemble_size) + " members)");
    CaseSetup setup = build_case(cfg);
    io::save_field(setup.truth_field, out / "truth_field");
    io::save_matrix(setup.truth_params, out / "truth_params");
    io::save_observations(setup.observations, out / "observations.json");
    if (setup.basis) param::save_kl_basis(*setup.basis, out / "kl_basis");

    smoother::AssimilationConfig acfg = assimilation_config(cfg, setup);
    acfg.on_snapshot = [&out](const Ensemble& e) {
      io::save_ensemble(e, out / ("ens_t" + std::to_string(e.iteration)));
    };
    acfg.on_log = note;
    note("assimilating with " + smoother::to_string(cfg.method));
    const smoother::AssimilationResult result =
        smoother::run_assimilation(setup.prior, setup.observations, setup.forward, acfg);

    io::CsvWriter runlog(out / "run_log.csv", {"iteration", "alpha", "mean_misfit", "epochs",
                                               "train_loss", "validation_loss"});
    for (const smoother::IterationRecord& r : result.log)
      runlog.row(std::vector<double>{static_cast<double>(r.iteration), r.alpha, r.mean_misfit,
                                     static_cast<double>(r.epochs), r.train_loss,
                                     r.validation_loss});
    metrics(out);
    note("done");
  } catch (const std::exception& e) {
    io::write_text(out / "FAILED", std::string(e.what()) + "\n");
    throw;
  }
}

}  // namespace ensmooth::experiment

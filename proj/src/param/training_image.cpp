#include <cmath>
#include <numbers>

#include "ensmooth/error.hpp"
#include "ensmooth/io.hpp"
#include "ensmooth/mps.hpp"

namespace ensmooth::param {

double TrainingImage::high_fraction() const {
  const auto& v = field.values();
  return static_cast<double>((v.array() == high).count()) / static_cast<double>(v.size());
}

TrainingImage TrainingImage::from_field(ScalarField f, double low, double high) {
  if (!(low < high)) throw InvalidInput("palette must satisfy low < high");
  for (Eigen::Index k = 0; k < f.values().size(); ++k)
    if (f[static_cast<int>(k)] != low && f[static_cast<int>(k)] != high)
      throw InvalidInput("training image holds a value outside the palette");
  return TrainingImage{std::move(f), low, high};
}

TrainingImage generate_channel_ti(const Grid2D& grid, const ChannelOptions& opt,
                                  RngStream& rng) {
  if (opt.n_channels < 0) throw InvalidInput("channel count must be nonnegative");
  if (!(opt.width_min > 0.0) || opt.width_max < opt.width_min ||
      !(opt.width_max < grid.ly()))
    throw InvalidInput("channel width must be positive and below the domain height");
  if (opt.amplitude_min < 0.0 || opt.amplitude_max < opt.amplitude_min ||
      !(opt.wavelength_min > 0.0) || opt.wavelength_max < opt.wavelength_min)
    throw InvalidInput("bad channel amplitude/wavelength ranges");
  if (!(opt.low < opt.high)) throw InvalidInput("palette must satisfy low < high");
  if (opt.target_fraction && !(*opt.target_fraction >= 0.0 && *opt.target_fraction <= 1.0))
    throw InvalidInput("target fraction must lie in [0, 1]");

  Eigen::VectorXd v = Eigen::VectorXd::Constant(grid.size(), opt.low);
  long high_count = 0;
  const double total = static_cast<double>(grid.size());
  for (int c = 0; c < opt.n_channels; ++c) {
    if (opt.target_fraction && high_count / total >= *opt.target_fraction) break;
    const double amp = rng.uniform(opt.amplitude_min, opt.amplitude_max);
    const double wavelength = rng.uniform(opt.wavelength_min, opt.wavelength_max);
    const double width = rng.uniform(opt.width_min, opt.width_max);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double y0 = rng.uniform(0.0, grid.ly());

    Eigen::VectorXd next = v;
    long next_count = high_count;
    for (int i = 0; i < grid.nx(); ++i) {
      const double yc =
          y0 + amp * std::sin(2.0 * std::numbers::pi * grid.x(i) / wavelength + phase);
      for (int j = 0; j < grid.ny(); ++j) {
        const int n = grid.index(i, j);
        if (std::abs(grid.y(j) - yc) <= 0.5 * width && next[n] != opt.high) {
          next[n] = opt.high;
          ++next_count;
        }
      }
    }
    // Stop at whichever side of the target is closer.
    if (opt.target_fraction && next_count / total > *opt.target_fraction &&
        next_count / total - *opt.target_fraction >
            *opt.target_fraction - high_count / total)
      break;
    v = std::move(next);
    high_count = next_count;
  }
  return TrainingImage{ScalarField(grid, std::move(v)), opt.low, opt.high};
}

void save_training_image(const TrainingImage& ti, const std::filesystem::path& base) {
  io::save_field(ti.field, base);
}

TrainingImage load_training_image(const std::filesystem::path& base, double low,
                                  double high) {
  return TrainingImage::from_field(io::load_field(base), low, high);
}

}  // namespace ensmooth::param

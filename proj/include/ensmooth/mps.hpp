#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ensmooth/rng.hpp"
#include "ensmooth/types.hpp"

namespace ensmooth::param {

/// Two-facies categorical image: every value is low or high.
struct TrainingImage {
  ScalarField field;
  double low = 0.5;
  double high = 2.3;

  const Grid2D& grid() const noexcept { return field.grid(); }
  /// Fraction of nodes holding the high facies.
  double high_fraction() const;
  /// Wraps a field, throwing InvalidInput if any value is off the palette.
  static TrainingImage from_field(ScalarField f, double low, double high);
};

/// Sinusoidal high-conductivity channels crossing the x extent of a low
/// background. Lengths are in the grid's physical units.
struct ChannelOptions {
  int n_channels = 40;
  double amplitude_min = 4.0;
  double amplitude_max = 14.0;
  double wavelength_min = 60.0;
  double wavelength_max = 160.0;
  double width_min = 5.0;
  double width_max = 9.0;
  double low = 0.5;
  double high = 2.3;
  /// When set, channels are added (up to n_channels) until the high-facies
  /// fraction first reaches this value.
  std::optional<double> target_fraction = 0.2667;
};

TrainingImage generate_channel_ti(const Grid2D& grid, const ChannelOptions& opt,
                                  RngStream& rng);

void save_training_image(const TrainingImage& ti, const std::filesystem::path& base);
TrainingImage load_training_image(const std::filesystem::path& base, double low,
                                  double high);

struct DsParams {
  int n_neighbors = 30;
  double threshold = 0.1;
  double scan_fraction = 0.3;

  void validate() const;
};

struct ConditioningPoint {
  int node = 0;
  double value = 0.0;
};

/// Direct-sampling multiple-point simulation of a categorical field on
/// `target`. TI and target share node spacing: neighbour lags are in nodes.
ScalarField direct_sampling(const TrainingImage& ti, const Grid2D& target,
                            const std::vector<ConditioningPoint>& conditioning,
                            const DsParams& ds, RngStream& rng);

}  // namespace ensmooth::param

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace ensmooth {

/// Seeded random stream. Equal (seed, stream) pairs give equal sequences.
/// Not thread-safe: hand each concurrent task its own child stream.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Independent stream derived from this stream's identity (not its state).
  RngStream child(std::uint64_t id) const;

  double normal();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace ensmooth

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ensmooth/rng.hpp"

namespace ensmooth::neural {

/// A reducing block projects its skip path to the new width (dense + BN)
/// before the residual sum; a preserving block adds its input unchanged.
enum class BlockKind { reducing, preserving };
enum class OutputActivation { linear, tanh };

struct BlockSpec {
  BlockKind kind = BlockKind::preserving;
  int width = 0;
};

struct NetworkSpec {
  int input_dim = 0;
  int output_dim = 0;
  std::vector<BlockSpec> blocks;
  OutputActivation output_activation = OutputActivation::linear;
  bool batchnorm = true;

  /// For each width: a reducing block when the width changes (or for the
  /// first stage), then `preserving_per_stage` preserving blocks.
  static NetworkSpec residual_stack(int input_dim, int output_dim,
                                    const std::vector<int>& widths,
                                    int preserving_per_stage = 1);
  void validate() const;
};

/// One named tensor inside the flat parameter vector.
struct ParamSlot {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
};

enum class Mode { train, inference };

/// Intermediate values of a train-mode forward pass, consumed by backprop and
/// by the running-statistics update.
struct NormCache {
  Eigen::MatrixXd xhat;
  Eigen::VectorXd inv_std;
  Eigen::VectorXd mean;
  Eigen::VectorXd var;  // biased batch variance
};

struct BlockCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd hidden;  // ReLU output inside the block
  Eigen::MatrixXd sum;     // main + skip, before the final ReLU
  NormCache norm1, norm2, norm_proj;
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  Eigen::MatrixXd head_input;
  Eigen::MatrixXd output;
};

/// Residual dense network with batch normalization. All trainable values live
/// in one flat vector so optimizers and gradient checks treat them uniformly.
class Network {
 public:
  explicit Network(NetworkSpec spec);
  /// He-normal dense weights, zero biases, unit BN scale.
  void initialize(RngStream& rng);

  const NetworkSpec& spec() const noexcept { return spec_; }
  Eigen::VectorXd& parameters() noexcept { return params_; }
  const Eigen::VectorXd& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept {
    return static_cast<std::size_t>(params_.size());
  }
  const std::vector<ParamSlot>& slots() const noexcept { return slots_; }
  const ParamSlot& slot(const std::string& name) const;
  Eigen::Map<Eigen::MatrixXd> tensor(const ParamSlot& s);

  /// Running batchnorm statistics (means then variances, per BN layer).
  Eigen::VectorXd& running_stats() noexcept { return running_; }
  const Eigen::VectorXd& running_stats() const noexcept { return running_; }

  /// Batched forward pass (one sample per column). Train mode normalizes with
  /// batch statistics and fills `cache` when given.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Mode mode,
                          ForwardCache* cache = nullptr) const;

  /// Inference on each column independently, so a column's result never
  /// depends on the rest of the batch.
  Eigen::MatrixXd infer(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd infer(const Eigen::VectorXd& x) const;

  /// Blend batch statistics from a train-mode pass into the running stats.
  void update_running_stats(const ForwardCache& cache, double momentum);

 private:
  friend struct Backprop;

  struct DenseRef {
    std::size_t w = 0;  // offset of the (out x in) weights
    std::size_t b = 0;  // offset of the bias, npos when absent
    int in = 0;
    int out = 0;
  };
  struct NormRef {
    std::size_t gamma = 0;
    std::size_t beta = 0;
    std::size_t running = 0;  // offset into running_ (mean, then variance)
    int dim = 0;
    bool active = false;
  };
  struct Block {
    BlockKind kind;
    DenseRef dense1, dense2, proj;
    NormRef norm1, norm2, norm_proj;
  };

  DenseRef add_dense(const std::string& name, int in, int out, bool bias);
  NormRef add_norm(const std::string& name, int dim);

  NetworkSpec spec_;
  std::vector<ParamSlot> slots_;
  std::vector<Block> blocks_;
  DenseRef head_;
  Eigen::VectorXd params_;
  Eigen::VectorXd running_;
};

inline constexpr double kNormEpsilon = 1e-5;

/// Mean squared error over batch and output dims, with exact gradients for
/// the train-mode graph (batch statistics included).
struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};
LossAndGradient loss_and_gradients(const Network& net, const Eigen::MatrixXd& x,
                                   const Eigen::MatrixXd& y,
                                   ForwardCache* cache = nullptr);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 256;
  int max_epochs = 100;
  double validation_fraction = 0.1;
  int patience = 10;
  double bn_momentum = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  explicit AdamState(Eigen::Index n = 0)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// Bias-corrected Adam update in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state, const TrainConfig& cfg);
void adam_step(Network& net, const Eigen::VectorXd& grads, AdamState& state,
               const TrainConfig& cfg);

/// Per-dimension standardization of inputs and outputs.
struct Scaler {
  static constexpr double kStdFloor = 1e-8;

  Eigen::VectorXd in_mean, in_std, out_mean, out_std;

  /// Returns the number of dimensions where the std floor engaged.
  int fit(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs);
  Eigen::MatrixXd standardize_inputs(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd standardize_outputs(const Eigen::MatrixXd& y) const;
  Eigen::MatrixXd restore_inputs(const Eigen::MatrixXd& z) const;
  Eigen::MatrixXd restore_outputs(const Eigen::MatrixXd& z) const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;  // empty without a validation split
  int best_epoch = -1;                  // 0-based
  std::vector<std::string> warnings;
};

struct FitResult {
  Network net;
  Scaler scaler;
  TrainHistory history;
};

/// Minibatch Adam on standardized pairs (one sample per column). Keeps the
/// parameters with the best validation loss, or the last epoch when the
/// validation fraction is zero.
FitResult fit(const NetworkSpec& spec, const Eigen::MatrixXd& inputs,
              const Eigen::MatrixXd& outputs, const TrainConfig& cfg);

/// standardize -> infer -> restore, column by column.
Eigen::VectorXd predict_update(const Network& net, const Scaler& scaler,
                               const Eigen::VectorXd& innovation);
Eigen::MatrixXd predict_updates(const Network& net, const Scaler& scaler,
                                const Eigen::MatrixXd& innovations);

void save_network(const Network& net, const Scaler& scaler,
                  const std::filesystem::path& base);
std::pair<Network, Scaler> load_network(const std::filesystem::path& base);

}  // namespace ensmooth::neural

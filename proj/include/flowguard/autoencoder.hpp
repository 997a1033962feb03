#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowguard/featurize.hpp"

namespace flowguard {

/// Nonlinearity of the LSTM candidate and cell output; gates stay logistic.
enum class CellActivation : std::uint32_t { Tanh = 0, Relu = 1 };

/// Shape of one sequence autoencoder.
///
/// Encoder: stacked LSTM layers of `encoderWidths` (outer to inner); only the
/// innermost layer's final hidden state is kept. Bridge: that state is
/// repeated `windowSize` times. Decoder: stacked LSTM layers with the
/// encoder widths reversed, then a per-timestep affine map back to
/// `inputWidth` with a logistic activation.
struct Architecture {
  int inputWidth = static_cast<int>(kEventWidth);
  std::vector<int> encoderWidths{128, 64, 32};
  int windowSize = 3;
  CellActivation activation = CellActivation::Relu;

  std::vector<int> decoderWidths() const { return {encoderWidths.rbegin(), encoderWidths.rend()}; }
  std::size_t layer_count() const { return 2 * encoderWidths.size(); }
  Eigen::Index parameter_count() const;
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

/// Windows packed for batched evaluation: column `t * batch + b` holds
/// timestep t of sequence b.
struct SequenceBatch {
  Eigen::MatrixXd values;  // inputWidth x (windowSize * batch)
  int windowSize = 0;
  int batch = 0;

  static SequenceBatch pack(std::span<const WindowedSequence* const> windows);
  static SequenceBatch pack(std::span<const WindowedSequence> windows);
};

class SequenceAutoencoder {
 public:
  SequenceAutoencoder(Architecture arch, Eigen::VectorXd params);

  /// Glorot-uniform weights, zero biases; deterministic under `seed`.
  static SequenceAutoencoder initialize(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  int windowSize() const { return arch_.windowSize; }
  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& parameters() { return params_; }

  /// W x inputWidth reconstruction with entries in (0,1). Throws
  /// std::invalid_argument on a shape mismatch or non-finite input.
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& window) const;

  /// Reconstruction of every sequence in `batch`, same layout as the input.
  Eigen::MatrixXd reconstruct(const SequenceBatch& batch) const;

  /// Mean squared error over all entries of the batch.
  double loss(const SequenceBatch& batch) const;

  /// Loss plus its gradient with respect to parameters() (reverse mode
  /// through the unrolled sequence).
  double loss_and_gradient(const SequenceBatch& batch, Eigen::VectorXd& gradient) const;

  /// Per-window MSE, evaluated in batches.
  std::vector<double> reconstruction_errors(std::span<const WindowedSequence> windows) const;

  bool operator==(const SequenceAutoencoder& o) const {
    return arch_ == o.arch_ && params_.size() == o.params_.size() && params_ == o.params_;
  }

 private:
  struct Trace;

  void forward(const SequenceBatch& batch, Trace& trace) const;

  Architecture arch_;
  Eigen::VectorXd params_;
};

/// Mean over all entries of the squared difference; throws
/// std::invalid_argument when shapes differ.
double reconstruction_error(const Eigen::MatrixXd& window, const Eigen::MatrixXd& reconstruction);

struct TrainConfig {
  int epochs = 15;
  int batchSize = 32;
  double learningRate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 42;
  int windowSize = 3;

  /// Throws std::invalid_argument for non-positive counts or rates.
  void validate() const;
};

struct TrainingHistory {
  std::vector<double> epochLoss;  // mean batch loss per epoch
};

/// Adam over a flat parameter vector.
class AdamOptimizer {
 public:
  AdamOptimizer(Eigen::Index size, double beta1, double beta2, double epsilon);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient, double learningRate);
  long steps() const { return t_; }

 private:
  Eigen::VectorXd m_, v_;
  double beta1_, beta2_, epsilon_;
  long t_ = 0;
};

/// Initializes from config.seed and runs mini-batch Adam.
SequenceAutoencoder train(std::span<const WindowedSequence> windows, const TrainConfig& config,
                          const Architecture& arch = {}, TrainingHistory* history = nullptr);

/// Continues training `model` in place with a fresh optimizer state.
/// `epochs` may be 0 here (no-op) unlike in train().
void continue_training(SequenceAutoencoder& model, std::span<const WindowedSequence> windows,
                       const TrainConfig& config, TrainingHistory* history = nullptr);

/// FNV-1a digest of the parameter bytes.
std::uint64_t parameter_digest(const Eigen::VectorXd& params);

}  // namespace flowguard

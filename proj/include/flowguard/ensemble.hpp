#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowguard/autoencoder.hpp"
#include "flowguard/featurize.hpp"
#include "flowguard/trace_model.hpp"

namespace flowguard {

struct EnsembleMember {
  SequenceAutoencoder model;
  double threshold = 0;

  bool operator==(const EnsembleMember&) const = default;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::uint64_t trainFlows = 0;
  std::uint64_t validationFlows = 0;
  std::uint32_t epochs = 0;
  std::uint32_t batchSize = 0;
  double learningRate = 0;
  std::uint32_t updates = 0;  // fine-tuning rounds applied since training

  bool operator==(const TrainingMetadata&) const = default;
};

/// Three autoencoders (window sizes 3, 5, 10) with their thresholds and the
/// featurization state they were trained against.
struct TrainedEnsemble {
  CharEmbedder embedder;
  FeatureStats stats;
  std::vector<EnsembleMember> members;  // ascending window size
  TrainingMetadata metadata;

  const EnsembleMember& member(int windowSize) const;
  std::map<int, double> thresholds() const;
  /// Digest of architecture and training hyperparameters.
  std::uint64_t config_digest() const;
  /// Throws std::invalid_argument unless the window sizes are exactly
  /// {3, 5, 10} and every threshold is positive and finite.
  void validate() const;

  bool operator==(const TrainedEnsemble&) const = default;
};

using ProgressFn = std::function<void(int windowSize, int epoch, double loss)>;

struct EnsembleConfig {
  TrainConfig train;          // windowSize is set per member
  Architecture architecture;  // windowSize is set per member
  std::vector<int> windowSizes{3, 5, 10};
  ProgressFn progress;
};

/// Normalized windows of size `windowSize` for every flow, in flow order.
std::vector<WindowedSequence> flow_windows(std::span<const FunctionFlow> flows,
                                           const CharEmbedder& embedder, const FeatureStats& stats,
                                           int windowSize);

/// Raw event vectors of all flows, concatenated.
std::vector<EventVector> raw_vectors(std::span<const FunctionFlow> flows, const CharEmbedder& embedder);

/// Fits normalization on `train`, trains one autoencoder per window size and
/// calibrates thresholds on `validation`.
TrainedEnsemble train_ensemble(std::span<const FunctionFlow> train,
                               std::span<const FunctionFlow> validation,
                               const EnsembleConfig& config, CharEmbedder embedder = CharEmbedder{});

/// Per window size, reconstruction errors of every validation window.
std::map<int, std::vector<double>> validation_errors(const TrainedEnsemble& ensemble,
                                                     std::span<const FunctionFlow> validation);

/// Recomputes each member's threshold from `validation`.
void calibrate_thresholds(TrainedEnsemble& ensemble, std::span<const FunctionFlow> validation);

struct FlowSplit {
  std::vector<FunctionFlow> train;
  std::vector<FunctionFlow> validation;
};

/// Seeded split at flow granularity; the train side receives
/// ceil(n * trainRatio) flows. Both sides keep the input order. Throws
/// std::invalid_argument when either side would be empty.
FlowSplit split_flows(std::span<const FunctionFlow> flows, double trainRatio, std::uint64_t seed);

struct UpdateComposition {
  std::size_t newCount = 0;
  std::size_t oldCount = 0;
};

/// Old windows to mix with `newCount` new ones so that old data makes up
/// `oldFraction` of the update set, capped by the pool size.
UpdateComposition compose_update_set(std::size_t newCount, std::size_t poolSize, double oldFraction);

struct UpdateConfig {
  double oldFraction = 0.1;
  double learningRate = 1e-4;
  int epochs = 15;
  int batchSize = 32;
  std::uint64_t seed = 42;
  // When set, these original-training flows are used as the old data
  // instead of a uniform sample.
  std::optional<std::vector<std::string>> selectedOldFlows;
  ProgressFn progress;
};

/// Continues training every member on new data mixed with a sample of the
/// original training pool, keeps the original normalization, and
/// recalibrates thresholds on retained plus new validation flows.
TrainedEnsemble fine_tune(const TrainedEnsemble& ensemble, std::span<const FunctionFlow> newTrain,
                          std::span<const FunctionFlow> oldTrainingPool,
                          std::span<const FunctionFlow> retainedValidation,
                          std::span<const FunctionFlow> newValidation, const UpdateConfig& config);

}  // namespace flowguard

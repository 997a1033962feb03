#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "flowguard/trace_model.hpp"

namespace flowguard {

inline constexpr std::size_t kEmbeddingDim = 4;
inline constexpr std::size_t kCategoricalFields = 5;
inline constexpr std::size_t kEventWidth = kCategoricalFields * kEmbeddingDim + 3;  // 23
inline constexpr int kWindowSizes[] = {3, 5, 10};

/// Column offsets inside an EventVector.
namespace slot {
inline constexpr std::size_t kApplicationName = 0;
inline constexpr std::size_t kEventName = 4;
inline constexpr std::size_t kEventType = 8;
inline constexpr std::size_t kEventParentName = 12;
inline constexpr std::size_t kEventTargetResource = 16;
inline constexpr std::size_t kDuration = 20;
inline constexpr std::size_t kRelativeStart = 21;
inline constexpr std::size_t kDepth = 22;
}  // namespace slot

using Embedding = std::array<double, kEmbeddingDim>;
using EventVector = std::array<double, kEventWidth>;

/// Deterministic 4-dimensional token embedding.
///
/// Tokens are split into character trigrams of "^token$"; each trigram is
/// hashed (together with the seed) to a pseudo-random direction and the
/// directions are summed, so tokens sharing trigrams land near each other.
/// Each coordinate is then squashed into (0,1) with the standard normal CDF.
/// Entries of an optional table override the hashed embedding.
class CharEmbedder {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x5eedc0de2023ULL;

  explicit CharEmbedder(std::uint64_t seed = kDefaultSeed) : seed_(seed) {}

  /// Zero vector for the empty token.
  Embedding embed(std::string_view token) const;

  std::uint64_t seed() const { return seed_; }
  const std::map<std::string, Embedding>& table() const { return table_; }
  void set_entry(const std::string& token, const Embedding& value) { table_[token] = value; }

  /// Whitespace separated "token v0 v1 v2 v3" lines; `#` starts a comment.
  void load_table(const std::string& path);

  bool operator==(const CharEmbedder&) const = default;

 private:
  std::uint64_t seed_;
  std::map<std::string, Embedding> table_;
};

struct DerivedFeatures {
  double duration = 0;       // ms
  double relativeStart = 0;  // ms since the first event of the flow
  double depth = 1;          // 1 for roots and dangling parents
};

std::vector<DerivedFeatures> compute_derived_features(const FunctionFlow& flow);

/// One raw (unnormalized) vector per event.
std::vector<EventVector> vectorize_flow(const FunctionFlow& flow, const CharEmbedder& embedder);

struct FeatureStats {
  EventVector min{};
  EventVector max{};
  bool operator==(const FeatureStats&) const = default;
};

/// Per-dimension min and max; throws std::invalid_argument on empty input.
FeatureStats fit_normalization(std::span<const EventVector> vectors);

/// (x - min) / (max - min), 0 for constant dimensions. Not clamped.
EventVector apply_normalization(const EventVector& v, const FeatureStats& stats);

struct WindowedSequence {
  Eigen::MatrixXd window;  // W x kEventWidth, row per event
  std::string sourceFlowId;
  std::size_t offset = 0;
  std::size_t paddedCount = 0;

  int size() const { return static_cast<int>(window.rows()); }
};

/// Stride-1 sliding windows of `vectors`; a flow shorter than W yields one
/// window whose trailing rows are zero. Throws on empty input or a window
/// size outside {3, 5, 10}.
std::vector<WindowedSequence> make_windows(std::span<const EventVector> vectors, int windowSize,
                                           const std::string& sourceFlowId = {});

inline std::size_t window_count(std::size_t n, int windowSize) {
  const auto w = static_cast<std::size_t>(windowSize);
  return n > w ? n - w + 1 : 1;
}

/// vectorize + normalize.
std::vector<EventVector> featurize_flow(const FunctionFlow& flow, const CharEmbedder& embedder,
                                        const FeatureStats& stats);

}  // namespace flowguard

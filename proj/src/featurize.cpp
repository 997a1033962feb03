#include "flowguard/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flowguard {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in [-1, 1).
double signed_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-52 - 1.0;
}

}  // namespace

Embedding CharEmbedder::embed(std::string_view token) const {
  Embedding out{};
  if (token.empty()) return out;
  if (auto it = table_.find(std::string(token)); it != table_.end()) return it->second;

  const std::string padded = "^" + std::string(token) + "$";
  std::array<double, kEmbeddingDim> acc{};
  std::size_t grams = 0;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i, ++grams) {
    std::uint64_t state = fnv1a(std::string_view(padded).substr(i, 3)) ^ seed_;
    for (auto& a : acc) a += signed_unit(splitmix(state));
  }
  // Each component has variance 1/3; rescale the sum to unit variance.
  const double scale = std::sqrt(3.0 / static_cast<double>(grams));
  for (std::size_t d = 0; d < kEmbeddingDim; ++d)
    out[d] = 0.5 * std::erfc(-acc[d] * scale / std::sqrt(2.0));
  return out;
}

void CharEmbedder::load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding table " + path);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    Embedding e{};
    for (auto& v : e)
      if (!(fields >> v))
        throw std::runtime_error(path + ":" + std::to_string(number) + ": expected 4 values");
    table_[token] = e;
  }
}

std::vector<DerivedFeatures> compute_derived_features(const FunctionFlow& flow) {
  const auto& events = flow.events;
  std::vector<DerivedFeatures> out(events.size());
  if (events.empty()) return out;
  const Millis origin = events.front().startTime;
  for (std::size_t i = 0; i < events.size(); ++i) {
    out[i].duration = static_cast<double>(events[i].duration());
    out[i].relativeStart = static_cast<double>(events[i].startTime - origin);
  }
  // Parents resolve to earlier indices except for equal-start ties, so
  // resolve depth recursively with a guard against cycles among ties.
  std::vector<int> state(events.size(), 0);  // 0 new, 1 visiting, 2 done
  auto depth_of = [&](auto&& self, std::size_t i) -> double {
    if (state[i] == 2) return out[i].depth;
    if (state[i] == 1) return 1.0;
    state[i] = 1;
    const auto parent = resolve_parent(events, i);
    out[i].depth = parent ? self(self, *parent) + 1.0 : 1.0;
    state[i] = 2;
    return out[i].depth;
  };
  for (std::size_t i = 0; i < events.size(); ++i) depth_of(depth_of, i);
  return out;
}

std::vector<EventVector> vectorize_flow(const FunctionFlow& flow, const CharEmbedder& embedder) {
  const auto derived = compute_derived_features(flow);
  std::vector<EventVector> out(flow.events.size());
  for (std::size_t i = 0; i < flow.events.size(); ++i) {
    const auto& e = flow.events[i];
    auto& v = out[i];
    auto put = [&](std::size_t offset, std::string_view token) {
      const auto emb = embedder.embed(token);
      std::copy(emb.begin(), emb.end(), v.begin() + static_cast<std::ptrdiff_t>(offset));
    };
    put(slot::kApplicationName, e.applicationName);
    put(slot::kEventName, e.eventName);
    put(slot::kEventType, e.eventType);
    put(slot::kEventParentName, e.eventParentName.value_or(""));
    put(slot::kEventTargetResource, e.eventTargetResource.value_or(""));
    v[slot::kDuration] = derived[i].duration;
    v[slot::kRelativeStart] = derived[i].relativeStart;
    v[slot::kDepth] = derived[i].depth;
  }
  return out;
}

FeatureStats fit_normalization(std::span<const EventVector> vectors) {
  if (vectors.empty()) throw std::invalid_argument("fit_normalization: no training vectors");
  FeatureStats s;
  s.min = vectors.front();
  s.max = vectors.front();
  for (const auto& v : vectors)
    for (std::size_t d = 0; d < kEventWidth; ++d) {
      s.min[d] = std::min(s.min[d], v[d]);
      s.max[d] = std::max(s.max[d], v[d]);
    }
  return s;
}

EventVector apply_normalization(const EventVector& v, const FeatureStats& stats) {
  EventVector out{};
  for (std::size_t d = 0; d < kEventWidth; ++d) {
    const double range = stats.max[d] - stats.min[d];
    out[d] = range > 0 ? (v[d] - stats.min[d]) / range : 0.0;
  }
  return out;
}

std::vector<WindowedSequence> make_windows(std::span<const EventVector> vectors, int windowSize,
                                           const std::string& sourceFlowId) {
  if (vectors.empty()) throw std::invalid_argument("make_windows: empty flow");
  if (std::find(std::begin(kWindowSizes), std::end(kWindowSizes), windowSize) ==
      std::end(kWindowSizes))
    throw std::invalid_argument("make_windows: window size must be 3, 5 or 10");

  const std::size_t n = vectors.size();
  const auto w = static_cast<std::size_t>(windowSize);
  const std::size_t count = window_count(n, windowSize);
  std::vector<WindowedSequence> out;
  out.reserve(count);
  for (std::size_t offset = 0; offset < count; ++offset) {
    WindowedSequence ws;
    ws.window = Eigen::MatrixXd::Zero(windowSize, static_cast<Eigen::Index>(kEventWidth));
    ws.sourceFlowId = sourceFlowId;
    ws.offset = offset;
    const std::size_t rows = std::min(w, n - offset);
    ws.paddedCount = w - rows;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t d = 0; d < kEventWidth; ++d)
        ws.window(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = vectors[offset + r][d];
    out.push_back(std::move(ws));
  }
  return out;
}

std::vector<EventVector> featurize_flow(const FunctionFlow& flow, const CharEmbedder& embedder,
                                        const FeatureStats& stats) {
  auto vectors = vectorize_flow(flow, embedder);
  for (auto& v : vectors) v = apply_normalization(v, stats);
  return vectors;
}

}  // namespace flowguard

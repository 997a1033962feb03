#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "flowguard/detect.hpp"
#include "flowguard/ensemble.hpp"

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

}  // namespace

const EnsembleMember& TrainedEnsemble::member(int windowSize) const {
  for (const auto& m : members)
    if (m.model.windowSize() == windowSize) return m;
  throw std::out_of_range("ensemble has no autoencoder for window size " + std::to_string(windowSize));
}

std::map<int, double> TrainedEnsemble::thresholds() const {
  std::map<int, double> out;
  for (const auto& m : members) out[m.model.windowSize()] = m.threshold;
  return out;
}

std::uint64_t TrainedEnsemble::config_digest() const {
  std::ostringstream s;
  s << "flowguard-ensemble;epochs=" << metadata.epochs << ";batch=" << metadata.batchSize
    << ";lr=" << metadata.learningRate;
  for (const auto& m : members) {
    const auto& a = m.model.architecture();
    s << ";W=" << a.windowSize << ",in=" << a.inputWidth << ",act=" << static_cast<int>(a.activation) << ",enc=";
    for (int w : a.encoderWidths) s << w << '/';
  }
  return fnv1a(s.str());
}

void TrainedEnsemble::validate() const {
  std::vector<int> sizes;
  for (const auto& m : members) {
    sizes.push_back(m.model.windowSize());
    if (!(std::isfinite(m.threshold) && m.threshold > 0))
      throw std::invalid_argument("ensemble threshold must be positive and finite");
    if (m.model.architecture().inputWidth != static_cast<int>(kEventWidth))
      throw std::invalid_argument("ensemble feature width must be " + std::to_string(kEventWidth));
  }
  if (sizes != std::vector<int>{3, 5, 10})
    throw std::invalid_argument("ensemble must hold window sizes 3, 5 and 10");
  for (std::size_t d = 0; d < kEventWidth; ++d)
    if (stats.min[d] > stats.max[d]) throw std::invalid_argument("feature stats have min > max");
}

std::vector<WindowedSequence> flow_windows(std::span<const FunctionFlow> flows,
                                           const CharEmbedder& embedder, const FeatureStats& stats,
                                           int windowSize) {
  std::vector<WindowedSequence> out;
  for (const auto& f : flows) {
    const auto vectors = featurize_flow(f, embedder, stats);
    for (auto& w : make_windows(vectors, windowSize, f.functionFlowId)) out.push_back(std::move(w));
  }
  return out;
}

std::vector<EventVector> raw_vectors(std::span<const FunctionFlow> flows, const CharEmbedder& embedder) {
  std::vector<EventVector> out;
  for (const auto& f : flows) {
    auto v = vectorize_flow(f, embedder);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::map<int, std::vector<double>> validation_errors(const TrainedEnsemble& ensemble,
                                                     std::span<const FunctionFlow> validation) {
  std::map<int, std::vector<double>> out;
  for (const auto& m : ensemble.members) {
    const auto windows = flow_windows(validation, ensemble.embedder, ensemble.stats, m.model.windowSize());
    out[m.model.windowSize()] = m.model.reconstruction_errors(windows);
  }
  return out;
}

void calibrate_thresholds(TrainedEnsemble& ensemble, std::span<const FunctionFlow> validation) {
  if (validation.empty()) throw std::invalid_argument("threshold calibration needs validation flows");
  const auto errors = validation_errors(ensemble, validation);
  for (auto& m : ensemble.members) m.threshold = compute_threshold(errors.at(m.model.windowSize()));
}

TrainedEnsemble train_ensemble(std::span<const FunctionFlow> train,
                               std::span<const FunctionFlow> validation,
                               const EnsembleConfig& config, CharEmbedder embedder) {
  config.train.validate();
  if (train.empty()) throw std::invalid_argument("train_ensemble: no training flows");
  if (validation.empty()) throw std::invalid_argument("train_ensemble: no validation flows");

  TrainedEnsemble ens;
  ens.embedder = std::move(embedder);
  ens.stats = fit_normalization(raw_vectors(train, ens.embedder));
  ens.metadata.seed = config.train.seed;
  ens.metadata.trainFlows = train.size();
  ens.metadata.validationFlows = validation.size();
  ens.metadata.epochs = static_cast<std::uint32_t>(config.train.epochs);
  ens.metadata.batchSize = static_cast<std::uint32_t>(config.train.batchSize);
  ens.metadata.learningRate = config.train.learningRate;

  std::vector<int> sizes = config.windowSizes;
  std::sort(sizes.begin(), sizes.end());

  for (int w : sizes) {
    TrainConfig tc = config.train;
    tc.windowSize = w;
    tc.seed = config.train.seed + static_cast<std::uint64_t>(w);
    const auto windows = flow_windows(train, ens.embedder, ens.stats, w);
    TrainingHistory history;
    auto model = flowguard::train(windows, tc, config.architecture, &history);
    if (config.progress)
      for (std::size_t e = 0; e < history.epochLoss.size(); ++e)
        config.progress(w, static_cast<int>(e) + 1, history.epochLoss[e]);
    ens.members.push_back({std::move(model), 0.0});
  }

  calibrate_thresholds(ens, validation);
  return ens;
}

FlowSplit split_flows(std::span<const FunctionFlow> flows, double trainRatio, std::uint64_t seed) {
  if (!(trainRatio > 0 && trainRatio < 1))
    throw std::invalid_argument("split ratio must lie strictly between 0 and 1");
  const std::size_t n = flows.size();
  const auto trainCount = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * trainRatio - 1e-9));
  if (trainCount == 0 || trainCount >= n)
    throw std::invalid_argument("split would leave the training or validation set empty");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> inTrain(n, false);
  for (std::size_t k = 0; k < trainCount; ++k) inTrain[order[k]] = true;

  FlowSplit s;
  for (std::size_t k = 0; k < n; ++k) (inTrain[k] ? s.train : s.validation).push_back(flows[k]);
  return s;
}

UpdateComposition compose_update_set(std::size_t newCount, std::size_t poolSize, double oldFraction) {
  if (!(oldFraction >= 0 && oldFraction < 1))
    throw std::invalid_argument("old-data fraction must lie in [0, 1)");
  UpdateComposition c;
  c.newCount = newCount;
  const double wanted = static_cast<double>(newCount) * oldFraction / (1.0 - oldFraction);
  c.oldCount = std::min(poolSize, static_cast<std::size_t>(std::llround(wanted)));
  return c;
}

TrainedEnsemble fine_tune(const TrainedEnsemble& ensemble, std::span<const FunctionFlow> newTrain,
                          std::span<const FunctionFlow> oldTrainingPool,
                          std::span<const FunctionFlow> retainedValidation,
                          std::span<const FunctionFlow> newValidation, const UpdateConfig& config) {
  if (newTrain.empty()) throw std::invalid_argument("fine_tune: no new training data");
  if (!(config.learningRate >= 0)) throw std::invalid_argument("fine_tune: negative learning rate");

  TrainedEnsemble out = ensemble;
  std::vector<FunctionFlow> oldFlows;
  if (config.selectedOldFlows) {
    const std::set<std::string> wanted(config.selectedOldFlows->begin(), config.selectedOldFlows->end());
    for (const auto& f : oldTrainingPool)
      if (wanted.count(f.functionFlowId)) oldFlows.push_back(f);
  } else {
    oldFlows.assign(oldTrainingPool.begin(), oldTrainingPool.end());
  }

  for (auto& m : out.members) {
    const int w = m.model.windowSize();
    auto update = flow_windows(newTrain, out.embedder, out.stats, w);
    auto pool = flow_windows(oldFlows, out.embedder, out.stats, w);
    if (config.selectedOldFlows) {
      for (auto& p : pool) update.push_back(std::move(p));
    } else {
      const auto comp = compose_update_set(update.size(), pool.size(), config.oldFraction);
      std::vector<std::size_t> idx(pool.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::mt19937_64 rng(config.seed ^ (0xa5a5a5a5ULL * static_cast<std::uint64_t>(w)));
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(comp.oldCount);
      std::sort(idx.begin(), idx.end());
      for (std::size_t k : idx) update.push_back(std::move(pool[k]));
    }

    TrainConfig tc;
    tc.epochs = config.epochs;
    tc.batchSize = config.batchSize;
    tc.learningRate = config.learningRate;
    tc.seed = config.seed + static_cast<std::uint64_t>(w);
    tc.windowSize = w;
    TrainingHistory history;
    continue_training(m.model, update, tc, &history);
    if (config.progress)
      for (std::size_t e = 0; e < history.epochLoss.size(); ++e)
        config.progress(w, static_cast<int>(e) + 1, history.epochLoss[e]);
  }

  std::vector<FunctionFlow> validation(retainedValidation.begin(), retainedValidation.end());
  validation.insert(validation.end(), newValidation.begin(), newValidation.end());
  calibrate_thresholds(out, validation);
  out.metadata.updates += 1;
  return out;
}

}  // namespace flowguard

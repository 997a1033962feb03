#include "flowguard/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "flowguard/ensemble.hpp"

namespace flowguard {

void DbscanParams::validate() const {
  if (!(eps >= 0)) throw std::invalid_argument("DBSCAN eps must be nonnegative");
  if (minPts < 1) throw std::invalid_argument("DBSCAN minPts must be at least 1");
}

std::vector<int> dbscan_1d(std::span<const double> values, const DbscanParams& params) {
  params.validate();
  const std::size_t n = values.size();
  std::vector<int> label(n, kNoise);
  if (n == 0) return label;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = values[order[k]];

  // Neighbour counts via two pointers over the sorted values.
  std::vector<bool> core(n);
  std::size_t lo = 0, hi = 0;
  for (std::size_t k = 0; k < n; ++k) {
    while (v[k] - v[lo] > params.eps) ++lo;
    if (hi < k) hi = k;
    while (hi + 1 < n && v[hi + 1] - v[k] <= params.eps) ++hi;
    core[k] = hi - lo + 1 >= params.minPts;
  }

  // Consecutive core points closer than eps share a cluster.
  std::vector<int> sortedLabel(n, kNoise);
  int next = 0;
  std::size_t prevCore = n;
  for (std::size_t k = 0; k < n; ++k) {
    if (!core[k]) continue;
    if (prevCore == n || v[k] - v[prevCore] > params.eps) ++next;
    sortedLabel[k] = next - 1;
    prevCore = k;
  }

  // Border points: nearest core on the left wins (its cluster id is lower).
  std::vector<std::size_t> leftCore(n, n), rightCore(n, n);
  for (std::size_t k = 0, last = n; k < n; ++k) {
    if (core[k]) last = k;
    leftCore[k] = last;
  }
  for (std::size_t k = n, last = n; k-- > 0;) {
    if (core[k]) last = k;
    rightCore[k] = last;
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (core[k]) continue;
    if (leftCore[k] != n && v[k] - v[leftCore[k]] <= params.eps)
      sortedLabel[k] = sortedLabel[leftCore[k]];
    else if (rightCore[k] != n && v[rightCore[k]] - v[k] <= params.eps)
      sortedLabel[k] = sortedLabel[rightCore[k]];
  }

  for (std::size_t k = 0; k < n; ++k) label[order[k]] = sortedLabel[k];
  return label;
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (!(q >= 0 && q <= 1)) throw std::invalid_argument("percentile rank must lie in [0, 1]");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const double h = static_cast<double>(s.size() - 1) * q;
  const auto k = static_cast<std::size_t>(std::floor(h));
  if (k + 1 >= s.size()) return s.back();
  return s[k] + (h - static_cast<double>(k)) * (s[k + 1] - s[k]);
}

ThresholdResult compute_threshold_detailed(std::span<const double> validationErrors) {
  if (validationErrors.empty()) throw std::invalid_argument("compute_threshold: no validation errors");
  for (double e : validationErrors)
    if (!std::isfinite(e) || e < 0)
      throw std::invalid_argument("compute_threshold: errors must be finite and nonnegative");

  ThresholdResult r;
  r.eps = percentile(validationErrors, 0.99);
  r.minPts = 5;
  r.assignment = dbscan_1d(validationErrors, {r.eps, r.minPts});

  const int clusters = *std::max_element(r.assignment.begin(), r.assignment.end()) + 1;
  std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(clusters, 0)), 0);
  for (int a : r.assignment)
    if (a != kNoise) ++sizes[static_cast<std::size_t>(a)];

  const double bar = 0.05 * static_cast<double>(validationErrors.size());
  for (int c = 0; c < clusters; ++c)
    if (static_cast<double>(sizes[static_cast<std::size_t>(c)]) > bar) r.retainedClusters.push_back(c);

  if (r.retainedClusters.empty() && clusters > 0) {
    r.fellBack = true;
    r.retainedClusters.push_back(static_cast<int>(
        std::max_element(sizes.begin(), sizes.end()) - sizes.begin()));
  }

  double top = 0;
  if (clusters == 0) {
    r.fellBack = true;
    top = *std::max_element(validationErrors.begin(), validationErrors.end());
  } else {
    for (std::size_t k = 0; k < validationErrors.size(); ++k)
      if (std::find(r.retainedClusters.begin(), r.retainedClusters.end(), r.assignment[k]) !=
          r.retainedClusters.end())
        top = std::max(top, validationErrors[k]);
  }
  r.threshold = 2.0 * top;
  return r;
}

double compute_threshold(std::span<const double> validationErrors) {
  return compute_threshold_detailed(validationErrors).threshold;
}

std::string_view to_string(Verdict v) { return v == Verdict::Anomalous ? "anomalous" : "benign"; }

std::string_view to_string(Granularity g) { return g == Granularity::Window ? "window" : "flow"; }

void apply_thresholds(FlowDetection& d, const std::map<int, double>& thresholds) {
  d.triggeringWindowSizes.clear();
  d.maxError.clear();
  for (const auto& rec : d.windows) {
    auto [it, inserted] = d.maxError.try_emplace(rec.windowSize, rec.error);
    if (!inserted) it->second = std::max(it->second, rec.error);
    const auto th = thresholds.find(rec.windowSize);
    if (th == thresholds.end())
      throw std::invalid_argument("no threshold for window size " + std::to_string(rec.windowSize));
    if (rec.error > th->second &&
        std::find(d.triggeringWindowSizes.begin(), d.triggeringWindowSizes.end(), rec.windowSize) ==
            d.triggeringWindowSizes.end())
      d.triggeringWindowSizes.push_back(rec.windowSize);
  }
  std::sort(d.triggeringWindowSizes.begin(), d.triggeringWindowSizes.end());
  d.verdict = d.triggeringWindowSizes.empty() ? Verdict::Benign : Verdict::Anomalous;
}

DetectionReport score_flows(std::span<const FunctionFlow> flows, const TrainedEnsemble& ensemble,
                            const LabelMap* labels) {
  DetectionReport report(flows.size());
  std::vector<std::vector<EventVector>> features(flows.size());
  for (std::size_t f = 0; f < flows.size(); ++f) {
    if (flows[f].events.empty())
      throw std::invalid_argument("score_flow: flow \"" + flows[f].functionFlowId + "\" is empty");
    features[f] = featurize_flow(flows[f], ensemble.embedder, ensemble.stats);
    auto& d = report[f];
    d.functionFlowId = flows[f].functionFlowId;
    d.functionName = flows[f].functionName;
    d.applicationName = flows[f].applicationName;
    if (labels) d.label = labels->at(d.functionFlowId);
  }

  for (const auto& member : ensemble.members) {
    const int w = member.model.windowSize();
    std::vector<WindowedSequence> windows;
    std::vector<std::size_t> owner;
    for (std::size_t f = 0; f < flows.size(); ++f)
      for (auto& ws : make_windows(features[f], w, flows[f].functionFlowId)) {
        windows.push_back(std::move(ws));
        owner.push_back(f);
      }
    const auto errors = member.model.reconstruction_errors(windows);
    for (std::size_t k = 0; k < windows.size(); ++k)
      report[owner[k]].windows.push_back({windows[k].sourceFlowId, w, windows[k].offset, errors[k]});
  }

  const auto thresholds = ensemble.thresholds();
  for (auto& d : report) apply_thresholds(d, thresholds);
  return report;
}

FlowDetection score_flow(const FunctionFlow& flow, const TrainedEnsemble& ensemble) {
  return score_flows(std::span<const FunctionFlow>(&flow, 1), ensemble).front();
}

MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn,
                                  Granularity g) {
  MetricsReport m;
  m.granularity = g;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  auto ratio = [](std::size_t num, std::size_t den, bool& undefined) {
    undefined = den == 0;
    return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(tp, tp + fp, m.precisionUndefined);
  m.recall = ratio(tp, tp + fn, m.recallUndefined);
  m.fpr = ratio(fp, fp + tn, m.fprUndefined);
  m.fnr = ratio(fn, fn + tp, m.fnrUndefined);
  m.f1Undefined = m.precision + m.recall == 0;
  m.f1 = m.f1Undefined ? 0.0 : 2 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

MetricsReport evaluate_metrics(std::span<const FlowDetection> report, const LabelMap* labels,
                               Granularity granularity) {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& d : report) {
    AttackLabel label;
    if (labels)
      label = labels->at(d.functionFlowId);
    else if (d.label)
      label = *d.label;
    else
      throw std::invalid_argument("evaluate_metrics: no label for flow \"" + d.functionFlowId + "\"");

    const std::size_t weight = granularity == Granularity::Window ? d.windows.size() : 1;
    const bool positive = is_attack(label);
    const bool flagged = d.verdict == Verdict::Anomalous;
    if (positive && flagged) tp += weight;
    if (positive && !flagged) fn += weight;
    if (!positive && flagged) fp += weight;
    if (!positive && !flagged) tn += weight;
  }
  return metrics_from_counts(tp, fp, tn, fn, granularity);
}

}  // namespace flowguard

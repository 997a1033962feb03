#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowguard/trace_ingest.hpp"
#include "flowguard/trace_model.hpp"

namespace flowguard {

struct TrainedEnsemble;

struct DbscanParams {
  double eps = 0;
  std::size_t minPts = 1;
  void validate() const;
};

inline constexpr int kNoise = -1;

/// Density clustering on the real line. A point is core when at least
/// minPts points (itself included) lie within eps, inclusive. Clusters are
/// the connected components of core points plus the non-core points within
/// eps of them; such a border point joins the lowest-numbered cluster it
/// reaches. Cluster ids ascend with each cluster's minimum value.
std::vector<int> dbscan_1d(std::span<const double> values, const DbscanParams& params);

/// Linear interpolation between order statistics; q in [0, 1].
double percentile(std::span<const double> values, double q);

struct ThresholdResult {
  double threshold = 0;
  double eps = 0;
  std::size_t minPts = 0;
  std::vector<int> assignment;
  std::vector<int> retainedClusters;
  bool fellBack = false;
};

/// Threshold calibration over validation reconstruction errors: eps is the
/// 99th percentile, minPts 5; clusters holding more than 5% of the points
/// are kept and the threshold is twice the largest error inside them. When
/// no cluster clears the bar the largest cluster is used, and when there
/// are no clusters at all, every point.
ThresholdResult compute_threshold_detailed(std::span<const double> validationErrors);
double compute_threshold(std::span<const double> validationErrors);

enum class Verdict { Benign, Anomalous };
std::string_view to_string(Verdict v);

struct ReconstructionRecord {
  std::string sourceFlowId;
  int windowSize = 0;
  std::size_t offset = 0;
  double error = 0;
};

struct FlowDetection {
  std::string functionFlowId;
  std::string functionName;
  std::string applicationName;
  Verdict verdict = Verdict::Benign;
  std::vector<int> triggeringWindowSizes;
  std::map<int, double> maxError;  // window size -> largest window error
  std::vector<ReconstructionRecord> windows;
  std::optional<AttackLabel> label;
};

using DetectionReport = std::vector<FlowDetection>;

/// Anomalous iff some window error strictly exceeds the threshold of the
/// autoencoder that produced it.
FlowDetection score_flow(const FunctionFlow& flow, const TrainedEnsemble& ensemble);
DetectionReport score_flows(std::span<const FunctionFlow> flows, const TrainedEnsemble& ensemble,
                            const LabelMap* labels = nullptr);

/// Re-derives verdict and triggering sizes from the records and thresholds.
void apply_thresholds(FlowDetection& detection, const std::map<int, double>& thresholds);

enum class Granularity { Window, Flow };
std::string_view to_string(Granularity g);

struct MetricsReport {
  Granularity granularity = Granularity::Window;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0, fpr = 0, fnr = 0;
  // Set when the metric's denominator was zero and the value defaulted to 0.
  bool precisionUndefined = false, recallUndefined = false, f1Undefined = false;
  bool fprUndefined = false, fnrUndefined = false;
};

MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn,
                                  Granularity g);

/// Window granularity counts every window of every autoencoder as one
/// instance carrying its flow's label and its flow's verdict; flow
/// granularity counts each flow once. Labels come from `labels` or, when
/// null, from each detection's own label; a flow without either is an
/// error.
MetricsReport evaluate_metrics(std::span<const FlowDetection> report, const LabelMap* labels,
                               Granularity granularity);

}  // namespace flowguard

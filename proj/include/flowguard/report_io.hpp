#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "flowguard/detect.hpp"

namespace flowguard {

/// One JSON object per flow: ids, verdict, triggering window sizes, the
/// largest error per window size, every window's error and, when known, the
/// label.
std::string detection_to_json_line(const FlowDetection& d);
FlowDetection detection_from_json_line(const std::string& line, std::size_t lineNumber = 0);

void write_detection_report(std::ostream& out, const DetectionReport& report);
DetectionReport read_detection_report(std::istream& in);
DetectionReport read_detection_report(const std::string& path);

struct EvaluationSummary {
  std::size_t flows = 0;
  MetricsReport window;
  MetricsReport flow;
  // Benign flows plus the flows of one attack.
  std::map<AttackLabel, MetricsReport> perAttackWindow;
  std::map<AttackLabel, MetricsReport> perAttackFlow;
};

/// Throws std::invalid_argument when a labeled flow is missing from the
/// report. Report flows without a label are benign.
void check_label_coverage(const DetectionReport& report, const LabelMap& labels);

/// Labels come from `labels` when given, else from the report itself.
EvaluationSummary summarize(const DetectionReport& report, const LabelMap* labels);

std::string metrics_to_json(const EvaluationSummary& s);
std::string metrics_table(const EvaluationSummary& s);

}  // namespace flowguard

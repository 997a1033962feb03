#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowguard/trace_model.hpp"

namespace flowguard {

/// Raised for malformed input files. `line()` is 1-based, 0 when not
/// attributable to a single line.
class IngestError : public std::runtime_error {
 public:
  IngestError(std::size_t line, const std::string& what)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Nested trace document: one node per traced operation.
struct SegmentDocument {
  std::string name;
  std::string id;
  Millis start = 0;
  Millis end = 0;
  std::optional<std::string> type;
  std::optional<std::string> targetResource;
  std::vector<SegmentDocument> subsegments;

  // Only meaningful on the root.
  std::optional<std::string> applicationName;
  std::optional<std::string> applicationFlowId;
  std::optional<std::string> functionName;
  std::optional<std::string> functionFlowId;

  std::size_t node_count() const;
};

/// Flow identifiers used when the root document does not carry them.
struct FlowContext {
  std::string applicationName;
  std::string applicationFlowId;
  std::string functionName;
  std::string functionFlowId;
};

/// Newline-delimited JSON events, validated, in file order. Blank lines are
/// skipped; unknown keys are ignored.
std::vector<FunctionEvent> parse_event_lines(std::istream& in);
std::vector<FunctionEvent> read_event_file(const std::string& path);

void write_event_lines(std::ostream& out, const std::vector<FunctionEvent>& events);
std::string event_to_json_line(const FunctionEvent& e);

SegmentDocument parse_segment_json(std::istream& in);

/// Depth-first flattening of a segment tree. Children name their parent
/// node as eventParentName; event ids are node ids. Output is time-sorted.
std::vector<FunctionEvent> parse_segment_document(const SegmentDocument& doc,
                                                  const FlowContext& context);

/// functionFlowId -> label. Flows absent from the map are benign.
class LabelMap {
 public:
  void set(const std::string& flowId, AttackLabel label);
  AttackLabel at(const std::string& flowId) const;
  bool contains(const std::string& flowId) const { return labels_.count(flowId) != 0; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::map<std::string, AttackLabel>& entries() const { return labels_; }

 private:
  std::map<std::string, AttackLabel> labels_;
};

/// Records {functionFlowId, label}. Unknown labels and conflicting
/// duplicates are errors; identical duplicates are accepted.
LabelMap load_label_file(std::istream& in);
LabelMap read_label_file(const std::string& path);
void write_label_file(std::ostream& out, const LabelMap& labels);

}  // namespace flowguard

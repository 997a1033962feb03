#include "flowguard/trace_ingest.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace flowguard {

namespace {

using nlohmann::json;

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string require_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw IngestError(line, std::string("missing required key \"") + key + "\"");
  if (!it->is_string()) throw IngestError(line, std::string("key \"") + key + "\" must be a string");
  return it->get<std::string>();
}

Millis require_millis(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw IngestError(line, std::string("missing required key \"") + key + "\"");
  if (!it->is_number_integer())
    throw IngestError(line, std::string("key \"") + key + "\" must be an integer (milliseconds)");
  return it->get<Millis>();
}

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw IngestError(line, std::string("key \"") + key + "\" must be a string");
  return it->get<std::string>();
}

FunctionEvent event_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw IngestError(line, "expected a JSON object");
  FunctionEvent e;
  e.applicationName = require_string(j, "applicationName", line);
  e.applicationFlowId = require_string(j, "applicationFlowId", line);
  e.functionName = require_string(j, "functionName", line);
  e.functionFlowId = require_string(j, "functionFlowId", line);
  e.eventId = require_string(j, "eventId", line);
  e.startTime = require_millis(j, "startTime", line);
  e.endTime = require_millis(j, "endTime", line);
  e.eventName = require_string(j, "eventName", line);
  e.eventType = require_string(j, "eventType", line);
  e.eventParentName = optional_string(j, "eventParentName", line);
  e.eventTargetResource = optional_string(j, "eventTargetResource", line);
  try {
    return validate_event(std::move(e));
  } catch (const ValidationError& err) {
    throw IngestError(line, err.what());
  }
}

SegmentDocument segment_from_json(const json& j) {
  if (!j.is_object()) throw IngestError(0, "segment must be a JSON object");
  SegmentDocument d;
  d.name = require_string(j, "name", 0);
  d.id = require_string(j, "id", 0);
  d.start = require_millis(j, "start", 0);
  d.end = require_millis(j, "end", 0);
  d.type = optional_string(j, "type", 0);
  d.targetResource = optional_string(j, "targetResource", 0);
  d.applicationName = optional_string(j, "applicationName", 0);
  d.applicationFlowId = optional_string(j, "applicationFlowId", 0);
  d.functionName = optional_string(j, "functionName", 0);
  d.functionFlowId = optional_string(j, "functionFlowId", 0);
  if (auto it = j.find("subsegments"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw IngestError(0, "subsegments must be an array");
    for (const auto& child : *it) d.subsegments.push_back(segment_from_json(child));
  }
  return d;
}

void flatten_segment(const SegmentDocument& node, const std::optional<std::string>& parent,
                     const FlowContext& ctx, std::vector<FunctionEvent>& out) {
  if (node.end < node.start)
    throw IngestError(0, "segment \"" + node.id + "\": end before start");
  FunctionEvent e;
  e.applicationName = ctx.applicationName;
  e.applicationFlowId = ctx.applicationFlowId;
  e.functionName = ctx.functionName;
  e.functionFlowId = ctx.functionFlowId;
  e.eventId = node.id;
  e.startTime = node.start;
  e.endTime = node.end;
  e.eventName = node.name;
  e.eventType = node.type.value_or("");
  e.eventParentName = parent;
  e.eventTargetResource = node.targetResource;
  try {
    out.push_back(validate_event(std::move(e)));
  } catch (const ValidationError& err) {
    throw IngestError(0, "segment \"" + node.id + "\": " + err.what());
  }
  for (const auto& child : node.subsegments) flatten_segment(child, node.name, ctx, out);
}

}  // namespace

std::size_t SegmentDocument::node_count() const {
  std::size_t n = 1;
  for (const auto& c : subsegments) n += c.node_count();
  return n;
}

std::vector<FunctionEvent> parse_event_lines(std::istream& in) {
  std::vector<FunctionEvent> events;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (is_blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& err) {
      throw IngestError(number, std::string("malformed JSON: ") + err.what());
    }
    events.push_back(event_from_json(j, number));
  }
  return events;
}

std::vector<FunctionEvent> read_event_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError(0, "cannot open event file " + path);
  return parse_event_lines(in);
}

std::string event_to_json_line(const FunctionEvent& e) {
  nlohmann::ordered_json j;
  j["applicationName"] = e.applicationName;
  j["applicationFlowId"] = e.applicationFlowId;
  j["functionName"] = e.functionName;
  j["functionFlowId"] = e.functionFlowId;
  j["eventId"] = e.eventId;
  j["startTime"] = e.startTime;
  j["endTime"] = e.endTime;
  j["eventName"] = e.eventName;
  j["eventType"] = e.eventType;
  j["eventParentName"] = e.eventParentName ? nlohmann::ordered_json(*e.eventParentName) : nullptr;
  j["eventTargetResource"] =
      e.eventTargetResource ? nlohmann::ordered_json(*e.eventTargetResource) : nullptr;
  return j.dump();
}

void write_event_lines(std::ostream& out, const std::vector<FunctionEvent>& events) {
  for (const auto& e : events) out << event_to_json_line(e) << '\n';
}

SegmentDocument parse_segment_json(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& err) {
    throw IngestError(0, std::string("malformed segment document: ") + err.what());
  }
  return segment_from_json(j);
}

std::vector<FunctionEvent> parse_segment_document(const SegmentDocument& doc,
                                                  const FlowContext& context) {
  FlowContext ctx = context;
  if (doc.applicationName) ctx.applicationName = *doc.applicationName;
  if (doc.applicationFlowId) ctx.applicationFlowId = *doc.applicationFlowId;
  if (doc.functionName) ctx.functionName = *doc.functionName;
  if (doc.functionFlowId) ctx.functionFlowId = *doc.functionFlowId;

  std::vector<FunctionEvent> events;
  events.reserve(doc.node_count());
  flatten_segment(doc, std::nullopt, ctx, events);
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
    return std::tie(a.startTime, a.eventId) < std::tie(b.startTime, b.eventId);
  });
  return events;
}

void LabelMap::set(const std::string& flowId, AttackLabel label) { labels_[flowId] = label; }

AttackLabel LabelMap::at(const std::string& flowId) const {
  auto it = labels_.find(flowId);
  return it == labels_.end() ? AttackLabel::Benign : it->second;
}

LabelMap load_label_file(std::istream& in) {
  LabelMap labels;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (is_blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& err) {
      throw IngestError(number, std::string("malformed JSON: ") + err.what());
    }
    if (!j.is_object()) throw IngestError(number, "expected a JSON object");
    const auto flowId = require_string(j, "functionFlowId", number);
    const auto token = require_string(j, "label", number);
    const auto label = parse_attack_label(token);
    if (!label) throw IngestError(number, "unknown label \"" + token + "\"");
    if (labels.contains(flowId) && labels.at(flowId) != *label)
      throw IngestError(number, "conflicting labels for flow \"" + flowId + "\"");
    labels.set(flowId, *label);
  }
  return labels;
}

LabelMap read_label_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError(0, "cannot open label file " + path);
  return load_label_file(in);
}

void write_label_file(std::ostream& out, const LabelMap& labels) {
  for (const auto& [flowId, label] : labels.entries()) {
    nlohmann::ordered_json j;
    j["functionFlowId"] = flowId;
    j["label"] = std::string(to_string(label));
    out << j.dump() << '\n';
  }
}

}  // namespace flowguard

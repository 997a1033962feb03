#include "flowguard/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace flowguard {

namespace {

using nlohmann::ordered_json;

nlohmann::ordered_json metrics_json(const MetricsReport& m) {
  ordered_json j;
  j["granularity"] = std::string(to_string(m.granularity));
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["tn"] = m.tn;
  j["fn"] = m.fn;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["fpr"] = m.fpr;
  j["fnr"] = m.fnr;
  ordered_json undefined = ordered_json::array();
  if (m.precisionUndefined) undefined.push_back("precision");
  if (m.recallUndefined) undefined.push_back("recall");
  if (m.f1Undefined) undefined.push_back("f1");
  if (m.fprUndefined) undefined.push_back("fpr");
  if (m.fnrUndefined) undefined.push_back("fnr");
  j["undefined"] = undefined;
  return j;
}

std::string fmt(double v, bool undefined) {
  if (undefined) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void table_row(std::ostringstream& o, const std::string& name, const MetricsReport& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-34s %-6s %8zu %8zu %8zu %8zu %9s %9s %9s %9s %9s\n", name.c_str(),
                std::string(to_string(m.granularity)).c_str(), m.tp, m.fp, m.tn, m.fn,
                fmt(m.precision, m.precisionUndefined).c_str(), fmt(m.recall, m.recallUndefined).c_str(),
                fmt(m.f1, m.f1Undefined).c_str(), fmt(m.fpr, m.fprUndefined).c_str(),
                fmt(m.fnr, m.fnrUndefined).c_str());
  o << buf;
}

}  // namespace

std::string detection_to_json_line(const FlowDetection& d) {
  ordered_json j;
  j["functionFlowId"] = d.functionFlowId;
  j["functionName"] = d.functionName;
  j["applicationName"] = d.applicationName;
  j["verdict"] = std::string(to_string(d.verdict));
  j["triggeringWindowSizes"] = d.triggeringWindowSizes;
  ordered_json maxError = ordered_json::object();
  for (const auto& [w, e] : d.maxError) maxError[std::to_string(w)] = e;
  j["maxError"] = maxError;
  ordered_json windows = ordered_json::array();
  for (const auto& r : d.windows) windows.push_back({{"windowSize", r.windowSize}, {"offset", r.offset}, {"error", r.error}});
  j["windows"] = windows;
  if (d.label) j["label"] = std::string(to_string(*d.label));
  return j.dump();
}

FlowDetection detection_from_json_line(const std::string& line, std::size_t lineNumber) {
  const std::string where = lineNumber ? "line " + std::to_string(lineNumber) + ": " : "";
  try {
    const auto j = nlohmann::json::parse(line);
    FlowDetection d;
    d.functionFlowId = j.at("functionFlowId").get<std::string>();
    d.functionName = j.value("functionName", "");
    d.applicationName = j.value("applicationName", "");
    const auto verdict = j.at("verdict").get<std::string>();
    if (verdict != "benign" && verdict != "anomalous") throw std::invalid_argument("unknown verdict " + verdict);
    d.verdict = verdict == "anomalous" ? Verdict::Anomalous : Verdict::Benign;
    d.triggeringWindowSizes = j.at("triggeringWindowSizes").get<std::vector<int>>();
    for (const auto& [k, v] : j.at("maxError").items()) d.maxError[std::stoi(k)] = v.get<double>();
    for (const auto& w : j.at("windows"))
      d.windows.push_back({d.functionFlowId, w.at("windowSize").get<int>(), w.at("offset").get<std::size_t>(),
                           w.at("error").get<double>()});
    if (j.contains("label")) {
      const auto label = parse_attack_label(j.at("label").get<std::string>());
      if (!label) throw std::invalid_argument("unknown label");
      d.label = *label;
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(where + "bad detection record: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(where + "bad detection record: " + e.what());
  }
}

void write_detection_report(std::ostream& out, const DetectionReport& report) {
  for (const auto& d : report) out << detection_to_json_line(d) << '\n';
}

DetectionReport read_detection_report(std::istream& in) {
  DetectionReport report;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    report.push_back(detection_from_json_line(line, number));
  }
  return report;
}

DetectionReport read_detection_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report file " + path);
  return read_detection_report(in);
}

void check_label_coverage(const DetectionReport& report, const LabelMap& labels) {
  std::set<std::string> ids;
  for (const auto& d : report) ids.insert(d.functionFlowId);
  for (const auto& [id, label] : labels.entries())
    if (!ids.count(id)) throw std::invalid_argument("labeled flow \"" + id + "\" is not in the report");
}

EvaluationSummary summarize(const DetectionReport& report, const LabelMap* labels) {
  EvaluationSummary s;
  s.flows = report.size();
  s.window = evaluate_metrics(report, labels, Granularity::Window);
  s.flow = evaluate_metrics(report, labels, Granularity::Flow);

  auto label_of = [&](const FlowDetection& d) { return labels ? labels->at(d.functionFlowId) : d.label.value(); };
  std::set<AttackLabel> present;
  for (const auto& d : report)
    if (is_attack(label_of(d))) present.insert(label_of(d));
  for (AttackLabel a : present) {
    DetectionReport subset;
    for (const auto& d : report) {
      const auto l = label_of(d);
      if (l == a || !is_attack(l)) subset.push_back(d);
    }
    s.perAttackWindow[a] = evaluate_metrics(subset, labels, Granularity::Window);
    s.perAttackFlow[a] = evaluate_metrics(subset, labels, Granularity::Flow);
  }
  return s;
}

std::string metrics_to_json(const EvaluationSummary& s) {
  ordered_json j;
  j["flows"] = s.flows;
  j["window"] = metrics_json(s.window);
  j["flow"] = metrics_json(s.flow);
  ordered_json per = ordered_json::object();
  for (const auto& [a, m] : s.perAttackWindow)
    per[std::string(to_string(a))] = {{"window", metrics_json(m)}, {"flow", metrics_json(s.perAttackFlow.at(a))}};
  j["perAttack"] = per;
  return j.dump(2) + "\n";
}

std::string metrics_table(const EvaluationSummary& s) {
  std::ostringstream o;
  char head[256];
  std::snprintf(head, sizeof head, "%-34s %-6s %8s %8s %8s %8s %9s %9s %9s %9s %9s\n", "subset", "unit", "tp",
                "fp", "tn", "fn", "precision", "recall", "f1", "fpr", "fnr");
  o << head;
  table_row(o, "all", s.window);
  table_row(o, "all", s.flow);
  for (const auto& [a, m] : s.perAttackWindow) {
    table_row(o, std::string(to_string(a)), m);
    table_row(o, std::string(to_string(a)), s.perAttackFlow.at(a));
  }
  return o.str();
}

}  // namespace flowguard

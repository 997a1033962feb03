#include "flowguard/trace_model.hpp"

#include <algorithm>
#include <map>
#include <tuple>
#include <unordered_map>

namespace flowguard {

namespace {

struct LabelName {
  AttackLabel label;
  std::string_view token;
};

constexpr LabelName kLabelNames[] = {
    {AttackLabel::Benign, "benign"},
    {AttackLabel::PermissionMisuseReorder, "permission-misuse-reorder"},
    {AttackLabel::PermissionMisuseDifferentOp, "permission-misuse-different-op"},
    {AttackLabel::PermissionMisuseAdditionalOp, "permission-misuse-additional-op"},
    {AttackLabel::DataLeakage, "data-leakage"},
    {AttackLabel::DowRepeatedOp, "dow-repeated-op"},
    {AttackLabel::DowIncreasedDuration, "dow-increased-duration"},
};

bool event_less(const FunctionEvent& a, const FunctionEvent& b) {
  return std::tie(a.startTime, a.eventId) < std::tie(b.startTime, b.eventId);
}

}  // namespace

std::string_view to_string(AttackLabel label) {
  for (const auto& n : kLabelNames)
    if (n.label == label) return n.token;
  return "unknown";
}

std::optional<AttackLabel> parse_attack_label(std::string_view token) {
  for (const auto& n : kLabelNames)
    if (n.token == token) return n.label;
  return std::nullopt;
}

FunctionEvent validate_event(FunctionEvent e) {
  const std::pair<const char*, const std::string*> required[] = {
      {"eventId", &e.eventId},
      {"functionFlowId", &e.functionFlowId},
      {"applicationFlowId", &e.applicationFlowId},
      {"functionName", &e.functionName},
      {"applicationName", &e.applicationName},
  };
  for (const auto& [name, value] : required)
    if (value->empty()) throw ValidationError(name, std::string("empty ") + name);
  if (e.endTime < e.startTime) throw ValidationError("endTime", "endTime before startTime");
  return e;
}

std::optional<std::size_t> resolve_parent(const std::vector<FunctionEvent>& events,
                                          std::size_t index) {
  const auto& e = events.at(index);
  if (!e.hasParent()) return std::nullopt;
  const auto& parent = *e.eventParentName;
  for (std::size_t j = index; j-- > 0;)
    if (events[j].eventName == parent) return j;
  // Same start time but sorted after us by eventId.
  for (std::size_t j = index + 1; j < events.size() && events[j].startTime == e.startTime; ++j)
    if (events[j].eventName == parent) return j;
  return std::nullopt;
}

std::vector<FunctionFlow> assemble_function_flows(std::vector<FunctionEvent> events) {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<FunctionFlow> flows;
  for (auto& e : events) {
    auto [it, inserted] = index.try_emplace(e.functionFlowId, flows.size());
    if (inserted) {
      FunctionFlow f;
      f.functionFlowId = e.functionFlowId;
      flows.push_back(std::move(f));
    }
    flows[it->second].events.push_back(std::move(e));
  }

  for (auto& flow : flows) {
    std::sort(flow.events.begin(), flow.events.end(), event_less);
    const auto& first = flow.events.front();
    flow.functionName = first.functionName;
    flow.applicationName = first.applicationName;
    flow.applicationFlowId = first.applicationFlowId;
    for (std::size_t i = 0; i < flow.events.size(); ++i)
      if (flow.events[i].hasParent() && !resolve_parent(flow.events, i))
        flow.danglingParents.push_back(i);
  }

  std::sort(flows.begin(), flows.end(), [](const FunctionFlow& a, const FunctionFlow& b) {
    const Millis sa = a.firstStart(), sb = b.firstStart();
    return std::tie(sa, a.functionFlowId) < std::tie(sb, b.functionFlowId);
  });
  return flows;
}

std::vector<ApplicationFlow> assemble_application_flows(std::vector<FunctionFlow> flows) {
  std::sort(flows.begin(), flows.end(), [](const FunctionFlow& a, const FunctionFlow& b) {
    const Millis sa = a.firstStart(), sb = b.firstStart();
    return std::tie(sa, a.functionFlowId) < std::tie(sb, b.functionFlowId);
  });

  std::map<std::string, std::size_t> index;
  std::vector<ApplicationFlow> apps;
  for (auto& f : flows) {
    auto [it, inserted] = index.try_emplace(f.applicationFlowId, apps.size());
    if (inserted) {
      ApplicationFlow a;
      a.applicationFlowId = f.applicationFlowId;
      a.applicationName = f.applicationName;
      apps.push_back(std::move(a));
    }
    apps[it->second].functionFlows.push_back(std::move(f));
  }
  // Already in first-flow order because `flows` was sorted before grouping.
  return apps;
}

std::vector<FunctionEvent> flatten(const std::vector<FunctionFlow>& flows) {
  std::vector<FunctionEvent> out;
  for (const auto& f : flows) out.insert(out.end(), f.events.begin(), f.events.end());
  return out;
}

}  // namespace flowguard

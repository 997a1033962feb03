#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flowguard {

/// Milliseconds since the Unix epoch.
using Millis = std::int64_t;

/// One logged operation inside a function execution.
struct FunctionEvent {
  std::string applicationName;
  std::string applicationFlowId;
  std::string functionName;
  std::string functionFlowId;
  std::string eventId;
  Millis startTime = 0;
  Millis endTime = 0;
  std::string eventName;
  std::string eventType;
  std::optional<std::string> eventParentName;
  std::optional<std::string> eventTargetResource;

  Millis duration() const { return endTime - startTime; }
  bool hasParent() const { return eventParentName && !eventParentName->empty(); }

  bool operator==(const FunctionEvent&) const = default;
};

/// Ordered event sequence of a single function execution.
struct FunctionFlow {
  std::string functionFlowId;
  std::string functionName;
  std::string applicationName;
  std::string applicationFlowId;
  std::vector<FunctionEvent> events;
  // Indices into `events` whose eventParentName names no earlier event.
  std::vector<std::size_t> danglingParents;

  std::size_t size() const { return events.size(); }
  Millis firstStart() const { return events.empty() ? 0 : events.front().startTime; }

  bool operator==(const FunctionFlow&) const = default;
};

struct ApplicationFlow {
  std::string applicationFlowId;
  std::string applicationName;
  std::vector<FunctionFlow> functionFlows;
};

enum class AttackLabel {
  Benign,
  PermissionMisuseReorder,
  PermissionMisuseDifferentOp,
  PermissionMisuseAdditionalOp,
  DataLeakage,
  DowRepeatedOp,
  DowIncreasedDuration,
};

inline constexpr AttackLabel kAllLabels[] = {
    AttackLabel::Benign,
    AttackLabel::PermissionMisuseReorder,
    AttackLabel::PermissionMisuseDifferentOp,
    AttackLabel::PermissionMisuseAdditionalOp,
    AttackLabel::DataLeakage,
    AttackLabel::DowRepeatedOp,
    AttackLabel::DowIncreasedDuration,
};

inline constexpr AttackLabel kAttackLabels[] = {
    AttackLabel::PermissionMisuseReorder,
    AttackLabel::PermissionMisuseDifferentOp,
    AttackLabel::PermissionMisuseAdditionalOp,
    AttackLabel::DataLeakage,
    AttackLabel::DowRepeatedOp,
    AttackLabel::DowIncreasedDuration,
};

std::string_view to_string(AttackLabel label);
std::optional<AttackLabel> parse_attack_label(std::string_view token);
inline bool is_attack(AttackLabel label) { return label != AttackLabel::Benign; }

/// A violated event invariant; `field()` names the offending field.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::invalid_argument(what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Returns `e` unchanged when every invariant holds, otherwise throws
/// ValidationError for the first violated one.
FunctionEvent validate_event(FunctionEvent e);

/// Groups events by functionFlowId. Within a flow events are sorted by
/// (startTime, eventId); flows are ordered by (first startTime, flow id).
/// Parents that cannot be resolved are recorded in `danglingParents`.
std::vector<FunctionFlow> assemble_function_flows(std::vector<FunctionEvent> events);

std::vector<ApplicationFlow> assemble_application_flows(std::vector<FunctionFlow> flows);

/// Index of the event that `events[index]` names as its parent: the closest
/// preceding event with that name. Empty for roots and dangling parents.
std::optional<std::size_t> resolve_parent(const std::vector<FunctionEvent>& events,
                                          std::size_t index);

/// All events of `flows`, flow by flow.
std::vector<FunctionEvent> flatten(const std::vector<FunctionFlow>& flows);

}  // namespace flowguard

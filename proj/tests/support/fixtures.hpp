#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flowguard/trace_model.hpp"

namespace flowguard::fixture {

inline FunctionEvent event(const std::string& flow, const std::string& id, Millis start, Millis end,
                           const std::string& name, const std::string& type = "Function",
                           std::optional<std::string> parent = std::nullopt,
                           std::optional<std::string> target = std::nullopt,
                           const std::string& appFlow = "AF_1", const std::string& function = "fn",
                           const std::string& app = "airline") {
  FunctionEvent e;
  e.applicationName = app;
  e.applicationFlowId = appFlow;
  e.functionName = function;
  e.functionFlowId = flow;
  e.eventId = id;
  e.startTime = start;
  e.endTime = end;
  e.eventName = name;
  e.eventType = type;
  e.eventParentName = std::move(parent);
  e.eventTargetResource = std::move(target);
  return e;
}

/// The four-event flow of a cold-started booking update.
inline std::vector<FunctionEvent> booking_update_flow(const std::string& flow = "FF_3",
                                                      const std::string& appFlow = "AF_5", Millis t0 = 1000) {
  return {
      event(flow, "e1", t0, t0 + 200, "Initialization", "Lambda", std::nullopt, std::nullopt, appFlow),
      event(flow, "e2", t0 + 201, t0 + 260, "Lambda Handler", "Lambda", std::nullopt, std::nullopt, appFlow),
      event(flow, "e3", t0 + 205, t0 + 230, "Update Item", "DynamoDB", "Lambda Handler", "booking-table", appFlow),
      event(flow, "e4", t0 + 261, t0 + 263, "Overhead", "Lambda", std::nullopt, std::nullopt, appFlow),
  };
}

}  // namespace flowguard::fixture

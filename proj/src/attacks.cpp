#include <algorithm>
#include <cmath>
#include <optional>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "flowguard/workload_sim.hpp"
#include "sim_common.hpp"

namespace flowguard {

namespace sim {

namespace {

struct Latency {
  double medianMs;
  double sigma;
};

const std::map<std::string_view, Latency>& latency_table() {
  static const std::map<std::string_view, Latency> table{
      {"GetItem", {8, 0.25}},       {"PutItem", {12, 0.25}},     {"UpdateItem", {14, 0.25}},
      {"DeleteItem", {10, 0.25}},   {"BatchWriteItem", {25, 0.3}}, {"Query", {18, 0.25}},       {"Scan", {45, 0.3}},
      {"GetObject", {35, 0.3}},     {"PutObject", {55, 0.3}},    {"HeadObject", {10, 0.25}},
      {"DeleteObject", {20, 0.25}}, {"ListObjectsV2", {30, 0.3}}, {"Publish", {22, 0.25}},
      {"CreateJob", {140, 0.25}},   {"POST", {180, 0.3}},        {"Initialization", {220, 0.2}},
      {"Overhead", {2, 0.2}},
  };
  return table;
}

}  // namespace

Millis draw_duration(std::string_view operation, std::mt19937_64& rng) {
  const auto& table = latency_table();
  const auto it = table.find(operation);
  const Latency l = it == table.end() ? Latency{4, 0.3} : it->second;
  std::normal_distribution<double> z(0.0, 1.0);
  const double ms = l.medianMs * std::exp(l.sigma * z(rng));
  return std::max<Millis>(1, static_cast<Millis>(std::llround(ms)));
}

bool is_api_call(const FunctionEvent& e) {
  return e.eventType != "Lambda" && e.eventType != "Function";
}

std::size_t subtree_last(const FunctionFlow& flow, std::size_t index) {
  const auto& root = flow.events.at(index);
  std::size_t last = index;
  for (std::size_t j = index + 1; j < flow.events.size(); ++j) {
    const auto& e = flow.events[j];
    if (e.startTime >= root.startTime && e.endTime <= root.endTime && e.startTime < root.endTime)
      last = j;
    else
      break;
  }
  return last;
}

void insert_after(FunctionFlow& flow, std::size_t after, FunctionEvent proto, Millis duration,
                  Millis gap) {
  const std::size_t last = subtree_last(flow, after);
  const Millis point = flow.events[last].endTime;
  const Millis shift = gap + duration;
  for (std::size_t j = 0; j <= last; ++j)
    if (flow.events[j].endTime > point) flow.events[j].endTime += shift;
  for (std::size_t j = last + 1; j < flow.events.size(); ++j) {
    flow.events[j].startTime += shift;
    flow.events[j].endTime += shift;
  }
  proto.startTime = point + gap;
  proto.endTime = proto.startTime + duration;
  flow.events.insert(flow.events.begin() + static_cast<std::ptrdiff_t>(last + 1), std::move(proto));
  renumber(flow);
}

void renumber(FunctionFlow& flow) {
  char buf[16];
  for (std::size_t k = 0; k < flow.events.size(); ++k) {
    std::snprintf(buf, sizeof buf, "-e%03zu", k);
    flow.events[k].eventId = flow.functionFlowId + buf;
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace sim

namespace {

using sim::is_api_call;

const std::map<std::string, std::string>& substitutions() {
  static const std::map<std::string, std::string> m{
      {"PutItem", "UpdateItem"},     {"UpdateItem", "DeleteItem"}, {"GetItem", "Scan"},
      {"Query", "Scan"},             {"GetObject", "DeleteObject"}, {"PutObject", "DeleteObject"},
  };
  return m;
}

std::optional<std::size_t> handler_index(const FunctionFlow& flow) {
  for (std::size_t k = 0; k < flow.events.size(); ++k)
    if (flow.events[k].eventName == kHandlerEvent) return k;
  return std::nullopt;
}

std::vector<std::size_t> api_calls(const FunctionFlow& flow) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < flow.events.size(); ++k)
    if (is_api_call(flow.events[k])) out.push_back(k);
  return out;
}

std::vector<std::size_t> reorder_candidates(const FunctionFlow& flow) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k + 1 < flow.events.size(); ++k) {
    const auto& a = flow.events[k];
    const auto& b = flow.events[k + 1];
    if (is_api_call(a) && is_api_call(b) && a.eventParentName == b.eventParentName &&
        (a.eventName != b.eventName || a.eventTargetResource != b.eventTargetResource))
      out.push_back(k);
  }
  return out;
}

std::vector<std::size_t> substitution_candidates(const FunctionFlow& flow) {
  std::vector<std::size_t> out;
  for (std::size_t k : api_calls(flow))
    if (substitutions().count(flow.events[k].eventName)) out.push_back(k);
  return out;
}

std::vector<std::size_t> storage_candidates(const FunctionFlow& flow) {
  std::vector<std::size_t> out;
  for (std::size_t k : api_calls(flow)) {
    const auto& t = flow.events[k].eventType;
    if (t == "DynamoDB" || t == "S3") out.push_back(k);
  }
  return out;
}

std::optional<std::size_t> last_handler_child(const FunctionFlow& flow) {
  std::optional<std::size_t> out;
  for (std::size_t k = 0; k < flow.events.size(); ++k)
    if (flow.events[k].eventParentName && *flow.events[k].eventParentName == kHandlerEvent) out = k;
  return out;
}

std::size_t pick(const std::vector<std::size_t>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

Millis small_gap(std::mt19937_64& rng) { return std::uniform_int_distribution<Millis>(1, 3)(rng); }

[[noreturn]] void not_applicable(const FunctionFlow& flow, AttackLabel label) {
  throw std::invalid_argument("attack " + std::string(to_string(label)) + " does not apply to flow \"" +
                              flow.functionFlowId + "\" of " + flow.functionName);
}

}  // namespace

bool is_cold_start(const FunctionFlow& flow) {
  return std::any_of(flow.events.begin(), flow.events.end(),
                     [](const FunctionEvent& e) { return e.eventName == kInitializationEvent; });
}

bool attack_applicable(const FunctionFlow& flow, AttackLabel label) {
  switch (label) {
    case AttackLabel::Benign: return false;
    case AttackLabel::PermissionMisuseReorder: return !reorder_candidates(flow).empty();
    case AttackLabel::PermissionMisuseDifferentOp: return !substitution_candidates(flow).empty();
    case AttackLabel::PermissionMisuseAdditionalOp: return !storage_candidates(flow).empty();
    case AttackLabel::DataLeakage: return last_handler_child(flow).has_value();
    case AttackLabel::DowRepeatedOp: return !api_calls(flow).empty();
    case AttackLabel::DowIncreasedDuration: return handler_index(flow).has_value();
  }
  return false;
}

FunctionFlow inject_attack(FunctionFlow flow, AttackLabel label, std::mt19937_64& rng) {
  if (!is_attack(label)) throw std::invalid_argument("inject_attack: benign is not an attack");
  if (!attack_applicable(flow, label)) not_applicable(flow, label);

  auto& ev = flow.events;
  switch (label) {
    case AttackLabel::PermissionMisuseReorder: {
      const std::size_t k = pick(reorder_candidates(flow), rng);
      auto& a = ev[k];
      auto& b = ev[k + 1];
      const Millis gap = b.startTime - a.endTime;
      const Millis da = a.duration(), db = b.duration();
      std::swap(a.eventName, b.eventName);
      std::swap(a.eventType, b.eventType);
      std::swap(a.eventTargetResource, b.eventTargetResource);
      a.endTime = a.startTime + db;
      b.startTime = a.endTime + gap;
      b.endTime = b.startTime + da;
      break;
    }
    case AttackLabel::PermissionMisuseDifferentOp: {
      const std::size_t k = pick(substitution_candidates(flow), rng);
      ev[k].eventName = substitutions().at(ev[k].eventName);
      break;
    }
    case AttackLabel::PermissionMisuseAdditionalOp: {
      const std::size_t k = pick(storage_candidates(flow), rng);
      FunctionEvent extra = ev[k];
      extra.eventName = extra.eventType == "DynamoDB" ? "Scan" : "ListObjectsV2";
      const Millis d = sim::draw_duration(extra.eventName, rng);
      sim::insert_after(flow, k, std::move(extra), d, small_gap(rng));
      break;
    }
    case AttackLabel::DataLeakage: {
      const std::size_t k = *last_handler_child(flow);
      FunctionEvent leak = ev[k];
      leak.eventName = "PutObject";
      leak.eventType = "S3";
      leak.eventParentName = std::string(kHandlerEvent);
      leak.eventTargetResource = std::string(kExternalBucket);
      const Millis d = sim::draw_duration("PutObject", rng);
      sim::insert_after(flow, k, std::move(leak), d, small_gap(rng));
      break;
    }
    case AttackLabel::DowRepeatedOp: {
      std::size_t k = pick(api_calls(flow), rng);
      const int copies = std::uniform_int_distribution<int>(3, 6)(rng);
      for (int c = 0; c < copies; ++c) {
        FunctionEvent again = ev[k];
        const Millis d = sim::draw_duration(again.eventName, rng);
        sim::insert_after(flow, k, std::move(again), d, small_gap(rng));
        ++k;
      }
      break;
    }
    case AttackLabel::DowIncreasedDuration: {
      const std::size_t h = *handler_index(flow);
      const Millis extra = std::uniform_int_distribution<Millis>(4000, 5000)(rng);
      const Millis oldEnd = ev[h].endTime;
      ev[h].endTime += extra;
      for (std::size_t j = h + 1; j < ev.size(); ++j)
        if (ev[j].startTime >= oldEnd) {
          ev[j].startTime += extra;
          ev[j].endTime += extra;
        }
      break;
    }
    case AttackLabel::Benign: break;
  }
  sim::renumber(flow);
  return flow;
}

}  // namespace flowguard

#include "flowguard/workload_sim.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "flowguard/ensemble.hpp"
#include "sim_common.hpp"

namespace flowguard {

namespace {

constexpr std::uint64_t kBehaviorStream = 0x6265686176696f72ULL;
constexpr std::uint64_t kAttackStream = 0x61747461636b7321ULL;
constexpr std::uint64_t kColdStream = 0x636f6c6473746172ULL;
constexpr double kDayMs = 86400000.0;

struct Op {
  std::string name;
  std::string type;
  std::string target;
  std::vector<Op> children;
};

Op api(std::string name, std::string type, std::string target) {
  return {std::move(name), std::move(type), std::move(target), {}};
}

Op internal(std::string name, std::vector<Op> children = {}) {
  return {std::move(name), "Function", "", std::move(children)};
}

void check_probability(double p, const char* field) {
  if (!(p >= 0 && p <= 1)) throw std::invalid_argument(std::string(field) + " must lie in [0, 1]");
}

class Simulator {
 public:
  explicit Simulator(const SimConfig& config)
      : cfg_(config),
        behavior_(sim::splitmix64(config.seed ^ kBehaviorStream)),
        attacks_(sim::splitmix64(config.seed ^ kAttackStream)),
        cold_(sim::splitmix64(config.seed ^ kColdStream)),
        prefix_(config.resolved_prefix()),
        appName_(application_name(config.application)),
        targets_(attack_targets(config.application)),
        clock_(config.baseEpoch) {
    out_.manifest.application = appName_;
    out_.manifest.seed = config.seed;
    for (AttackLabel l : kAllLabels) out_.manifest.perLabel[l] = 0;
  }

  LabeledCorpus finish() {
    out_.manifest.events = out_.events.size();
    return std::move(out_);
  }

  bool chance(double p) { return std::uniform_real_distribution<double>(0, 1)(behavior_) < p; }
  Millis uniform(Millis lo, Millis hi) { return std::uniform_int_distribution<Millis>(lo, hi)(behavior_); }

  Millis next_arrival() {
    const double mean = cfg_.meanInterArrivalMs;
    if (cfg_.arrival == ArrivalProcess::Uniform) {
      clock_ += std::max<Millis>(1, std::llround(std::exponential_distribution<double>(1.0 / mean)(behavior_)));
      return clock_;
    }
    // Thinning against the peak rate of a daily sinusoid.
    const double a = cfg_.diurnalAmplitude;
    const double peak = (1.0 + a) / mean;
    double t = static_cast<double>(clock_);
    for (;;) {
      t += std::exponential_distribution<double>(peak)(behavior_);
      const double phase = 2 * std::numbers::pi * (t - static_cast<double>(cfg_.baseEpoch)) / kDayMs;
      const double rate = (1.0 + a * std::sin(phase)) / mean;
      if (std::uniform_real_distribution<double>(0, 1)(behavior_) * peak <= rate) break;
    }
    clock_ = std::max(clock_ + 1, static_cast<Millis>(std::llround(t)));
    return clock_;
  }

  std::string new_app_flow() {
    ++out_.manifest.applicationFlows;
    char buf[32];
    std::snprintf(buf, sizeof buf, "-af%06zu", appCounter_++);
    return prefix_ + buf;
  }

  /// Emits one function flow starting at `start`; returns the end of its
  /// benign schedule.
  Millis run(const std::string& appFlowId, const std::string& function, const std::vector<Op>& ops,
             Millis start) {
    FunctionFlow flow;
    char buf[32];
    std::snprintf(buf, sizeof buf, "-ff%06zu", flowCounter_++);
    flow.functionFlowId = prefix_ + buf;
    flow.functionName = function;
    flow.applicationName = appName_;
    flow.applicationFlowId = appFlowId;

    push(flow, std::string(kHandlerEvent), "Lambda", std::nullopt, std::nullopt, start);
    const std::size_t handlerIndex = flow.events.size() - 1;
    Millis t = start;
    for (const auto& op : ops) t = layout(flow, op, std::string(kHandlerEvent), t + uniform(1, 3));
    flow.events[handlerIndex].endTime = t + uniform(1, 4);
    const Millis invEnd = flow.events[handlerIndex].endTime;
    auto& overhead = push(flow, std::string(kOverheadEvent), "Lambda", std::nullopt, std::nullopt, invEnd);
    overhead.endTime = invEnd + sim::draw_duration(kOverheadEvent, behavior_);
    const Millis benignEnd = overhead.endTime;

    AttackLabel label = AttackLabel::Benign;
    if (const auto it = targets_.find(function); it != targets_.end()) {
      ++out_.manifest.targetedInvocations;
      const double u = std::uniform_real_distribution<double>(0, 1)(attacks_);
      if (u < cfg_.anomalyRate) label = choose_label(it->second);
      if (is_attack(label)) flow = inject_attack(std::move(flow), label, attacks_);
    }

    const double coldU = std::uniform_real_distribution<double>(0, 1)(cold_);
    const Millis initDuration = sim::draw_duration(kInitializationEvent, cold_);
    if (coldU < cfg_.coldStartRate) {
      FunctionEvent init = flow.events.front();
      init.eventName = std::string(kInitializationEvent);
      init.eventType = "Lambda";
      init.eventParentName.reset();
      init.eventTargetResource.reset();
      init.endTime = flow.events.front().startTime - 1;
      init.startTime = init.endTime - initDuration;
      flow.events.insert(flow.events.begin(), std::move(init));
      ++out_.manifest.coldStarts;
    }
    sim::renumber(flow);

    ++out_.manifest.flows;
    ++out_.manifest.perLabel[label];
    ++out_.manifest.perFunction[function][label];
    out_.labels.set(flow.functionFlowId, label);
    for (auto& e : flow.events) out_.events.push_back(std::move(e));
    return benignEnd;
  }

  /// Runs `steps` back to back as one application flow.
  Millis chain(const std::vector<std::pair<std::string, std::vector<Op>>>& steps, Millis start) {
    const std::string id = new_app_flow();
    Millis t = start;
    for (const auto& [fn, ops] : steps) t = run(id, fn, ops, t) + uniform(15, 60);
    return t;
  }

  Manifest& manifest() { return out_.manifest; }

 private:
  FunctionEvent& push(FunctionFlow& flow, std::string name, std::string type,
                      std::optional<std::string> parent, std::optional<std::string> target, Millis start) {
    FunctionEvent e;
    e.applicationName = flow.applicationName;
    e.applicationFlowId = flow.applicationFlowId;
    e.functionName = flow.functionName;
    e.functionFlowId = flow.functionFlowId;
    e.eventName = std::move(name);
    e.eventType = std::move(type);
    e.eventParentName = std::move(parent);
    e.eventTargetResource = std::move(target);
    e.startTime = start;
    e.endTime = start;
    flow.events.push_back(std::move(e));
    return flow.events.back();
  }

  Millis layout(FunctionFlow& flow, const Op& op, const std::string& parent, Millis start) {
    std::optional<std::string> target;
    if (!op.target.empty()) target = op.target;
    push(flow, op.name, op.type, parent, target, start);
    const std::size_t index = flow.events.size() - 1;
    Millis end;
    if (op.children.empty()) {
      end = start + sim::draw_duration(op.name, behavior_);
    } else {
      Millis t = start;
      for (const auto& child : op.children) t = layout(flow, child, op.name, t + uniform(1, 3));
      end = t + uniform(1, 2);
    }
    flow.events[index].endTime = end;
    return end;
  }

  AttackLabel choose_label(const std::vector<AttackLabel>& supported) {
    std::vector<double> w;
    for (AttackLabel l : supported) {
      if (cfg_.perAttackWeights.empty()) {
        w.push_back(1.0);
      } else {
        const auto it = cfg_.perAttackWeights.find(l);
        w.push_back(it == cfg_.perAttackWeights.end() ? 0.0 : it->second);
      }
    }
    double total = 0;
    for (double x : w) total += x;
    if (total <= 0) return AttackLabel::Benign;
    std::discrete_distribution<std::size_t> d(w.begin(), w.end());
    return supported[d(attacks_)];
  }

  const SimConfig& cfg_;
  std::mt19937_64 behavior_, attacks_, cold_;
  std::string prefix_;
  std::string appName_;
  const std::map<std::string, std::vector<AttackLabel>>& targets_;
  Millis clock_;
  std::size_t flowCounter_ = 0, appCounter_ = 0;
  LabeledCorpus out_;
};

using Steps = std::vector<std::pair<std::string, std::vector<Op>>>;

std::vector<Op> airline_template(const std::string& fn) {
  if (fn == "ReserveBooking")
    return {internal("validate_flight", {api("GetItem", "DynamoDB", "flight-table")}),
            api("PutItem", "DynamoDB", "booking-table")};
  if (fn == "CollectPayment")
    return {api("POST", "Remote", "payment-gateway"), api("PutItem", "DynamoDB", "payment-table")};
  if (fn == "ConfirmBooking")
    return {api("UpdateItem", "DynamoDB", "booking-table"), api("GetItem", "DynamoDB", "booking-table")};
  if (fn == "NotifyBooking")
    return {internal("build_message"), api("Publish", "SNS", "booking-topic")};
  if (fn == "IngestLoyalty")
    return {api("GetItem", "DynamoDB", "loyalty-table"), api("UpdateItem", "DynamoDB", "loyalty-table")};
  if (fn == "GetLoyalty")
    return {api("Query", "DynamoDB", "loyalty-table"), internal("compute_tier")};
  if (fn == "CancelBooking") return {api("UpdateItem", "DynamoDB", "booking-table")};
  if (fn == "RefundPayment")
    return {api("POST", "Remote", "payment-gateway"), api("UpdateItem", "DynamoDB", "payment-table")};
  if (fn == "ExpireBookings")
    return {api("Scan", "DynamoDB", "booking-table"), api("BatchWriteItem", "DynamoDB", "booking-table")};
  throw std::logic_error("no airline template for " + fn);
}

std::vector<Op> vod_template(const std::string& fn) {
  if (fn == "input-validate")
    return {internal("parse_event"), api("HeadObject", "S3", "vod-source")};
  if (fn == "mediainfo")
    return {api("GetObject", "S3", "vod-source"), internal("probe_media")};
  if (fn == "dynamo")
    return {api("PutItem", "DynamoDB", "vod-table"), api("GetItem", "DynamoDB", "vod-table")};
  if (fn == "encode")
    return {api("GetObject", "S3", "vod-job-templates"), api("CreateJob", "MediaConvert", "mediaconvert-queue")};
  if (fn == "output-validate")
    return {api("GetItem", "DynamoDB", "vod-table"), internal("build_urls")};
  if (fn == "sns-notification") return {api("Publish", "SNS", "vod-notifications")};
  if (fn == "error-handler")
    return {api("UpdateItem", "DynamoDB", "vod-table"), api("Publish", "SNS", "vod-notifications")};
  if (fn == "mail-ingest")
    return {api("GetObject", "S3", "vod-mailbox"), api("PutObject", "S3", "vod-source")};
  throw std::logic_error("no vod template for " + fn);
}

}  // namespace

std::string_view to_string(Application app) { return app == Application::Airline ? "airline" : "vod"; }

std::optional<Application> parse_application(std::string_view token) {
  if (token == "airline") return Application::Airline;
  if (token == "vod") return Application::Vod;
  return std::nullopt;
}

std::string application_name(Application app) {
  return app == Application::Airline ? "airline-booking" : "video-on-demand";
}

std::string_view to_string(ArrivalProcess p) { return p == ArrivalProcess::Uniform ? "uniform" : "diurnal"; }

std::optional<ArrivalProcess> parse_arrival_process(std::string_view token) {
  if (token == "uniform") return ArrivalProcess::Uniform;
  if (token == "diurnal") return ArrivalProcess::Diurnal;
  return std::nullopt;
}

void SimConfig::validate() const {
  check_probability(anomalyRate, "anomalyRate");
  check_probability(coldStartRate, "coldStartRate");
  check_probability(twoWayProbability, "twoWayProbability");
  check_probability(loyaltyProbability, "loyaltyProbability");
  check_probability(paymentSuccessProbability, "paymentSuccessProbability");
  check_probability(mailProbability, "mailProbability");
  check_probability(uploadSuccessProbability, "uploadSuccessProbability");
  if (!(meanInterArrivalMs > 0)) throw std::invalid_argument("meanInterArrivalMs must be positive");
  if (!(diurnalAmplitude >= 0 && diurnalAmplitude < 1))
    throw std::invalid_argument("diurnalAmplitude must lie in [0, 1)");
  double total = 0;
  for (const auto& [label, w] : perAttackWeights) {
    if (!is_attack(label)) throw std::invalid_argument("perAttackWeights: benign carries no weight");
    if (!(w >= 0 && std::isfinite(w))) throw std::invalid_argument("perAttackWeights must be nonnegative");
    total += w;
  }
  if (!perAttackWeights.empty() && anomalyRate > 0 && total <= 0)
    throw std::invalid_argument("perAttackWeights are all zero while anomalyRate > 0");
}

std::string SimConfig::resolved_prefix() const {
  if (!idPrefix.empty()) return idPrefix;
  return std::string(to_string(application)) + "-s" + std::to_string(seed);
}

std::size_t Manifest::anomalies() const {
  std::size_t n = 0;
  for (const auto& [label, count] : perLabel)
    if (is_attack(label)) n += count;
  return n;
}

std::string manifest_to_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["application"] = m.application;
  j["seed"] = m.seed;
  j["events"] = m.events;
  j["flows"] = m.flows;
  j["applicationFlows"] = m.applicationFlows;
  j["anomalies"] = m.anomalies();
  j["targetedInvocations"] = m.targetedInvocations;
  j["coldStarts"] = m.coldStarts;
  auto& labels = j["perLabel"] = nlohmann::ordered_json::object();
  for (const auto& [label, count] : m.perLabel) labels[std::string(to_string(label))] = count;
  auto& fns = j["perFunction"] = nlohmann::ordered_json::object();
  for (const auto& [fn, counts] : m.perFunction) {
    auto& entry = fns[fn] = nlohmann::ordered_json::object();
    for (const auto& [label, count] : counts) entry[std::string(to_string(label))] = count;
  }
  auto& b = j["behavior"];
  if (m.application == application_name(Application::Airline)) {
    b["iterations"] = m.iterations;
    b["twoWayBookings"] = m.twoWayBookings;
    b["loyaltyVisits"] = m.loyaltyVisits;
    b["failedPayments"] = m.failedPayments;
    b["expiryRuns"] = m.expiryRuns;
  } else {
    b["uploads"] = m.uploads;
    b["directUploads"] = m.directUploads;
    b["mailUploads"] = m.mailUploads;
    b["failedUploads"] = m.failedUploads;
  }
  return j.dump(2) + "\n";
}

const std::map<std::string, std::vector<AttackLabel>>& attack_targets(Application app) {
  using L = AttackLabel;
  static const std::map<std::string, std::vector<AttackLabel>> airline{
      {"ReserveBooking", {L::PermissionMisuseDifferentOp, L::DataLeakage}},
      {"ConfirmBooking", {L::PermissionMisuseReorder, L::DowRepeatedOp, L::DowIncreasedDuration}},
      {"IngestLoyalty", {L::PermissionMisuseDifferentOp, L::DowRepeatedOp}},
  };
  static const std::map<std::string, std::vector<AttackLabel>> vod{
      {"input-validate", {L::DowRepeatedOp, L::DowIncreasedDuration}},
      {"mediainfo", {L::PermissionMisuseAdditionalOp, L::DataLeakage}},
      {"dynamo", {L::PermissionMisuseReorder, L::DowRepeatedOp}},
      {"encode", {L::PermissionMisuseReorder, L::DowRepeatedOp, L::DowIncreasedDuration}},
  };
  return app == Application::Airline ? airline : vod;
}

LabeledCorpus simulate_airline(const SimConfig& config) {
  config.validate();
  if (config.application != Application::Airline)
    throw std::invalid_argument("simulate_airline: config is for another application");
  Simulator s(config);
  auto& m = s.manifest();

  auto booking = [&](Millis start) {
    Steps steps{{"ReserveBooking", airline_template("ReserveBooking")},
                {"CollectPayment", airline_template("CollectPayment")}};
    if (s.chance(config.paymentSuccessProbability)) {
      for (const char* fn : {"ConfirmBooking", "NotifyBooking", "IngestLoyalty"})
        steps.emplace_back(fn, airline_template(fn));
    } else {
      ++m.failedPayments;
      for (const char* fn : {"CancelBooking", "RefundPayment", "NotifyBooking"})
        steps.emplace_back(fn, airline_template(fn));
    }
    s.chain(steps, start);
  };

  for (std::size_t i = 0; i < config.iterations; ++i) {
    ++m.iterations;
    const Millis t = s.next_arrival();
    const bool twoWay = s.chance(config.twoWayProbability);
    const bool loyalty = s.chance(config.loyaltyProbability);
    booking(t);
    if (loyalty) {
      ++m.loyaltyVisits;
      s.chain({{"GetLoyalty", airline_template("GetLoyalty")}}, t + s.uniform(2000, 15000));
    }
    if (twoWay) {
      ++m.twoWayBookings;
      booking(t + s.uniform(20000, 60000));
    }
    if (config.expiryEveryIterations && (i + 1) % config.expiryEveryIterations == 0) {
      ++m.expiryRuns;
      s.chain({{"ExpireBookings", airline_template("ExpireBookings")}}, t + s.uniform(0, 1000));
    }
  }
  return s.finish();
}

LabeledCorpus simulate_vod(const SimConfig& config) {
  config.validate();
  if (config.application != Application::Vod)
    throw std::invalid_argument("simulate_vod: config is for another application");
  Simulator s(config);
  auto& m = s.manifest();

  for (std::size_t u = 0; u < config.filesUploaded; ++u) {
    ++m.uploads;
    const Millis t = s.next_arrival();
    const bool mailAllowed = !config.mailCap || m.mailUploads < *config.mailCap;
    const bool mailDraw = s.chance(config.mailProbability);
    const bool successDraw = s.chance(config.uploadSuccessProbability);
    const bool mail = mailAllowed && mailDraw;

    Steps steps;
    bool ok = true;
    if (mail) {
      ++m.mailUploads;
      steps.emplace_back("mail-ingest", vod_template("mail-ingest"));
    } else {
      ++m.directUploads;
      ok = successDraw;
      if (!ok) ++m.failedUploads;
    }
    for (const char* fn : {"input-validate", "mediainfo", "dynamo", "encode"})
      steps.emplace_back(fn, vod_template(fn));
    if (ok) {
      steps.emplace_back("output-validate", vod_template("output-validate"));
      steps.emplace_back("sns-notification", vod_template("sns-notification"));
    } else {
      steps.emplace_back("error-handler", vod_template("error-handler"));
    }
    s.chain(steps, t);
  }
  return s.finish();
}

LabeledCorpus simulate(const SimConfig& config) {
  return config.application == Application::Airline ? simulate_airline(config) : simulate_vod(config);
}

Dataset make_dataset(const LabeledCorpus& benign, const LabeledCorpus& test, double splitRatio,
                     std::uint64_t seed) {
  for (const auto& [flow, label] : benign.labels.entries())
    if (is_attack(label))
      throw std::invalid_argument("benign corpus holds attack label on flow \"" + flow + "\"");
  const auto flows = assemble_function_flows(benign.events);
  const auto split = split_flows(flows, splitRatio, seed);
  Dataset d;
  d.trainEvents = flatten(split.train);
  d.valEvents = flatten(split.validation);
  d.testEvents = test.events;
  d.testLabels = test.labels;
  return d;
}

void write_dataset(const Dataset& dataset, const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  auto write = [&](const std::string& name, auto&& body) {
    const fs::path path = fs::path(directory) / name;
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
      body(out);
      if (!out) throw std::runtime_error("write to " + tmp.string() + " failed");
    }
    fs::rename(tmp, path);
  };
  write("train.ndjson", [&](std::ostream& o) { write_event_lines(o, dataset.trainEvents); });
  write("val.ndjson", [&](std::ostream& o) { write_event_lines(o, dataset.valEvents); });
  write("test.ndjson", [&](std::ostream& o) { write_event_lines(o, dataset.testEvents); });
  write("test-labels.ndjson", [&](std::ostream& o) { write_label_file(o, dataset.testLabels); });
}

}  // namespace flowguard

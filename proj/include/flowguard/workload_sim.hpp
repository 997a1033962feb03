#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flowguard/trace_ingest.hpp"
#include "flowguard/trace_model.hpp"

namespace flowguard {

enum class Application { Airline, Vod };
std::string_view to_string(Application app);
std::optional<Application> parse_application(std::string_view token);
std::string application_name(Application app);

enum class ArrivalProcess { Uniform, Diurnal };
std::string_view to_string(ArrivalProcess p);
std::optional<ArrivalProcess> parse_arrival_process(std::string_view token);

inline constexpr Millis kDefaultBaseEpoch = 1685577600000;  // 2023-06-01T00:00:00Z

struct SimConfig {
  Application application = Application::Airline;
  std::uint64_t seed = 1;
  std::size_t iterations = 800;      // airline
  std::size_t filesUploaded = 3000;  // vod
  double anomalyRate = 0;
  // Relative weights among the attacks a targeted function supports. Empty
  // means every attack weighs 1.
  std::map<AttackLabel, double> perAttackWeights;
  double coldStartRate = 0.02;

  ArrivalProcess arrival = ArrivalProcess::Diurnal;
  double meanInterArrivalMs = 45000;
  double diurnalAmplitude = 0.6;  // in [0, 1)
  Millis baseEpoch = kDefaultBaseEpoch;
  // Prefix of every generated flow and event id; empty picks "<app>-s<seed>".
  std::string idPrefix;

  // Airline behavior.
  double twoWayProbability = 0.8;
  double loyaltyProbability = 0.7;
  double paymentSuccessProbability = 0.85;
  std::size_t expiryEveryIterations = 5;

  // VOD behavior.
  double mailProbability = 0.2;
  std::optional<std::size_t> mailCap = 200;  // nullopt: unlimited
  double uploadSuccessProbability = 0.9;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  std::string resolved_prefix() const;
};

struct Manifest {
  std::string application;
  std::uint64_t seed = 0;
  std::size_t events = 0;
  std::size_t flows = 0;
  std::size_t applicationFlows = 0;
  std::size_t targetedInvocations = 0;
  std::size_t coldStarts = 0;
  std::map<AttackLabel, std::size_t> perLabel;
  std::map<std::string, std::map<AttackLabel, std::size_t>> perFunction;
  // Behavior counters.
  std::size_t iterations = 0, twoWayBookings = 0, loyaltyVisits = 0, failedPayments = 0,
              expiryRuns = 0;
  std::size_t uploads = 0, directUploads = 0, mailUploads = 0, failedUploads = 0;

  std::size_t anomalies() const;
};

std::string manifest_to_json(const Manifest& m);

struct LabeledCorpus {
  std::vector<FunctionEvent> events;
  LabelMap labels;  // one entry per flow, benign included
  Manifest manifest;
};

/// Functions that run attack code in each application, with the attacks
/// each one supports.
const std::map<std::string, std::vector<AttackLabel>>& attack_targets(Application app);

LabeledCorpus simulate_airline(const SimConfig& config);
LabeledCorpus simulate_vod(const SimConfig& config);
LabeledCorpus simulate(const SimConfig& config);

/// Returns `flow` mutated by `label`. Throws std::invalid_argument for the
/// benign label or when the flow offers nothing the mutator can act on.
FunctionFlow inject_attack(FunctionFlow flow, AttackLabel label, std::mt19937_64& rng);

/// Whether inject_attack can apply `label` to `flow`.
bool attack_applicable(const FunctionFlow& flow, AttackLabel label);

/// Event name of the handler event that roots every simulated flow.
inline constexpr std::string_view kHandlerEvent = "Invocation";
inline constexpr std::string_view kInitializationEvent = "Initialization";
inline constexpr std::string_view kOverheadEvent = "Overhead";
inline constexpr std::string_view kExternalBucket = "external-public-bucket";

bool is_cold_start(const FunctionFlow& flow);

struct Dataset {
  std::vector<FunctionEvent> trainEvents;
  std::vector<FunctionEvent> valEvents;
  std::vector<FunctionEvent> testEvents;
  LabelMap testLabels;
};

/// Splits the benign corpus into train/validation at flow granularity and
/// passes the test corpus through. Throws std::invalid_argument when the
/// benign corpus holds attack labels or the split leaves a side empty.
Dataset make_dataset(const LabeledCorpus& benign, const LabeledCorpus& test, double splitRatio,
                     std::uint64_t seed);

/// Writes train.ndjson, val.ndjson, test.ndjson and test-labels.ndjson
/// under `directory`.
void write_dataset(const Dataset& dataset, const std::string& directory);

}  // namespace flowguard

#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowguard/detect.hpp"
#include "flowguard/ensemble.hpp"
#include "flowguard/model_io.hpp"
#include "flowguard/report_io.hpp"
#include "flowguard/trace_ingest.hpp"
#include "flowguard/workload_sim.hpp"

namespace flowguard::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Output file written under a temporary name and renamed on commit; the
/// temporary is removed if the commit never happens.
class AtomicFile {
 public:
  explicit AtomicFile(std::string path) : path_(std::move(path)), tmp_(path_ + ".partial") {
    if (const auto dir = fs::path(path_).parent_path(); !dir.empty()) fs::create_directories(dir);
    stream_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!stream_) throw DataError("cannot open " + path_ + " for writing");
  }
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;
  ~AtomicFile() {
    if (committed_) return;
    stream_.close();
    std::error_code ec;
    fs::remove(tmp_, ec);
  }

  std::ostream& stream() { return stream_; }

  void commit() {
    stream_.close();
    if (!stream_) throw DataError("write to " + path_ + " failed");
    std::error_code ec;
    fs::rename(tmp_, path_, ec);
    if (ec) throw DataError("cannot move " + tmp_ + " to " + path_ + ": " + ec.message());
    committed_ = true;
  }

 private:
  std::string path_, tmp_;
  std::ofstream stream_;
  bool committed_ = false;
};

struct Global {
  std::uint64_t seed = 42;
  bool quiet = false;
};

std::vector<FunctionEvent> read_events(const std::vector<std::string>& paths) {
  std::vector<FunctionEvent> all;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw DataError("no such event file: " + p);
    try {
      auto events = read_event_file(p);
      all.insert(all.end(), std::make_move_iterator(events.begin()), std::make_move_iterator(events.end()));
    } catch (const IngestError& e) {
      throw DataError(p + ": " + e.what());
    }
  }
  return all;
}

LabelMap read_labels(const std::vector<std::string>& paths) {
  LabelMap merged;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw DataError("no such label file: " + p);
    try {
      const auto labels = read_label_file(p);
      for (const auto& [id, label] : labels.entries()) {
        if (merged.contains(id) && merged.at(id) != label)
          throw DataError(p + ": conflicting labels for flow \"" + id + "\"");
        merged.set(id, label);
      }
    } catch (const IngestError& e) {
      throw DataError(p + ": " + e.what());
    }
  }
  return merged;
}

TrainedEnsemble read_model(const std::string& path) {
  if (!fs::exists(path)) throw DataError("no such model file: " + path);
  return load_ensemble(path);
}

void echo(std::ostream& out, const std::string& command, const ordered_json& config) {
  ordered_json j;
  j["command"] = command;
  j["config"] = config;
  out << "config " << j.dump() << '\n';
}

ProgressFn progress_printer(std::ostream& err, bool quiet) {
  if (quiet) return {};
  return [&err](int w, int epoch, double loss) {
    err << "  W=" << w << " epoch " << epoch << " loss " << std::setprecision(6) << loss << '\n';
  };
}

template <class F>
auto config_checked(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  std::string app;
  std::size_t iterations = 800;
  std::size_t files = 3000;
  double anomalyRate = 0;
  bool benign = false;
  double coldStartRate = 0.02;
  std::string arrival = "diurnal";
  double meanGapMs = 45000;
  std::vector<std::string> weights;
  std::string idPrefix;
  std::string outDir;
  std::optional<double> splitRatio;
};

int cmd_simulate(const SimulateOptions& o, const Global& g, std::ostream& out) {
  SimConfig c;
  const auto app = parse_application(o.app);
  if (!app) throw ConfigError("--app must be airline or vod");
  c.application = *app;
  c.seed = g.seed;
  c.iterations = o.iterations;
  c.filesUploaded = o.files;
  if (o.benign && o.anomalyRate > 0) throw ConfigError("--benign conflicts with a positive --anomaly-rate");
  c.anomalyRate = o.benign ? 0.0 : o.anomalyRate;
  c.coldStartRate = o.coldStartRate;
  const auto arrival = parse_arrival_process(o.arrival);
  if (!arrival) throw ConfigError("--arrival must be uniform or diurnal");
  c.arrival = *arrival;
  c.meanInterArrivalMs = o.meanGapMs;
  c.idPrefix = o.idPrefix;
  for (const auto& w : o.weights) {
    const auto eq = w.find('=');
    if (eq == std::string::npos) throw ConfigError("--weight expects label=value, got " + w);
    const auto label = parse_attack_label(w.substr(0, eq));
    if (!label) throw ConfigError("unknown attack label " + w.substr(0, eq));
    try {
      c.perAttackWeights[*label] = std::stod(w.substr(eq + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad weight " + w);
    }
  }
  config_checked([&] { c.validate(); return 0; });
  if (o.splitRatio && c.anomalyRate > 0) throw ConfigError("--split-ratio needs a benign corpus");

  ordered_json cfg;
  cfg["app"] = o.app;
  cfg["seed"] = c.seed;
  if (c.application == Application::Airline)
    cfg["iterations"] = c.iterations;
  else
    cfg["files"] = c.filesUploaded;
  cfg["anomalyRate"] = c.anomalyRate;
  cfg["coldStartRate"] = c.coldStartRate;
  cfg["arrival"] = o.arrival;
  cfg["meanGapMs"] = c.meanInterArrivalMs;
  cfg["weights"] = o.weights;
  cfg["idPrefix"] = c.resolved_prefix();
  cfg["outDir"] = o.outDir;
  if (o.splitRatio) cfg["splitRatio"] = *o.splitRatio;
  echo(out, "simulate", cfg);

  const LabeledCorpus corpus = simulate(c);
  {
    AtomicFile events((fs::path(o.outDir) / "events.ndjson").string());
    write_event_lines(events.stream(), corpus.events);
    AtomicFile labels((fs::path(o.outDir) / "labels.ndjson").string());
    write_label_file(labels.stream(), corpus.labels);
    AtomicFile manifest((fs::path(o.outDir) / "manifest.json").string());
    manifest.stream() << manifest_to_json(corpus.manifest);
    if (o.splitRatio) {
      const auto flows = assemble_function_flows(corpus.events);
      const auto split = config_checked([&] { return split_flows(flows, *o.splitRatio, g.seed); });
      AtomicFile train((fs::path(o.outDir) / "train.ndjson").string());
      write_event_lines(train.stream(), flatten(split.train));
      AtomicFile val((fs::path(o.outDir) / "val.ndjson").string());
      write_event_lines(val.stream(), flatten(split.validation));
      train.commit();
      val.commit();
      out << "split " << split.train.size() << " train / " << split.validation.size() << " validation flows\n";
    }
    events.commit();
    labels.commit();
    manifest.commit();
  }

  out << corpus.manifest.flows << " flows, " << corpus.manifest.events << " events, "
      << corpus.manifest.anomalies() << " anomalous\n";
  for (const auto& [label, count] : corpus.manifest.perLabel)
    out << "  " << std::left << std::setw(34) << to_string(label) << count << '\n';
  return kSuccess;
}

// ------------------------------------------------------------------- train

struct TrainOptions {
  std::vector<std::string> events, val, labels;
  std::string out;
  int epochs = 15;
  int batchSize = 32;
  double learningRate = 1e-4;
  double splitRatio = 0.8;
  std::string embeddingTable;
};

void refuse_anomalies(const std::vector<FunctionFlow>& flows, const LabelMap& labels, const char* what) {
  for (const auto& f : flows)
    if (is_attack(labels.at(f.functionFlowId)))
      throw DataError(std::string(what) + " holds attack-labeled flow \"" + f.functionFlowId +
                      "\"; training data must be benign");
}

void print_validation_summary(std::ostream& out, const TrainedEnsemble& ens,
                              const std::vector<FunctionFlow>& validation) {
  const auto errors = validation_errors(ens, validation);
  for (const auto& m : ens.members) {
    const auto& e = errors.at(m.model.windowSize());
    out << "  W=" << std::setw(2) << m.model.windowSize() << "  windows " << std::setw(7) << e.size()
        << "  median " << std::setprecision(5) << percentile(e, 0.5) << "  p99 " << percentile(e, 0.99)
        << "  max " << *std::max_element(e.begin(), e.end()) << "  threshold " << m.threshold << '\n';
  }
}

int cmd_train(const TrainOptions& o, const Global& g, std::ostream& out, std::ostream& err) {
  EnsembleConfig cfg;
  cfg.train.epochs = o.epochs;
  cfg.train.batchSize = o.batchSize;
  cfg.train.learningRate = o.learningRate;
  cfg.train.seed = g.seed;
  config_checked([&] { cfg.train.validate(); return 0; });
  if (o.val.empty() && !(o.splitRatio > 0 && o.splitRatio < 1))
    throw ConfigError("--split-ratio must lie strictly between 0 and 1");

  ordered_json c;
  c["events"] = o.events;
  c["val"] = o.val;
  c["labels"] = o.labels;
  c["out"] = o.out;
  c["seed"] = g.seed;
  c["epochs"] = o.epochs;
  c["batchSize"] = o.batchSize;
  c["learningRate"] = o.learningRate;
  if (o.val.empty()) c["splitRatio"] = o.splitRatio;
  c["embeddingTable"] = o.embeddingTable;
  echo(out, "train", c);

  CharEmbedder embedder;
  if (!o.embeddingTable.empty()) {
    try {
      embedder.load_table(o.embeddingTable);
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
  }

  auto flows = assemble_function_flows(read_events(o.events));
  std::vector<FunctionFlow> train, validation;
  if (o.val.empty()) {
    if (flows.size() < 2) throw DataError("need at least two flows to split train/validation");
    auto split = split_flows(flows, o.splitRatio, g.seed);
    train = std::move(split.train);
    validation = std::move(split.validation);
  } else {
    train = std::move(flows);
    validation = assemble_function_flows(read_events(o.val));
  }
  if (train.empty()) throw DataError("no training flows");
  if (validation.empty()) throw DataError("no validation flows");
  if (!o.labels.empty()) {
    const auto labels = read_labels(o.labels);
    refuse_anomalies(train, labels, "training set");
    refuse_anomalies(validation, labels, "validation set");
  }

  out << "training on " << train.size() << " flows, validating on " << validation.size() << '\n';
  cfg.progress = progress_printer(err, g.quiet);
  const TrainedEnsemble ens = train_ensemble(train, validation, cfg, std::move(embedder));
  print_validation_summary(out, ens, validation);

  AtomicFile file(o.out);
  save_ensemble(file.stream(), ens);
  file.commit();
  out << "model written to " << o.out << '\n';
  return kSuccess;
}

// ------------------------------------------------------------------ detect

struct DetectOptions {
  std::string model;
  std::vector<std::string> events, labels;
  std::string out;
  std::string metricsOut;
};

int cmd_detect(const DetectOptions& o, const Global& g, std::ostream& out) {
  ordered_json c;
  c["model"] = o.model;
  c["events"] = o.events;
  c["labels"] = o.labels;
  c["out"] = o.out;
  c["metricsOut"] = o.metricsOut;
  c["seed"] = g.seed;
  echo(out, "detect", c);

  const TrainedEnsemble ens = read_model(o.model);
  const auto flows = assemble_function_flows(read_events(o.events));
  std::optional<LabelMap> labels;
  if (!o.labels.empty()) labels = read_labels(o.labels);

  const DetectionReport report = score_flows(flows, ens, labels ? &*labels : nullptr);
  AtomicFile file(o.out);
  write_detection_report(file.stream(), report);
  file.commit();

  const auto anomalous = std::count_if(report.begin(), report.end(),
                                       [](const FlowDetection& d) { return d.verdict == Verdict::Anomalous; });
  out << report.size() << " flows scored, " << anomalous << " anomalous; report written to " << o.out << '\n';

  if (labels && !report.empty()) {
    const auto summary = summarize(report, &*labels);
    out << metrics_table(summary);
    if (!o.metricsOut.empty()) {
      AtomicFile m(o.metricsOut);
      m.stream() << metrics_to_json(summary);
      m.commit();
    }
  }
  return kSuccess;
}

// ------------------------------------------------------------------ update

struct UpdateOptions {
  std::string model;
  std::vector<std::string> newEvents, pool, val, newVal;
  std::string out;
  double oldFraction = 0.1;
  double learningRate = 1e-4;
  int epochs = 15;
  int batchSize = 32;
  double splitRatio = 0.8;
  std::string selectedOld;
};

int cmd_update(const UpdateOptions& o, const Global& g, std::ostream& out, std::ostream& err) {
  if (!(o.oldFraction >= 0 && o.oldFraction < 1)) throw ConfigError("--old-fraction must lie in [0, 1)");
  if (!(o.learningRate >= 0)) throw ConfigError("--learning-rate must be nonnegative");
  if (o.epochs < 0 || o.batchSize <= 0) throw ConfigError("--epochs must be >= 0 and --batch-size > 0");
  if (fs::exists(o.out) && fs::exists(o.model) && fs::equivalent(o.out, o.model))
    throw ConfigError("--out must differ from --model; the original model is never overwritten");
  if (o.newVal.empty() && !(o.splitRatio > 0 && o.splitRatio < 1))
    throw ConfigError("--split-ratio must lie strictly between 0 and 1");

  ordered_json c;
  c["model"] = o.model;
  c["newEvents"] = o.newEvents;
  c["pool"] = o.pool;
  c["val"] = o.val;
  c["newVal"] = o.newVal;
  c["out"] = o.out;
  c["seed"] = g.seed;
  c["oldFraction"] = o.oldFraction;
  c["learningRate"] = o.learningRate;
  c["epochs"] = o.epochs;
  c["batchSize"] = o.batchSize;
  if (o.newVal.empty()) c["splitRatio"] = o.splitRatio;
  c["selectedOld"] = o.selectedOld;
  echo(out, "update", c);
  if (o.oldFraction == 0)
    err << "warning: --old-fraction 0 overrides the default 10% share of original training data\n";

  const TrainedEnsemble base = read_model(o.model);
  auto fresh = assemble_function_flows(read_events(o.newEvents));
  std::vector<FunctionFlow> newTrain, newVal;
  if (o.newVal.empty()) {
    if (fresh.size() < 2) throw DataError("need at least two new flows to split train/validation");
    auto split = split_flows(fresh, o.splitRatio, g.seed);
    newTrain = std::move(split.train);
    newVal = std::move(split.validation);
  } else {
    newTrain = std::move(fresh);
    newVal = assemble_function_flows(read_events(o.newVal));
  }
  if (newTrain.empty()) throw DataError("no new training flows");
  const auto pool = assemble_function_flows(read_events(o.pool));
  if (pool.empty()) throw DataError("the original training pool is empty");
  const auto retained = assemble_function_flows(read_events(o.val));

  UpdateConfig uc;
  uc.oldFraction = o.oldFraction;
  uc.learningRate = o.learningRate;
  uc.epochs = o.epochs;
  uc.batchSize = o.batchSize;
  uc.seed = g.seed;
  uc.progress = progress_printer(err, g.quiet);
  if (!o.selectedOld.empty()) {
    std::ifstream in(o.selectedOld);
    if (!in) throw DataError("cannot open " + o.selectedOld);
    std::vector<std::string> ids;
    for (std::string id; in >> id;) ids.push_back(id);
    uc.selectedOldFlows = std::move(ids);
  }

  out << "fine-tuning on " << newTrain.size() << " new flows with a pool of " << pool.size() << '\n';
  const TrainedEnsemble updated = fine_tune(base, newTrain, pool, retained, newVal, uc);
  std::vector<FunctionFlow> validation = retained;
  validation.insert(validation.end(), newVal.begin(), newVal.end());
  print_validation_summary(out, updated, validation);

  AtomicFile file(o.out);
  save_ensemble(file.stream(), updated);
  file.commit();
  out << "updated model written to " << o.out << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOptions {
  std::string report;
  std::vector<std::string> labels;
  std::string out;
};

int cmd_evaluate(const EvaluateOptions& o, const Global& g, std::ostream& out) {
  ordered_json c;
  c["report"] = o.report;
  c["labels"] = o.labels;
  c["out"] = o.out;
  c["seed"] = g.seed;
  echo(out, "evaluate", c);

  if (!fs::exists(o.report)) throw DataError("no such report file: " + o.report);
  DetectionReport report;
  try {
    report = read_detection_report(o.report);
  } catch (const std::invalid_argument& e) {
    throw DataError(o.report + ": " + e.what());
  }
  const auto labels = read_labels(o.labels);
  try {
    check_label_coverage(report, labels);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  const auto summary = summarize(report, &labels);
  out << metrics_table(summary);
  if (!o.out.empty()) {
    AtomicFile m(o.out);
    m.stream() << metrics_to_json(summary);
    m.commit();
  }
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compromised serverless function detector"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option values; command-line flags win");
  Global g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  SimulateOptions so;
  auto* sim = app.add_subcommand("simulate", "Generate a labeled trace corpus");
  sim->configurable();
  sim->add_option("--app", so.app, "airline or vod")->required();
  sim->add_option("--iterations", so.iterations, "Airline user iterations")->capture_default_str();
  sim->add_option("--files", so.files, "VOD uploads")->capture_default_str();
  sim->add_option("--anomaly-rate", so.anomalyRate, "Share of targeted invocations running attack code")
      ->capture_default_str();
  sim->add_flag("--benign", so.benign, "Force an attack-free corpus");
  sim->add_option("--cold-start-rate", so.coldStartRate, "Share of invocations with a cold start")
      ->capture_default_str();
  sim->add_option("--arrival", so.arrival, "uniform or diurnal")->capture_default_str();
  sim->add_option("--mean-gap-ms", so.meanGapMs, "Mean time between user actions")->capture_default_str();
  sim->add_option("--weight", so.weights, "Attack weight as label=value; repeatable");
  sim->add_option("--id-prefix", so.idPrefix, "Prefix of generated ids");
  sim->add_option("--out-dir", so.outDir, "Output directory")->required();
  sim->add_option("--split-ratio", so.splitRatio, "Also write a train/validation split of a benign corpus");

  TrainOptions to;
  auto* train = app.add_subcommand("train", "Train the autoencoder ensemble on benign events");
  train->configurable();
  train->add_option("--events", to.events, "Benign event file; repeatable")->required();
  train->add_option("--val", to.val, "Validation event file; repeatable. Split from --events when absent");
  train->add_option("--labels", to.labels, "Label file used to refuse attack-labeled flows");
  train->add_option("--out", to.out, "Model file")->required();
  train->add_option("--epochs", to.epochs)->capture_default_str();
  train->add_option("--batch-size", to.batchSize)->capture_default_str();
  train->add_option("--learning-rate", to.learningRate)->capture_default_str();
  train->add_option("--split-ratio", to.splitRatio, "Training share when splitting")->capture_default_str();
  train->add_option("--embedding-table", to.embeddingTable, "Token embedding overrides");

  DetectOptions dop;
  auto* detect = app.add_subcommand("detect", "Score event flows with a trained model");
  detect->configurable();
  detect->add_option("--model", dop.model)->required();
  detect->add_option("--events", dop.events, "Event file; repeatable")->required();
  detect->add_option("--labels", dop.labels, "Label file; enables inline metrics");
  detect->add_option("--out", dop.out, "Detection report (NDJSON)")->required();
  detect->add_option("--metrics-out", dop.metricsOut, "Metrics JSON, when labels are given");

  UpdateOptions uo;
  auto* update = app.add_subcommand("update", "Fine-tune a model on new benign data");
  update->configurable();
  update->add_option("--model", uo.model)->required();
  update->add_option("--new-events", uo.newEvents, "New benign events; repeatable")->required();
  update->add_option("--pool", uo.pool, "Original training events; repeatable")->required();
  update->add_option("--val", uo.val, "Original validation events; repeatable")->required();
  update->add_option("--new-val", uo.newVal, "New validation events. Split from --new-events when absent");
  update->add_option("--out", uo.out, "Updated model file")->required();
  update->add_option("--old-fraction", uo.oldFraction)->capture_default_str();
  update->add_option("--learning-rate", uo.learningRate)->capture_default_str();
  update->add_option("--epochs", uo.epochs)->capture_default_str();
  update->add_option("--batch-size", uo.batchSize)->capture_default_str();
  update->add_option("--split-ratio", uo.splitRatio)->capture_default_str();
  update->add_option("--selected-old", uo.selectedOld, "File of original flow ids to use as old data");

  EvaluateOptions eo;
  auto* evaluate = app.add_subcommand("evaluate", "Compute metrics from a detection report");
  evaluate->configurable();
  evaluate->add_option("--report", eo.report)->required();
  evaluate->add_option("--labels", eo.labels, "Label file; repeatable")->required();
  evaluate->add_option("--out", eo.out, "Metrics JSON");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (*sim) return cmd_simulate(so, g, out);
    if (*train) return cmd_train(to, g, out, err);
    if (*detect) return cmd_detect(dop, g, out);
    if (*update) return cmd_update(uo, g, out, err);
    if (*evaluate) return cmd_evaluate(eo, g, out);
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const ModelFileError& e) {
    err << "error: " << e.what() << " [" << to_string(e.kind()) << "]\n";
    return kDataError;
  } catch (const IngestError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
}

}  // namespace flowguard::cli

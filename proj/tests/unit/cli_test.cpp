#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cli.hpp"
#include "flowguard/model_io.hpp"
#include "flowguard/report_io.hpp"

namespace flowguard {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "flowguard_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ASSERT_EQ(run({"--quiet", "--seed", "3", "simulate", "--app", "airline", "--benign", "--iterations", "25",
                   "--out-dir", path("benign"), "--split-ratio", "0.8"})
                  .code,
              0);
    ASSERT_EQ(run({"--quiet", "--seed", "4", "simulate", "--app", "airline", "--anomaly-rate", "0.3",
                   "--iterations", "15", "--out-dir", path("test_airline")})
                  .code,
              0);
    ASSERT_EQ(run({"--quiet", "--seed", "5", "simulate", "--app", "vod", "--anomaly-rate", "0.3", "--files",
                   "40", "--out-dir", path("test_vod")})
                  .code,
              0);
    const auto trained = run({"--quiet", "train", "--events", path("benign/train.ndjson"), "--val",
                              path("benign/val.ndjson"), "--out", path("model.bin"), "--epochs", "3",
                              "--learning-rate", "1e-3"});
    ASSERT_EQ(trained.code, 0) << trained.err;
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string path(const std::string& rel) { return (dir_ / rel).string(); }

  static fs::path dir_;
};

fs::path Cli::dir_;

TEST_F(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"simulate", "--out-dir", path("x")}).code, 1);
  EXPECT_EQ(run({"simulate", "--app", "airline", "--bogus", "--out-dir", path("x")}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, SimulateValidatesItsConfiguration) {
  EXPECT_EQ(run({"simulate", "--app", "bank", "--out-dir", path("x")}).code, 1);
  EXPECT_EQ(run({"simulate", "--app", "vod", "--anomaly-rate", "1.5", "--out-dir", path("x")}).code, 1);
  EXPECT_EQ(run({"simulate", "--app", "vod", "--benign", "--anomaly-rate", "0.1", "--out-dir", path("x")}).code, 1);
  EXPECT_EQ(run({"simulate", "--app", "vod", "--weight", "nonsense=1", "--anomaly-rate", "0.1", "--out-dir",
                 path("x")})
                .code,
            1);
  EXPECT_FALSE(fs::exists(path("x/events.ndjson")));
}

TEST_F(Cli, BenignSimulationHasOnlyBenignFlows) {
  const auto m = nlohmann::json::parse(slurp(path("benign/manifest.json")));
  EXPECT_EQ(m["anomalies"].get<int>(), 0);
  EXPECT_GT(m["flows"].get<int>(), 100);
  EXPECT_TRUE(fs::exists(path("benign/train.ndjson")));
  EXPECT_TRUE(fs::exists(path("benign/val.ndjson")));
}

TEST_F(Cli, EveryCommandEchoesItsConfiguration) {
  const auto r = run({"--seed", "7", "simulate", "--app", "airline", "--benign", "--iterations", "2", "--out-dir",
                      path("echo")});
  ASSERT_EQ(r.code, 0);
  const auto line = r.out.substr(0, r.out.find('\n'));
  ASSERT_EQ(line.rfind("config ", 0), 0u) << line;
  const auto j = nlohmann::json::parse(line.substr(7));
  EXPECT_EQ(j["command"], "simulate");
  EXPECT_EQ(j["config"]["seed"], 7);
  EXPECT_EQ(j["config"]["coldStartRate"], 0.02);
}

TEST_F(Cli, SameFlagsGiveIdenticalFiles) {
  for (const char* sub : {"again1", "again2"})
    ASSERT_EQ(run({"--quiet", "--seed", "4", "simulate", "--app", "airline", "--anomaly-rate", "0.3", "--iterations",
                   "15", "--out-dir", path(sub)})
                  .code,
              0);
  for (const char* f : {"events.ndjson", "labels.ndjson", "manifest.json"}) {
    EXPECT_EQ(slurp(path(std::string("again1/") + f)), slurp(path(std::string("again2/") + f))) << f;
    EXPECT_EQ(slurp(path(std::string("again1/") + f)), slurp(path(std::string("test_airline/") + f))) << f;
  }
}

TEST_F(Cli, VodAnomalyShareIsNearTheRate) {
  ASSERT_EQ(run({"--seed", "7", "simulate", "--app", "vod", "--anomaly-rate", "0.1", "--files", "600", "--out-dir",
                 path("vod600")})
                .code,
            0);
  const auto m = nlohmann::json::parse(slurp(path("vod600/manifest.json")));
  const double n = m["targetedInvocations"].get<double>();
  const double hits = m["anomalies"].get<double>();
  const double sigma = std::sqrt(n * 0.1 * 0.9);
  EXPECT_NEAR(hits, 0.1 * n, 3 * sigma);
}

TEST_F(Cli, ConfigFileSuppliesOptionsAndFlagsWin) {
  std::ofstream(path("sim.toml")) << "[simulate]\napp = \"airline\"\niterations = 3\nbenign = true\n";
  const auto r = run({"--config", path("sim.toml"), "simulate", "--iterations", "2", "--out-dir", path("cfg")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = nlohmann::json::parse(slurp(path("cfg/manifest.json")));
  EXPECT_EQ(m["behavior"]["iterations"], 2);
  EXPECT_EQ(m["anomalies"], 0);
}

TEST_F(Cli, TrainRejectsZeroEpochs) {
  const auto r = run({"train", "--events", path("benign/events.ndjson"), "--out", path("zero.bin"), "--epochs", "0"});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(path("zero.bin")));
}

TEST_F(Cli, TrainRefusesAttackLabeledFlows) {
  const auto r = run({"--quiet", "train", "--events", path("test_airline/events.ndjson"), "--labels",
                      path("test_airline/labels.ndjson"), "--out", path("refused.bin"), "--epochs", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("benign"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("refused.bin")));
}

TEST_F(Cli, TrainedModelLoads) {
  const auto e = load_ensemble(path("model.bin"));
  EXPECT_NO_THROW(e.validate());
  EXPECT_EQ(e.metadata.epochs, 3u);
}

TEST_F(Cli, DetectWithoutModelFails) {
  const auto r = run({"detect", "--model", path("missing.bin"), "--events", path("test_airline/events.ndjson"),
                      "--out", path("never.ndjson")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing.bin"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("never.ndjson")));
}

TEST_F(Cli, DetectOnEmptyEventsGivesEmptyReport) {
  std::ofstream(path("empty.ndjson")).flush();
  const auto r = run({"detect", "--model", path("model.bin"), "--events", path("empty.ndjson"), "--out",
                      path("empty_report.ndjson")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("empty_report.ndjson")));
  EXPECT_TRUE(slurp(path("empty_report.ndjson")).empty());
}

TEST_F(Cli, CorruptEventsLeaveNoReport) {
  std::ofstream(path("corrupt.ndjson")) << "{\"not\": \"an event\"}\n";
  const auto r = run({"detect", "--model", path("model.bin"), "--events", path("corrupt.ndjson"), "--out",
                      path("corrupt_report.ndjson")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("corrupt.ndjson"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("corrupt_report.ndjson")));
  EXPECT_FALSE(fs::exists(path("corrupt_report.ndjson.partial")));
}

TEST_F(Cli, EvaluateMatchesInlineMetricsWithEveryAttackRow) {
  const auto d = run({"detect", "--model", path("model.bin"), "--events", path("test_airline/events.ndjson"),
                      "--events", path("test_vod/events.ndjson"), "--labels", path("test_airline/labels.ndjson"),
                      "--labels", path("test_vod/labels.ndjson"), "--out", path("report.ndjson"), "--metrics-out",
                      path("inline.json")});
  ASSERT_EQ(d.code, 0) << d.err;
  const auto e = run({"evaluate", "--report", path("report.ndjson"), "--labels", path("test_airline/labels.ndjson"),
                      "--labels", path("test_vod/labels.ndjson"), "--out", path("evaluated.json")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(slurp(path("inline.json")), slurp(path("evaluated.json")));
  for (const char* label : {"permission-misuse-reorder", "permission-misuse-different-op",
                            "permission-misuse-additional-op", "data-leakage", "dow-repeated-op",
                            "dow-increased-duration"})
    EXPECT_NE(e.out.find(label), std::string::npos) << label;
}

TEST_F(Cli, EvaluateRejectsForeignLabels) {
  ASSERT_EQ(run({"detect", "--model", path("model.bin"), "--events", path("test_airline/events.ndjson"), "--out",
                 path("airline_report.ndjson")})
                .code,
            0);
  const auto r = run({"evaluate", "--report", path("airline_report.ndjson"), "--labels",
                      path("test_vod/labels.ndjson")});
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, AllBenignEvaluationFlagsRecall) {
  ASSERT_EQ(run({"detect", "--model", path("model.bin"), "--events", path("benign/events.ndjson"), "--out",
                 path("benign_report.ndjson")})
                .code,
            0);
  const auto r = run({"evaluate", "--report", path("benign_report.ndjson"), "--labels",
                      path("benign/labels.ndjson"), "--out", path("benign_metrics.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("benign_metrics.json")));
  EXPECT_EQ(j["window"]["fpr"], 0.0);
  EXPECT_NE(std::find(j["window"]["undefined"].begin(), j["window"]["undefined"].end(), "recall"),
            j["window"]["undefined"].end());
}

TEST_F(Cli, UpdateLeavesTheOriginalModelUntouched) {
  const auto before = slurp(path("model.bin"));
  const auto r = run({"--quiet", "update", "--model", path("model.bin"), "--new-events",
                      path("test_vod/events.ndjson"), "--pool", path("benign/train.ndjson"), "--val",
                      path("benign/val.ndjson"), "--out", path("updated.bin"), "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("model.bin")), before);
  const auto updated = load_ensemble(path("updated.bin"));
  EXPECT_EQ(updated.metadata.updates, 1u);
  EXPECT_EQ(r.err.find("warning"), std::string::npos);
}

TEST_F(Cli, UpdateWithoutOldDataWarns) {
  const auto r = run({"--quiet", "update", "--model", path("model.bin"), "--new-events",
                      path("benign/val.ndjson"), "--pool", path("benign/train.ndjson"), "--val",
                      path("benign/val.ndjson"), "--out", path("updated0.bin"), "--epochs", "1", "--old-fraction",
                      "0"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST_F(Cli, UpdateRefusesToOverwriteAndNeedsThePool) {
  EXPECT_EQ(run({"update", "--model", path("model.bin"), "--new-events", path("benign/val.ndjson"), "--pool",
                 path("benign/train.ndjson"), "--val", path("benign/val.ndjson"), "--out", path("model.bin")})
                .code,
            1);
  EXPECT_EQ(run({"update", "--model", path("model.bin"), "--new-events", path("benign/val.ndjson"), "--pool",
                 path("no_pool.ndjson"), "--val", path("benign/val.ndjson"), "--out", path("u.bin")})
                .code,
            2);
  EXPECT_EQ(run({"update", "--model", path("model.bin"), "--new-events", path("benign/val.ndjson"), "--val",
                 path("benign/val.ndjson"), "--out", path("u.bin")})
                .code,
            1);
}

}  // namespace
}  // namespace flowguard

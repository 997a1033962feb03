#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "flowguard/featurize.hpp"
#include "flowguard/trace_ingest.hpp"
#include "flowguard/workload_sim.hpp"
#include "support/fixtures.hpp"

namespace flowguard {
namespace {

using fixture::event;

std::set<std::string> simulator_vocabulary() {
  std::set<std::string> vocab;
  for (auto app : {Application::Airline, Application::Vod}) {
    SimConfig c;
    c.application = app;
    c.iterations = 150;
    c.filesUploaded = 300;
    c.anomalyRate = 0.5;
    c.coldStartRate = 0.1;
    for (const auto& e : simulate(c).events) {
      vocab.insert(e.applicationName);
      vocab.insert(e.eventName);
      vocab.insert(e.eventType);
      if (e.eventParentName) vocab.insert(*e.eventParentName);
      if (e.eventTargetResource) vocab.insert(*e.eventTargetResource);
    }
  }
  return vocab;
}

TEST(EmbedToken, EmptyTokenIsZero) {
  EXPECT_EQ(CharEmbedder{}.embed(""), (Embedding{0, 0, 0, 0}));
}

TEST(EmbedToken, Deterministic) {
  const CharEmbedder a, b;
  EXPECT_EQ(a.embed("UpdateItem"), a.embed("UpdateItem"));
  EXPECT_EQ(a.embed("UpdateItem"), b.embed("UpdateItem"));
  EXPECT_NE(a.embed("UpdateItem"), CharEmbedder(7).embed("UpdateItem"));
}

TEST(EmbedToken, ValuesLieInUnitInterval) {
  for (const auto& t : simulator_vocabulary())
    for (double x : CharEmbedder{}.embed(t)) {
      EXPECT_GT(x, 0.0) << t;
      EXPECT_LT(x, 1.0) << t;
    }
}

TEST(EmbedToken, SimulatorVocabularyIsPairwiseDistinct) {
  const auto vocab = simulator_vocabulary();
  EXPECT_GE(vocab.size(), 40u);
  const CharEmbedder e;
  std::vector<std::pair<std::string, Embedding>> vectors;
  for (const auto& t : vocab) vectors.emplace_back(t, e.embed(t));
  for (std::size_t i = 0; i < vectors.size(); ++i)
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      double d = 0;
      for (std::size_t k = 0; k < kEmbeddingDim; ++k) d = std::max(d, std::abs(vectors[i].second[k] - vectors[j].second[k]));
      EXPECT_GT(d, 1e-9) << vectors[i].first << " vs " << vectors[j].first;
    }
}

TEST(EmbedToken, TableEntriesOverrideHashing) {
  const auto path = std::filesystem::temp_directory_path() / "flowguard-embedding-table.txt";
  {
    std::ofstream out(path);
    out << "# token and four values\nUpdateItem 0.1 0.2 0.3 0.4\n\nGetItem 1 2 3 4  # trailing comment\n";
  }
  CharEmbedder e;
  e.load_table(path.string());
  EXPECT_EQ(e.embed("UpdateItem"), (Embedding{0.1, 0.2, 0.3, 0.4}));
  EXPECT_EQ(e.embed("GetItem"), (Embedding{1, 2, 3, 4}));
  EXPECT_EQ(e.embed("PutItem"), CharEmbedder{}.embed("PutItem"));
  {
    std::ofstream out(path);
    out << "UpdateItem 0.1 0.2\n";
  }
  EXPECT_THROW(CharEmbedder{}.load_table(path.string()), std::runtime_error);
  std::filesystem::remove(path);
}

FunctionFlow chain_flow() {
  return assemble_function_flows({event("F", "e1", 100, 200, "root"),
                                  event("F", "e2", 110, 150, "A", "Function", std::string("root")),
                                  event("F", "e3", 120, 130, "B", "DynamoDB", std::string("A"), std::string("t"))})
      .front();
}

TEST(DerivedFeatures, FirstEventStartsAtZero) {
  const auto d = compute_derived_features(chain_flow());
  EXPECT_EQ(d[0].relativeStart, 0.0);
  EXPECT_EQ(d[1].relativeStart, 10.0);
  EXPECT_EQ(d[2].duration, 10.0);
}

TEST(DerivedFeatures, ParentlessEventHasDepthOne) {
  const auto flow = assemble_function_flows({event("F", "e1", 0, 1, "solo")}).front();
  EXPECT_EQ(compute_derived_features(flow)[0].depth, 1.0);
}

TEST(DerivedFeatures, ChainDepths) {
  const auto d = compute_derived_features(chain_flow());
  EXPECT_EQ(d[0].depth, 1.0);
  EXPECT_EQ(d[1].depth, 2.0);
  EXPECT_EQ(d[2].depth, 3.0);
}

TEST(DerivedFeatures, DanglingParentCountsAsRoot) {
  const auto flow = assemble_function_flows({event("F", "e1", 0, 9, "root"),
                                             event("F", "e2", 1, 2, "x", "S3", std::string("missing"))})
                        .front();
  EXPECT_EQ(compute_derived_features(flow)[1].depth, 1.0);
}

TEST(VectorizeFlow, UpdateItemSlotHoldsItsEmbedding) {
  const auto events = fixture::booking_update_flow();
  const auto flow = assemble_function_flows(events).front();
  const CharEmbedder e;
  const auto vectors = vectorize_flow(flow, e);
  ASSERT_EQ(vectors.size(), 4u);
  const auto& v = vectors[2];
  const auto expect_slot = [&](std::size_t offset, const std::string& token) {
    const auto emb = e.embed(token);
    for (std::size_t k = 0; k < kEmbeddingDim; ++k) EXPECT_EQ(v[offset + k], emb[k]) << token;
  };
  expect_slot(slot::kApplicationName, "airline");
  expect_slot(slot::kEventName, "Update Item");
  expect_slot(slot::kEventType, "DynamoDB");
  expect_slot(slot::kEventParentName, "Lambda Handler");
  expect_slot(slot::kEventTargetResource, "booking-table");
  EXPECT_EQ(v[slot::kDuration], 25.0);
  EXPECT_EQ(v[slot::kRelativeStart], 205.0);
  EXPECT_EQ(v[slot::kDepth], 2.0);
  EXPECT_EQ(kEventWidth, 23u);
  for (std::size_t k = 0; k < kEmbeddingDim; ++k) EXPECT_EQ(vectors[0][slot::kEventParentName + k], 0.0);
}

TEST(VectorizeFlow, SingleEvent) {
  const auto flow = assemble_function_flows({event("F", "e", 0, 1, "x")}).front();
  EXPECT_EQ(vectorize_flow(flow, CharEmbedder{}).size(), 1u);
}

TEST(VectorizeFlow, IndependentOfInputKeyOrder) {
  std::istringstream a(
      R"({"applicationName":"vod","applicationFlowId":"A","functionName":"f","functionFlowId":"F","eventId":"e",)"
      R"("startTime":5,"endTime":9,"eventName":"GetObject","eventType":"S3","eventParentName":"Invocation","eventTargetResource":"b"})");
  std::istringstream b(
      R"({"eventTargetResource":"b","eventParentName":"Invocation","eventType":"S3","eventName":"GetObject","endTime":9,)"
      R"("startTime":5,"eventId":"e","functionFlowId":"F","functionName":"f","applicationFlowId":"A","applicationName":"vod"})");
  const CharEmbedder e;
  EXPECT_EQ(vectorize_flow(assemble_function_flows(parse_event_lines(a)).front(), e),
            vectorize_flow(assemble_function_flows(parse_event_lines(b)).front(), e));
}

EventVector filled(double x) {
  EventVector v;
  v.fill(x);
  return v;
}

TEST(FitNormalization, SingleVector) {
  const auto v = filled(3.5);
  const auto s = fit_normalization(std::vector<EventVector>{v});
  EXPECT_EQ(s.min, v);
  EXPECT_EQ(s.max, v);
}

TEST(FitNormalization, ZeroAndOne) {
  const auto s = fit_normalization(std::vector<EventVector>{filled(0), filled(1)});
  EXPECT_EQ(s.min, filled(0));
  EXPECT_EQ(s.max, filled(1));
}

TEST(FitNormalization, EmptyInputIsAnError) {
  EXPECT_THROW(fit_normalization(std::vector<EventVector>{}), std::invalid_argument);
}

TEST(FitNormalization, MatchesScanOracle) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z(0, 100);
  std::vector<EventVector> vectors(100);
  for (auto& v : vectors)
    for (auto& x : v) x = z(rng);
  const auto s = fit_normalization(vectors);
  for (std::size_t d = 0; d < kEventWidth; ++d) {
    double lo = vectors[0][d], hi = vectors[0][d];
    for (std::size_t i = 1; i < vectors.size(); ++i) {
      if (vectors[i][d] < lo) lo = vectors[i][d];
      if (vectors[i][d] > hi) hi = vectors[i][d];
    }
    EXPECT_EQ(s.min[d], lo);
    EXPECT_EQ(s.max[d], hi);
  }
}

TEST(ApplyNormalization, EndpointsAndOutOfRange) {
  FeatureStats s;
  s.min = filled(0);
  s.max = filled(1000);
  s.max[0] = 0;  // constant dimension
  EXPECT_EQ(apply_normalization(filled(0), s), filled(0));
  auto top = apply_normalization(s.max, s);
  EXPECT_EQ(top[1], 1.0);
  EXPECT_EQ(top[0], 0.0);
  auto big = filled(0);
  big[slot::kDuration] = 5000;
  EXPECT_DOUBLE_EQ(apply_normalization(big, s)[slot::kDuration], 5.0);
}

TEST(NormalizationProperty, TrainingSetMapsIntoUnitCube) {
  SimConfig c;
  c.iterations = 60;
  const auto flows = assemble_function_flows(simulate(c).events);
  const CharEmbedder e;
  std::vector<EventVector> raw;
  for (const auto& f : flows) {
    const auto v = vectorize_flow(f, e);
    raw.insert(raw.end(), v.begin(), v.end());
  }
  const auto stats = fit_normalization(raw);
  for (const auto& f : flows)
    for (const auto& v : featurize_flow(f, e, stats))
      for (double x : v) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
      }
  // Pure function of its inputs.
  EXPECT_EQ(featurize_flow(flows[3], e, stats), featurize_flow(flows[3], e, stats));
}

std::vector<EventVector> ramp(std::size_t n) {
  std::vector<EventVector> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = filled(static_cast<double>(i + 1));
  return v;
}

TEST(MakeWindows, FourEventsWindowThree) {
  const auto w = make_windows(ramp(4), 3, "F");
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].window(0, 0), 1.0);
  EXPECT_EQ(w[0].window(2, 0), 3.0);
  EXPECT_EQ(w[1].window(0, 0), 2.0);
  EXPECT_EQ(w[1].window(2, 0), 4.0);
  EXPECT_EQ(w[1].offset, 1u);
  EXPECT_EQ(w[1].sourceFlowId, "F");
}

TEST(MakeWindows, ExactFitHasNoPadding) {
  const auto w = make_windows(ramp(5), 5);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].paddedCount, 0u);
}

TEST(MakeWindows, ShortFlowIsPadded) {
  const auto w = make_windows(ramp(2), 10);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].paddedCount, 8u);
  EXPECT_TRUE(w[0].window.bottomRows(8).isZero(0));
}

TEST(MakeWindows, RejectsEmptyFlowAndOddSizes) {
  EXPECT_THROW(make_windows({}, 3), std::invalid_argument);
  EXPECT_THROW(make_windows(ramp(4), 4), std::invalid_argument);
}

TEST(MakeWindowsProperty, CountPaddingAndContent) {
  for (std::size_t n = 1; n <= 40; ++n)
    for (int w : kWindowSizes) {
      const auto vectors = ramp(n);
      const auto windows = make_windows(vectors, w);
      const std::size_t expected = n > static_cast<std::size_t>(w) ? n - static_cast<std::size_t>(w) + 1 : 1;
      ASSERT_EQ(windows.size(), expected);
      EXPECT_EQ(window_count(n, w), expected);
      for (std::size_t o = 0; o < windows.size(); ++o) {
        const auto& ws = windows[o];
        EXPECT_EQ(ws.offset, o);
        const std::size_t real = std::min<std::size_t>(static_cast<std::size_t>(w), n - o);
        EXPECT_EQ(ws.paddedCount, static_cast<std::size_t>(w) - real);
        for (std::size_t r = 0; r < static_cast<std::size_t>(w); ++r)
          for (std::size_t d = 0; d < kEventWidth; ++d) {
            const double x = ws.window(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d));
            EXPECT_EQ(x, r < real ? vectors[o + r][d] : 0.0);
          }
      }
    }
}

}  // namespace
}  // namespace flowguard

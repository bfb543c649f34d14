#include <gtest/gtest.h>

#include <fstream>

#include "foodsg/foodness.hpp"
#include "test_support.hpp"

using namespace foodsg;
using foodsg::testkit::TempDir;

namespace {

Manifest scored_manifest(const std::vector<double>& scores) {
  Manifest m;
  m.categories = {{0, "c", "", {}}};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    ImageRecord r;
    r.id = "i" + std::to_string(i);
    r.foodness_score = scores[i];
    m.records.push_back(r);
  }
  return m;
}

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST(Features, ConstantMidGray) {
  const auto f = extract_features(PixelImage(20, 20, 3, 128));
  ASSERT_EQ(f.size(), static_cast<std::size_t>(kFeatureDim));
  for (int c = 0; c < 3; ++c) {
    for (int b = 0; b < kHistogramBins; ++b) EXPECT_EQ(f[c * kHistogramBins + b], b == 8 ? 1.0 : 0.0);
  }
  for (int i = 3 * kHistogramBins; i < kFeatureDim; ++i) EXPECT_NEAR(f[i], 0.502, 1e-3);
}

TEST(Baseline, ZeroEpochsScoresHalf) {
  std::vector<LabeledFeatures> data{{{1.0, 2.0}, true}, {{-1.0, 0.5}, false}};
  const auto t = train_baseline(data, 0, 0.1);
  EXPECT_EQ(t.scorer.weights, std::vector<double>(2, 0.0));
  EXPECT_EQ(t.scorer.bias, 0.0);
  EXPECT_EQ(t.scorer.score(data[0].features), 0.5);
  EXPECT_EQ(BaselineScorer{}.score(testkit::gradient_image(40, 40)), 0.5);
}

TEST(Baseline, SeparableToyReachesFullAccuracy) {
  Rng rng(12);
  std::vector<LabeledFeatures> data;
  for (int i = 0; i < 60; ++i) {
    const double x = rng.uniform(-1, 1);
    const double y = rng.uniform(-1, 1);
    if (std::abs(x + y) < 0.2) continue;  // margin
    data.push_back({{x, y}, x + y > 0});
  }
  const auto t = train_baseline(data, 200, 1.0);
  int correct = 0;
  for (const auto& d : data) correct += (t.scorer.score(d.features) >= 0.5) == d.is_food;
  EXPECT_EQ(correct, static_cast<int>(data.size()));
  EXPECT_LT(t.loss_curve.back(), t.loss_curve.front());
}

TEST(Baseline, DuplicatedDataGivesSameWeights) {
  Rng rng(5);
  std::vector<LabeledFeatures> data;
  for (int i = 0; i < 30; ++i) data.push_back({{rng.normal(), rng.normal(), rng.normal()}, rng.bernoulli(0.5)});
  auto twice = data;
  twice.insert(twice.end(), data.begin(), data.end());
  const auto a = train_baseline(data, 50, 0.5);
  const auto b = train_baseline(twice, 50, 0.5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.scorer.weights[i], b.scorer.weights[i], 1e-12);
  EXPECT_NEAR(a.scorer.bias, b.scorer.bias, 1e-12);
}

TEST(Baseline, NeedsBothClasses) {
  std::vector<LabeledFeatures> data{{{1.0}, true}, {{2.0}, true}};
  EXPECT_THROW(train_baseline(data, 1, 0.1), Error);
  EXPECT_THROW(train_baseline({}, 1, 0.1), Error);
}

TEST(Imported, LookupAndMissing) {
  ImportedScorer s{{{"a", 0.9}}};
  EXPECT_EQ(s.score("a"), 0.9);
  EXPECT_THROW(s.score("b"), NotFoundError);
}

TEST(FilterStage, ThresholdKeepsEqualScores) {
  auto m = scored_manifest({0.4, 0.6, 0.5});
  const auto report = filter_stage(m, [](const ImageRecord& r) { return *r.foodness_score; }, 0.5);
  EXPECT_EQ(report.input_count, 3u);
  EXPECT_EQ(report.removed_count, 1u);
  EXPECT_EQ(report.reasons.at("non_food"), 1u);
  EXPECT_FALSE(m.records[0].active());
  EXPECT_TRUE(m.records[1].active());
  EXPECT_TRUE(m.records[2].active());
}

TEST(FilterStage, AllOnesRemovesNothing) {
  auto m = scored_manifest({1.0, 1.0, 1.0, 1.0});
  const auto report = filter_stage(m, [](const ImageRecord&) { return 1.0; });
  EXPECT_EQ(report.removed_count, 0u);
  EXPECT_TRUE(report.reasons.empty());
}

TEST(FilterStage, OutOfRangeOrMissingScoreNamesRecord) {
  auto m = scored_manifest({0.1});
  EXPECT_THROW(filter_stage(m, [](const ImageRecord&) { return 1.5; }), InvariantError);
  ImportedScorer empty;
  try {
    filter_stage(m, [&](const ImageRecord& r) { return empty.score(r.id); });
    FAIL();
  } catch (const InvariantError& e) {
    EXPECT_EQ(e.subject(), "i0");
  }
}

TEST(Evaluate, PerfectAndConstantScorers) {
  std::vector<FoodnessLabel> labels;
  for (int i = 0; i < 10; ++i) labels.push_back({"x" + std::to_string(i), i < 6});
  const auto perfect = evaluate_foodness(labels, [](const std::string& id) { return id < "x6" ? 1.0 : 0.0; });
  EXPECT_EQ(perfect.accuracy, 1.0);
  const auto half = evaluate_foodness(labels, [](const std::string&) { return 0.5; });
  EXPECT_DOUBLE_EQ(half.accuracy, 0.6);
  EXPECT_EQ(half.confusion.true_food, 6u);
  EXPECT_EQ(half.confusion.false_food, 4u);
}

TEST(Files, ScoresAndLabelsCsv) {
  TempDir dir;
  write_text(dir / "s.csv", "image_id,score\na,0.9\nb,0.25\r\n");
  const auto s = read_scores_csv(dir / "s.csv");
  EXPECT_EQ(s.score("a"), 0.9);
  EXPECT_EQ(s.score("b"), 0.25);
  write_text(dir / "bad.csv", "image_id,score\na,0.9\nb,zero\n");
  try {
    read_scores_csv(dir / "bad.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  write_text(dir / "l.csv", "image_id,is_food\na,1\nb,false\n");
  const auto l = read_labels_csv(dir / "l.csv");
  ASSERT_EQ(l.size(), 2u);
  EXPECT_TRUE(l[0].is_food);
  EXPECT_FALSE(l[1].is_food);
  write_text(dir / "dup.csv", "a,1\na,0\n");
  EXPECT_THROW(read_labels_csv(dir / "dup.csv"), InvariantError);
}

TEST(Files, BaselineRoundTrip) {
  TempDir dir;
  BaselineScorer s;
  for (std::size_t i = 0; i < s.weights.size(); ++i) s.weights[i] = 0.001 * static_cast<double>(i) - 0.1;
  s.bias = -0.75;
  save_baseline(s, dir / "b.bin");
  const auto back = load_baseline(dir / "b.bin");
  EXPECT_EQ(back.weights, s.weights);
  EXPECT_EQ(back.bias, s.bias);
  write_text(dir / "junk.bin", "nope");
  EXPECT_THROW(load_baseline(dir / "junk.bin"), IoError);
}

#include <gtest/gtest.h>

#include <cmath>

#include "foodsg/diversity.hpp"
#include "foodsg/synthetic.hpp"
#include "test_support.hpp"

using namespace foodsg;

namespace {

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double n = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    n += x * x;
  }
  for (auto& x : v) x /= std::sqrt(n);
  return v;
}

// Mean over ordered pairs i != j, halved; equal to the unordered-pair mean.
double oracle_mean_distance(const std::vector<std::vector<double>>& e) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = 0; j < e.size(); ++j) {
      if (i == j) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < e[i].size(); ++k) dot += e[i][k] * e[j][k];
      total += 0.5 * (1.0 - dot);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

Manifest two_category_manifest(int per_category) {
  Manifest m;
  m.categories = {{0, "a", "", {}}, {1, "b", "", {}}};
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < per_category; ++i) {
      ImageRecord r;
      r.id = std::to_string(c) + "-" + std::to_string(i);
      r.category_id = c;
      m.records.push_back(r);
    }
  }
  return m;
}

}  // namespace

TEST(JpegSize, SingleImageIsItsOwnEncoding) {
  Rng rng(1);
  const auto img = synthetic::smooth_image(256, 256, rng);
  const std::vector<PixelImage> one{img};
  EXPECT_EQ(jpeg_size_metric(one), encode_lossless(img).size());
  EXPECT_EQ(jpeg_size_metric(one, LosslessCodec::png), encode_png(img).size());
  EXPECT_THROW(jpeg_size_metric({}), Error);
}

TEST(JpegSize, ResizesMixedInputs) {
  Rng rng(2);
  const std::vector<PixelImage> mixed{synthetic::smooth_image(300, 200, rng), testkit::gradient_image(64, 64, 1)};
  EXPECT_GT(jpeg_size_metric(mixed), 0u);
}

TEST(JpegSize, DuplicatesLargerThanNoise) {
  std::vector<PixelImage> copies(20, synthetic::structured_image(256, 256, 3));
  Rng rng(4);
  std::vector<PixelImage> noise;
  for (int i = 0; i < 20; ++i) noise.push_back(synthetic::noise_image(256, 256, rng));
  EXPECT_GT(jpeg_size_metric(copies), jpeg_size_metric(noise));
}

TEST(PairwiseDistance, IdenticalAndOrthogonal) {
  const std::vector<std::vector<double>> same(5, std::vector<double>{0.6, 0.8});
  EXPECT_NEAR(pairwise_distance_metric(same, 0, 1), 0.0, 1e-12);
  const std::vector<std::vector<double>> ortho{{1.0, 0.0}, {0.0, 1.0}};
  EXPECT_NEAR(pairwise_distance_metric(ortho, 0, 1), 0.5, 1e-12);
  const std::vector<std::vector<double>> opposite{{1.0, 0.0}, {-1.0, 0.0}};
  EXPECT_NEAR(pairwise_distance_metric(opposite, 0, 1), 1.0, 1e-12);
}

TEST(PairwiseDistance, ExhaustiveMatchesOracle) {
  Rng rng(10);
  std::vector<std::vector<double>> e;
  for (int i = 0; i < 10; ++i) e.push_back(random_unit(6, rng));
  const double expected = oracle_mean_distance(e);
  EXPECT_NEAR(pairwise_distance_metric(e, 45, 3), expected, 1e-12);
  EXPECT_NEAR(pairwise_distance_metric(e, 1000, 3), expected, 1e-12);
  EXPECT_NEAR(pairwise_distance_metric(e, 0, 3), expected, 1e-12);
}

TEST(PairwiseDistance, SampledIsSeededAndClose) {
  Rng rng(11);
  std::vector<std::vector<double>> e;
  for (int i = 0; i < 80; ++i) e.push_back(random_unit(4, rng));
  const double a = pairwise_distance_metric(e, 2000, 9);
  EXPECT_EQ(a, pairwise_distance_metric(e, 2000, 9));
  EXPECT_NEAR(a, oracle_mean_distance(e), 0.03);
}

TEST(PairwiseDistance, Preconditions) {
  const std::vector<std::vector<double>> one{{1.0}};
  EXPECT_THROW(pairwise_distance_metric(one, 0, 1), Error);
  const std::vector<std::vector<double>> not_unit{{1.0, 1.0}, {1.0, 0.0}};
  EXPECT_THROW(pairwise_distance_metric(not_unit, 0, 1), Error);
}

TEST(Embedders, ProduceUnitVectors) {
  Rng rng(3);
  const auto img = synthetic::smooth_image(64, 64, rng);
  for (const auto& embed : {feature_embedder()}) {
    const auto v = embed(img);
    double n = 0.0;
    for (double x : v) n += x * x;
    EXPECT_NEAR(n, 1.0, 1e-12);
  }
}

TEST(Report, UnweightedDatasetMean) {
  // Pixel value selects a fixed embedding: category 0 pairs sit at distance
  // 0.2, category 1 at 0.4.
  const auto m = two_category_manifest(2);
  const std::map<std::string, std::vector<double>> table{{"0-0", {1.0, 0.0}},
                                                         {"0-1", {0.6, 0.8}},
                                                         {"1-0", {1.0, 0.0}},
                                                         {"1-1", {0.2, std::sqrt(0.96)}}};
  ImageLoader load = [&](const ImageRecord& r) {
    const int v = static_cast<int>(std::distance(table.begin(), table.find(r.id)));
    return PixelImage(8, 8, 3, static_cast<std::uint8_t>(v));
  };
  Embedder embed = [&](const PixelImage& img) { return std::next(table.begin(), img.at(0, 0))->second; };
  DiversityOptions opt;
  opt.jpeg = false;
  const auto report = dataset_report(m, load, embed, opt);
  ASSERT_EQ(report.per_category.size(), 2u);
  EXPECT_NEAR(*report.per_category.at(0).mean_pairwise_distance, 0.2, 1e-12);
  EXPECT_NEAR(*report.per_category.at(1).mean_pairwise_distance, 0.4, 1e-12);
  EXPECT_NEAR(*report.dataset_mean_distance, 0.3, 1e-12);
  EXPECT_FALSE(report.per_category.at(0).jpeg_bytes);
}

TEST(Report, JpegOnlyAndDeterministic) {
  const auto m = two_category_manifest(6);
  ImageLoader load = [](const ImageRecord& r) {
    return synthetic::structured_image(64, 48, std::hash<std::string>{}(r.id) % 1000);
  };
  DiversityOptions jpeg_only;
  jpeg_only.embed = false;
  const auto a = dataset_report(m, load, nullptr, jpeg_only);
  EXPECT_TRUE(a.per_category.at(0).jpeg_bytes);
  EXPECT_FALSE(a.per_category.at(0).mean_pairwise_distance);
  EXPECT_FALSE(a.dataset_mean_distance);
  EXPECT_TRUE(to_json(a)["per_category"]["0"]["mean_pairwise_distance"].is_null());

  DiversityOptions both;
  both.sample_cap = 5;  // force sampling
  const auto x = dataset_report(m, load, feature_embedder(), both);
  const auto y = dataset_report(m, load, feature_embedder(), both);
  EXPECT_EQ(to_json(x).dump(), to_json(y).dump());
  EXPECT_EQ(x.per_category.at(1).n_images, 6u);
}

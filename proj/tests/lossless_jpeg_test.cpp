#include <gtest/gtest.h>

#include "foodsg/codec.hpp"
#include "foodsg/lossless_jpeg.hpp"
#include "foodsg/synthetic.hpp"
#include "test_support.hpp"

using namespace foodsg;

namespace {

PixelImage noise(int w, int h, int c, std::uint64_t seed) {
  Rng rng(seed);
  PixelImage img(w, h, c);
  for (auto& v : img.samples()) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace

class LosslessPredictor : public ::testing::TestWithParam<int> {};

TEST_P(LosslessPredictor, RoundTripsGrayAndRgb) {
  const int p = GetParam();
  for (int c : {1, 3}) {
    for (const auto& img : {noise(33, 17, c, 100 + p), testkit::gradient_image(64, 48, c), PixelImage(5, 9, c, 0),
                            PixelImage(1, 1, c, 255)}) {
      const auto bytes = encode_lossless_jpeg(img, p);
      EXPECT_TRUE(is_lossless_jpeg(bytes));
      EXPECT_EQ(sniff_format(bytes), ImageFormat::lossless_jpeg);
      EXPECT_EQ(decode_lossless_jpeg(bytes), img) << "predictor " << p << " channels " << c;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllPredictors, LosslessPredictor, ::testing::Range(1, 8));

TEST(LosslessJpeg, BadPredictorThrows) {
  const PixelImage img(4, 4, 1, 0);
  EXPECT_THROW(encode_lossless_jpeg(img, 0), Error);
  EXPECT_THROW(encode_lossless_jpeg(img, 8), Error);
}

TEST(LosslessJpeg, ExtremeResidualsRoundTrip) {
  // Alternating 0/255 drives every residual to the widest categories.
  PixelImage img(40, 40, 3);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = ((x + y + c) % 2) ? 255 : 0;
  for (int p = 1; p <= 7; ++p) EXPECT_EQ(decode_lossless_jpeg(encode_lossless_jpeg(img, p)), img);
}

TEST(LosslessJpeg, StandardMarkers) {
  const auto bytes = encode_lossless_jpeg(testkit::gradient_image(8, 8), 1);
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(bytes[0], 0xFF);
  EXPECT_EQ(bytes[1], 0xD8);
  EXPECT_EQ(bytes[bytes.size() - 2], 0xFF);
  EXPECT_EQ(bytes[bytes.size() - 1], 0xD9);
  bool sof3 = false;
  for (std::size_t i = 0; i + 1 < bytes.size(); ++i) sof3 |= bytes[i] == 0xFF && bytes[i + 1] == 0xC3;
  EXPECT_TRUE(sof3);
  EXPECT_FALSE(is_lossless_jpeg(encode_jpeg(testkit::gradient_image(8, 8))));
}

TEST(LosslessJpeg, TruncationIsReported) {
  const auto bytes = encode_lossless_jpeg(noise(64, 64, 3, 1), 1);
  for (std::size_t keep : {bytes.size() / 2, bytes.size() - 2, std::size_t{20}}) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
    try {
      decode_lossless_jpeg(cut);
      FAIL() << "decoded a truncated stream of " << keep << " bytes";
    } catch (const DecodeError& e) {
      EXPECT_TRUE(e.truncated()) << e.what();
    }
  }
}

TEST(EncodeLossless, DeterministicAndRoundTrips) {
  Rng rng(4);
  const auto img = synthetic::smooth_image(256, 256, rng);
  for (auto codec : {LosslessCodec::jpeg, LosslessCodec::png}) {
    const auto a = encode_lossless(img, codec);
    EXPECT_EQ(a, encode_lossless(img, codec));
    EXPECT_EQ(decode_image(a), img);
  }
}

TEST(EncodeLossless, ConstantSmallerThanNoise) {
  const PixelImage flat(256, 256, 3, 90);
  const auto random = noise(256, 256, 3, 2);
  for (auto codec : {LosslessCodec::jpeg, LosslessCodec::png}) {
    EXPECT_LT(encode_lossless(flat, codec).size(), encode_lossless(random, codec).size());
  }
}

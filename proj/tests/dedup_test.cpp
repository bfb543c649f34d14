#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "foodsg/codec.hpp"
#include "foodsg/dedup.hpp"
#include "foodsg/synthetic.hpp"

using namespace foodsg;

namespace {

std::uint64_t flip_bits(std::uint64_t w, int count, Rng& rng) {
  for (int i = 0; i < count; ++i) w ^= std::uint64_t{1} << rng.below(64);
  return w;
}

ImageRecord hashed(const std::string& id, HashTriple h, int w = 100, int ht = 100, std::uint64_t bytes = 1000) {
  ImageRecord r;
  r.id = id;
  r.width = w;
  r.height = ht;
  r.byte_size = bytes;
  r.hash = h;
  return r;
}

std::vector<const ImageRecord*> view(const std::vector<ImageRecord>& rs) {
  std::vector<const ImageRecord*> out;
  for (const auto& r : rs) out.push_back(&r);
  return out;
}

// Components by depth-first search over the full adjacency matrix.
std::set<std::vector<std::string>> oracle_components(const std::vector<ImageRecord>& rs, int t) {
  const std::size_t n = rs.size();
  std::vector<int> comp(n, -1);
  int next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<std::size_t> stack{s};
    comp[s] = next;
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < n; ++j) {
        if (comp[j] < 0 && hamming(*rs[i].hash, *rs[j].hash) <= t) {
          comp[j] = next;
          stack.push_back(j);
        }
      }
    }
    ++next;
  }
  std::set<std::vector<std::string>> out;
  for (int c = 0; c < next; ++c) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
      if (comp[i] == c) ids.push_back(rs[i].id);
    }
    std::sort(ids.begin(), ids.end());
    if (ids.size() >= 2) out.insert(ids);
  }
  return out;
}

}  // namespace

TEST(AverageHash, ConstantAndHalves) {
  EXPECT_EQ(average_hash(PixelImage(40, 30, 3, 77)), 0u);
  PixelImage halves(64, 64, 1, 0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 64; ++x) halves.at(x, y) = 255;
  EXPECT_EQ(average_hash(halves), 0xFFFFFFFF00000000ull);
}

TEST(AverageHash, InvariantToTwoTimesUpscale) {
  Rng rng(21);
  for (int k = 0; k < 10; ++k) {
    const auto img = synthetic::block_image(8, 8, rng);
    const auto big = resize_bilinear(img, 2 * img.width(), 2 * img.height());
    EXPECT_EQ(average_hash(big), average_hash(img)) << k;
  }
}

TEST(DifferenceHash, Vectors) {
  EXPECT_EQ(difference_hash(PixelImage(50, 50, 3, 200)), 0u);
  PixelImage rising(90, 20, 1);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 90; ++x) rising.at(x, y) = static_cast<std::uint8_t>(2 * x);
  EXPECT_EQ(difference_hash(rising), 0xFFFFFFFFFFFFFFFFull);
  PixelImage mirrored(90, 20, 1);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 90; ++x) mirrored.at(x, y) = rising.at(89 - x, y);
  EXPECT_EQ(difference_hash(mirrored), 0u);
}

TEST(PerceptualHash, ConstantIsZero) {
  EXPECT_EQ(perceptual_hash(PixelImage(32, 32, 1, 0)), 0u);
  EXPECT_EQ(perceptual_hash(PixelImage(100, 70, 3, 133)), 0u);
}

TEST(PerceptualHash, LosslessReencodeIsIdentical) {
  Rng rng(2);
  const auto img = synthetic::smooth_image(120, 90, rng);
  EXPECT_EQ(hash_image(decode_image(encode_lossless(img))), hash_image(img));
  EXPECT_EQ(hash_image(decode_image(encode_png(img))), hash_image(img));
}

TEST(PerceptualHash, RobustToQuality90Jpeg) {
  Rng rng(90);
  int worst = 0;
  for (int k = 0; k < 10; ++k) {
    const auto img = synthetic::smooth_image(160, 120, rng);
    const auto again = decode_image(encode_jpeg(img, 90));
    worst = std::max(worst, std::popcount(perceptual_hash(img) ^ perceptual_hash(again)));
  }
  EXPECT_LE(worst, 6);
}

TEST(PerceptualHash, MatchesDctOfReference) {
  // A single horizontal cosine at frequency u=3 puts all AC energy into one
  // coefficient; every other AC term is ~0 so the median is ~0.
  PixelImage img(32, 32, 1);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      img.at(x, y) = round_to_u8(128.0 + 100.0 * std::cos(std::numbers::pi * (2 * x + 1) * 3 / 64.0));
  const auto h = perceptual_hash(img);
  EXPECT_TRUE(h & (std::uint64_t{1} << (63 - 3)));
  EXPECT_EQ(h & (std::uint64_t{1} << 63), 0u);
}

TEST(Hamming, Vectors) {
  const HashTriple a{0x0123456789abcdefull, 0xfedcba9876543210ull, 0x5555aaaa5555aaaaull};
  EXPECT_EQ(hamming(a, a), 0);
  EXPECT_EQ(hamming(a, HashTriple{~a.ahash, ~a.phash, ~a.dhash}), 192);
  EXPECT_EQ(to_hex(a), "0123456789abcdeffedcba98765432105555aaaa5555aaaa");
  EXPECT_EQ(parse_hash_triple(to_hex(a)), a);
  EXPECT_FALSE(parse_hash_triple("0123"));
  EXPECT_FALSE(parse_hash_triple(std::string(47, '0') + "G"));
}

TEST(Hamming, MetricProperties) {
  Rng rng(1);
  for (int k = 0; k < 2000; ++k) {
    const HashTriple a{rng.next(), rng.next(), rng.next()};
    const HashTriple b{rng.next(), rng.next(), rng.next()};
    const HashTriple c{rng.next(), rng.next(), rng.next()};
    EXPECT_EQ(hamming(a, b), hamming(b, a));
    EXPECT_LE(hamming(a, c), hamming(a, b) + hamming(b, c));
    EXPECT_EQ(hamming(a, b) == 0, a == b);
  }
}

TEST(Clusters, ExactPair) {
  Rng rng(3);
  const HashTriple h{rng.next(), rng.next(), rng.next()};
  const std::vector<ImageRecord> rs{hashed("a", h), hashed("b", h), hashed("c", {~h.ahash, ~h.phash, h.dhash})};
  const auto clusters = find_duplicate_clusters(view(rs), 0);
  ASSERT_EQ(clusters.size(), 1u);
  EXPECT_EQ(clusters[0].member_ids, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(clusters[0].max_pairwise_distance, 0);
}

TEST(Clusters, ChainIsTransitive) {
  const HashTriple a{0, 0, 0};
  const HashTriple b{0xF, 0, 0};
  const HashTriple c{0xFF, 0, 0};
  const std::vector<ImageRecord> rs{hashed("a", a), hashed("b", b), hashed("c", c)};
  const auto clusters = find_duplicate_clusters(view(rs), 4);
  ASSERT_EQ(clusters.size(), 1u);
  EXPECT_EQ(clusters[0].member_ids.size(), 3u);
  EXPECT_EQ(clusters[0].max_pairwise_distance, 8);
}

TEST(Clusters, MatchesSearchOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    std::vector<ImageRecord> rs;
    std::vector<HashTriple> centres;
    for (int i = 0; i < 15; ++i) centres.push_back({rng.next(), rng.next(), rng.next()});
    for (int i = 0; i < 50; ++i) {
      auto h = centres[rng.below(centres.size())];
      h.ahash = flip_bits(h.ahash, static_cast<int>(rng.below(5)), rng);
      h.dhash = flip_bits(h.dhash, static_cast<int>(rng.below(5)), rng);
      rs.push_back(hashed("r" + std::to_string(i), h));
    }
    for (int t : {0, 3, 6, 10}) {
      const auto clusters = find_duplicate_clusters(view(rs), t);
      std::set<std::vector<std::string>> got;
      for (const auto& c : clusters) got.insert(c.member_ids);
      EXPECT_EQ(got, oracle_components(rs, t)) << "seed " << seed << " t " << t;
      EXPECT_EQ(got.size(), clusters.size());
    }
  }
}

TEST(Clusters, MissingHashNamesRecord) {
  std::vector<ImageRecord> rs{hashed("a", {}), hashed("b", {})};
  rs[1].hash.reset();
  try {
    find_duplicate_clusters(view(rs), 0);
    FAIL();
  } catch (const InvariantError& e) {
    EXPECT_EQ(e.subject(), "b");
  }
}

TEST(Keeper, Ordering) {
  const std::vector<ImageRecord> area{hashed("small", {}, 320, 240), hashed("big", {}, 640, 480)};
  EXPECT_EQ(select_keeper(view(area)), "big");
  const std::vector<ImageRecord> bytes{hashed("x", {}, 100, 100, 80000), hashed("y", {}, 100, 100, 90000)};
  EXPECT_EQ(select_keeper(view(bytes)), "y");
  const std::vector<ImageRecord> ids{hashed("b", {}), hashed("a", {})};
  EXPECT_EQ(select_keeper(view(ids)), "a");
  const std::vector<ImageRecord> one{hashed("a", {})};
  EXPECT_THROW(select_keeper(view(one)), Error);
}

TEST(DedupRecords, PerCategoryAndIdempotent) {
  Manifest m;
  m.categories = {{0, "a", "", {}}, {1, "b", "", {}}};
  const HashTriple h{1, 2, 3};
  m.records = {hashed("p", h, 10, 10), hashed("q", h, 20, 20), hashed("r", h, 10, 10), hashed("s", {9, 9, 9})};
  m.records[2].category_id = 1;  // same hash, other category
  auto first = dedup_records(m, 0);
  EXPECT_EQ(first.report.removed_count, 1u);
  EXPECT_EQ(first.report.reasons.at("duplicate"), 1u);
  ASSERT_EQ(first.clusters.size(), 1u);
  EXPECT_EQ(first.clusters[0].keeper_id, "q");
  EXPECT_FALSE(m.find_record("p")->active());
  EXPECT_EQ(m.find_record("p")->removal->stage, Stage::dedup);
  EXPECT_TRUE(m.find_record("r")->active());
  const auto second = dedup_records(m, 0);
  EXPECT_EQ(second.report.removed_count, 0u);
  EXPECT_TRUE(second.clusters.empty());
}

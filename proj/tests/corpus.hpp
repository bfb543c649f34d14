#pragma once

// Small on-disk image corpus for pipeline runs.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "foodsg/pipeline.hpp"
#include "foodsg/synthetic.hpp"
#include "test_support.hpp"

namespace foodsg::testkit {

inline const std::vector<std::string>& corpus_categories() {
  static const std::vector<std::string> names{"chicken rice", "laksa", "satay"};
  return names;
}

// Per category: `per_category` distinct images (PNG and JPEG alternating),
// a re-encoded near copy of every third one, one byte-identical copy in the
// first category, plus a truncated and an undersized file in the second.
inline std::vector<CategoryInput> write_corpus(const std::filesystem::path& root, int per_category,
                                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CategoryInput> inputs;
  const auto& names = corpus_categories();
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto dir = root / names[c];
    std::filesystem::create_directories(dir);
    for (int i = 0; i < per_category; ++i) {
      const auto img = synthetic::smooth_image(64 + static_cast<int>(rng.below(32)), 48, rng);
      char name[32];
      std::snprintf(name, sizeof name, "%03d", i);
      if (i % 2) {
        write_jpeg(dir / (std::string(name) + ".jpg"), img, 92);
      } else {
        write_png(dir / (std::string(name) + ".png"), img);
      }
      if (i % 3 == 0) write_jpeg(dir / (std::string(name) + "_copy.jpg"), img, 85);
    }
    inputs.push_back({names[c], c == 2 ? "grill" : "hawker", dir});
  }
  std::filesystem::copy_file(root / names[0] / "000.png", root / names[0] / "000_same.png");
  const auto bytes = encode_jpeg(synthetic::smooth_image(80, 60, rng));
  write_file(root / names[1] / "broken.jpg", std::span(bytes).first(bytes.size() / 2));
  write_png(root / names[1] / "tiny.png", PixelImage(20, 40, 3, 128));
  return inputs;
}

// Scores CSV covering every record: a fixed pseudo-random score per id.
inline void write_scores(const Manifest& m, const std::filesystem::path& path, std::uint64_t seed) {
  std::string csv = "image_id,score\n";
  for (const auto& r : m.records) {
    Rng rng(seed ^ std::hash<std::string>{}(r.id));
    csv += r.id + "," + std::to_string(rng.uniform()) + "\n";
  }
  write_file_atomic(path, csv);
}

}  // namespace foodsg::testkit

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "foodsg/codec.hpp"
#include "foodsg/error.hpp"
#include "foodsg/foodness.hpp"
#include "foodsg/imaging.hpp"
#include "foodsg/manifest.hpp"
#include "foodsg/parallel.hpp"
#include "foodsg/random.hpp"
#include "foodsg/scl/augment.hpp"
#include "foodsg/scl/model.hpp"

namespace foodsg {

inline constexpr int kAverageImageSide = 256;

// Byte length of the lossless encoding of the category's 256x256 average
// image. Smaller means the average is vaguer, i.e. the category is more
// diverse.
inline std::uint64_t jpeg_size_metric(std::span<const PixelImage> images, LosslessCodec codec = LosslessCodec::jpeg) {
  if (images.empty()) throw Error("jpeg_size_metric: empty category");
  std::vector<PixelImage> resized;
  resized.reserve(images.size());
  for (const auto& img : images) resized.push_back(resize_bilinear(to_rgb(img), kAverageImageSide, kAverageImageSide));
  return encode_lossless(average_image(resized), codec).size();
}

// Maps an image to a unit-norm vector.
using Embedder = std::function<std::vector<double>(const PixelImage&)>;

inline constexpr double kUnitNormTolerance = 1e-6;

// (1 - cos) / 2 for unit vectors, clamped to [0,1] against rounding.
inline double embedding_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("embedding dimension mismatch");
  double ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i];
  return std::clamp((1.0 - ab) / 2.0, 0.0, 1.0);
}

inline void require_unit(std::span<const double> v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  if (!(std::abs(std::sqrt(n2) - 1.0) <= kUnitNormTolerance)) throw Error("embedder output is not unit-norm");
}

// Mean distance over all unordered pairs, or over `sample_cap` pairs drawn
// uniformly with replacement when there are more pairs than that.
inline double pairwise_distance_metric(std::span<const std::vector<double>> embeddings, std::size_t sample_cap,
                                       std::uint64_t seed) {
  const std::size_t n = embeddings.size();
  if (n < 2) throw Error("pairwise_distance_metric: at least two images required");
  for (const auto& e : embeddings) require_unit(e);
  const std::size_t pairs = n * (n - 1) / 2;
  double total = 0.0;
  if (sample_cap == 0 || pairs <= sample_cap) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) total += embedding_distance(embeddings[i], embeddings[j]);
    }
    return total / static_cast<double>(pairs);
  }
  Rng rng(seed);
  for (std::size_t k = 0; k < sample_cap; ++k) {
    const auto i = rng.below(n);
    auto j = rng.below(n - 1);
    if (j >= i) ++j;
    total += embedding_distance(embeddings[i], embeddings[j]);
  }
  return total / static_cast<double>(sample_cap);
}

inline std::vector<std::vector<double>> embed_all(std::span<const PixelImage> images, const Embedder& embed) {
  return parallel_map(images.size(), [&](std::size_t i) {
    auto e = embed(images[i]);
    require_unit(e);
    return e;
  });
}

inline double pairwise_distance_metric(std::span<const PixelImage> images, const Embedder& embed,
                                       std::size_t sample_cap, std::uint64_t seed) {
  if (images.size() < 2) throw Error("pairwise_distance_metric: at least two images required");
  const auto e = embed_all(images, embed);
  return pairwise_distance_metric(e, sample_cap, seed);
}

// Normalised hand-crafted feature vector; used when no trained encoder is
// supplied.
inline Embedder feature_embedder() {
  return [](const PixelImage& img) { return scl::unit(extract_features(img)); };
}

inline Embedder encoder_embedder(scl::Encoder encoder) {
  return [enc = std::move(encoder)](const PixelImage& img) {
    return scl::unit(enc.forward(scl::plain_view(img, enc.config().input_size)).embedding);
  };
}

struct CategoryDiversity {
  std::optional<std::uint64_t> jpeg_bytes;
  std::optional<double> mean_pairwise_distance;
  std::uint64_t n_images = 0;
};

struct DiversityReport {
  std::map<int, CategoryDiversity> per_category;
  std::optional<double> dataset_mean_distance;
};

inline json to_json(const DiversityReport& r) {
  json cats = json::object();
  for (const auto& [id, c] : r.per_category) {
    json j{{"n_images", c.n_images}};
    j["jpeg_bytes"] = c.jpeg_bytes ? json(*c.jpeg_bytes) : json(nullptr);
    j["mean_pairwise_distance"] = c.mean_pairwise_distance ? json(*c.mean_pairwise_distance) : json(nullptr);
    cats[std::to_string(id)] = std::move(j);
  }
  return {{"per_category", std::move(cats)},
          {"dataset_mean_distance", r.dataset_mean_distance ? json(*r.dataset_mean_distance) : json(nullptr)}};
}

struct DiversityOptions {
  bool jpeg = true;
  bool embed = true;
  std::size_t sample_cap = 2000;
  std::uint64_t seed = 7;
  LosslessCodec codec = LosslessCodec::jpeg;
};

using ImageLoader = std::function<PixelImage(const ImageRecord&)>;

// Metrics over the active records of every category. Categories with a
// single image get no distance; the dataset mean is the unweighted mean of
// the category means.
inline DiversityReport dataset_report(const Manifest& m, const ImageLoader& load, const Embedder& embed,
                                      const DiversityOptions& opt) {
  std::map<int, std::vector<const ImageRecord*>> by_category;
  for (const auto& r : m.records) {
    if (r.active()) by_category[r.category_id].push_back(&r);
  }
  DiversityReport out;
  double sum = 0.0;
  int counted = 0;
  for (const auto& [category, records] : by_category) {
    const auto images = parallel_map(records.size(), [&](std::size_t i) { return load(*records[i]); });
    CategoryDiversity c;
    c.n_images = images.size();
    if (opt.jpeg) c.jpeg_bytes = jpeg_size_metric(images, opt.codec);
    if (opt.embed && images.size() >= 2) {
      if (!embed) throw Error("dataset_report: embedding metric requested without an embedder");
      c.mean_pairwise_distance =
          pairwise_distance_metric(images, embed, opt.sample_cap, derive_seed(opt.seed, static_cast<std::uint64_t>(category)));
      sum += *c.mean_pairwise_distance;
      ++counted;
    }
    out.per_category[category] = c;
  }
  if (counted > 0) out.dataset_mean_distance = sum / counted;
  return out;
}

}  // namespace foodsg

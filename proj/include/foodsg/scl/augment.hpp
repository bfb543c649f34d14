#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "foodsg/error.hpp"
#include "foodsg/imaging.hpp"
#include "foodsg/random.hpp"

namespace foodsg::scl {

// Random square crop covering a uniform fraction of the shorter side's area,
// resized to the output size, then an optional horizontal flip and a uniform
// brightness offset (in units of full scale).
struct Augmentation {
  double crop_scale_min = 0.6;
  double crop_scale_max = 1.0;
  double flip_probability = 0.5;
  double brightness = 0.2;

  static Augmentation identity() { return Augmentation{1.0, 1.0, 0.0, 0.0}; }
};

struct AugmentationPair {
  Augmentation first;
  Augmentation second;

  static AugmentationPair identity() { return {Augmentation::identity(), Augmentation::identity()}; }
};

// Resize to out_size x out_size without rounding (the un-augmented view).
inline RealImage plain_view(const PixelImage& img, int out_size) {
  return crop_resize(to_rgb(img), 0, 0, img.width(), img.height(), out_size, out_size);
}

inline RealImage augment(const PixelImage& src, const Augmentation& aug, Rng& rng, int out_size) {
  if (aug.crop_scale_min <= 0 || aug.crop_scale_max > 1 || aug.crop_scale_min > aug.crop_scale_max) {
    throw Error("crop scale range must satisfy 0 < min <= max <= 1");
  }
  const auto img = to_rgb(src);
  const double scale = rng.uniform(aug.crop_scale_min, aug.crop_scale_max);
  const double side = std::sqrt(scale) * std::min(img.width(), img.height());
  const double x0 = rng.uniform() * (img.width() - side);
  const double y0 = rng.uniform() * (img.height() - side);
  auto view = crop_resize(img, x0, y0, side, side, out_size, out_size);
  if (rng.bernoulli(aug.flip_probability)) {
    for (int y = 0; y < out_size; ++y) {
      for (int x = 0; x < out_size / 2; ++x) {
        for (int c = 0; c < 3; ++c) std::swap(view.at(x, y, c), view.at(out_size - 1 - x, y, c));
      }
    }
  }
  const double delta = rng.uniform(-aug.brightness, aug.brightness) * 255.0;
  for (double& v : view.samples()) v = std::clamp(v + delta, 0.0, 255.0);
  return view;
}

// 2N views: view i < N is Aug1(x_i) and view i + N is Aug2(x_i), so the
// sibling map is i <-> i + N.
struct MultiviewBatch {
  std::vector<RealImage> views;
  std::vector<int> labels;
  std::vector<std::size_t> pair;

  std::size_t size() const { return views.size(); }
};

inline MultiviewBatch make_multiview_batch(std::span<const PixelImage* const> samples, std::span<const int> labels,
                                           const AugmentationPair& aug, std::uint64_t seed, int out_size) {
  if (samples.empty()) throw Error("make_multiview_batch: empty input");
  if (samples.size() != labels.size()) throw Error("make_multiview_batch: one label per sample required");
  const std::size_t n = samples.size();
  MultiviewBatch b;
  b.views.resize(2 * n);
  b.labels.resize(2 * n);
  b.pair.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng r1(derive_seed(seed, i, 1));
    Rng r2(derive_seed(seed, i, 2));
    b.views[i] = augment(*samples[i], aug.first, r1, out_size);
    b.views[i + n] = augment(*samples[i], aug.second, r2, out_size);
    b.labels[i] = b.labels[i + n] = labels[i];
    b.pair[i] = i + n;
    b.pair[i + n] = i;
  }
  return b;
}

}  // namespace foodsg::scl

#pragma once

// Seeded synthetic images for tests, demos and the desk-scale training set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "foodsg/imaging.hpp"
#include "foodsg/random.hpp"

namespace foodsg::synthetic {

inline constexpr int kPatternClasses = 3;

inline const std::vector<std::string>& pattern_class_names() {
  static const std::vector<std::string> names{"horizontal", "vertical", "checker"};
  return names;
}

// Two-colour pattern: class 0 horizontal stripes, 1 vertical stripes,
// 2 checkerboard. Period, phase and both colours are random; Gaussian noise
// (sd 0.05 of full scale) is added.
inline PixelImage pattern_image(int cls, int size, Rng& rng) {
  const double period = rng.uniform(5.0, 9.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double fg[3];
  double bg[3];
  for (double& v : fg) v = rng.uniform();
  for (double& v : bg) v = rng.uniform();
  PixelImage img(size, size, 3);
  const double w = 2.0 * std::numbers::pi / period;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double m;
      switch (cls) {
        case 0: m = std::sin(w * y + phase); break;
        case 1: m = std::sin(w * x + phase); break;
        default: m = std::sin(w * x + phase) * std::sin(w * y + phase); break;
      }
      const bool on = m > 0.0;
      for (int c = 0; c < 3; ++c) {
        const double v = (on ? fg[c] : bg[c]) + 0.05 * rng.normal();
        img.at(x, y, c) = round_to_u8(std::clamp(v, 0.0, 1.0) * 255.0);
      }
    }
  }
  return img;
}

struct PatternSet {
  std::vector<PixelImage> images;
  std::vector<int> labels;
};

// n_per_class images of each class, interleaved 0,1,2,0,1,2,...
inline PatternSet pattern_dataset(int n_per_class, int size, std::uint64_t seed) {
  PatternSet out;
  Rng rng(seed);
  for (int i = 0; i < n_per_class * kPatternClasses; ++i) {
    out.images.push_back(pattern_image(i % kPatternClasses, size, rng));
    out.labels.push_back(i % kPatternClasses);
  }
  return out;
}

// Independent uniform RGB noise.
inline PixelImage noise_image(int width, int height, Rng& rng) {
  PixelImage img(width, height, 3);
  for (auto& v : img.samples()) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// Smooth random "photo": a sum of a few low-frequency colour waves plus
// soft discs. Varies slowly, so mild lossy compression barely moves it.
inline PixelImage smooth_image(int width, int height, Rng& rng) {
  struct Wave {
    double fx, fy, phase, amp[3];
  };
  struct Disc {
    double cx, cy, r, colour[3];
  };
  std::vector<Wave> waves(4);
  for (auto& w : waves) {
    w.fx = rng.uniform(-3.0, 3.0);
    w.fy = rng.uniform(-3.0, 3.0);
    w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (double& a : w.amp) a = rng.uniform(-40.0, 40.0);
  }
  std::vector<Disc> discs(3);
  for (auto& d : discs) {
    d.cx = rng.uniform(0.2, 0.8) * width;
    d.cy = rng.uniform(0.2, 0.8) * height;
    d.r = rng.uniform(0.1, 0.25) * std::min(width, height);
    for (double& c : d.colour) c = rng.uniform(-60.0, 60.0);
  }
  double base[3];
  for (double& b : base) b = rng.uniform(80.0, 170.0);
  PixelImage img(width, height, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / width;
      const double v = static_cast<double>(y) / height;
      for (int c = 0; c < 3; ++c) {
        double s = base[c];
        for (const auto& w : waves) s += w.amp[c] * std::sin(2.0 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
        for (const auto& d : discs) {
          const double dist = std::hypot(x - d.cx, y - d.cy) / d.r;
          s += d.colour[c] / (1.0 + std::exp(8.0 * (dist - 1.0)));
        }
        img.at(x, y, c) = round_to_u8(std::clamp(s, 0.0, 255.0));
      }
    }
  }
  return img;
}

// High-contrast, detailed image: full-amplitude fine texture, hard-edged
// shapes and colour gradients. Averages of copies stay this detailed.
inline PixelImage structured_image(int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  PixelImage img(width, height, 3);
  const auto texture = noise_image(width, height, rng);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int grad = (c == 0 ? x : c == 1 ? y : x + y) * 255 / (width + height);
        img.at(x, y, c) = static_cast<std::uint8_t>((texture.at(x, y, c) + grad) / 2);
      }
    }
  }
  for (int k = 0; k < 12; ++k) {
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(width)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(height)));
    const int w = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, width / 4))));
    const int h = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, height / 4))));
    std::uint8_t col[3];
    for (auto& v : col) v = static_cast<std::uint8_t>(rng.below(256));
    for (int y = y0; y < std::min(height, y0 + h); ++y) {
      for (int x = x0; x < std::min(width, x0 + w); ++x) {
        if (((x + y) & 1) == 0) {
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = col[c];
        }
      }
    }
  }
  return img;
}

// Blocky random image: a grid of flat cells. Resizing by integer factors
// preserves its hashes.
inline PixelImage block_image(int cells, int cell_size, Rng& rng) {
  PixelImage img(cells * cell_size, cells * cell_size, 3);
  for (int cy = 0; cy < cells; ++cy) {
    for (int cx = 0; cx < cells; ++cx) {
      std::uint8_t col[3];
      for (auto& v : col) v = static_cast<std::uint8_t>(rng.below(256));
      for (int y = cy * cell_size; y < (cy + 1) * cell_size; ++y) {
        for (int x = cx * cell_size; x < (cx + 1) * cell_size; ++x) {
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = col[c];
        }
      }
    }
  }
  return img;
}

// Copy of `img` with every sample moved by at most `amount` levels.
inline PixelImage jitter(const PixelImage& img, int amount, Rng& rng) {
  PixelImage out = img;
  for (auto& v : out.samples()) {
    const int d = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * amount + 1))) - amount;
    v = static_cast<std::uint8_t>(std::clamp(static_cast<int>(v) + d, 0, 255));
  }
  return out;
}

}  // namespace foodsg::synthetic

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "foodsg/error.hpp"

namespace foodsg {

// Row-major interleaved image, 1 (gray) or 3 (RGB) channels.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    check_shape(width, height, channels);
    samples_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }
  Image(int width, int height, int channels, std::vector<T> samples)
      : width_(width), height_(height), channels_(channels), samples_(std::move(samples)) {
    check_shape(width, height, channels);
    if (samples_.size() != static_cast<std::size_t>(width) * height * channels) {
      throw InvariantError("", "sample count does not match width*height*channels");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return samples_.empty(); }

  T& at(int x, int y, int c = 0) { return samples_[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return samples_[index(x, y, c)]; }

  std::span<T> samples() { return samples_; }
  std::span<const T> samples() const { return samples_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  static void check_shape(int w, int h, int c) {
    if (w < 1 || h < 1) throw InvariantError("", "image dimensions must be at least 1x1");
    if (c != 1 && c != 3) throw InvariantError("", "image must have 1 or 3 channels");
  }
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> samples_;
};

using PixelImage = Image<std::uint8_t>;
using RealImage = Image<double>;

// Every real-to-8-bit conversion in the library goes through here.
inline std::uint8_t round_to_u8(double v) {
  const double r = std::floor(v + 0.5);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

inline RealImage to_real(const PixelImage& img) {
  std::vector<double> s(img.samples().begin(), img.samples().end());
  return RealImage(img.width(), img.height(), img.channels(), std::move(s));
}

inline PixelImage to_pixels(const RealImage& img) {
  std::vector<std::uint8_t> s(img.samples().size());
  std::transform(img.samples().begin(), img.samples().end(), s.begin(), round_to_u8);
  return PixelImage(img.width(), img.height(), img.channels(), std::move(s));
}

// BT.601 luma.
inline PixelImage to_grayscale(const PixelImage& img) {
  if (img.channels() == 1) return img;
  PixelImage out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      out.at(x, y) = round_to_u8(0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2));
    }
  }
  return out;
}

inline PixelImage to_rgb(const PixelImage& img) {
  if (img.channels() == 3) return img;
  PixelImage out(img.width(), img.height(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto v = img.at(x, y);
      out.at(x, y, 0) = out.at(x, y, 1) = out.at(x, y, 2) = v;
    }
  }
  return out;
}

namespace detail {

struct Tap {
  int lo;
  int hi;
  double frac;  // weight of `hi`
};

// Half-pixel-centre sampling positions for resizing `in` samples to `out`.
inline std::vector<Tap> bilinear_taps(int in, int out, double offset = 0.0, double span = -1.0) {
  if (span < 0) span = in;
  std::vector<Tap> taps(out);
  const double scale = span / out;
  for (int i = 0; i < out; ++i) {
    double src = offset + (i + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in - 1);
    taps[i] = Tap{lo, hi, src - lo};
  }
  return taps;
}

template <typename T>
RealImage resample_region(const Image<T>& img, double x0, double y0, double w, double h, int out_w,
                          int out_h) {
  const auto tx = bilinear_taps(img.width(), out_w, x0, w);
  const auto ty = bilinear_taps(img.height(), out_h, y0, h);
  RealImage out(out_w, out_h, img.channels());
  for (int y = 0; y < out_h; ++y) {
    const auto& vy = ty[y];
    for (int x = 0; x < out_w; ++x) {
      const auto& vx = tx[x];
      for (int c = 0; c < img.channels(); ++c) {
        const double top = (1.0 - vx.frac) * img.at(vx.lo, vy.lo, c) + vx.frac * img.at(vx.hi, vy.lo, c);
        const double bottom = (1.0 - vx.frac) * img.at(vx.lo, vy.hi, c) + vx.frac * img.at(vx.hi, vy.hi, c);
        out.at(x, y, c) = (1.0 - vy.frac) * top + vy.frac * bottom;
      }
    }
  }
  return out;
}

}  // namespace detail

// Bilinear resize with half-pixel centres and edge clamping; the result is
// rounded half-up to 8 bits.
inline PixelImage resize_bilinear(const PixelImage& img, int w, int h) {
  if (w < 1 || h < 1) throw Error("resize target must be at least 1x1");
  return to_pixels(detail::resample_region(img, 0, 0, img.width(), img.height(), w, h));
}

inline RealImage resize_bilinear(const RealImage& img, int w, int h) {
  if (w < 1 || h < 1) throw Error("resize target must be at least 1x1");
  return detail::resample_region(img, 0, 0, img.width(), img.height(), w, h);
}

// Resamples the axis-aligned region (x0, y0, w, h), in source pixel units, to
// out_w x out_h without rounding.
template <typename T>
RealImage crop_resize(const Image<T>& img, double x0, double y0, double w, double h, int out_w, int out_h) {
  return detail::resample_region(img, x0, y0, w, h, out_w, out_h);
}

// Per-pixel arithmetic mean, rounded half-up. All inputs must share one shape.
inline PixelImage average_image(std::span<const PixelImage> imgs) {
  if (imgs.empty()) throw Error("average_image needs at least one image");
  const auto& first = imgs.front();
  std::vector<std::uint64_t> sums(first.samples().size(), 0);
  for (const auto& img : imgs) {
    if (img.width() != first.width() || img.height() != first.height() || img.channels() != first.channels()) {
      throw Error("average_image inputs must share one shape");
    }
    auto s = img.samples();
    for (std::size_t i = 0; i < s.size(); ++i) sums[i] += s[i];
  }
  // Integer sums keep the result independent of input order.
  std::vector<std::uint8_t> out(sums.size());
  const double n = static_cast<double>(imgs.size());
  for (std::size_t i = 0; i < sums.size(); ++i) out[i] = round_to_u8(static_cast<double>(sums[i]) / n);
  return PixelImage(first.width(), first.height(), first.channels(), std::move(out));
}

}  // namespace foodsg

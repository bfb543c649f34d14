#pragma once

// Desk-scale encoder, projection head and linear prediction head with
// hand-written backward passes. Parameters of each module live in one flat
// vector so optimisers and checkpoints can treat them uniformly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "foodsg/error.hpp"
#include "foodsg/imaging.hpp"
#include "foodsg/random.hpp"
#include "foodsg/scl/matrix.hpp"

namespace foodsg::scl {

struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;  // channel-major

  FeatureMap() = default;
  FeatureMap(int c, int h, int w) : channels(c), height(h), width(w), values(static_cast<std::size_t>(c) * h * w) {}

  double* plane(int c) { return values.data() + static_cast<std::size_t>(c) * height * width; }
  const double* plane(int c) const { return values.data() + static_cast<std::size_t>(c) * height * width; }
};

namespace layers {

// 3x3 convolution, stride 1, zero padding 1. weight[o][i][ky][kx], bias[o].
inline FeatureMap conv3x3(const FeatureMap& in, std::span<const double> weight, std::span<const double> bias,
                          int out_channels) {
  FeatureMap out(out_channels, in.height, in.width);
  const int h = in.height;
  const int w = in.width;
  for (int o = 0; o < out_channels; ++o) {
    double* dst = out.plane(o);
    std::fill(dst, dst + h * w, bias[o]);
    for (int i = 0; i < in.channels; ++i) {
      const double* src = in.plane(i);
      const double* k = weight.data() + (static_cast<std::size_t>(o) * in.channels + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          const double kv = k[ky * 3 + kx];
          for (int y = y0; y < y1; ++y) {
            double* drow = dst + y * w;
            const double* srow = src + (y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) drow[x] += kv * srow[x];
          }
        }
      }
    }
  }
  return out;
}

// Accumulates weight/bias gradients and returns the input gradient.
inline FeatureMap conv3x3_backward(const FeatureMap& in, const FeatureMap& grad_out, std::span<const double> weight,
                                   std::span<double> grad_weight, std::span<double> grad_bias, bool need_input_grad) {
  const int h = in.height;
  const int w = in.width;
  FeatureMap grad_in;
  if (need_input_grad) grad_in = FeatureMap(in.channels, h, w);
  for (int o = 0; o < grad_out.channels; ++o) {
    const double* g = grad_out.plane(o);
    double gb = 0.0;
    for (int p = 0; p < h * w; ++p) gb += g[p];
    grad_bias[o] += gb;
    for (int i = 0; i < in.channels; ++i) {
      const double* src = in.plane(i);
      const std::size_t kbase = (static_cast<std::size_t>(o) * in.channels + i) * 9;
      double* gin = need_input_grad ? grad_in.plane(i) : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          const double kv = weight[kbase + ky * 3 + kx];
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* grow = g + y * w;
            const double* srow = src + (y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) acc += grow[x] * srow[x];
            if (gin) {
              double* girow = gin + (y + dy) * w + dx;
              for (int x = x0; x < x1; ++x) girow[x] += kv * grow[x];
            }
          }
          grad_weight[kbase + ky * 3 + kx] += acc;
        }
      }
    }
  }
  return grad_in;
}

inline void relu_inplace(FeatureMap& m) {
  for (double& v : m.values) v = v > 0.0 ? v : 0.0;
}

// Gradient through ReLU given its output.
inline void relu_backward_inplace(const FeatureMap& out, FeatureMap& grad) {
  for (std::size_t i = 0; i < grad.values.size(); ++i) {
    if (out.values[i] <= 0.0) grad.values[i] = 0.0;
  }
}

// 2x2 average pooling, stride 2 (odd trailing rows/columns are dropped).
inline FeatureMap avg_pool2(const FeatureMap& in) {
  FeatureMap out(in.channels, in.height / 2, in.width / 2);
  for (int c = 0; c < in.channels; ++c) {
    const double* src = in.plane(c);
    double* dst = out.plane(c);
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        const double* a = src + (2 * y) * in.width + 2 * x;
        dst[y * out.width + x] = 0.25 * (a[0] + a[1] + a[in.width] + a[in.width + 1]);
      }
    }
  }
  return out;
}

inline FeatureMap avg_pool2_backward(const FeatureMap& in_shape, const FeatureMap& grad_out) {
  FeatureMap grad(in_shape.channels, in_shape.height, in_shape.width);
  for (int c = 0; c < grad.channels; ++c) {
    const double* g = grad_out.plane(c);
    double* dst = grad.plane(c);
    for (int y = 0; y < grad_out.height; ++y) {
      for (int x = 0; x < grad_out.width; ++x) {
        const double v = 0.25 * g[y * grad_out.width + x];
        double* a = dst + (2 * y) * grad.width + 2 * x;
        a[0] += v;
        a[1] += v;
        a[grad.width] += v;
        a[grad.width + 1] += v;
      }
    }
  }
  return grad;
}

// y = W x (+ b), W row-major [out][in].
inline std::vector<double> dense(std::span<const double> x, std::span<const double> weight,
                                 std::span<const double> bias, std::size_t out_dim) {
  std::vector<double> y(out_dim);
  for (std::size_t o = 0; o < out_dim; ++o) {
    y[o] = (bias.empty() ? 0.0 : bias[o]) + dot(weight.subspan(o * x.size(), x.size()), x);
  }
  return y;
}

inline std::vector<double> dense_backward(std::span<const double> x, std::span<const double> grad_y,
                                          std::span<const double> weight, std::span<double> grad_weight,
                                          std::span<double> grad_bias) {
  std::vector<double> grad_x(x.size(), 0.0);
  for (std::size_t o = 0; o < grad_y.size(); ++o) {
    const double g = grad_y[o];
    if (!grad_bias.empty()) grad_bias[o] += g;
    const std::size_t base = o * x.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
      grad_weight[base + i] += g * x[i];
      grad_x[i] += g * weight[base + i];
    }
  }
  return grad_x;
}

}  // namespace layers

// Offsets of one parameter tensor inside a flat vector.
struct Slice {
  std::size_t offset = 0;
  std::size_t size = 0;

  std::span<double> of(std::vector<double>& v) const { return {v.data() + offset, size}; }
  std::span<const double> of(const std::vector<double>& v) const { return {v.data() + offset, size}; }
};

inline void he_normal(std::span<double> w, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : w) v = stddev * rng.normal();
}

struct EncoderConfig {
  int input_size = 32;
  int conv1_channels = 16;
  int conv2_channels = 32;
  int embed_dim = 64;  // d_e

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// conv3x3 -> ReLU -> avgpool2 -> conv3x3 -> ReLU -> global average -> linear.
// Input views are RGB RealImages with samples on the 0..255 scale.
class Encoder {
 public:
  struct Cache {
    FeatureMap input;
    FeatureMap conv1;  // post-ReLU
    FeatureMap pool1;
    FeatureMap conv2;  // post-ReLU
    std::vector<double> pooled;
    std::vector<double> embedding;  // e before normalisation
  };

  Encoder() : Encoder(EncoderConfig{}) {}
  explicit Encoder(const EncoderConfig& cfg) : cfg_(cfg) {
    if (cfg.input_size < 2 || cfg.conv1_channels < 1 || cfg.conv2_channels < 1 || cfg.embed_dim < 1) {
      throw Error("invalid encoder configuration");
    }
    std::size_t off = 0;
    auto take = [&off](std::size_t n) {
      Slice s{off, n};
      off += n;
      return s;
    };
    const auto c1 = static_cast<std::size_t>(cfg.conv1_channels);
    const auto c2 = static_cast<std::size_t>(cfg.conv2_channels);
    w1_ = take(c1 * 3 * 9);
    b1_ = take(c1);
    w2_ = take(c2 * c1 * 9);
    b2_ = take(c2);
    w3_ = take(static_cast<std::size_t>(cfg.embed_dim) * c2);
    params_.assign(off, 0.0);
  }

  void initialize(Rng& rng) {
    std::fill(params_.begin(), params_.end(), 0.0);
    he_normal(w1_.of(params_), 3 * 9, rng);
    he_normal(w2_.of(params_), static_cast<std::size_t>(cfg_.conv1_channels) * 9, rng);
    he_normal(w3_.of(params_), static_cast<std::size_t>(cfg_.conv2_channels), rng);
  }

  const EncoderConfig& config() const { return cfg_; }
  int embed_dim() const { return cfg_.embed_dim; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  FeatureMap prepare(const RealImage& view) const {
    if (view.width() != cfg_.input_size || view.height() != cfg_.input_size) {
      throw Error("encoder input must be " + std::to_string(cfg_.input_size) + "x" + std::to_string(cfg_.input_size));
    }
    FeatureMap x(3, view.height(), view.width());
    for (int c = 0; c < 3; ++c) {
      double* dst = x.plane(c);
      const int src_c = view.channels() == 1 ? 0 : c;
      for (int y = 0; y < view.height(); ++y) {
        for (int xx = 0; xx < view.width(); ++xx) dst[y * view.width() + xx] = (view.at(xx, y, src_c) / 255.0 - 0.5) * 2.0;
      }
    }
    return x;
  }

  Cache forward(const RealImage& view) const {
    Cache c;
    c.input = prepare(view);
    c.conv1 = layers::conv3x3(c.input, w1_.of(params_), b1_.of(params_), cfg_.conv1_channels);
    layers::relu_inplace(c.conv1);
    c.pool1 = layers::avg_pool2(c.conv1);
    c.conv2 = layers::conv3x3(c.pool1, w2_.of(params_), b2_.of(params_), cfg_.conv2_channels);
    layers::relu_inplace(c.conv2);
    c.pooled.assign(cfg_.conv2_channels, 0.0);
    const double area = static_cast<double>(c.conv2.height) * c.conv2.width;
    for (int ch = 0; ch < cfg_.conv2_channels; ++ch) {
      const double* p = c.conv2.plane(ch);
      double s = 0.0;
      for (int i = 0; i < c.conv2.height * c.conv2.width; ++i) s += p[i];
      c.pooled[ch] = s / area;
    }
    c.embedding = layers::dense(c.pooled, w3_.of(params_), {}, static_cast<std::size_t>(cfg_.embed_dim));
    return c;
  }

  // Accumulates dL/dparams into `grads` (same layout as params()).
  void backward(const Cache& c, std::span<const double> grad_embedding, std::vector<double>& grads) const {
    auto grad_pooled = layers::dense_backward(c.pooled, grad_embedding, w3_.of(params_), w3_.of(grads), {});
    FeatureMap g2(c.conv2.channels, c.conv2.height, c.conv2.width);
    const double area = static_cast<double>(g2.height) * g2.width;
    for (int ch = 0; ch < g2.channels; ++ch) {
      double* p = g2.plane(ch);
      std::fill(p, p + g2.height * g2.width, grad_pooled[ch] / area);
    }
    layers::relu_backward_inplace(c.conv2, g2);
    auto gp1 = layers::conv3x3_backward(c.pool1, g2, w2_.of(params_), w2_.of(grads), b2_.of(grads), true);
    auto g1 = layers::avg_pool2_backward(c.conv1, gp1);
    layers::relu_backward_inplace(c.conv1, g1);
    layers::conv3x3_backward(c.input, g1, w1_.of(params_), w1_.of(grads), b1_.of(grads), false);
  }

 private:
  EncoderConfig cfg_;
  Slice w1_, b1_, w2_, b2_, w3_;
  std::vector<double> params_;
};

// One-hidden-layer MLP R^{d_e} -> R^{d_p}.
class ProjectionHead {
 public:
  struct Cache {
    std::vector<double> input;
    std::vector<double> hidden;  // post-ReLU
    std::vector<double> output;
  };

  ProjectionHead() : ProjectionHead(64, 64, 32) {}
  ProjectionHead(int in_dim, int hidden_dim, int out_dim) : in_(in_dim), hidden_(hidden_dim), out_(out_dim) {
    if (in_dim < 1 || hidden_dim < 1 || out_dim < 1) throw Error("invalid projection head shape");
    const auto i = static_cast<std::size_t>(in_dim);
    const auto h = static_cast<std::size_t>(hidden_dim);
    const auto o = static_cast<std::size_t>(out_dim);
    w1_ = Slice{0, h * i};
    b1_ = Slice{h * i, h};
    w2_ = Slice{h * i + h, o * h};
    b2_ = Slice{h * i + h + o * h, o};
    params_.assign(h * i + h + o * h + o, 0.0);
  }

  void initialize(Rng& rng) {
    std::fill(params_.begin(), params_.end(), 0.0);
    he_normal(w1_.of(params_), static_cast<std::size_t>(in_), rng);
    he_normal(w2_.of(params_), static_cast<std::size_t>(hidden_), rng);
  }

  int in_dim() const { return in_; }
  int hidden_dim() const { return hidden_; }
  int out_dim() const { return out_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  Cache forward(std::span<const double> e) const {
    Cache c;
    c.input.assign(e.begin(), e.end());
    c.hidden = layers::dense(e, w1_.of(params_), b1_.of(params_), static_cast<std::size_t>(hidden_));
    for (double& v : c.hidden) v = v > 0.0 ? v : 0.0;
    c.output = layers::dense(c.hidden, w2_.of(params_), b2_.of(params_), static_cast<std::size_t>(out_));
    return c;
  }

  std::vector<double> backward(const Cache& c, std::span<const double> grad_out, std::vector<double>& grads) const {
    auto gh = layers::dense_backward(c.hidden, grad_out, w2_.of(params_), w2_.of(grads), b2_.of(grads));
    for (std::size_t k = 0; k < gh.size(); ++k) {
      if (c.hidden[k] <= 0.0) gh[k] = 0.0;
    }
    return layers::dense_backward(c.input, gh, w1_.of(params_), w1_.of(grads), b1_.of(grads));
  }

 private:
  int in_, hidden_, out_;
  Slice w1_, b1_, w2_, b2_;
  std::vector<double> params_;
};

// Affine map R^{d_e} -> R^{|C|}, zero-initialised so that an untrained head
// predicts the uniform distribution.
class LinearHead {
 public:
  LinearHead() : LinearHead(64, 2) {}
  LinearHead(int in_dim, int num_classes) : in_(in_dim), classes_(num_classes) {
    if (num_classes < 2) throw Error("a prediction head needs at least two classes");
    if (in_dim < 1) throw Error("invalid prediction head input dimension");
    params_.assign(static_cast<std::size_t>(num_classes) * (in_dim + 1), 0.0);
  }

  int in_dim() const { return in_; }
  int num_classes() const { return classes_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::span<const double> weight() const { return {params_.data(), static_cast<std::size_t>(classes_) * in_}; }
  std::span<const double> bias() const {
    return {params_.data() + static_cast<std::size_t>(classes_) * in_, static_cast<std::size_t>(classes_)};
  }

  std::vector<double> forward(std::span<const double> e) const {
    return layers::dense(e, weight(), bias(), static_cast<std::size_t>(classes_));
  }

  void backward(std::span<const double> e, std::span<const double> grad_logits, std::vector<double>& grads) const {
    std::span<double> gw(grads.data(), static_cast<std::size_t>(classes_) * in_);
    std::span<double> gb(grads.data() + static_cast<std::size_t>(classes_) * in_, static_cast<std::size_t>(classes_));
    layers::dense_backward(e, grad_logits, weight(), gw, gb);
  }

 private:
  int in_, classes_;
  std::vector<double> params_;
};

// Unit-norm copy of v.
inline std::vector<double> unit(std::span<const double> v) {
  const double norm = std::sqrt(dot(v, v));
  if (!(norm > 0.0) || !std::isfinite(norm)) throw Error("cannot normalise a zero or non-finite vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= norm;
  return out;
}

// dL/dv for u = v/|v| given dL/du.
inline std::vector<double> unit_backward(std::span<const double> v, std::span<const double> u,
                                         std::span<const double> grad_u) {
  const double norm = std::sqrt(dot(v, v));
  const double proj = dot(u, grad_u);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (grad_u[i] - u[i] * proj) / norm;
  return out;
}

// Encoder plus projection head: the part trained by the contrastive stage.
struct ContrastiveModel {
  Encoder encoder;
  ProjectionHead projection;

  ContrastiveModel() = default;
  ContrastiveModel(const EncoderConfig& cfg, int proj_hidden, int proj_dim)
      : encoder(cfg), projection(cfg.embed_dim, proj_hidden, proj_dim) {}

  void initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x5C1));
    encoder.initialize(rng);
    projection.initialize(rng);
  }

  // Normalised embedding e of a view.
  std::vector<double> embed(const RealImage& view) const { return unit(encoder.forward(view).embedding); }
};

// Frozen encoder plus prediction head: the recognition model.
struct Classifier {
  Encoder encoder;
  LinearHead head;

  std::vector<double> logits(const RealImage& view) const { return head.forward(unit(encoder.forward(view).embedding)); }
};

}  // namespace foodsg::scl

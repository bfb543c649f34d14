#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "foodsg/error.hpp"
#include "foodsg/imaging.hpp"
#include "foodsg/random.hpp"
#include "foodsg/scl/augment.hpp"
#include "foodsg/scl/losses.hpp"
#include "foodsg/scl/matrix.hpp"
#include "foodsg/scl/model.hpp"

namespace foodsg::scl {

struct Dataset {
  std::vector<PixelImage> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.class_names = class_names;
    for (auto i : idx) {
      out.images.push_back(images.at(i));
      out.labels.push_back(labels.at(i));
    }
    return out;
  }
};

// Defaults are desk scale. Published values for the full-size model:
// stage-1 lr 0.1 for 200 epochs, stage-2 lr 0.05, weight decay 1e-4,
// d_e = 2048, d_p = 128 (see paper_scale()).
struct TrainConfig {
  double temperature = 0.1;
  double stage1_lr = 0.1;
  double stage2_lr = 0.05;
  double weight_decay = 1e-4;
  int stage1_epochs = 60;
  int stage2_epochs = 100;
  int batch_size = 32;  // N source samples per contrastive step; the probe uses 2N
  std::uint64_t seed = 7;
  EncoderConfig encoder;
  int projection_hidden = 64;
  int projection_dim = 32;  // d_p
  AugmentationPair augmentation;

  static TrainConfig paper_scale() {
    TrainConfig c;
    c.stage1_epochs = 200;
    c.encoder.embed_dim = 2048;
    c.projection_hidden = 2048;
    c.projection_dim = 128;
    return c;
  }

  int stage2_batch_size() const { return 2 * batch_size; }

  void validate() const {
    if (!(temperature > 0) || !(stage1_lr > 0) || !(stage2_lr > 0) || weight_decay < 0 || stage1_epochs < 0 ||
        stage2_epochs < 0 || batch_size < 1 || projection_hidden < 1 || projection_dim < 1) {
      throw Error("invalid training configuration");
    }
  }
};

inline ContrastiveModel make_model(const TrainConfig& cfg) {
  ContrastiveModel m(cfg.encoder, cfg.projection_hidden, cfg.projection_dim);
  m.initialize(cfg.seed);
  return m;
}

// Plain SGD with L2 weight decay: p -= lr (g + wd p).
inline void sgd_step(std::vector<double>& params, const std::vector<double>& grads, double lr, double weight_decay) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * (grads[i] + weight_decay * params[i]);
}

struct BatchResult {
  double loss = 0.0;  // sum over anchors
  std::vector<double> encoder_grad;
  std::vector<double> projection_grad;
};

// Forward and backward pass of the contrastive objective on one multiview
// batch. Gradients are of the batch-mean loss L / 2N.
inline BatchResult contrastive_step(const ContrastiveModel& model, const MultiviewBatch& batch, double temperature) {
  const std::size_t n = batch.size();
  std::vector<Encoder::Cache> enc(n);
  std::vector<std::vector<double>> e(n);
  std::vector<ProjectionHead::Cache> proj(n);
  Matrix s(n, static_cast<std::size_t>(model.projection.out_dim()));
  for (std::size_t i = 0; i < n; ++i) {
    enc[i] = model.encoder.forward(batch.views[i]);
    e[i] = unit(enc[i].embedding);
    proj[i] = model.projection.forward(e[i]);
    const auto si = unit(proj[i].output);
    std::copy(si.begin(), si.end(), s.row(i).begin());
  }
  BatchResult out;
  out.loss = scl_loss(s, batch.labels, temperature);
  const auto grad_s = scl_loss_grad(s, batch.labels, temperature);
  out.encoder_grad.assign(model.encoder.params().size(), 0.0);
  out.projection_grad.assign(model.projection.params().size(), 0.0);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> gs(grad_s.row(i).begin(), grad_s.row(i).end());
    for (double& v : gs) v *= scale;
    const auto g_raw_s = unit_backward(proj[i].output, s.row(i), gs);
    const auto g_e = model.projection.backward(proj[i], g_raw_s, out.projection_grad);
    const auto g_raw_e = unit_backward(enc[i].embedding, e[i], g_e);
    model.encoder.backward(enc[i], g_raw_e, out.encoder_grad);
  }
  return out;
}

inline std::set<int> classes_present(std::span<const int> labels) { return {labels.begin(), labels.end()}; }

// Contrastive stage. Returns the per-epoch mean over batches of the summed
// SCL loss. Deterministic for a fixed cfg.seed.
inline std::vector<double> train_stage1(ContrastiveModel& model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw Error("train_stage1: empty dataset");
  if (classes_present(data.labels).size() < 2) {
    throw Error("train_stage1: at least two classes are required for supervised contrastive training");
  }
  std::vector<double> curve;
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, 0x51A6E1, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const PixelImage*> samples;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        samples.push_back(&data.images[order[k]]);
        labels.push_back(data.labels[order[k]]);
      }
      const auto batch_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) << 32 | static_cast<std::uint64_t>(batches), 0xBA7C);
      const auto batch = make_multiview_batch(samples, labels, cfg.augmentation, batch_seed, cfg.encoder.input_size);
      auto step = contrastive_step(model, batch, cfg.temperature);
      sgd_step(model.encoder.params(), step.encoder_grad, cfg.stage1_lr, cfg.weight_decay);
      sgd_step(model.projection.params(), step.projection_grad, cfg.stage1_lr, cfg.weight_decay);
      total += step.loss;
      ++batches;
    }
    curve.push_back(total / batches);
  }
  return curve;
}

// Normalised embeddings of the un-augmented images, one row per sample.
inline Matrix embed_dataset(const Encoder& encoder, const Dataset& data) {
  Matrix out(data.size(), static_cast<std::size_t>(encoder.embed_dim()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto e = unit(encoder.forward(plain_view(data.images[i], encoder.config().input_size)).embedding);
    std::copy(e.begin(), e.end(), out.row(i).begin());
  }
  return out;
}

struct Stage2Result {
  LinearHead head;
  std::vector<double> curve;  // mean batch cross-entropy per epoch
};

// Linear probe on frozen, normalised encoder outputs.
inline Stage2Result train_stage2(const Encoder& encoder, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  const int classes = data.num_classes();
  if (classes < 2) throw Error("train_stage2: at least two classes are required");
  const auto present = classes_present(data.labels);
  for (int c = 0; c < classes; ++c) {
    if (!present.count(c)) throw Error("train_stage2: class '" + data.class_names[c] + "' has no training samples");
  }
  const Matrix features = embed_dataset(encoder, data);
  Stage2Result out{LinearHead(encoder.embed_dim(), classes), {}};
  std::vector<std::size_t> order(data.size());
  const auto batch_size = static_cast<std::size_t>(cfg.stage2_batch_size());
  for (int epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, 0x51A6E2, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      Matrix logits(end - start, static_cast<std::size_t>(classes));
      std::vector<int> targets;
      for (std::size_t k = start; k < end; ++k) {
        const auto q = out.head.forward(features.row(order[k]));
        std::copy(q.begin(), q.end(), logits.row(k - start).begin());
        targets.push_back(data.labels[order[k]]);
      }
      total += cross_entropy(softmax_rows(logits), targets);
      const auto g = softmax_cross_entropy_grad(logits, targets);
      std::vector<double> grads(out.head.params().size(), 0.0);
      for (std::size_t k = start; k < end; ++k) out.head.backward(features.row(order[k]), g.row(k - start), grads);
      sgd_step(out.head.params(), grads, cfg.stage2_lr, cfg.weight_decay);
      ++batches;
    }
    out.curve.push_back(total / batches);
  }
  return out;
}

inline Matrix predict_logits(const Classifier& model, const Dataset& data) {
  const Matrix features = embed_dataset(model.encoder, data);
  Matrix out(data.size(), static_cast<std::size_t>(model.head.num_classes()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto q = model.head.forward(features.row(i));
    std::copy(q.begin(), q.end(), out.row(i).begin());
  }
  return out;
}

inline double mean_cross_entropy(const Classifier& model, const Dataset& data) {
  return cross_entropy(softmax_rows(predict_logits(model, data)), data.labels);
}

// True class is within the k largest logits; equal logits rank the smaller
// class index first.
inline double topk_accuracy(const Matrix& logits, std::span<const int> labels, int k) {
  if (logits.rows() == 0) throw Error("topk: empty data");
  if (logits.rows() != labels.size()) throw Error("topk: one label per row required");
  if (k < 1 || static_cast<std::size_t>(k) > logits.cols()) throw Error("topk: k must be in [1, |C|]");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto t = static_cast<std::size_t>(labels[i]);
    const double v = logits(i, t);
    std::size_t rank = 0;
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      if (logits(i, c) > v || (logits(i, c) == v && c < t)) ++rank;
    }
    if (rank < static_cast<std::size_t>(k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

inline double evaluate_topk(const Classifier& model, const Dataset& data, int k) {
  return topk_accuracy(predict_logits(model, data), data.labels, k);
}

}  // namespace foodsg::scl

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "foodsg/scl/augment.hpp"
#include "foodsg/scl/train.hpp"
#include "foodsg/synthetic.hpp"

using namespace foodsg;
using namespace foodsg::scl;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.encoder = EncoderConfig{8, 2, 3, 4};
  cfg.projection_hidden = 5;
  cfg.projection_dim = 3;
  cfg.seed = 3;
  return cfg;
}

MultiviewBatch tiny_batch(int input_size) {
  Rng rng(17);
  std::vector<PixelImage> imgs;
  for (int i = 0; i < 3; ++i) imgs.push_back(synthetic::smooth_image(12, 12, rng));
  std::vector<const PixelImage*> ptrs{&imgs[0], &imgs[1], &imgs[2]};
  const std::vector<int> labels{0, 1, 0};
  return make_multiview_batch(ptrs, labels, AugmentationPair{}, 5, input_size);
}

// Batch-mean contrastive loss recomputed from scratch.
double mean_loss(const ContrastiveModel& model, const MultiviewBatch& batch, double t) {
  Matrix s(batch.size(), static_cast<std::size_t>(model.projection.out_dim()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto e = model.embed(batch.views[i]);
    const auto p = unit(model.projection.forward(e).output);
    std::copy(p.begin(), p.end(), s.row(i).begin());
  }
  return scl_loss(s, batch.labels, t) / static_cast<double>(batch.size());
}

double worst_param_error(std::vector<double>& params, const std::vector<double>& analytic,
                         const std::function<double()>& loss) {
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = params[i];
    params[i] = orig + h;
    const double up = loss();
    params[i] = orig - h;
    const double down = loss();
    params[i] = orig;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) /
                                std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6}));
  }
  return worst;
}

}  // namespace

TEST(ContrastiveStep, ParameterGradientsMatchFiniteDifferences) {
  const auto cfg = tiny_config();
  auto model = make_model(cfg);
  const auto batch = tiny_batch(cfg.encoder.input_size);
  const auto step = contrastive_step(model, batch, 0.5);
  EXPECT_NEAR(step.loss / static_cast<double>(batch.size()), mean_loss(model, batch, 0.5), 1e-12);
  const auto loss = [&] { return mean_loss(model, batch, 0.5); };
  EXPECT_LT(worst_param_error(model.projection.params(), step.projection_grad, loss), 1e-4);
  EXPECT_LT(worst_param_error(model.encoder.params(), step.encoder_grad, loss), 1e-4);
}

TEST(LinearHead, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  LinearHead head(4, 3);
  for (double& p : head.params()) p = rng.normal();
  std::vector<std::vector<double>> e;
  for (int i = 0; i < 5; ++i) e.push_back(unit(std::vector<double>{rng.normal(), rng.normal(), rng.normal(), rng.normal()}));
  const std::vector<int> targets{0, 2, 1, 1, 0};
  const auto logits = [&] {
    Matrix q(5, 3);
    for (std::size_t i = 0; i < 5; ++i) {
      const auto r = head.forward(e[i]);
      std::copy(r.begin(), r.end(), q.row(i).begin());
    }
    return q;
  };
  const auto g = softmax_cross_entropy_grad(logits(), targets);
  std::vector<double> grads(head.params().size(), 0.0);
  for (std::size_t i = 0; i < 5; ++i) head.backward(e[i], g.row(i), grads);
  const auto loss = [&] { return cross_entropy(softmax_rows(logits()), targets); };
  EXPECT_LT(worst_param_error(head.params(), grads, loss), 1e-6);
}

TEST(SoftmaxCrossEntropy, LogitGradientIsPredictionMinusTarget) {
  Rng rng(4);
  Matrix q(6, 4);
  for (double& v : q.data()) v = rng.normal();
  const std::vector<int> targets{0, 1, 2, 3, 0, 1};
  const auto g = softmax_cross_entropy_grad(q, targets);
  const auto p = softmax_rows(q);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(g(i, c), (p(i, c) - (static_cast<int>(c) == targets[i] ? 1.0 : 0.0)) / 6.0, 1e-15);
    }
  }
  std::vector<double> flat(q.data().begin(), q.data().end());
  const auto loss = [&] { return cross_entropy(softmax_rows(Matrix(6, 4, flat)), targets); };
  EXPECT_LT(worst_param_error(flat, std::vector<double>(g.data().begin(), g.data().end()), loss), 1e-6);
}

TEST(Unit, NormsAndBackward) {
  const auto u = unit(std::vector<double>{3.0, 4.0});
  EXPECT_DOUBLE_EQ(u[0], 0.6);
  EXPECT_THROW(unit(std::vector<double>{0.0, 0.0}), Error);
  const auto cfg = tiny_config();
  const auto model = make_model(cfg);
  const auto batch = tiny_batch(cfg.encoder.input_size);
  for (const auto& v : batch.views) {
    const auto e = model.embed(v);
    EXPECT_NEAR(std::sqrt(dot(e, e)), 1.0, 1e-12);
  }
}

TEST(MultiviewBatch, SinglePairSwaps) {
  Rng rng(1);
  const auto img = synthetic::smooth_image(16, 16, rng);
  const PixelImage* p = &img;
  const std::vector<int> label{2};
  const auto b = make_multiview_batch(std::span(&p, 1), label, AugmentationPair{}, 1, 8);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b.pair, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(b.labels, (std::vector<int>{2, 2}));
}

TEST(MultiviewBatch, IdentityAugmentationKeepsSource) {
  Rng rng(2);
  const auto img = synthetic::smooth_image(20, 20, rng);
  const PixelImage* p = &img;
  const std::vector<int> label{0};
  const auto b = make_multiview_batch(std::span(&p, 1), label, AugmentationPair::identity(), 9, 20);
  const auto plain = plain_view(img, 20);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 20; ++x) {
      for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(b.views[0].at(x, y, c), img.at(x, y, c), 1e-9);
        EXPECT_EQ(b.views[0].at(x, y, c), b.views[1].at(x, y, c));
        EXPECT_EQ(b.views[0].at(x, y, c), plain.at(x, y, c));
      }
    }
  }
}

TEST(MultiviewBatch, SeededAndViewsDiffer) {
  const auto a = tiny_batch(8);
  const auto b = tiny_batch(8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(std::equal(a.views[i].samples().begin(), a.views[i].samples().end(), b.views[i].samples().begin()));
  }
  EXPECT_FALSE(std::equal(a.views[0].samples().begin(), a.views[0].samples().end(), a.views[3].samples().begin()));
  EXPECT_EQ(a.pair[0], 3u);
}

TEST(Encoder, RejectsWrongInputSize) {
  const auto model = make_model(tiny_config());
  EXPECT_THROW(model.encoder.forward(RealImage(9, 9, 3)), Error);
  EXPECT_THROW(Encoder(EncoderConfig{8, 0, 3, 4}), Error);
  EXPECT_THROW(LinearHead(4, 1), Error);
}

#pragma once

// Central finite-difference checks of the analytic gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "foodsg/random.hpp"
#include "foodsg/scl/losses.hpp"
#include "foodsg/scl/matrix.hpp"

namespace foodsg::scl {

inline constexpr double kGradcheckStep = 1e-5;
// Denominator floor: entries whose true gradient is ~0 are compared
// absolutely at this scale instead of amplifying rounding noise.
inline constexpr double kGradcheckFloor = 1e-6;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
}

// dF/dx_k ~ (F(x + h e_k) - F(x - h e_k)) / 2h for every entry of x.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                               double h = kGradcheckStep) {
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.data().size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    grad.data()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

inline double max_relative_error(const Matrix& analytic, const Matrix& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.data().size(); ++i) {
    worst = std::max(worst, relative_error(analytic.data()[i], numeric.data()[i]));
  }
  return worst;
}

struct GradcheckCase {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double temperature = 0.0;  // SCL only
  double max_error = 0.0;
};

// Random multiview batch: N sources with two views each, labels shared by
// siblings, rows normalised as the model would produce them.
inline GradcheckCase check_scl_gradient(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 2 + rng.below(5);
  const std::size_t dim = 3 + rng.below(6);
  const int classes = 1 + static_cast<int>(rng.below(3));
  const double temps[] = {0.05, 0.1, 0.5, 1.0};
  const double t = temps[rng.below(4)];
  Matrix s(2 * n, dim);
  for (double& v : s.data()) v = rng.normal();
  s = normalize_rows(s);
  std::vector<int> labels(2 * n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = labels[i + n] = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  const auto analytic = scl_loss_grad(s, labels, t);
  const auto numeric = numeric_gradient([&](const Matrix& x) { return scl_loss(x, labels, t); }, s);
  return {2 * n, dim, t, max_relative_error(analytic, numeric)};
}

// Mean cross-entropy of softmax(logits) against random targets.
inline GradcheckCase check_cross_entropy_gradient(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 1 + rng.below(8);
  const std::size_t classes = 2 + rng.below(6);
  Matrix q(n, classes);
  for (double& v : q.data()) v = 2.0 * rng.normal();
  std::vector<int> targets(n);
  for (auto& y : targets) y = static_cast<int>(rng.below(classes));
  const auto analytic = softmax_cross_entropy_grad(q, targets);
  const auto numeric =
      numeric_gradient([&](const Matrix& x) { return cross_entropy(softmax_rows(x), targets); }, q);
  return {n, classes, 0.0, max_relative_error(analytic, numeric)};
}

}  // namespace foodsg::scl

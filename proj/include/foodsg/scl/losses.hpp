#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "foodsg/error.hpp"
#include "foodsg/scl/matrix.hpp"

namespace foodsg::scl {

// Anchor i's positives: every other view with the same label.
inline std::vector<std::vector<std::size_t>> positive_sets(std::span<const int> labels) {
  std::vector<std::vector<std::size_t>> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (p != i && labels[p] == labels[i]) out[i].push_back(p);
    }
  }
  return out;
}

namespace detail {

inline void check_scl_inputs(const Matrix& s, std::span<const int> labels, double temperature) {
  if (s.rows() != labels.size()) throw Error("scl_loss: one label per row required");
  if (s.rows() < 2) throw Error("scl_loss: at least two views required");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw Error("scl_loss: temperature must be positive");
  require_finite(s, "scl_loss");
}

// Row i holds the log-probabilities log(exp(z_ik) / sum_{k' != i} exp(z_ik'))
// with z_ik = s_i . s_k / T; the diagonal is unused.
inline Matrix scl_log_probs(const Matrix& s, double temperature) {
  const std::size_t n = s.rows();
  Matrix logits(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      logits(i, k) = k == i ? 0.0 : dot(s.row(i), s.row(k)) / temperature;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) mx = std::max(mx, logits(i, k));
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) sum += std::exp(logits(i, k) - mx);
    }
    const double lse = mx + std::log(sum);
    for (std::size_t k = 0; k < n; ++k) logits(i, k) = k == i ? 0.0 : logits(i, k) - lse;
  }
  return logits;
}

}  // namespace detail

// Per-anchor supervised contrastive losses l_i.
inline std::vector<double> scl_anchor_losses(const Matrix& s, std::span<const int> labels, double temperature) {
  detail::check_scl_inputs(s, labels, temperature);
  const auto positives = positive_sets(labels);
  for (std::size_t i = 0; i < positives.size(); ++i) {
    if (positives[i].empty()) throw Error("scl_loss: anchor " + std::to_string(i) + " has no positives");
  }
  const auto log_probs = detail::scl_log_probs(s, temperature);
  std::vector<double> out(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double acc = 0.0;
    for (auto p : positives[i]) acc += log_probs(i, p);
    out[i] = -acc / static_cast<double>(positives[i].size());
  }
  return out;
}

// Sum of the per-anchor losses over the multiview batch.
inline double scl_loss(const Matrix& s, std::span<const int> labels, double temperature) {
  double total = 0.0;
  for (double l : scl_anchor_losses(s, labels, temperature)) total += l;
  return total;
}

// dL/ds for L = scl_loss(s, labels, T), treating every entry of s as free.
//
// With z_ik = s_i . s_k / T and softmax weights a_ik over k != i,
// dl_i/dz_ik = a_ik - [k in P(i)] / |P(i)|, hence
// dL/ds_j = (1/T) sum_{k != j} (g_jk + g_kj) s_k.
inline Matrix scl_loss_grad(const Matrix& s, std::span<const int> labels, double temperature) {
  detail::check_scl_inputs(s, labels, temperature);
  const auto positives = positive_sets(labels);
  const std::size_t n = s.rows();
  const auto log_probs = detail::scl_log_probs(s, temperature);
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (positives[i].empty()) throw Error("scl_loss: anchor " + std::to_string(i) + " has no positives");
    for (std::size_t k = 0; k < n; ++k) g(i, k) = k == i ? 0.0 : std::exp(log_probs(i, k));
    const double w = 1.0 / static_cast<double>(positives[i].size());
    for (auto p : positives[i]) g(i, p) -= w;
  }
  Matrix grad(n, s.cols());
  for (std::size_t j = 0; j < n; ++j) {
    auto out = grad.row(j);
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j) continue;
      const double coeff = (g(j, k) + g(k, j)) / temperature;
      const auto sk = s.row(k);
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += coeff * sk[c];
    }
  }
  return grad;
}

inline std::vector<double> softmax(std::span<const double> q) {
  if (q.empty()) throw Error("softmax: empty input");
  for (double v : q) {
    if (!std::isfinite(v)) throw Error("softmax: non-finite input");
  }
  const double mx = *std::max_element(q.begin(), q.end());
  std::vector<double> out(q.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) sum += out[i] = std::exp(q[i] - mx);
  for (double& v : out) v /= sum;
  return out;
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto p = softmax(logits.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

inline constexpr double kLogClamp = 1e-12;

// Mean cross-entropy between predicted distributions (rows of `probs`) and
// one-hot targets given as class indices.
inline double cross_entropy(const Matrix& probs, std::span<const int> targets) {
  if (probs.rows() != targets.size() || probs.rows() == 0) throw Error("cross_entropy: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= probs.cols()) throw Error("cross_entropy: target out of range");
    total -= std::log(std::max(probs(i, static_cast<std::size_t>(t)), kLogClamp));
  }
  return total / static_cast<double>(probs.rows());
}

// Same loss with one-hot targets given as a matrix.
inline double cross_entropy(const Matrix& probs, const Matrix& one_hot) {
  if (probs.rows() != one_hot.rows() || probs.cols() != one_hot.cols() || probs.rows() == 0) {
    throw Error("cross_entropy: shape mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      if (one_hot(i, c) != 0.0) total -= one_hot(i, c) * std::log(std::max(probs(i, c), kLogClamp));
    }
  }
  return total / static_cast<double>(probs.rows());
}

// Gradient of cross_entropy(softmax_rows(logits), targets) with respect to
// the logits: (softmax(q_i) - y_i) / n.
inline Matrix softmax_cross_entropy_grad(const Matrix& logits, std::span<const int> targets) {
  if (logits.rows() != targets.size() || logits.rows() == 0) throw Error("cross_entropy: shape mismatch");
  Matrix grad = softmax_rows(logits);
  const double n = static_cast<double>(logits.rows());
  for (std::size_t i = 0; i < grad.rows(); ++i) {
    grad(i, static_cast<std::size_t>(targets[i])) -= 1.0;
    for (double& v : grad.row(i)) v /= n;
  }
  return grad;
}

}  // namespace foodsg::scl

#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "foodsg/error.hpp"
#include "foodsg/imaging.hpp"
#include "foodsg/manifest.hpp"

namespace foodsg {

inline constexpr int kHistogramBins = 16;
inline constexpr int kThumbnailSide = 16;
inline constexpr int kFeatureDim = 3 * kHistogramBins + kThumbnailSide * kThumbnailSide;  // 304

// Three 16-bin normalised channel histograms followed by a 16x16 grayscale
// thumbnail scaled to [0,1].
inline std::vector<double> extract_features(const PixelImage& img) {
  std::vector<double> f(kFeatureDim, 0.0);
  const auto rgb = to_rgb(img);
  const auto s = rgb.samples();
  const double pixels = static_cast<double>(rgb.width()) * rgb.height();
  for (std::size_t i = 0; i < s.size(); ++i) {
    f[(i % 3) * kHistogramBins + (s[i] >> 4)] += 1.0;
  }
  for (int i = 0; i < 3 * kHistogramBins; ++i) f[i] /= pixels;
  const auto thumb = resize_bilinear(to_grayscale(img), kThumbnailSide, kThumbnailSide);
  for (int i = 0; i < kThumbnailSide * kThumbnailSide; ++i) {
    f[3 * kHistogramBins + i] = thumb.samples()[i] / 255.0;
  }
  return f;
}

inline double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct BaselineScorer {
  std::vector<double> weights = std::vector<double>(kFeatureDim, 0.0);
  double bias = 0.0;

  double score(std::span<const double> features) const {
    if (features.size() != weights.size()) throw Error("feature dimension mismatch");
    double z = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) z += weights[i] * features[i];
    return logistic(z);
  }
  double score(const PixelImage& img) const { return score(extract_features(img)); }
};

struct ImportedScorer {
  std::unordered_map<std::string, double> scores;

  double score(const std::string& id) const {
    auto it = scores.find(id);
    if (it == scores.end()) throw NotFoundError("no imported foodness score for " + id);
    return it->second;
  }
};

using FoodnessScorer = std::variant<BaselineScorer, ImportedScorer>;

struct LabeledFeatures {
  std::vector<double> features;
  bool is_food = false;
};

struct BaselineTraining {
  BaselineScorer scorer;
  std::vector<double> loss_curve;  // mean logistic loss before each epoch's update
};

inline double mean_logistic_loss(const BaselineScorer& s, std::span<const LabeledFeatures> data) {
  double loss = 0.0;
  for (const auto& d : data) {
    double z = s.bias;
    for (std::size_t i = 0; i < s.weights.size(); ++i) z += s.weights[i] * d.features[i];
    // log(1 + exp(-y z)) with y in {-1, +1}, evaluated stably
    const double m = d.is_food ? -z : z;
    loss += m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
  }
  return loss / static_cast<double>(data.size());
}

// Full-batch gradient descent on the mean logistic loss from zero weights.
// Full-batch steps make the result independent of sample order.
inline BaselineTraining train_baseline(std::span<const LabeledFeatures> data, int epochs, double lr) {
  if (data.empty()) throw Error("train_baseline: no training data");
  bool any_food = false;
  bool any_other = false;
  const std::size_t dim = data.front().features.size();
  for (const auto& d : data) {
    if (d.features.size() != dim) throw Error("train_baseline: inconsistent feature dimension");
    (d.is_food ? any_food : any_other) = true;
  }
  if (!any_food || !any_other) throw Error("train_baseline: both food and non-food examples are required");

  BaselineTraining out;
  out.scorer.weights.assign(dim, 0.0);
  std::vector<double> grad(dim);
  const double n = static_cast<double>(data.size());
  for (int e = 0; e < epochs; ++e) {
    out.loss_curve.push_back(mean_logistic_loss(out.scorer, data));
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (const auto& d : data) {
      const double err = out.scorer.score(d.features) - (d.is_food ? 1.0 : 0.0);
      for (std::size_t i = 0; i < dim; ++i) grad[i] += err * d.features[i];
      grad_b += err;
    }
    for (std::size_t i = 0; i < dim; ++i) out.scorer.weights[i] -= lr * grad[i] / n;
    out.scorer.bias -= lr * grad_b / n;
  }
  return out;
}

// Records a score on every active record; those below `accept_threshold`
// are removed. score >= threshold counts as food.
inline StageReport filter_stage(Manifest& m, const std::function<double(const ImageRecord&)>& score_of,
                                double accept_threshold = 0.5) {
  StageReport report;
  report.stage = Stage::foodness;
  for (auto& r : m.records) {
    if (!r.active()) continue;
    double s;
    try {
      s = score_of(r);
    } catch (const NotFoundError& e) {
      throw InvariantError(r.id, std::string("unscorable record: ") + e.what());
    }
    if (!(s >= 0.0 && s <= 1.0)) throw InvariantError(r.id, "foodness score outside [0,1]");
    r.foodness_score = s;
    auto& counts = report.per_category[r.category_id];
    ++counts.input;
    ++report.input_count;
    if (s < accept_threshold) {
      r.remove(Stage::foodness, "non_food");
      ++counts.removed;
      ++report.removed_count;
    } else {
      ++counts.kept;
    }
  }
  report.kept_count = report.input_count - report.removed_count;
  if (report.removed_count) report.reasons["non_food"] = report.removed_count;
  return report;
}

struct Confusion {
  std::uint64_t true_food = 0;       // predicted food, labelled food
  std::uint64_t false_food = 0;      // predicted food, labelled non-food
  std::uint64_t true_non_food = 0;   // predicted non-food, labelled non-food
  std::uint64_t false_non_food = 0;  // predicted non-food, labelled food

  std::uint64_t total() const { return true_food + false_food + true_non_food + false_non_food; }
};

struct FoodnessEvaluation {
  double accuracy = 0.0;
  Confusion confusion;
};

struct FoodnessLabel {
  std::string image_id;
  bool is_food = false;
};

inline FoodnessEvaluation evaluate_foodness(std::span<const FoodnessLabel> labels,
                                            const std::function<double(const std::string&)>& score_of,
                                            double threshold = 0.5) {
  if (labels.empty()) throw Error("evaluate: empty label set");
  FoodnessEvaluation ev;
  for (const auto& l : labels) {
    const bool predicted_food = score_of(l.image_id) >= threshold;
    if (predicted_food) {
      ++(l.is_food ? ev.confusion.true_food : ev.confusion.false_food);
    } else {
      ++(l.is_food ? ev.confusion.false_non_food : ev.confusion.true_non_food);
    }
  }
  ev.accuracy = static_cast<double>(ev.confusion.true_food + ev.confusion.true_non_food) /
                static_cast<double>(ev.confusion.total());
  return ev;
}

// ---------------------------------------------------------------------------
// Files

namespace detail {

struct CsvRow {
  std::size_t line = 0;
  std::string key;
  std::string value;
};

inline std::vector<CsvRow> read_two_column_csv(const std::filesystem::path& path, std::string_view header_key) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<CsvRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(lineno, "expected two comma-separated columns");
    auto key = line.substr(0, comma);
    auto value = line.substr(comma + 1);
    if (lineno == 1 && key == header_key) continue;
    rows.push_back({lineno, std::move(key), std::move(value)});
  }
  return rows;
}

inline double parse_double(const std::string& s, std::size_t lineno) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError(lineno, "not a number: '" + s + "'");
  return v;
}

}  // namespace detail

// CSV `image_id,score` with an optional header row.
inline ImportedScorer read_scores_csv(const std::filesystem::path& path) {
  ImportedScorer out;
  for (const auto& [lineno, id, value] : detail::read_two_column_csv(path, "image_id")) {
    const double s = detail::parse_double(value, lineno);
    if (!(s >= 0.0 && s <= 1.0)) throw InvariantError(id, "imported score outside [0,1]");
    out.scores[id] = s;
  }
  return out;
}

// CSV `image_id,is_food`; is_food is 1/0 or true/false.
inline std::vector<FoodnessLabel> read_labels_csv(const std::filesystem::path& path) {
  std::vector<FoodnessLabel> out;
  std::unordered_map<std::string, bool> seen;
  for (const auto& [lineno, id, value] : detail::read_two_column_csv(path, "image_id")) {
    bool food;
    if (value == "1" || value == "true") {
      food = true;
    } else if (value == "0" || value == "false") {
      food = false;
    } else {
      throw InvariantError(id, "is_food must be 1/0 or true/false");
    }
    if (!seen.emplace(id, food).second) throw InvariantError(id, "more than one human label");
    out.push_back({id, food});
  }
  return out;
}

inline constexpr char kBaselineMagic[8] = {'F', 'S', 'G', 'B', 'A', 'S', 'E', '1'};

// Layout: magic[8], u32 dimension, then dimension weights and the bias as
// little-endian doubles.
static_assert(std::endian::native == std::endian::little, "scorer files store raw little-endian doubles");

inline void save_baseline(const BaselineScorer& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(kBaselineMagic, sizeof kBaselineMagic);
  const auto dim = static_cast<std::uint32_t>(s.weights.size());
  out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  out.write(reinterpret_cast<const char*>(s.weights.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  out.write(reinterpret_cast<const char*>(&s.bias), sizeof s.bias);
  if (!out) throw IoError("write failed: " + path.string());
}

inline BaselineScorer load_baseline(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  std::uint32_t dim = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&dim), sizeof dim);
  if (!in || std::memcmp(magic, kBaselineMagic, sizeof magic) != 0) throw IoError("not a baseline scorer file");
  if (dim != kFeatureDim) throw InvariantError("", "baseline weight length must be " + std::to_string(kFeatureDim));
  BaselineScorer s;
  s.weights.resize(dim);
  in.read(reinterpret_cast<char*>(s.weights.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  in.read(reinterpret_cast<char*>(&s.bias), sizeof s.bias);
  if (!in) throw IoError("truncated baseline scorer file");
  return s;
}

}  // namespace foodsg

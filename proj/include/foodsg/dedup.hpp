#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "foodsg/error.hpp"
#include "foodsg/hash_triple.hpp"
#include "foodsg/imaging.hpp"
#include "foodsg/manifest.hpp"

namespace foodsg {

// Bits are assigned row-major with the first sample in the most significant
// position.
inline std::uint64_t average_hash(const PixelImage& img) {
  const auto small = resize_bilinear(to_grayscale(img), 8, 8);
  const auto s = small.samples();
  const int sum = std::accumulate(s.begin(), s.end(), 0);
  std::uint64_t h = 0;
  for (int i = 0; i < 64; ++i) {
    // sample > sum/64, kept in integers
    h = (h << 1) | (64 * static_cast<int>(s[i]) > sum ? 1u : 0u);
  }
  return h;
}

inline std::uint64_t difference_hash(const PixelImage& img) {
  const auto small = resize_bilinear(to_grayscale(img), 9, 8);
  std::uint64_t h = 0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) h = (h << 1) | (small.at(x + 1, y) > small.at(x, y) ? 1u : 0u);
  }
  return h;
}

// Orthonormal 2-D DCT-II of a square single-channel image.
inline std::vector<double> dct2(const RealImage& img) {
  const int n = img.width();
  if (img.height() != n || img.channels() != 1) throw Error("dct2 expects a square single-channel image");
  std::vector<double> basis(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < n; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i) {
      basis[k * n + i] = scale * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
    }
  }
  std::vector<double> rows(static_cast<std::size_t>(n) * n, 0.0);
  for (int y = 0; y < n; ++y) {
    for (int k = 0; k < n; ++k) {
      double acc = 0.0;
      for (int x = 0; x < n; ++x) acc += basis[k * n + x] * img.at(x, y);
      rows[y * n + k] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int k = 0; k < n; ++k) {
    for (int u = 0; u < n; ++u) {
      double acc = 0.0;
      for (int y = 0; y < n; ++y) acc += basis[k * n + y] * rows[y * n + u];
      out[k * n + u] = acc;
    }
  }
  return out;  // out[v * n + u]: vertical frequency v, horizontal u
}

inline std::uint64_t perceptual_hash(const PixelImage& img) {
  const auto small = resize_bilinear(to_grayscale(img), 32, 32);
  // Removing the mean only changes the DC term, and makes AC terms of flat
  // images exactly zero.
  const auto s = small.samples();
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  RealImage centered(32, 32, 1);
  for (std::size_t i = 0; i < s.size(); ++i) centered.samples()[i] = s[i] - mean;
  const auto coeffs = dct2(centered);

  std::array<double, 64> block{};
  for (int v = 0; v < 8; ++v) {
    for (int u = 0; u < 8; ++u) block[v * 8 + u] = coeffs[v * 32 + u];
  }
  std::array<double, 63> ac{};
  std::copy(block.begin() + 1, block.end(), ac.begin());
  std::nth_element(ac.begin(), ac.begin() + 31, ac.end());
  const double median = ac[31];

  std::uint64_t h = 0;  // DC bit stays 0
  for (int i = 1; i < 64; ++i) {
    if (block[i] > median) h |= std::uint64_t{1} << (63 - i);
  }
  return h;
}

inline HashTriple hash_image(const PixelImage& img) {
  return HashTriple{average_hash(img), perceptual_hash(img), difference_hash(img)};
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void merge(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<int> rank_;
};

struct DuplicateCluster {
  int category_id = 0;
  std::vector<std::string> member_ids;  // sorted
  std::string keeper_id;
  int max_pairwise_distance = 0;

  friend bool operator==(const DuplicateCluster&, const DuplicateCluster&) = default;
};

inline json to_json(const DuplicateCluster& c) {
  return json{{"category_id", c.category_id},
              {"member_ids", c.member_ids},
              {"keeper_id", c.keeper_id},
              {"max_pairwise_distance", c.max_pairwise_distance}};
}

// Largest pixel area, then largest file, then smallest id.
inline bool keeper_precedes(const ImageRecord& a, const ImageRecord& b) {
  const auto area_a = static_cast<std::uint64_t>(a.width) * static_cast<std::uint64_t>(a.height);
  const auto area_b = static_cast<std::uint64_t>(b.width) * static_cast<std::uint64_t>(b.height);
  if (area_a != area_b) return area_a > area_b;
  if (a.byte_size != b.byte_size) return a.byte_size > b.byte_size;
  return a.id < b.id;
}

inline std::string select_keeper(std::span<const ImageRecord* const> members) {
  if (members.size() < 2) throw Error("select_keeper needs at least two members");
  const auto* best = members.front();
  for (const auto* m : members) {
    if (keeper_precedes(*m, *best)) best = m;
  }
  return best->id;
}

// Connected components of {(i, j) : hamming(i, j) <= threshold} with at least
// two members. All records must belong to one category and carry a hash.
inline std::vector<DuplicateCluster> find_duplicate_clusters(std::span<const ImageRecord* const> records,
                                                             int threshold) {
  for (const auto* r : records) {
    if (!r->hash) throw InvariantError(r->id, "record has no hash");
    if (r->category_id != records.front()->category_id) {
      throw InvariantError(r->id, "records span more than one category");
    }
  }
  const std::size_t n = records.size();
  UnionFind uf(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (hamming(*records[i]->hash, *records[j]->hash) <= threshold) uf.merge(i, j);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);

  std::vector<DuplicateCluster> out;
  for (const auto& [root, idx] : groups) {
    if (idx.size() < 2) continue;
    DuplicateCluster c;
    c.category_id = records[idx.front()]->category_id;
    std::vector<const ImageRecord*> members;
    for (auto i : idx) {
      members.push_back(records[i]);
      c.member_ids.push_back(records[i]->id);
    }
    std::sort(c.member_ids.begin(), c.member_ids.end());
    c.keeper_id = select_keeper(members);
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        c.max_pairwise_distance =
            std::max(c.max_pairwise_distance, hamming(*records[idx[a]]->hash, *records[idx[b]]->hash));
      }
    }
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(),
            [](const DuplicateCluster& a, const DuplicateCluster& b) { return a.member_ids < b.member_ids; });
  return out;
}

struct DedupResult {
  StageReport report;
  std::vector<DuplicateCluster> clusters;
};

// Clusters active records per category and removes every non-keeper. Active
// records must already carry hashes.
inline DedupResult dedup_records(Manifest& m, int threshold) {
  if (threshold < 0 || threshold > 192) throw Error("dedup threshold must be in [0,192]");
  DedupResult result;
  auto& report = result.report;
  report.stage = Stage::dedup;

  std::map<int, std::vector<ImageRecord*>> by_category;
  for (auto& r : m.records) {
    if (r.active()) by_category[r.category_id].push_back(&r);
  }
  for (auto& [category, members] : by_category) {
    std::vector<const ImageRecord*> view(members.begin(), members.end());
    auto clusters = find_duplicate_clusters(view, threshold);
    auto& counts = report.per_category[category];
    counts.input = members.size();
    for (const auto& c : clusters) {
      for (auto* r : members) {
        if (r->id != c.keeper_id && std::binary_search(c.member_ids.begin(), c.member_ids.end(), r->id)) {
          r->remove(Stage::dedup, "duplicate");
          ++counts.removed;
        }
      }
    }
    counts.kept = counts.input - counts.removed;
    report.input_count += counts.input;
    report.removed_count += counts.removed;
    for (auto& c : clusters) result.clusters.push_back(std::move(c));
  }
  report.kept_count = report.input_count - report.removed_count;
  if (report.removed_count) report.reasons["duplicate"] = report.removed_count;
  return result;
}

}  // namespace foodsg

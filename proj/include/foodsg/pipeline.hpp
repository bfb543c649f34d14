#pragma once

// Stage orchestration over a manifest file. Every stage is computed in
// memory and committed with one atomic manifest write, so an interrupted
// stage leaves the previous manifest untouched and a rerun starts clean.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "foodsg/calibration.hpp"
#include "foodsg/codec.hpp"
#include "foodsg/dedup.hpp"
#include "foodsg/digest.hpp"
#include "foodsg/error.hpp"
#include "foodsg/foodness.hpp"
#include "foodsg/manifest.hpp"
#include "foodsg/parallel.hpp"

namespace foodsg {

namespace fs = std::filesystem;

struct CategoryInput {
  std::string name;
  std::string group;
  fs::path dir;
};

struct PipelineConfig {
  std::string dataset_name = "dataset";
  std::vector<CategoryInput> inputs;  // ingest only; category ids follow this order
  int min_side = 32;
  int dedup_threshold = 10;
  std::optional<fs::path> clusters_out;    // default <manifest>.clusters.jsonl
  std::optional<fs::path> scorer_path;     // baseline file or scores CSV
  double accept_threshold = 0.5;
  int calibration_port = 8080;
  std::optional<fs::path> decisions_log;   // default <manifest>.decisions.jsonl
  fs::path export_dir = "out";
  std::uint64_t export_floor = 400;
  unsigned workers = default_workers();

  void validate() const {
    if (min_side < 1) throw Error("min_side must be at least 1");
    if (dedup_threshold < 0 || dedup_threshold > 192) throw Error("dedup threshold must be in [0,192]");
    if (!(accept_threshold >= 0.0 && accept_threshold <= 1.0)) throw Error("accept threshold must be in [0,1]");
    if (calibration_port < 0 || calibration_port > 65535) throw Error("calibration port out of range");
    if (workers < 1) throw Error("at least one worker is required");
  }
};

inline bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".jpe" || ext == ".png";
}

// One category per immediate subdirectory of `root`, in name order.
inline std::vector<CategoryInput> categories_from_root(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<CategoryInput> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().front() != '.') {
      out.push_back({entry.path().filename().string(), "", entry.path()});
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

struct RunOptions {
  bool force = false;
  Probe probe;  // called per record and during the manifest write
};

namespace detail {

inline void tick(const Probe& probe, std::string_view what) {
  if (probe) probe(what);
}

inline PixelImage load_record_image(const ImageRecord& r) { return decode_image(read_file(r.source_path)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

inline Manifest ingest_stage(const PipelineConfig& cfg, const Probe& probe = {}) {
  if (cfg.inputs.empty()) throw Error("ingest: no input categories");
  Manifest m;
  m.dataset_name = cfg.dataset_name;
  struct Pending {
    int category;
    fs::path path;
  };
  std::vector<Pending> files;
  for (std::size_t c = 0; c < cfg.inputs.size(); ++c) {
    const auto& in = cfg.inputs[c];
    if (in.name.empty()) throw Error("ingest: category without a name");
    if (!fs::is_directory(in.dir)) throw IoError("ingest: not a directory: " + in.dir.string());
    m.categories.push_back({static_cast<int>(c), in.name, in.group, {}});
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(in.dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) paths.push_back(fs::absolute(entry.path()));
    }
    std::sort(paths.begin(), paths.end());
    for (auto& p : paths) files.push_back({static_cast<int>(c), std::move(p)});
  }
  struct Digest {
    std::string id;
    std::uint64_t size;
  };
  const auto digests = parallel_map(
      files.size(),
      [&](std::size_t i) {
        const auto bytes = read_file(files[i].path);
        return Digest{content_id(bytes), bytes.size()};
      },
      cfg.workers);

  StageReport rep;
  rep.stage = Stage::ingest;
  // Byte-identical files share a digest; later ones get "-2", "-3", ...
  std::unordered_map<std::string, int> seen;
  for (std::size_t i = 0; i < files.size(); ++i) {
    ImageRecord r;
    const int n = ++seen[digests[i].id];
    r.id = n == 1 ? digests[i].id : digests[i].id + "-" + std::to_string(n);
    r.category_id = files[i].category;
    r.source_path = files[i].path.string();
    r.byte_size = digests[i].size;
    m.records.push_back(std::move(r));
    auto& counts = rep.per_category[files[i].category];
    ++counts.input;
    ++counts.kept;
    detail::tick(probe, "record");
  }
  rep.input_count = rep.kept_count = m.records.size();
  m.history.push_back(rep);
  return m;
}

inline StageReport format_stage(Manifest& m, const PipelineConfig& cfg, const Probe& probe = {}) {
  std::vector<ImageRecord*> todo;
  for (auto& r : m.records) {
    if (r.active()) todo.push_back(&r);
  }
  const auto results = parallel_map(
      todo.size(), [&](std::size_t i) { return decode_and_validate(read_file(todo[i]->source_path), cfg.min_side); },
      cfg.workers);
  StageReport rep;
  rep.stage = Stage::format;
  for (std::size_t i = 0; i < todo.size(); ++i) {
    auto& r = *todo[i];
    auto& counts = rep.per_category[r.category_id];
    ++counts.input;
    if (const auto* img = std::get_if<PixelImage>(&results[i])) {
      r.width = img->width();
      r.height = img->height();
      ++counts.kept;
    } else {
      const auto reason = std::string(reject_reason_name(std::get<Rejection>(results[i]).reason));
      r.remove(Stage::format, reason);
      ++rep.reasons[reason];
      ++counts.removed;
      ++rep.removed_count;
    }
    detail::tick(probe, "record");
  }
  rep.input_count = todo.size();
  rep.kept_count = rep.input_count - rep.removed_count;
  return rep;
}

inline std::string clusters_to_jsonl(const std::vector<DuplicateCluster>& clusters) {
  std::string out;
  for (const auto& c : clusters) out += to_json(c).dump() + "\n";
  return out;
}

inline DedupResult dedup_stage(Manifest& m, const PipelineConfig& cfg, const Probe& probe = {}) {
  std::vector<ImageRecord*> todo;
  for (auto& r : m.records) {
    if (r.active()) todo.push_back(&r);
  }
  const auto hashes = parallel_map(
      todo.size(), [&](std::size_t i) { return hash_image(detail::load_record_image(*todo[i])); }, cfg.workers);
  for (std::size_t i = 0; i < todo.size(); ++i) {
    todo[i]->hash = hashes[i];
    detail::tick(probe, "record");
  }
  return dedup_records(m, cfg.dedup_threshold);
}

inline FoodnessScorer load_scorer(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".csv") return read_scores_csv(path);
  return load_baseline(path);
}

// Scores for the given records, computed in parallel for the baseline scorer.
inline std::unordered_map<std::string, double> score_records(const FoodnessScorer& scorer,
                                                             const std::vector<const ImageRecord*>& records,
                                                             unsigned workers) {
  std::unordered_map<std::string, double> out;
  if (const auto* imported = std::get_if<ImportedScorer>(&scorer)) {
    for (const auto* r : records) out[r->id] = imported->score(r->id);
    return out;
  }
  const auto& baseline = std::get<BaselineScorer>(scorer);
  const auto scores = parallel_map(
      records.size(), [&](std::size_t i) { return baseline.score(detail::load_record_image(*records[i])); }, workers);
  for (std::size_t i = 0; i < records.size(); ++i) out[records[i]->id] = scores[i];
  return out;
}

inline StageReport foodness_stage(Manifest& m, const PipelineConfig& cfg, const Probe& probe = {}) {
  if (!cfg.scorer_path) throw Error("foodness: a scorer (baseline file or scores CSV) is required");
  const auto scorer = load_scorer(*cfg.scorer_path);
  std::vector<const ImageRecord*> todo;
  for (const auto& r : m.records) {
    if (r.active()) todo.push_back(&r);
  }
  std::unordered_map<std::string, double> scores;
  try {
    scores = score_records(scorer, todo, cfg.workers);
  } catch (const NotFoundError& e) {
    throw InvariantError("", std::string("unscorable record: ") + e.what());
  }
  return filter_stage(
      m,
      [&](const ImageRecord& r) {
        detail::tick(probe, "record");
        return scores.at(r.id);
      },
      cfg.accept_threshold);
}

inline StageReport calibrate_stage(Manifest& m, const fs::path& log_path, const Probe& probe = {}) {
  repair_decision_log(log_path);
  const auto log = read_decision_log(log_path);
  const Manifest before = m;
  for (const auto& d : log) {
    apply_decision(m, d);
    detail::tick(probe, "record");
  }
  return calibration_report(before, m);
}

// ---------------------------------------------------------------------------
// Export

struct ExportCategory {
  int id = 0;
  std::string name;
  std::uint64_t count = 0;
  bool below_floor = false;
};

struct ExportSummary {
  std::vector<ExportCategory> categories;
  std::uint64_t total = 0;
  std::uint64_t floor = 400;
};

inline json to_json(const ExportSummary& s) {
  json cats = json::array();
  for (const auto& c : s.categories) {
    cats.push_back({{"id", c.id}, {"name", c.name}, {"count", c.count}, {"below_floor", c.below_floor}});
  }
  return {{"categories", std::move(cats)}, {"total", s.total}, {"floor", s.floor}};
}

inline ExportSummary export_summary(const Manifest& m, std::uint64_t floor) {
  ExportSummary s;
  s.floor = floor;
  std::map<int, std::uint64_t> counts;
  for (const auto& r : m.records) {
    if (r.active()) ++counts[r.category_id];
  }
  for (const auto& c : m.categories) {
    const auto n = counts[c.id];
    s.categories.push_back({c.id, c.name, n, n < floor});
    s.total += n;
  }
  return s;
}

// Directory-safe form of a category name.
inline std::string export_dirname(const std::string& name) {
  std::string out = name;
  for (char& ch : out) {
    if (ch == '/' || ch == '\\' || ch == '\0') ch = '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

// Writes every active image to out_dir/<category>/<id>.jpg and the summary
// to out_dir/summary.json. Baseline JPEG sources are copied byte for byte;
// anything else is re-encoded at quality 95.
inline ExportSummary export_dataset(const Manifest& m, const fs::path& out_dir, std::uint64_t floor,
                                    const Probe& probe = {}) {
  if (m.records.empty() || m.active_count() == 0) throw Error("export: manifest has no active images");
  for (const auto& r : m.records) {
    if (!r.active()) continue;
    const auto* c = m.find_category(r.category_id);
    const auto dir = out_dir / export_dirname(c->name);
    fs::create_directories(dir);
    auto bytes = read_file(r.source_path);
    if (sniff_format(bytes) != ImageFormat::jpeg) bytes = encode_jpeg(decode_image(bytes), 95);
    write_file_atomic(dir / (r.id + ".jpg"), std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    detail::tick(probe, "record");
  }
  auto summary = export_summary(m, floor);
  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "summary.json", to_json(summary).dump(2) + "\n");
  return summary;
}

inline StageReport export_stage(Manifest& m, const PipelineConfig& cfg, const Probe& probe = {}) {
  export_dataset(m, cfg.export_dir, cfg.export_floor, probe);
  StageReport rep;
  rep.stage = Stage::export_;
  for (const auto& r : m.records) {
    if (!r.active()) continue;
    auto& c = rep.per_category[r.category_id];
    ++c.input;
    ++c.kept;
  }
  rep.input_count = rep.kept_count = m.active_count();
  return rep;
}

// ---------------------------------------------------------------------------
// Ordering and --force

// Undoes the effects of `stage`, which must be the most recent report.
inline void rollback_stage(Manifest& m, Stage stage) {
  if (m.last_stage() != stage) throw StageOrderError("only the most recent stage can be rolled back");
  m.history.pop_back();
  for (auto& r : m.records) {
    if (r.removal && r.removal->stage == stage) {
      r.status = Status::active;
      r.removal.reset();
    }
    switch (stage) {
      case Stage::format:
        r.width = r.height = 0;
        break;
      case Stage::dedup:
        r.hash.reset();
        break;
      case Stage::foodness:
        r.foodness_score.reset();
        break;
      case Stage::calibrate:
        if (r.calibrated_from) r.category_id = *r.calibrated_from;
        r.calibrated_from.reset();
        break;
      case Stage::ingest:
      case Stage::export_:
        break;
    }
  }
}

// Enforces the total stage order. A completed stage may only be rerun with
// `force`, and only while it is the most recent one.
inline void prepare_stage(Manifest& m, Stage stage, bool force) {
  const auto name = std::string(stage_name(stage));
  if (m.completed(stage)) {
    if (!force) throw StageOrderError("stage '" + name + "' already completed; rerun with --force");
    if (m.last_stage() != stage) {
      throw StageOrderError("stage '" + name + "' is not the most recent stage and cannot be forced");
    }
    rollback_stage(m, stage);
  }
  const int idx = stage_index(stage);
  const auto prev = kStageOrder[idx - 1];
  if (m.last_stage() != prev) {
    throw StageOrderError("stage '" + name + "' requires '" + std::string(stage_name(prev)) +
                          "' to be the last completed stage");
  }
}

inline fs::path clusters_path(const PipelineConfig& cfg, const fs::path& manifest_path) {
  return cfg.clusters_out ? *cfg.clusters_out : fs::path(manifest_path.string() + ".clusters.jsonl");
}

inline fs::path decisions_path(const PipelineConfig& cfg, const fs::path& manifest_path) {
  return cfg.decisions_log ? *cfg.decisions_log : default_decision_log(manifest_path);
}

// Runs one stage against the manifest at `manifest_path` and commits the
// result atomically.
inline StageReport run_stage(const PipelineConfig& cfg, Stage stage, const fs::path& manifest_path,
                             const RunOptions& opt = {}) {
  cfg.validate();
  Manifest m;
  StageReport rep;
  if (stage == Stage::ingest) {
    if (fs::exists(manifest_path)) {
      const auto existing = load_manifest(manifest_path);
      if (!opt.force) throw StageOrderError("stage 'ingest' already completed; rerun with --force");
      if (existing.last_stage() != Stage::ingest) {
        throw StageOrderError("stage 'ingest' is not the most recent stage and cannot be forced");
      }
    }
    m = ingest_stage(cfg, opt.probe);
    rep = m.history.back();
  } else {
    m = load_manifest(manifest_path);
    prepare_stage(m, stage, opt.force);
    switch (stage) {
      case Stage::format:
        rep = format_stage(m, cfg, opt.probe);
        break;
      case Stage::dedup: {
        auto result = dedup_stage(m, cfg, opt.probe);
        write_file_atomic(clusters_path(cfg, manifest_path), clusters_to_jsonl(result.clusters));
        rep = std::move(result.report);
        break;
      }
      case Stage::foodness:
        rep = foodness_stage(m, cfg, opt.probe);
        break;
      case Stage::calibrate:
        rep = calibrate_stage(m, decisions_path(cfg, manifest_path), opt.probe);
        break;
      case Stage::export_:
        rep = export_stage(m, cfg, opt.probe);
        break;
      case Stage::ingest:
        break;
    }
    m.history.push_back(rep);
  }
  save_manifest(m, manifest_path, opt.probe);
  return rep;
}

}  // namespace foodsg

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include "json.hpp"

#include "foodsg/error.hpp"
#include "foodsg/hash_triple.hpp"

namespace foodsg {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class Stage { ingest, format, dedup, foodness, calibrate, export_ };

inline constexpr Stage kStageOrder[] = {Stage::ingest,   Stage::format,    Stage::dedup,
                                        Stage::foodness, Stage::calibrate, Stage::export_};

inline std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::format: return "format";
    case Stage::dedup: return "dedup";
    case Stage::foodness: return "foodness";
    case Stage::calibrate: return "calibrate";
    case Stage::export_: return "export";
  }
  return "?";
}

inline std::optional<Stage> parse_stage(std::string_view name) {
  for (Stage s : kStageOrder) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

inline int stage_index(Stage s) { return static_cast<int>(s); }

enum class Status { active, removed };

struct CategoryRecord {
  int id = 0;
  std::string name;
  std::string group;
  std::vector<std::string> synonyms;

  friend bool operator==(const CategoryRecord&, const CategoryRecord&) = default;
};

struct Removal {
  Stage stage = Stage::ingest;
  std::string reason;

  friend bool operator==(const Removal&, const Removal&) = default;
};

struct ImageRecord {
  std::string id;
  int category_id = 0;
  std::string source_path;
  int width = 0;
  int height = 0;
  std::uint64_t byte_size = 0;
  Status status = Status::active;
  std::optional<Removal> removal;
  std::optional<HashTriple> hash;
  std::optional<double> foodness_score;
  // Category before the first calibration reassignment; lets a forced rerun
  // of the calibration stage start from the pre-calibration state.
  std::optional<int> calibrated_from;

  bool active() const { return status == Status::active; }

  void remove(Stage stage, std::string reason) {
    status = Status::removed;
    removal = Removal{stage, std::move(reason)};
  }

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct CategoryCounts {
  std::uint64_t input = 0;
  std::uint64_t kept = 0;
  std::uint64_t removed = 0;

  friend bool operator==(const CategoryCounts&, const CategoryCounts&) = default;
};

struct StageReport {
  Stage stage = Stage::ingest;
  std::uint64_t input_count = 0;
  std::uint64_t kept_count = 0;
  std::uint64_t removed_count = 0;
  std::map<std::string, std::uint64_t> reasons;
  // Informational only; reassignments during calibration move images between
  // categories, so only the dataset-level totals are required to balance.
  std::map<int, CategoryCounts> per_category;

  friend bool operator==(const StageReport&, const StageReport&) = default;
};

struct Manifest {
  std::string dataset_name;
  std::vector<CategoryRecord> categories;
  std::vector<ImageRecord> records;
  std::vector<StageReport> history;

  const CategoryRecord* find_category(int id) const {
    for (const auto& c : categories) {
      if (c.id == id) return &c;
    }
    return nullptr;
  }

  ImageRecord* find_record(std::string_view id) {
    for (auto& r : records) {
      if (r.id == id) return &r;
    }
    return nullptr;
  }
  const ImageRecord* find_record(std::string_view id) const {
    return const_cast<Manifest*>(this)->find_record(id);
  }

  std::uint64_t active_count() const {
    return static_cast<std::uint64_t>(
        std::count_if(records.begin(), records.end(), [](const ImageRecord& r) { return r.active(); }));
  }

  bool completed(Stage s) const {
    return std::any_of(history.begin(), history.end(), [s](const StageReport& r) { return r.stage == s; });
  }

  std::optional<Stage> last_stage() const {
    if (history.empty()) return std::nullopt;
    return history.back().stage;
  }

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

// ---------------------------------------------------------------------------
// JSON mapping

inline json to_json(const CategoryRecord& c) {
  return json{{"id", c.id}, {"name", c.name}, {"group", c.group}, {"synonyms", c.synonyms}};
}

inline json to_json(const ImageRecord& r) {
  json j{{"id", r.id},
         {"category_id", r.category_id},
         {"source_path", r.source_path},
         {"width", r.width},
         {"height", r.height},
         {"byte_size", r.byte_size},
         {"status", r.active() ? "active" : "removed"}};
  if (r.removal) j["removal"] = json{{"stage", stage_name(r.removal->stage)}, {"reason", r.removal->reason}};
  if (r.hash) j["hash"] = to_hex(*r.hash);
  if (r.foodness_score) j["foodness_score"] = *r.foodness_score;
  if (r.calibrated_from) j["calibrated_from"] = *r.calibrated_from;
  return j;
}

inline json to_json(const StageReport& s) {
  json j{{"kind", "stage_report"},
         {"stage", stage_name(s.stage)},
         {"input_count", s.input_count},
         {"kept_count", s.kept_count},
         {"removed_count", s.removed_count},
         {"reasons", s.reasons}};
  if (!s.per_category.empty()) {
    json pc = json::object();
    for (const auto& [id, c] : s.per_category) {
      pc[std::to_string(id)] = json{{"input", c.input}, {"kept", c.kept}, {"removed", c.removed}};
    }
    j["per_category"] = std::move(pc);
  }
  return j;
}

namespace detail {

inline Stage stage_from_json(const json& j) {
  auto s = parse_stage(j.get<std::string>());
  if (!s) throw Error("unknown stage '" + j.get<std::string>() + "'");
  return *s;
}

inline CategoryRecord category_from_json(const json& j) {
  CategoryRecord c;
  c.id = j.at("id").get<int>();
  c.name = j.at("name").get<std::string>();
  c.group = j.value("group", std::string{});
  c.synonyms = j.value("synonyms", std::vector<std::string>{});
  return c;
}

inline ImageRecord record_from_json(const json& j) {
  ImageRecord r;
  r.id = j.at("id").get<std::string>();
  r.category_id = j.at("category_id").get<int>();
  r.source_path = j.at("source_path").get<std::string>();
  r.width = j.at("width").get<int>();
  r.height = j.at("height").get<int>();
  r.byte_size = j.at("byte_size").get<std::uint64_t>();
  const auto status = j.at("status").get<std::string>();
  if (status == "active") {
    r.status = Status::active;
  } else if (status == "removed") {
    r.status = Status::removed;
  } else {
    throw Error("unknown status '" + status + "'");
  }
  if (auto it = j.find("removal"); it != j.end()) {
    r.removal = Removal{stage_from_json(it->at("stage")), it->at("reason").get<std::string>()};
  }
  if (auto it = j.find("hash"); it != j.end()) {
    r.hash = parse_hash_triple(it->get<std::string>());
    if (!r.hash) throw Error("malformed hash '" + it->get<std::string>() + "'");
  }
  if (auto it = j.find("foodness_score"); it != j.end()) r.foodness_score = it->get<double>();
  if (auto it = j.find("calibrated_from"); it != j.end()) r.calibrated_from = it->get<int>();
  return r;
}

inline StageReport report_from_json(const json& j) {
  StageReport s;
  s.stage = stage_from_json(j.at("stage"));
  s.input_count = j.at("input_count").get<std::uint64_t>();
  s.kept_count = j.at("kept_count").get<std::uint64_t>();
  s.removed_count = j.at("removed_count").get<std::uint64_t>();
  s.reasons = j.value("reasons", std::map<std::string, std::uint64_t>{});
  if (auto it = j.find("per_category"); it != j.end()) {
    for (const auto& [key, c] : it->items()) {
      s.per_category[std::stoi(key)] =
          CategoryCounts{c.at("input").get<std::uint64_t>(), c.at("kept").get<std::uint64_t>(),
                         c.at("removed").get<std::uint64_t>()};
    }
  }
  return s;
}

}  // namespace detail

// Throws InvariantError naming the first offending record or category.
inline void validate(const Manifest& m) {
  std::set<int> category_ids;
  for (const auto& c : m.categories) {
    if (!category_ids.insert(c.id).second) {
      throw InvariantError("category " + std::to_string(c.id), "duplicate category id");
    }
    if (c.name.empty()) throw InvariantError("category " + std::to_string(c.id), "empty category name");
  }
  const bool formatted = m.completed(Stage::format);
  std::set<std::string_view> ids;
  for (const auto& r : m.records) {
    if (r.id.empty()) throw InvariantError("", "record with empty id");
    if (!ids.insert(r.id).second) throw InvariantError(r.id, "duplicate record id");
    if (!category_ids.count(r.category_id)) {
      throw InvariantError(r.id, "unknown category " + std::to_string(r.category_id));
    }
    if ((r.status == Status::removed) != r.removal.has_value()) {
      throw InvariantError(r.id, "status and removal disagree");
    }
    if (formatted && r.active() && (r.width < 1 || r.height < 1)) {
      throw InvariantError(r.id, "active record without dimensions after formatting");
    }
    if (r.foodness_score && !(*r.foodness_score >= 0.0 && *r.foodness_score <= 1.0)) {
      throw InvariantError(r.id, "foodness score outside [0,1]");
    }
  }
}

inline std::string to_jsonl(const Manifest& m) {
  std::vector<json> cats;
  for (const auto& c : m.categories) cats.push_back(to_json(c));
  json header{{"dataset_name", m.dataset_name}, {"schema_version", kSchemaVersion}, {"categories", cats}};
  std::string out = header.dump() + "\n";
  for (const auto& r : m.records) out += to_json(r).dump() + "\n";
  for (const auto& s : m.history) out += to_json(s).dump() + "\n";
  return out;
}

inline Manifest parse_manifest(std::istream& in) {
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  bool in_reports = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    }
    try {
      if (!have_header) {
        const int version = j.at("schema_version").get<int>();
        if (version != kSchemaVersion) {
          throw Error("unsupported schema_version " + std::to_string(version));
        }
        m.dataset_name = j.at("dataset_name").get<std::string>();
        for (const auto& c : j.at("categories")) m.categories.push_back(detail::category_from_json(c));
        have_header = true;
      } else if (j.value("kind", std::string{}) == "stage_report") {
        in_reports = true;
        m.history.push_back(detail::report_from_json(j));
      } else {
        if (in_reports) throw Error("image record after stage reports");
        m.records.push_back(detail::record_from_json(j));
      }
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const InvariantError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
  }
  if (!have_header) throw ParseError(lineno, "missing header line");
  validate(m);
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  return parse_manifest(in);
}

// Invoked at named points during long operations; tests use it to inject
// crashes.
using Probe = std::function<void(std::string_view)>;

// Writes `contents` to `path` atomically: a temp file in the same directory is
// written, flushed to disk and renamed over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents,
                              const Probe& probe = {}) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw IoError("cannot create " + tmp.string());
  constexpr std::size_t kChunk = 1 << 16;
  std::size_t written = 0;
  while (written < contents.size()) {
    const std::size_t n = std::min(kChunk, contents.size() - written);
    const auto rc = ::write(fd, contents.data() + written, n);
    if (rc < 0) {
      ::close(fd);
      throw IoError("write failed: " + tmp.string());
    }
    written += static_cast<std::size_t>(rc);
    if (probe) probe("write");
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) throw IoError("flush failed: " + tmp.string());
  if (probe) probe("before_rename");
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + ec.message());
  if (probe) probe("after_rename");
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path, const Probe& probe = {}) {
  validate(m);
  write_file_atomic(path, to_jsonl(m), probe);
}

// Report-level accounting: every report balances, its reasons sum to its
// removals, and consecutive reports chain. Returns human-readable violations.
inline std::vector<std::string> verify_accounting(const Manifest& m) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < m.history.size(); ++k) {
    const auto& r = m.history[k];
    const std::string tag = "report " + std::to_string(k) + " (" + std::string(stage_name(r.stage)) + ")";
    if (r.input_count != r.kept_count + r.removed_count) {
      out.push_back(tag + ": input " + std::to_string(r.input_count) + " != kept " +
                    std::to_string(r.kept_count) + " + removed " + std::to_string(r.removed_count));
    }
    std::uint64_t reason_total = 0;
    for (const auto& [reason, n] : r.reasons) reason_total += n;
    if (reason_total != r.removed_count) {
      out.push_back(tag + ": reasons sum to " + std::to_string(reason_total) + ", removed is " +
                    std::to_string(r.removed_count));
    }
    if (k > 0 && m.history[k - 1].kept_count != r.input_count) {
      out.push_back(tag + ": input " + std::to_string(r.input_count) + " does not chain from previous kept " +
                    std::to_string(m.history[k - 1].kept_count));
    }
  }
  return out;
}

// Record-level accounting: per-stage removal counts recomputed from records
// must equal the reported counts, and the last report's kept count must equal
// the number of active records.
inline std::vector<std::string> verify_attribution(const Manifest& m) {
  std::vector<std::string> out;
  std::map<Stage, std::uint64_t> removed;
  for (const auto& r : m.records) {
    if (r.removal) ++removed[r.removal->stage];
  }
  std::map<Stage, std::uint64_t> reported;
  for (const auto& s : m.history) reported[s.stage] += s.removed_count;
  for (Stage s : kStageOrder) {
    if (removed[s] != reported[s]) {
      out.push_back(std::string(stage_name(s)) + ": records show " + std::to_string(removed[s]) +
                    " removals, reports show " + std::to_string(reported[s]));
    }
  }
  if (!m.history.empty() && m.history.back().kept_count != m.active_count()) {
    out.push_back("last report keeps " + std::to_string(m.history.back().kept_count) + " but " +
                  std::to_string(m.active_count()) + " records are active");
  }
  return out;
}

}  // namespace foodsg

#pragma once

// Human calibration: decisions on individual images are appended to a JSON
// Lines log; the calibrated manifest is a left fold of that log over the
// post-foodness manifest.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "foodsg/error.hpp"
#include "foodsg/manifest.hpp"

namespace foodsg {

// The decision targets a record that is no longer active.
class InactiveRecordError : public Error {
 public:
  using Error::Error;
};

enum class DecisionAction { confirm, reassign, remove };

inline std::string_view action_name(DecisionAction a) {
  switch (a) {
    case DecisionAction::confirm: return "confirm";
    case DecisionAction::reassign: return "reassign";
    case DecisionAction::remove: return "remove";
  }
  return "?";
}

inline constexpr const char* kDefaultRemovalReason = "rejected";

struct CalibrationDecision {
  std::string image_id;
  DecisionAction action = DecisionAction::confirm;
  std::optional<int> category_id;  // reassign target
  std::string reason;              // remove only
  std::string reviewer;
  std::string timestamp;

  friend bool operator==(const CalibrationDecision&, const CalibrationDecision&) = default;
};

inline json to_json(const CalibrationDecision& d) {
  json j{{"image_id", d.image_id}, {"action", action_name(d.action)}};
  if (d.action == DecisionAction::reassign) j["category_id"] = *d.category_id;
  if (d.action == DecisionAction::remove) j["reason"] = d.reason;
  j["reviewer"] = d.reviewer;
  j["timestamp"] = d.timestamp;
  return j;
}

// Throws Error on malformed input. Missing reviewer/timestamp become empty
// strings; the caller may fill them in.
inline CalibrationDecision decision_from_json(const json& j) {
  if (!j.is_object()) throw Error("decision must be a JSON object");
  CalibrationDecision d;
  try {
    d.image_id = j.at("image_id").get<std::string>();
    const auto action = j.at("action").get<std::string>();
    if (action == "confirm") {
      d.action = DecisionAction::confirm;
    } else if (action == "reassign") {
      d.action = DecisionAction::reassign;
      d.category_id = j.at("category_id").get<int>();
    } else if (action == "remove") {
      d.action = DecisionAction::remove;
      d.reason = j.value("reason", std::string(kDefaultRemovalReason));
      if (d.reason.empty()) d.reason = kDefaultRemovalReason;
    } else {
      throw Error("unknown action '" + action + "'");
    }
    d.reviewer = j.value("reviewer", std::string());
    d.timestamp = j.value("timestamp", std::string());
  } catch (const json::exception& e) {
    throw Error(std::string("malformed decision: ") + e.what());
  }
  if (d.image_id.empty()) throw Error("decision without image_id");
  return d;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Throws if `d` cannot be applied to `m`; never mutates.
inline void check_decision(const Manifest& m, const CalibrationDecision& d) {
  const ImageRecord* r = m.find_record(d.image_id);
  if (!r) throw NotFoundError("unknown image " + d.image_id);
  if (!r->active()) throw InactiveRecordError("image " + d.image_id + " is not active");
  if (d.action == DecisionAction::reassign && (!d.category_id || !m.find_category(*d.category_id))) {
    throw InvariantError(d.image_id, "reassign target category does not exist");
  }
}

// Applies one decision. Decisions are applied in log order, so a later
// decision on the same image acts on the state left by earlier ones.
inline void apply_decision(Manifest& m, const CalibrationDecision& d) {
  check_decision(m, d);
  ImageRecord* r = m.find_record(d.image_id);
  switch (d.action) {
    case DecisionAction::confirm:
      break;
    case DecisionAction::reassign: {
      if (!r->calibrated_from) r->calibrated_from = r->category_id;
      r->category_id = *d.category_id;
      if (r->calibrated_from == r->category_id) r->calibrated_from.reset();
      break;
    }
    case DecisionAction::remove:
      r->remove(Stage::calibrate, d.reason.empty() ? kDefaultRemovalReason : d.reason);
      break;
  }
}

inline Manifest fold_decisions(Manifest m, std::span<const CalibrationDecision> log) {
  for (const auto& d : log) apply_decision(m, d);
  return m;
}

// Report for the calibration stage given the manifests before and after the
// fold. Per-category counts are keyed by the pre-calibration category.
inline StageReport calibration_report(const Manifest& before, const Manifest& after) {
  StageReport rep;
  rep.stage = Stage::calibrate;
  std::unordered_map<std::string_view, const ImageRecord*> post;
  for (const auto& r : after.records) post.emplace(r.id, &r);
  for (const auto& r : before.records) {
    if (!r.active()) continue;
    auto& c = rep.per_category[r.category_id];
    ++c.input;
    ++rep.input_count;
    const auto* a = post.at(r.id);
    if (a->active()) {
      ++c.kept;
    } else {
      ++c.removed;
      ++rep.removed_count;
      ++rep.reasons[a->removal->reason];
    }
  }
  rep.kept_count = rep.input_count - rep.removed_count;
  return rep;
}

// ---------------------------------------------------------------------------
// Log file

// Reads a decision log. A final line without a newline terminator is an
// append interrupted by a crash and is ignored.
inline std::vector<CalibrationDecision> read_decision_log(const std::filesystem::path& path) {
  std::vector<CalibrationDecision> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  std::size_t lineno = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) break;
    ++lineno;
    const auto line = std::string_view(text).substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      out.push_back(decision_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

inline void append_decision(const std::filesystem::path& path, const CalibrationDecision& d) {
  const std::string line = to_json(d).dump() + "\n";
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw IoError("cannot open decision log " + path.string());
  const auto rc = ::write(fd, line.data(), line.size());
  const bool ok = rc == static_cast<ssize_t>(line.size()) && ::fsync(fd) == 0;
  ::close(fd);
  if (!ok) throw IoError("append failed: " + path.string());
}

// Drops an unterminated final line so later appends start on a fresh line.
inline void repair_decision_log(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return;
  std::ifstream in(path, std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.empty() || text.back() == '\n') return;
  const auto nl = text.rfind('\n');
  std::filesystem::resize_file(path, nl == std::string::npos ? 0 : nl + 1);
}

inline std::filesystem::path default_decision_log(const std::filesystem::path& manifest_path) {
  return manifest_path.string() + ".decisions.jsonl";
}

// ---------------------------------------------------------------------------
// Live session behind the HTTP API

struct QueueItem {
  std::string image_id;
  int category_id = 0;
  std::string category;
  std::string thumbnail_url;
  std::optional<double> foodness_score;
};

inline json to_json(const QueueItem& q) {
  return {{"image_id", q.image_id},
          {"category_id", q.category_id},
          {"category", q.category},
          {"thumbnail_url", q.thumbnail_url},
          {"foodness_score", q.foodness_score ? json(*q.foodness_score) : json(nullptr)}};
}

// Active, undecided records, lowest foodness score first, then id. Records
// without a score sort last.
inline std::vector<QueueItem> calibration_queue(const Manifest& m, const std::set<std::string>& decided,
                                                std::optional<int> category = std::nullopt) {
  std::vector<const ImageRecord*> rows;
  for (const auto& r : m.records) {
    if (!r.active() || decided.count(r.id)) continue;
    if (category && r.category_id != *category) continue;
    rows.push_back(&r);
  }
  std::sort(rows.begin(), rows.end(), [](const ImageRecord* a, const ImageRecord* b) {
    const double sa = a->foodness_score.value_or(2.0);
    const double sb = b->foodness_score.value_or(2.0);
    if (sa != sb) return sa < sb;
    return a->id < b->id;
  });
  std::vector<QueueItem> out;
  out.reserve(rows.size());
  for (const auto* r : rows) {
    const auto* c = m.find_category(r->category_id);
    out.push_back({r->id, r->category_id, c ? c->name : std::string(), "/api/image/" + r->id, r->foodness_score});
  }
  return out;
}

class CalibrationSession {
 public:
  CalibrationSession(Manifest base, std::filesystem::path log_path)
      : base_(std::move(base)), log_path_(std::move(log_path)) {
    if (!base_.completed(Stage::foodness)) throw StageOrderError("calibration requires the foodness stage");
    if (base_.completed(Stage::calibrate)) throw StageOrderError("calibration has already been finalized");
    repair_decision_log(log_path_);
    log_ = read_decision_log(log_path_);
    current_ = fold_decisions(base_, log_);
    for (const auto& d : log_) decided_.insert(d.image_id);
    for (const auto& r : base_.records) {
      if (r.active()) ++total_;
    }
  }

  json queue(std::size_t limit, std::optional<int> category) const {
    std::lock_guard lock(mu_);
    const auto items = calibration_queue(current_, decided_, category);
    json arr = json::array();
    for (std::size_t i = 0; i < std::min(limit, items.size()); ++i) arr.push_back(to_json(items[i]));
    return {{"items", std::move(arr)}, {"remaining", items.size()}};
  }

  // Validates against the current state, then logs. Throws NotFoundError,
  // InactiveRecordError or InvariantError without logging anything.
  CalibrationDecision decide(CalibrationDecision d) {
    std::lock_guard lock(mu_);
    if (d.timestamp.empty()) d.timestamp = utc_timestamp();
    check_decision(current_, d);
    append_decision(log_path_, d);
    apply_decision(current_, d);
    log_.push_back(d);
    decided_.insert(d.image_id);
    return d;
  }

  json progress() const {
    std::lock_guard lock(mu_);
    std::uint64_t removed = 0;
    std::uint64_t reassigned = 0;
    for (std::size_t i = 0; i < current_.records.size(); ++i) {
      const auto& r = current_.records[i];
      if (r.removal && r.removal->stage == Stage::calibrate) ++removed;
      if (r.active() && r.category_id != base_.records[i].category_id) ++reassigned;
    }
    return {{"total", total_}, {"decided", decided_.size()}, {"removed", removed}, {"reassigned", reassigned}};
  }

  json categories() const {
    json arr = json::array();
    for (const auto& c : base_.categories) arr.push_back(to_json(c));
    return arr;
  }

  std::optional<std::string> source_path(std::string_view id) const {
    std::lock_guard lock(mu_);
    const auto* r = current_.find_record(id);
    if (!r) return std::nullopt;
    return r->source_path;
  }

  Manifest snapshot() const {
    std::lock_guard lock(mu_);
    return current_;
  }

  std::vector<CalibrationDecision> log() const {
    std::lock_guard lock(mu_);
    return log_;
  }

 private:
  Manifest base_;
  Manifest current_;
  std::filesystem::path log_path_;
  std::vector<CalibrationDecision> log_;
  std::set<std::string> decided_;
  std::uint64_t total_ = 0;
  mutable std::mutex mu_;
};

}  // namespace foodsg

#include <gtest/gtest.h>

#include <fstream>

#include "foodsg/calibration.hpp"
#include "foodsg/random.hpp"
#include "test_support.hpp"

using namespace foodsg;
using foodsg::testkit::TempDir;

namespace {

// Post-foodness manifest with `n` active records spread over three
// categories; every fifth record has no score and every seventh is removed.
Manifest scored_manifest(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Manifest m;
  m.dataset_name = "cal";
  m.categories = {{0, "laksa", "", {}}, {1, "satay", "", {}}, {2, "rojak", "", {}}};
  std::uint64_t removed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ImageRecord r;
    r.id = "r" + std::to_string(1000 + i);
    r.category_id = static_cast<int>(i % 3);
    r.source_path = "/data/" + r.id + ".jpg";
    if (i % 5) r.foodness_score = 0.5 + 0.5 * rng.uniform();
    if (i % 7 == 6) {
      r.remove(Stage::foodness, "non_food");
      ++removed;
    }
    m.records.push_back(std::move(r));
  }
  for (Stage s : {Stage::ingest, Stage::format, Stage::dedup}) m.history.push_back({s, n, n, 0, {}, {}});
  StageReport food{Stage::foodness, n, n - removed, removed, {}, {}};
  if (removed) food.reasons["non_food"] = removed;
  m.history.push_back(food);
  return m;
}

CalibrationDecision confirm(const std::string& id) { return {id, DecisionAction::confirm, {}, "", "rev", "t0"}; }
CalibrationDecision reassign(const std::string& id, int c) { return {id, DecisionAction::reassign, c, "", "rev", "t0"}; }
CalibrationDecision drop(const std::string& id, std::string reason = "wrong_dish") {
  return {id, DecisionAction::remove, {}, std::move(reason), "rev", "t0"};
}

std::vector<CalibrationDecision> random_log(const Manifest& base, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Manifest state = base;
  std::vector<CalibrationDecision> log;
  while (log.size() < n) {
    const auto& r = state.records[rng.below(state.records.size())];
    if (!r.active()) continue;
    CalibrationDecision d;
    switch (rng.below(10)) {
      case 0: d = drop(r.id); break;
      case 1: case 2: case 3: d = reassign(r.id, static_cast<int>(rng.below(3))); break;
      default: d = confirm(r.id); break;
    }
    apply_decision(state, d);
    log.push_back(d);
  }
  return log;
}

}  // namespace

TEST(Queue, LowestScoreFirstThenIdMissingLast) {
  Manifest m;
  m.categories = {{0, "a", "", {}}};
  for (auto [id, score] : std::vector<std::pair<std::string, std::optional<double>>>{
           {"x", 0.95}, {"b", std::nullopt}, {"y", 0.55}, {"a", 0.55}, {"c", std::nullopt}}) {
    ImageRecord r;
    r.id = id;
    r.foodness_score = score;
    m.records.push_back(r);
  }
  const auto q = calibration_queue(m, {});
  std::vector<std::string> ids;
  for (const auto& item : q) ids.push_back(item.image_id);
  EXPECT_EQ(ids, (std::vector<std::string>{"a", "y", "x", "b", "c"}));
  EXPECT_EQ(q[0].thumbnail_url, "/api/image/a");
  EXPECT_EQ(q[0].category, "a");
  EXPECT_TRUE(to_json(q[3])["foodness_score"].is_null());
  EXPECT_TRUE(calibration_queue(m, {"a", "b", "c", "x", "y"}).empty());
  EXPECT_TRUE(calibration_queue(Manifest{}, {}).empty());
}

TEST(Queue, ExcludesDecidedAndInactiveAndFilters) {
  const auto m = scored_manifest(30, 1);
  const auto log = random_log(m, 12, 2);
  std::set<std::string> decided;
  for (const auto& d : log) decided.insert(d.image_id);
  const auto state = fold_decisions(m, log);
  const auto q = calibration_queue(state, decided);
  std::size_t expected = 0;
  for (const auto& r : state.records) expected += r.active() && !decided.count(r.id);
  EXPECT_EQ(q.size(), expected);
  for (const auto& item : q) {
    EXPECT_FALSE(decided.count(item.image_id));
    EXPECT_TRUE(state.find_record(item.image_id)->active());
  }
  for (const auto& item : calibration_queue(state, decided, 1)) EXPECT_EQ(item.category_id, 1);
}

TEST(ApplyDecision, ConfirmLeavesRecordUnchanged) {
  TempDir dir;
  const auto m = scored_manifest(10, 3);
  CalibrationSession session(m, dir / "log.jsonl");
  session.decide(confirm("r1000"));
  EXPECT_EQ(session.snapshot(), m);
  EXPECT_EQ(read_decision_log(dir / "log.jsonl").size(), 1u);
  EXPECT_EQ(session.progress()["decided"], 1);
}

TEST(ApplyDecision, ReassignThenRemoveEndsRemovedBothLogged) {
  TempDir dir;
  const auto m = scored_manifest(10, 4);
  CalibrationSession session(m, dir / "log.jsonl");
  session.decide(reassign("r1000", 2));
  auto state = session.snapshot();
  EXPECT_EQ(state.find_record("r1000")->category_id, 2);
  EXPECT_EQ(state.find_record("r1000")->calibrated_from, 0);
  EXPECT_EQ(session.progress()["reassigned"], 1);
  session.decide(drop("r1000", ""));
  state = session.snapshot();
  const auto* r = state.find_record("r1000");
  EXPECT_FALSE(r->active());
  EXPECT_EQ(r->removal->stage, Stage::calibrate);
  EXPECT_EQ(r->removal->reason, kDefaultRemovalReason);
  EXPECT_EQ(read_decision_log(dir / "log.jsonl").size(), 2u);
  EXPECT_EQ(session.progress()["removed"], 1);
  EXPECT_THROW(session.decide(confirm("r1000")), InactiveRecordError);
}

TEST(ApplyDecision, ReassignBackClearsProvenance) {
  auto m = scored_manifest(3, 5);
  apply_decision(m, reassign("r1001", 0));
  apply_decision(m, reassign("r1001", 1));
  EXPECT_EQ(m.find_record("r1001")->category_id, 1);
  EXPECT_FALSE(m.find_record("r1001")->calibrated_from);
}

TEST(ApplyDecision, Errors) {
  TempDir dir;
  const auto m = scored_manifest(10, 6);
  CalibrationSession session(m, dir / "log.jsonl");
  EXPECT_THROW(session.decide(confirm("nope")), NotFoundError);
  EXPECT_THROW(session.decide(reassign("r1001", 9)), InvariantError);
  EXPECT_THROW(session.decide(confirm("r1006")), InactiveRecordError);  // removed by foodness
  EXPECT_TRUE(read_decision_log(dir / "log.jsonl").empty());
}

TEST(Replay, ThousandDecisionsFoldIdentically) {
  TempDir dir;
  const auto m = scored_manifest(200, 7);
  const auto log = random_log(m, 1000, 8);
  for (const auto& d : log) append_decision(dir / "log.jsonl", d);
  const auto back = read_decision_log(dir / "log.jsonl");
  EXPECT_EQ(back, log);
  const auto a = fold_decisions(m, back);
  const auto b = fold_decisions(m, read_decision_log(dir / "log.jsonl"));
  EXPECT_EQ(to_jsonl(a), to_jsonl(b));

  // A session reopened on the log sees the same state.
  CalibrationSession session(m, dir / "log.jsonl");
  EXPECT_EQ(session.snapshot(), a);
  const auto rep = calibration_report(m, a);
  Manifest done = a;
  done.history.push_back(rep);
  EXPECT_TRUE(verify_accounting(done).empty());
  EXPECT_TRUE(verify_attribution(done).empty());
}

TEST(Replay, LaterDecisionsSupersede) {
  const auto m = scored_manifest(6, 9);
  const std::vector<CalibrationDecision> log{reassign("r1002", 0), reassign("r1002", 1), confirm("r1002")};
  const auto out = fold_decisions(m, log);
  EXPECT_EQ(out.find_record("r1002")->category_id, 1);
  EXPECT_EQ(out.find_record("r1002")->calibrated_from, 2);
}

TEST(DecisionLog, TornFinalLineIsIgnoredAndRepaired) {
  TempDir dir;
  const auto path = dir / "log.jsonl";
  append_decision(path, confirm("r1000"));
  append_decision(path, drop("r1001"));
  std::ofstream(path, std::ios::app) << R"({"image_id":"r1002","act)";
  EXPECT_EQ(read_decision_log(path).size(), 2u);
  repair_decision_log(path);
  append_decision(path, confirm("r1003"));
  const auto log = read_decision_log(path);
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[2].image_id, "r1003");
  EXPECT_TRUE(read_decision_log(dir / "absent.jsonl").empty());
}

TEST(DecisionLog, MalformedLineReportsLineNumber) {
  TempDir dir;
  const auto path = dir / "log.jsonl";
  append_decision(path, confirm("r1000"));
  std::ofstream(path, std::ios::app) << "\n{\"image_id\":\"r1\",\"action\":\"burn\"}\n";
  try {
    read_decision_log(path);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(DecisionJson, WireFormat) {
  const auto j = to_json(reassign("r1", 4));
  EXPECT_EQ(j, json::parse(R"({"image_id":"r1","action":"reassign","category_id":4,"reviewer":"rev","timestamp":"t0"})"));
  EXPECT_EQ(decision_from_json(j), reassign("r1", 4));
  const auto rm = decision_from_json(json::parse(R"({"image_id":"r1","action":"remove"})"));
  EXPECT_EQ(rm.reason, kDefaultRemovalReason);
  EXPECT_EQ(rm.reviewer, "");
  EXPECT_THROW(decision_from_json(json::parse(R"({"image_id":"r1","action":"reassign"})")), Error);
  EXPECT_THROW(decision_from_json(json::parse(R"({"action":"confirm"})")), Error);
  EXPECT_THROW(decision_from_json(json::parse(R"([1,2])")), Error);
}

TEST(Session, RequiresFoodnessAndNotFinalized) {
  TempDir dir;
  auto m = scored_manifest(4, 10);
  auto early = m;
  early.history.pop_back();
  EXPECT_THROW(CalibrationSession(early, dir / "log.jsonl"), StageOrderError);
  m.history.push_back({Stage::calibrate, 4, 4, 0, {}, {}});
  EXPECT_THROW(CalibrationSession(m, dir / "log.jsonl"), StageOrderError);
}

TEST(Session, FillsTimestampAndQueueShrinks) {
  TempDir dir;
  CalibrationSession session(scored_manifest(12, 11), dir / "log.jsonl");
  const auto before = session.queue(50, std::nullopt);
  auto d = confirm(before["items"][0]["image_id"]);
  d.timestamp.clear();
  const auto logged = session.decide(d);
  EXPECT_EQ(logged.timestamp.size(), 20u);  // YYYY-MM-DDTHH:MM:SSZ
  const auto after = session.queue(50, std::nullopt);
  EXPECT_EQ(after["remaining"].get<int>(), before["remaining"].get<int>() - 1);
  EXPECT_EQ(session.queue(2, std::nullopt)["items"].size(), 2u);
  EXPECT_EQ(session.progress()["total"], 11);
}

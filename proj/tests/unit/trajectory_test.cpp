#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"
#include "wakenllm/errors.hpp"
#include "wakenllm/trajectory.hpp"

namespace wakenllm {
namespace {

using testing::TempDir;

TrajectoryRecord sample_record(const std::string& id) {
  TrajectoryRecord r;
  r.run_id = "r";
  r.phase = Phase::rtg_label(2, Rational(2, 3));
  r.sample_id = id;
  r.ftype = FType::Unverifiable;
  r.gold = Label::Unknown;
  r.template_id = TemplateId::RtgLabelGuide;
  r.prompt = "prompt with \"quotes\"\nand lines";
  r.request_digest = "abc";
  r.condition.assigned_label = Label::Proved;
  r.condition.misguided = true;
  r.turn.request_tag = "rtg-label-s2-m2:3/" + id;
  r.turn.raw_completion = "Conclusion: __PROVED__";
  r.parsed = parse_completion(r.turn.raw_completion, false);
  r.verdict = Verdict::FalseConverting;
  return r;
}

TEST(TrajectoryRecord, JsonRoundTrip) {
  TrajectoryRecord r = sample_record("a");
  r.judge = JudgeResult{true, RootCause::ReasoningGap, JudgeBackend::Model};
  const TrajectoryRecord back = TrajectoryRecord::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_EQ(back.phase, r.phase);
  EXPECT_EQ(back.condition, r.condition);
}

TEST(TrajectoryRecord, NonPrimaryRecordsHaveNoVerdict) {
  TrajectoryRecord r = sample_record("a");
  r.role = RequestRole::Justify;
  r.verdict.reset();
  EXPECT_EQ(r.to_json().at("verdict"), "NA");
  EXPECT_FALSE(TrajectoryRecord::from_json(r.to_json()).verdict);
}

TEST(TrajectoryWriter, NumbersRecordsAcrossBatchesAndReopens) {
  TempDir dir;
  const auto path = dir / "t.jsonl";
  {
    TrajectoryWriter w(path, 0);
    std::vector<TrajectoryRecord> batch = {sample_record("a"), sample_record("b")};
    w.append(batch);
    EXPECT_EQ(w.next_seq(), 2u);
  }
  {
    TrajectoryWriter w(path, 2);
    std::vector<TrajectoryRecord> batch = {sample_record("c")};
    w.append(batch);
  }
  const auto records = read_trajectory(path);
  ASSERT_EQ(records.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(records[i].seq, i);
  EXPECT_FALSE(records[0].ts.empty());
}

TEST(TrajectoryFile, TornTailIsRepairedAndCorruptionIsNamed) {
  TempDir dir;
  const auto path = dir / "t.jsonl";
  {
    TrajectoryWriter w(path, 0);
    std::vector<TrajectoryRecord> batch = {sample_record("a")};
    w.append(batch);
  }
  std::ofstream(path, std::ios::app) << "{\"seq\":1,\"run_";
  EXPECT_THROW(read_trajectory(path), TranscriptError);
  EXPECT_GT(repair_tail(path), 0u);
  EXPECT_EQ(read_trajectory(path).size(), 1u);
  EXPECT_EQ(repair_tail(path), 0u);

  std::ofstream(path, std::ios::app) << "garbage\n";
  try {
    read_trajectory(path);
    FAIL();
  } catch (const TranscriptError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(TrajectoryFile, NormalizationDropsOnlyTimestamps) {
  TempDir dir;
  for (const char* name : {"a.jsonl", "b.jsonl"}) {
    TrajectoryWriter w(dir / name, 0);
    std::vector<TrajectoryRecord> batch = {sample_record("a")};
    w.append(batch);
  }
  EXPECT_EQ(normalized_trajectory(dir / "a.jsonl"), normalized_trajectory(dir / "b.jsonl"));
  EXPECT_EQ(normalized_trajectory(dir / "a.jsonl").find("\"ts\""), std::string::npos);
}

TEST(AtomicWrite, ReplacesContent) {
  TempDir dir;
  write_text_atomic(dir / "f.txt", "one");
  write_text_atomic(dir / "f.txt", "two");
  EXPECT_EQ(read_text(dir / "f.txt"), "two");
  EXPECT_THROW(read_text(dir / "none.txt"), Error);
}

}  // namespace
}  // namespace wakenllm

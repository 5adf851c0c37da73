#include <gtest/gtest.h>

#include "support.hpp"
#include "wakenllm/errors.hpp"
#include "wakenllm/pipeline.hpp"
#include "wakenllm/report.hpp"
#include "wakenllm/trajectory.hpp"

namespace wakenllm {
namespace {

namespace fs = std::filesystem;

MetricsReport main_report() {
  MetricsReport r;
  r.set("s1_tcr_all", Rational(1, 3));
  r.set("s1_empty", false);
  r.set("s2_tcr_all", Rational(0));
  r.set("s2_empty", true);
  r.set("ocr", Rational(2522, 10000));
  r.set("ocr_empty", false);
  r.set("conf_v", Rational(12850, 20000));
  r.set("conf_v_empty", false);
  r.set("conf_u", Rational(0));
  r.set("conf_u_empty", true);
  r.set("rpc", Rational(-1, 8));
  r.set("rp_s1_empty", false);
  return r;
}

TEST(TableCell, FormatsRatesAndMarksEmptyOrMissingValues) {
  const MetricsReport r = main_report();
  EXPECT_EQ(table_cell(TableKind::Main, "TCR1", r), "33.33");
  EXPECT_EQ(table_cell(TableKind::Main, "TCR2", r), "/");
  EXPECT_EQ(table_cell(TableKind::Main, "OCR", r), "25.22");
  EXPECT_EQ(table_cell(TableKind::Main, "Conf_v", r), "64.25");
  EXPECT_EQ(table_cell(TableKind::Main, "Conf_u", r), "/");
  EXPECT_EQ(table_cell(TableKind::Main, "RPC", r), "-12.50");
  EXPECT_EQ(table_cell(TableKind::Main, "CGR", r), "-");
  EXPECT_THROW(table_cell(TableKind::Main, "nope", r), Error);
}

TEST(TableCell, RootCauseSharesAreOfAnnotatedSamples) {
  MetricsReport r;
  r.set("root_cause_input", std::int64_t{10});
  r.set("root_cause_unannotated", std::int64_t{2});
  r.set("root_cause_fu", std::int64_t{4});
  r.set("root_cause_rg", std::int64_t{2});
  r.set("root_cause_ec", std::int64_t{1});
  r.set("root_cause_else", std::int64_t{1});
  EXPECT_EQ(table_cell(TableKind::RootCause, "annotated", r), "8");
  EXPECT_EQ(table_cell(TableKind::RootCause, "FU", r), "50.00");
  EXPECT_EQ(table_cell(TableKind::RootCause, "EC", r), "12.50");
  EXPECT_EQ(table_cell(TableKind::RootCause, "unannotated", r), "2");
  EXPECT_EQ(table_cell(TableKind::RootCause, "FU", MetricsReport{}), "-");
}

TEST(BuildTable, SortsByModelThenDataset) {
  std::vector<ReportRow> rows = {{"m2", "FLD", main_report()},
                                 {"m1", "FOLIO", main_report()},
                                 {"m1", "FLD", main_report()}};
  const TextTable t = build_table(TableKind::Main, rows);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.header.front(), "model");
  EXPECT_EQ(t.header.size(), 2 + table_columns(TableKind::Main).size());
  EXPECT_EQ(t.rows[0][0] + "/" + t.rows[0][1], "m1/FLD");
  EXPECT_EQ(t.rows[1][0] + "/" + t.rows[1][1], "m1/FOLIO");
  EXPECT_EQ(t.rows[2][0], "m2");
}

TEST(RenderCsv, RoundTripsAwkwardFields) {
  TextTable t;
  t.header = {"model", "dataset", "x"};
  t.rows = {{"a,b", "say \"hi\"", "1.00"}, {"line\nbreak", "plain", "/"}};
  const std::string csv = render_csv(t);
  const TextTable back = parse_csv(csv);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_THROW(parse_csv("a,\"open\n"), Error);
}

TEST(RenderMarkdown, EscapesPipesAndRightAlignsNumbers) {
  TextTable t;
  t.header = {"model", "dataset", "TCR1"};
  t.rows = {{"a|b", "FLD", "12.00"}};
  const std::string md = render_markdown(t);
  EXPECT_NE(md.find("a\\|b"), std::string::npos);
  EXPECT_NE(md.find("| --- | --- | ---: |"), std::string::npos);
}

TEST(EmitTables, WritesEveryKindAndRejectsNoRows) {
  testing::TempDir dir;
  const auto files = emit_tables({{"m", "FLD", main_report()}}, dir / "tables", TableFormat::Csv);
  EXPECT_EQ(files.size(), std::size(kAllTables));
  for (const auto& f : files) EXPECT_TRUE(fs::exists(f)) << f;
  EXPECT_EQ(parse_csv(read_text(dir / "tables" / "main.csv")).rows[0][2], "33.33");
  EXPECT_THROW(emit_tables({}, dir / "none"), Error);
}

TEST(EmitTables, RunOutputIsByteStable) {
  testing::TempDir dir;
  const RunConfig c = testing::scripted_config(4, testing::random_policy(4));
  const SampleSet samples = testing::synthetic_samples(50);
  std::string first;
  for (const char* name : {"a", "b"}) {
    {
      Pipeline p(c, samples, dir / name);
      p.run_all();
    }
    const ReportRow row = report_row(dir / name, compute_run_metrics(dir / name));
    EXPECT_EQ(row.model, "scripted-test");
    emit_tables({row}, dir / name / "tables");
    const std::string text = read_text(dir / name / "tables" / "main.md") + read_text(dir / name / "tables" / "root_cause.csv");
    if (first.empty()) first = text;
    else EXPECT_EQ(text, first);
  }
}

TEST(Manifest, TracksPhaseStatusAndConservation) {
  testing::TempDir dir;
  const RunConfig c = testing::scripted_config(6, testing::random_policy(6));
  {
    Pipeline p(c, testing::synthetic_samples(30), dir / "run");
    p.run_stage1();
  }
  // A record for a phase with no committed partition reads as incomplete.
  auto recs = read_trajectory(RunPaths(dir / "run").trajectory);
  TrajectoryRecord extra = recs.back();
  extra.phase = Phase::stage2();
  extra.seq = recs.size();
  {
    TrajectoryWriter w(RunPaths(dir / "run").trajectory, recs.size());
    std::vector<TrajectoryRecord> batch = {extra};
    w.append(batch);
  }
  const auto m = build_manifest(dir / "run");
  std::map<std::string, std::string> status;
  for (const auto& phase : m.at("phases")) status[phase.at("phase")] = phase.at("status");
  EXPECT_EQ(status.at("detect"), "complete");
  EXPECT_EQ(status.at("stage1"), "complete");
  EXPECT_EQ(status.at("stage2"), "incomplete");
  EXPECT_EQ(status.at("ablation"), "pending");
  EXPECT_EQ(m.at("conservation").at("vp"), m.at("conservation").at("stage1_tc_fc_uc"));
  EXPECT_TRUE(m.at("timestamps").contains("created_at"));
  EXPECT_EQ(m.at("config_digest"), c.digest());
}

}  // namespace
}  // namespace wakenllm

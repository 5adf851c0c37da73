#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "support.hpp"
#include "wakenllm/errors.hpp"
#include "wakenllm/metrics.hpp"
#include "wakenllm/pipeline.hpp"
#include "wakenllm/trajectory.hpp"

namespace wakenllm {
namespace {

namespace fs = std::filesystem;

IdSet ids(std::initializer_list<const char*> list) { return IdSet(list.begin(), list.end()); }

IdSet range_ids(const std::string& prefix, int from, int to) {
  IdSet out;
  for (int i = from; i < to; ++i) out.insert(prefix + std::to_string(i));
  return out;
}

TEST(ComputeOcr, CountsBothStagesOverVp) {
  const auto r = compute_ocr(ids({"a"}), ids({"b", "c"}), ids({"a", "b", "c", "d"}));
  EXPECT_EQ(r.value, Rational(3, 4));
  EXPECT_FALSE(r.empty);
  EXPECT_EQ(compute_ocr({}, {}, {}), (RateResult{Rational(0), true}));
}

TEST(ComputeOcr, RejectsOverlapAndStrayIds) {
  EXPECT_THROW(compute_ocr(ids({"a"}), ids({"a"}), ids({"a"})), DisjointnessViolation);
  EXPECT_THROW(compute_ocr(ids({"z"}), {}, ids({"a"})), SubsetViolation);
  EXPECT_THROW(compute_ocr({}, ids({"z"}), ids({"a"})), SubsetViolation);
}

TEST(ComputeConf, AveragesTheStageGaps) {
  GridRates g;
  g[{1, Rational(0)}] = {Rational(9, 10), false};
  g[{1, Rational(1)}] = {Rational(1, 10), false};
  g[{2, Rational(0)}] = {Rational(1, 2), false};
  g[{2, Rational(1)}] = {Rational(1, 2), false};
  g[{1, Rational(1, 2)}] = {Rational(0), false};  // ignored
  EXPECT_EQ(compute_conf(g), (RateResult{Rational(2, 5), false}));
}

TEST(ComputeConf, SkipsEmptyStagesAndNeedsBothEndpoints) {
  GridRates g;
  g[{1, Rational(0)}] = {Rational(3, 4), false};
  g[{1, Rational(1)}] = {Rational(1, 4), false};
  g[{2, Rational(0)}] = {Rational(0), true};
  g[{2, Rational(1)}] = {Rational(0), true};
  EXPECT_EQ(compute_conf(g), (RateResult{Rational(1, 2), false}));
  g[{1, Rational(0)}].empty = g[{1, Rational(1)}].empty = true;
  EXPECT_TRUE(compute_conf(g).empty);
  g.erase({2, Rational(1)});
  EXPECT_THROW(compute_conf(g), MissingGridPoint);
}

TEST(ComputeConf, IsExactOnPublishedGridRates) {
  GridRates v;
  v[{1, Rational(0)}] = {Rational(5417, 10000), false};
  v[{1, Rational(1)}] = {Rational(583, 10000), false};
  v[{2, Rational(0)}] = {Rational(8182, 10000), false};
  v[{2, Rational(1)}] = {Rational(167, 10000), false};
  EXPECT_EQ(compute_conf(v).value, Rational(12849, 20000));
  EXPECT_EQ(format_percent(compute_conf(v).value), "64.24");  // half-even on 64.245
}

TEST(ComputeDeg, CountsFcOneSamplesLeftUnknown) {
  const IdSet fc1 = range_ids("f", 0, 10);
  const auto r = compute_deg(fc1, range_ids("f", 0, 3), range_ids("f", 3, 5));
  EXPECT_EQ(r.value, Rational(1, 2));
  EXPECT_TRUE(compute_deg({}, {}, {}).empty);
  EXPECT_THROW(compute_deg(fc1, ids({"x"}), {}), SubsetViolation);
  EXPECT_THROW(compute_deg(fc1, ids({"f1"}), ids({"f1"})), DisjointnessViolation);
}

TEST(ComputeLatentAccuracy, AddsConvertedSamplesOverTheWholeSet) {
  EXPECT_EQ(compute_latent_accuracy(Rational(1, 2), ids({"a"}), ids({"b"}), 10), Rational(7, 10));
  EXPECT_THROW(compute_latent_accuracy(Rational(1, 2), ids({"a"}), ids({"a"}), 10), DisjointnessViolation);
  EXPECT_THROW(compute_latent_accuracy(Rational(0), {}, {}, 0), RangeViolation);
  EXPECT_THROW(compute_latent_accuracy(Rational(9, 10), range_ids("x", 0, 2), {}, 10), RangeViolation);
}

TEST(ComputeGains, AreSignedDifferences) {
  EXPECT_EQ(compute_cgr(Rational(3, 10), Rational(1, 10)), Rational(1, 5));
  EXPECT_EQ(compute_rpc(Rational(1, 10), Rational(3, 10)), Rational(-1, 5));
}

TEST(ComputeRate, PerTypeRatesShareTheInputDenominator) {
  const SampleSet samples({testing::make_sample("v1", Label::Proved), testing::make_sample("v2", Label::Disproved),
                           testing::make_sample("u1", Label::Unknown), testing::make_sample("u2", Label::Unknown)});
  const FTypeIndex f = ftype_index(samples);
  StagePartition p;
  p.input = ids({"v1", "v2", "u1", "u2"});
  p.tc = ids({"v1", "u1"});
  p.fc = ids({"v2"});
  p.uc = ids({"u2"});
  EXPECT_EQ(compute_tcr(p, FType::Verifiable, f).value, Rational(1, 4));
  EXPECT_EQ(compute_tcr(p, FType::Unverifiable, f).value, Rational(1, 4));
  EXPECT_EQ(compute_tcr(p, std::nullopt, f).value, Rational(1, 2));
  p.tc.insert("ghost");
  EXPECT_THROW(compute_tcr(p, FType::Verifiable, f), PartitionViolation);
}

// Random partitions: per-type rates add up, and the three verdict rates sum to one.
TEST(ComputeRate, PartitionPropertiesHold) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    const SampleSet samples = testing::synthetic_samples(n, trial, 0.4);
    const FTypeIndex f = ftype_index(samples);
    StagePartition p;
    for (const auto& s : samples.samples()) {
      if (rng() % 5 == 0) continue;
      p.input.insert(s.id);
      IdSet* bins[] = {&p.tc, &p.fc, &p.uc};
      bins[rng() % 3]->insert(s.id);
    }
    ASSERT_NO_THROW(p.check());
    Rational sum{0};
    for (Verdict v : {Verdict::TrueConverting, Verdict::FalseConverting, Verdict::UnexcitedConverting}) {
      const auto all = compute_rate(p, v, std::nullopt, f);
      EXPECT_EQ(all.value, compute_rate(p, v, FType::Verifiable, f).value +
                               compute_rate(p, v, FType::Unverifiable, f).value);
      EXPECT_GE(all.value, Rational(0));
      EXPECT_LE(all.value, Rational(1));
      EXPECT_EQ(all.empty, p.input.empty());
      sum += all.value;
    }
    EXPECT_EQ(sum, p.input.empty() ? Rational(0) : Rational(1));
  }
}

TEST(MetricsReport, JsonRoundTripAndDiff) {
  MetricsReport r;
  r.set("count", std::int64_t{7});
  r.set("rate", Rational(1, 3));
  r.set("flag", true);
  const auto j = r.to_json();
  EXPECT_EQ(j.at("rate").at("exact"), "1/3");
  EXPECT_EQ(j.at("rate").at("percent"), "33.33");
  EXPECT_EQ(MetricsReport::from_json(j), r);
  EXPECT_TRUE(diff_reports(r, r).empty());
  MetricsReport other = r;
  other.set("rate", Rational(1, 2));
  other.set("extra", false);
  const auto diffs = diff_reports(r, other);
  ASSERT_EQ(diffs.size(), 2u);
  EXPECT_EQ(diffs[0].key, "extra");
  EXPECT_EQ(diffs[0].engine, "<absent>");
  EXPECT_EQ(diffs[1].key, "rate");
}

TEST(RunMetrics, EngineAndOracleAgreeOnRandomRuns) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    testing::TempDir dir;
    RunConfig c = testing::scripted_config(seed, testing::random_policy(seed * 13));
    c.concurrency_limit = 4;
    const SampleSet samples = testing::synthetic_samples(60 + seed * 10, seed, 0.35);
    {
      Pipeline p(c, samples, dir / "run");
      p.run_all();
    }
    const MetricsReport engine = compute_run_metrics(dir / "run");
    const MetricsReport oracle = oracle_recompute(RunPaths(dir / "run").trajectory, c);
    for (const auto& d : diff_reports(engine, oracle))
      ADD_FAILURE() << "seed " << seed << " " << d.key << ": " << d.engine << " vs " << d.oracle;
    // Conservation through the phases.
    EXPECT_EQ(engine.count("s1_input"), engine.count("vp_total"));
    EXPECT_EQ(engine.count("s2_input"), engine.count("s1_fc_v") + engine.count("s1_fc_u"));
    EXPECT_EQ(engine.count("detect_tc") + engine.count("detect_fc") + engine.count("detect_uc"),
              engine.count("samples_total"));
    EXPECT_LE(engine.rate("latent_accuracy"), Rational(1));
  }
}

TEST(RunMetrics, PartitionWithoutMatchingRecordsIsRejected) {
  testing::TempDir dir;
  const RunConfig c = testing::scripted_config(9, testing::random_policy(9));
  {
    Pipeline p(c, testing::synthetic_samples(40), dir / "run");
    p.run_stage2();
  }
  const fs::path file = RunPaths(dir / "run").partition(Phase::stage1());
  StagePartition part = StagePartition::from_json(nlohmann::json::parse(read_text(file)));
  ASSERT_FALSE(part.input.empty());
  const std::string id = *part.input.begin();
  part.input.erase(id);
  part.tc.erase(id);
  part.fc.erase(id);
  part.uc.erase(id);
  write_text_atomic(file, part.to_json().dump(2));
  EXPECT_THROW(compute_run_metrics(dir / "run"), PartitionViolation);
}

TEST(RunMetrics, OracleDisagreesWithARelabelledPartition) {
  testing::TempDir dir;
  const RunConfig c = testing::scripted_config(9, testing::random_policy(9));
  {
    Pipeline p(c, testing::synthetic_samples(40), dir / "run");
    p.run_stage2();
  }
  const fs::path file = RunPaths(dir / "run").partition(Phase::stage1());
  StagePartition part = StagePartition::from_json(nlohmann::json::parse(read_text(file)));
  IdSet& from = part.uc.empty() ? part.fc : part.uc;
  ASSERT_FALSE(from.empty());
  const std::string id = *from.begin();
  from.erase(id);
  part.tc.insert(id);
  write_text_atomic(file, part.to_json().dump(2));
  const auto diffs = diff_reports(compute_run_metrics(dir / "run"), oracle_recompute(RunPaths(dir / "run").trajectory, c));
  EXPECT_FALSE(diffs.empty());
}

}  // namespace
}  // namespace wakenllm

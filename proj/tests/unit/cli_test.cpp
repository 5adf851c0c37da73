#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"
#include "wakenllm/errors.hpp"
#include "wakenllm/dataset.hpp"
#include "wakenllm/pipeline.hpp"
#include "wakenllm/trajectory.hpp"

namespace wakenllm {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    RunConfig c = testing::scripted_config(12, testing::random_policy(12));
    c.dataset = "samples.jsonl";
    c.concurrency_limit = 4;
    std::ofstream(dir_ / "config.json") << c.to_json().dump(2);
    save_samples(dir_ / "samples.jsonl", testing::synthetic_samples(36, 3, 0.3));
  }

  std::string config() const { return (dir_ / "config.json").string(); }
  std::string run() const { return (dir_ / "run").string(); }

  testing::TempDir dir_;
};

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  EXPECT_EQ(cli({}).code, cli::kExitUsage);
  EXPECT_EQ(cli({"bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(cli({"detect", "--concurrency", "0", "--config", config()}).code, cli::kExitUsage);
  EXPECT_EQ(cli({"detect"}).code, cli::kExitUsage);
  EXPECT_EQ(cli({"report"}).code, cli::kExitUsage);
}

TEST_F(CliTest, DomainErrorsExitWithOne) {
  EXPECT_EQ(cli({"validate", "--input", (dir_ / "missing.jsonl").string()}).code, cli::kExitDomainError);
  std::ofstream(dir_ / "bad.json") << "{ not json";
  const Result r = cli({"detect", "--config", (dir_ / "bad.json").string()});
  EXPECT_EQ(r.code, cli::kExitDomainError);
  EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST_F(CliTest, DryRunIssuesNoCalls) {
  const Result r = cli({"run", "--all", "--dry-run", "--config", config(), "--run-dir", run()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("planned provider calls: "), std::string::npos);
  EXPECT_NE(r.out.find("detect "), std::string::npos);
  EXPECT_FALSE(fs::exists(RunPaths(run()).trajectory));
}

TEST_F(CliTest, FullRunThenResumeIsANoOp) {
  Result r = cli({"run", "--all", "--config", config(), "--run-dir", run()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(nlohmann::json::parse(r.out).at("calls").get<std::size_t>(), 0u);
  r = cli({"run", "--all", "--resume", "--run-dir", run()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("calls"), 0);
  r = cli({"run", "--all", "--dry-run", "--run-dir", run()});
  EXPECT_NE(r.out.find("planned provider calls: 0"), std::string::npos);
}

TEST_F(CliTest, PhaseCommandsRunTheirPrerequisites) {
  Result r = cli({"rtg", "--rp", "--config", config(), "--run-dir", run()});
  ASSERT_EQ(r.code, 0) << r.err;
  const RunState state = load_run_state(run());
  EXPECT_TRUE(state.complete(Phase::stage1()));
  EXPECT_TRUE(state.complete(Phase::rtg_rp(2)));
  EXPECT_FALSE(state.complete(Phase::ablation()));
  EXPECT_EQ(cli({"ablate", "--run-dir", run()}).code, 0);
  EXPECT_EQ(cli({"annotate", "--run-dir", run()}).code, 0);
  EXPECT_TRUE(load_run_state(run()).root_cause.has_value());
}

TEST_F(CliTest, ChangedSeedOnAnExistingRunIsRejected) {
  ASSERT_EQ(cli({"detect", "--config", config(), "--run-dir", run()}).code, 0);
  const Result r = cli({"detect", "--config", config(), "--run-dir", run(), "--seed", "999"});
  EXPECT_EQ(r.code, cli::kExitDomainError);
}

TEST_F(CliTest, MetricsOracleCheckFlagsTampering) {
  ASSERT_EQ(cli({"run", "--all", "--config", config(), "--run-dir", run()}).code, 0);
  Result r = cli({"metrics", "--check-oracle", "--run-dir", run()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(RunPaths(run()).metrics));
  EXPECT_TRUE(nlohmann::json::parse(r.out).contains("ocr"));

  // Move one stage-1 sample to another verdict in the committed partition;
  // the oracle still reads the original records.
  const fs::path file = RunPaths(run()).partition(Phase::stage1());
  StagePartition part = StagePartition::from_json(nlohmann::json::parse(read_text(file)));
  IdSet& from = part.uc.empty() ? part.fc : part.uc;
  ASSERT_FALSE(from.empty());
  const std::string id = *from.begin();
  from.erase(id);
  part.tc.insert(id);
  write_text_atomic(file, part.to_json().dump(2));
  r = cli({"metrics", "--check-oracle", "--run-dir", run()});
  EXPECT_EQ(r.code, cli::kExitDomainError);
  EXPECT_NE(r.err.find("disagree"), std::string::npos);
  EXPECT_NE(r.err.find("s1_tc"), std::string::npos);
}

TEST_F(CliTest, ReportWritesTablesForSeveralRuns) {
  ASSERT_EQ(cli({"run", "--all", "--config", config(), "--run-dir", run()}).code, 0);
  ASSERT_EQ(cli({"run", "--all", "--config", config(), "--run-dir", (dir_ / "run2").string(), "--model", "other"}).code, 0);
  const Result r = cli({"report", "--run-dir", run(), "--run-dir", (dir_ / "run2").string(), "--out",
                        (dir_ / "tables").string(), "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_text(dir_ / "tables" / "main.csv");
  EXPECT_NE(csv.find("other,"), std::string::npos);
  EXPECT_NE(csv.find("scripted-test,"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "tables" / "main.md"));
  EXPECT_EQ(cli({"report", "--run-dir", run(), "--format", "xml"}).code, cli::kExitUsage);
}

TEST_F(CliTest, ReplayReproducesARecordedRun) {
  ASSERT_EQ(cli({"run", "--all", "--config", config(), "--run-dir", run()}).code, 0);
  const Result r = cli({"replay", "--from", run(), "--run-dir", (dir_ / "again").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_run_state(dir_ / "again").partitions, load_run_state(run()).partitions);
}

TEST_F(CliTest, PrepareUnknownizesHalfTheVerifiableSamples) {
  const Result r = cli({"prepare", "--input", (dir_ / "samples.jsonl").string(), "--out", (dir_ / "prep").string(),
                        "--unknownize-half", "--delete-count", "1", "--seed", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const SampleSet before = load_samples(dir_ / "samples.jsonl");
  const SampleSet after = load_samples(dir_ / "prep" / "samples.jsonl");
  std::size_t verifiable = 0, unknownized = 0;
  for (const auto& s : before.samples()) verifiable += ftype_of(s) == FType::Verifiable;
  for (const auto& s : after.samples()) unknownized += s.origin == Origin::Unknownized;
  EXPECT_EQ(unknownized, verifiable / 2);
  EXPECT_TRUE(fs::exists(dir_ / "prep" / "manifest.json"));
  EXPECT_EQ(cli({"validate", "--input", (dir_ / "prep" / "samples.jsonl").string()}).code, 0);
}

TEST(CliBinary, ExitStatusReachesTheShell) {
  const std::string tool = WAKENLLM_TOOL_PATH;
  auto status = [&](const std::string& args) {
    const int raw = std::system((tool + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  EXPECT_EQ(status("--help"), 0);
  EXPECT_EQ(status("nonsense"), 2);
  EXPECT_EQ(status("validate --input /nonexistent/file.jsonl"), 1);
  const std::string example = std::string(WAKENLLM_SOURCE_DIR) + "/configs/example_scripted.json";
  EXPECT_EQ(status("validate --config " + example), 0);
}

}  // namespace
}  // namespace wakenllm

#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"
#include "wakenllm/config.hpp"
#include "wakenllm/errors.hpp"

namespace wakenllm {
namespace {

using nlohmann::json;

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c = testing::scripted_config(3, testing::random_policy(3));
  c.misguide_grid = {Rational(1), Rational(2, 3), Rational(0)};
  c.concurrency_limit = 5;
  c.call_budget = 99;
  const RunConfig back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.digest(), c.digest());
}

TEST(RunConfig, DigestIgnoresOperationalKeysOnly) {
  RunConfig a = testing::scripted_config(3, testing::random_policy(3));
  RunConfig b = a;
  b.concurrency_limit = 8;
  b.call_budget = 10;
  b.provider.max_requests_per_second = 3;
  EXPECT_EQ(a.digest(), b.digest());
  b.seed = 4;
  EXPECT_NE(a.digest(), b.digest());
  RunConfig c = a;
  c.style[SampleForm::FactBased] = TemplateId::ConciseStim;
  EXPECT_NE(a.digest(), c.digest());
}

TEST(RunConfig, RejectsUnknownKeys) {
  json j = RunConfig{}.to_json();
  j["misguide_rates"] = json::array();
  EXPECT_THROW(RunConfig::from_json(j), ConfigError);
}

TEST(RunConfig, ValidateCatchesBadValues) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  c.misguide_grid = {Rational(3, 2)};
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.rtg_stages = {3};
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.run_id = "";
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.concurrency_limit = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.rtg_rp = true;
  c.capture_reasoning = false;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.style.erase(SampleForm::StoryBased);
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, LoadsFromFile) {
  testing::TempDir dir;
  std::ofstream(dir / "c.json") << R"({
    "run_id": "x", "dataset": "d.jsonl",
    "provider": {"kind": "scripted", "policy": {"seed": 1, "rules": [{"phase": "*", "outcomes": {"gold": 1}}]}},
    "judge": {"root_causes": {"fact": [["FU", 1]]}},
    "style": {"fact": "concise", "story": "detailed"},
    "misguide_grid": ["1", "0.5", "0"],
    "phases": {"ablation": false}
  })";
  const RunConfig c = RunConfig::load(dir / "c.json");
  EXPECT_EQ(c.run_id, "x");
  EXPECT_EQ(c.style.at(SampleForm::FactBased), TemplateId::ConciseStim);
  EXPECT_EQ(c.misguide_grid, (std::vector<Rational>{Rational(1), Rational(1, 2), Rational(0)}));
  EXPECT_FALSE(c.ablation);
  EXPECT_TRUE(c.annotate);
  std::ofstream(dir / "bad.json") << "{";
  EXPECT_THROW(RunConfig::load(dir / "bad.json"), ConfigError);
  EXPECT_THROW(RunConfig::load(dir / "missing.json"), ConfigError);
}

TEST(FlagParsers, StyleMapping) {
  const auto m = parse_style_mapping("fact=detailed,story=concise");
  EXPECT_EQ(m.at(SampleForm::FactBased), TemplateId::DetailedStim);
  EXPECT_EQ(m.at(SampleForm::StoryBased), TemplateId::ConciseStim);
  EXPECT_THROW(parse_style_mapping("fact=loud"), ConfigError);
  EXPECT_THROW(parse_style_mapping("poem=concise"), ConfigError);
}

TEST(FlagParsers, MisguideGrid) {
  EXPECT_EQ(parse_misguide_grid("1,0.6667,0.5,0"),
            (std::vector<Rational>{Rational(1), Rational(6667, 10000), Rational(1, 2), Rational(0)}));
  EXPECT_EQ(parse_misguide_grid("2/3, 1"), (std::vector<Rational>{Rational(2, 3), Rational(1)}));
  EXPECT_THROW(parse_misguide_grid("1,x"), ConfigError);
  EXPECT_THROW(parse_misguide_grid("1.5"), ConfigError);
}

TEST(Factories, BuildTheConfiguredBackend) {
  ProviderSettings p;
  p.policy = ScriptedPolicy::always(Outcome::EmitGold);
  EXPECT_EQ(make_backend(p)->kind(), BackendKind::Scripted);
  p.kind = ProviderSettings::Kind::Replay;
  EXPECT_THROW(make_backend(p), ConfigError);
  p.kind = ProviderSettings::Kind::Live;
  p.live.url = "http://127.0.0.1:9/x";
  EXPECT_EQ(make_backend(p)->kind(), BackendKind::Live);
}

}  // namespace
}  // namespace wakenllm

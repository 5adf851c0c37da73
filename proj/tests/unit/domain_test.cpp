#include <gtest/gtest.h>

#include "support.hpp"
#include "wakenllm/domain.hpp"
#include "wakenllm/errors.hpp"

namespace wakenllm {
namespace {

using testing::make_sample;

TEST(Labels, ParseCanonicalNamesAndAliases) {
  EXPECT_EQ(parse_label_name("PROVED"), Label::Proved);
  EXPECT_EQ(parse_label_name("true"), Label::Proved);
  EXPECT_EQ(parse_label_name("False"), Label::Disproved);
  EXPECT_EQ(parse_label_name("unknown"), Label::Unknown);
  EXPECT_FALSE(parse_label_name("maybe"));
  for (auto l : {Label::Proved, Label::Disproved, Label::Unknown}) {
    EXPECT_EQ(parse_label_name(label_name(l)), l);
  }
  EXPECT_EQ(label_token(Label::Disproved), "__DISPROVED__");
}

TEST(ClassifyVerdict, VerifiableSamples) {
  const Sample s = make_sample("v", Label::Proved);
  EXPECT_EQ(classify_verdict(s, Label::Proved, std::nullopt), Verdict::TrueConverting);
  EXPECT_EQ(classify_verdict(s, Label::Disproved, std::nullopt), Verdict::FalseConverting);
  EXPECT_EQ(classify_verdict(s, Label::Unknown, std::nullopt), Verdict::UnexcitedConverting);
  // A judgement is irrelevant for verifiable samples.
  EXPECT_EQ(classify_verdict(s, Label::Unknown, true), Verdict::UnexcitedConverting);
}

TEST(ClassifyVerdict, UnverifiableSamples) {
  const Sample s = make_sample("u", Label::Unknown);
  EXPECT_EQ(classify_verdict(s, Label::Proved, std::nullopt), Verdict::FalseConverting);
  EXPECT_EQ(classify_verdict(s, Label::Disproved, false), Verdict::FalseConverting);
  EXPECT_EQ(classify_verdict(s, Label::Unknown, true), Verdict::TrueConverting);
  EXPECT_EQ(classify_verdict(s, Label::Unknown, false), Verdict::UnexcitedConverting);
  EXPECT_THROW(classify_verdict(s, Label::Unknown, std::nullopt), MissingJudgeResult);
}

TEST(ClassifyVerdict, EveryCombinationIsDefined) {
  for (auto gold : {Label::Proved, Label::Disproved, Label::Unknown})
    for (auto pred : {Label::Proved, Label::Disproved, Label::Unknown})
      for (std::optional<bool> j : {std::optional<bool>{}, std::optional<bool>{true}, std::optional<bool>{false}}) {
        const Sample s = make_sample("x", gold);
        if (gold == Label::Unknown && pred == Label::Unknown && !j) continue;
        const Verdict v = classify_verdict(s, pred, j);
        EXPECT_EQ(v == Verdict::TrueConverting,
                  gold == Label::Unknown ? pred == Label::Unknown && *j : pred == gold);
      }
}

TEST(FTypes, FollowTheGoldLabel) {
  EXPECT_EQ(ftype_of(Label::Proved), FType::Verifiable);
  EXPECT_EQ(ftype_of(Label::Disproved), FType::Verifiable);
  EXPECT_EQ(ftype_of(Label::Unknown), FType::Unverifiable);
  EXPECT_EQ(parse_ftype("v"), FType::Verifiable);
  EXPECT_EQ(ftype_name(FType::Unverifiable), "u");
}

TEST(Phases, NamesRoundTrip) {
  const std::vector<Phase> phases = {Phase::detect(),        Phase::stage1(),
                                     Phase::stage2(),        Phase::rtg_label(1, Rational(2, 3)),
                                     Phase::rtg_label(2, 0), Phase::rtg_rp(1),
                                     Phase::rtg_rp(2),       Phase::ablation(),
                                     Phase::root_cause()};
  for (const auto& p : phases) {
    const auto parsed = Phase::parse(p.to_string());
    ASSERT_TRUE(parsed) << p.to_string();
    EXPECT_EQ(*parsed, p);
  }
  EXPECT_EQ(Phase::rtg_label(1, Rational(2, 3)).to_string(), "rtg-label-s1-m2:3");
  EXPECT_EQ(Phase::rtg_rp(2).to_string(), "rtg-rp-s2");
  EXPECT_TRUE(Phase::rtg_rp(2).stage2_family());
  EXPECT_TRUE(Phase::stage2().stage2_family());
  EXPECT_FALSE(Phase::rtg_label(1, 1).stage2_family());
  EXPECT_FALSE(Phase::parse("stage3"));
}

}  // namespace
}  // namespace wakenllm

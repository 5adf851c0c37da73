#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "wakenllm/dataset.hpp"
#include "wakenllm/errors.hpp"
#include "wakenllm/trajectory.hpp"

namespace wakenllm {
namespace {

using testing::make_sample;
using testing::TempDir;

const char* kRecord =
    R"({"id":"a1","dataset":"FLD","subcategory":"d1","form":"fact","context":"fact1: x.","hypothesis":"h","gold":"PROVED","origin":"native"})";

TEST(SampleRecords, RoundTrip) {
  Sample s = make_sample("r1", Label::Disproved, SampleForm::StoryBased);
  s.choices = std::vector<std::string>{"A. syrup", "B. silk necktie"};
  EXPECT_EQ(parse_sample_record(sample_to_record(s), 1), s);
}

TEST(SampleRecords, ReportLineAndField) {
  const std::string good = kRecord;
  std::string content = good + "\n" + R"({"id":"a2","dataset":"FLD","subcategory":"d1","form":"poem","context":"c","hypothesis":"h","gold":"PROVED","origin":"native"})";
  try {
    parse_samples(content);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.field(), "form");
  }
}

TEST(SampleRecords, RejectUnknownFieldsAndBadValues) {
  EXPECT_THROW(parse_sample_record(R"({"id":"a","extra":1})", 1), SchemaError);
  EXPECT_THROW(parse_sample_record("not json", 1), SchemaError);
  EXPECT_THROW(parse_sample_record(R"({"id":"a","dataset":"FLD","subcategory":"d","form":"fact","context":"c","hypothesis":"h","gold":"MAYBE","origin":"native"})", 1),
               SchemaError);
  // Unknownized samples must carry their removed sentences.
  EXPECT_THROW(parse_sample_record(R"({"id":"a","dataset":"FLD","subcategory":"d","form":"fact","context":"c","hypothesis":"h","gold":"UNKNOWN","origin":"unknownized"})", 1),
               SchemaError);
}

TEST(SampleRecords, TrueFalseAliasesFoldIntoProvedDisproved) {
  const Sample s = parse_sample_record(R"({"id":"a","dataset":"FOLIO","subcategory":"d","form":"story","context":"c","hypothesis":"h","gold":"False","origin":"native"})", 1);
  EXPECT_EQ(s.gold, Label::Disproved);
}

TEST(SampleSets, DuplicateIdsAreRejected) {
  const std::string r = kRecord;
  EXPECT_THROW(parse_samples(r + "\n" + r + "\n"), DuplicateId);
}

TEST(SampleSets, BlankLinesAreSkippedAndManifestCounts) {
  const std::string r = kRecord;
  const SampleSet set = parse_samples("\n" + r + "\n\n");
  EXPECT_EQ(set.size(), 1u);
  EXPECT_EQ(set.manifest().verifiable, 1u);
  EXPECT_EQ(set.manifest().datasets, std::vector<std::string>{"FLD"});
  EXPECT_FALSE(set.manifest().source_digest.empty());
  EXPECT_NE(set.find("a1"), nullptr);
  EXPECT_EQ(set.find("zz"), nullptr);
}

TEST(SampleSets, SaveAndLoadRoundTrip) {
  TempDir dir;
  const SampleSet set = testing::synthetic_samples(25);
  save_samples(dir / "s.jsonl", set);
  const SampleSet loaded = load_samples(dir / "s.jsonl");
  EXPECT_EQ(loaded.samples(), set.samples());
}

TEST(SplitSentences, ConcatenationGivesBackTheContext) {
  std::mt19937_64 rng(3);
  const std::vector<std::string> pieces = {"Alpha is red.", " Beta runs!", "Gamma? ", "fact4: x is y.", "\n",
                                           "no stop", "  ", "e.g. odd", "Q?A.", "\n\n"};
  for (int i = 0; i < 500; ++i) {
    std::string text;
    const auto n = 1 + rng() % 8;
    for (std::uint64_t k = 0; k < n; ++k) text += pieces[rng() % pieces.size()];
    for (auto form : {SampleForm::FactBased, SampleForm::StoryBased}) {
      std::string joined;
      for (const auto& p : split_sentences(text, form)) joined += p;
      EXPECT_EQ(joined, text);
    }
  }
}

TEST(SplitSentences, FactLinesAreSentences) {
  const auto pieces = split_sentences("fact1: a\nfact2: b.\nfact3: c", SampleForm::FactBased);
  EXPECT_EQ(pieces.size(), 3u);
  const auto story = split_sentences("One. Two! Three?", SampleForm::StoryBased);
  ASSERT_EQ(story.size(), 3u);
  EXPECT_EQ(story[0], "One. ");
}

TEST(Unknownize, RemovesTwoSentencesAndRestores) {
  const Sample s = make_sample("k1", Label::Proved, SampleForm::StoryBased, 6);
  const Sample u = unknownize(s, DeletionStrategy::random_sentences(2, 9));
  EXPECT_EQ(u.gold, Label::Unknown);
  EXPECT_EQ(u.origin, Origin::Unknownized);
  ASSERT_TRUE(u.removed_sentences);
  EXPECT_EQ(u.removed_sentences->size(), 2u);
  EXPECT_TRUE(u.id.starts_with("k1~unk-"));
  EXPECT_EQ(removed_positions(u).size(), 2u);
  EXPECT_EQ(restore_context(u), s.context);
  // The relabeled sample survives serialization.
  EXPECT_EQ(parse_sample_record(sample_to_record(u), 1), u);
}

TEST(Unknownize, Errors) {
  EXPECT_THROW(unknownize(make_sample("k", Label::Proved, SampleForm::FactBased, 2),
                          DeletionStrategy::random_sentences(2, 1)),
               TooFewSentences);
  EXPECT_THROW(DeletionStrategy::random_sentences(0, 1), ConfigError);
  const Sample u = unknownize(make_sample("k", Label::Proved), DeletionStrategy::random_sentences(1, 1));
  EXPECT_THROW(unknownize(u, DeletionStrategy::random_sentences(1, 1)), Error);
}

TEST(Unknownize, ModelSelectedUsesTheCompletion) {
  ModelSelected selector;
  selector.count = 2;
  selector.complete = [](const std::string&) { return std::string("Sentences 1 and 3 matter most.\nDELETE: 1, 3"); };
  const Sample s = make_sample("m", Label::Proved, SampleForm::StoryBased, 5);
  const Sample u = unknownize(s, DeletionStrategy::model_selected(selector));
  EXPECT_EQ(restore_context(u), s.context);
  EXPECT_EQ(removed_positions(u), (std::vector<std::size_t>{0, 2}));
  selector.complete = [](const std::string&) { return std::string("no selection"); };
  EXPECT_THROW(unknownize(s, DeletionStrategy::model_selected(selector)), Error);
}

TEST(UnknownizeHalf, RelabelsHalfTheVerifiableSamples) {
  std::vector<Sample> list;
  for (int i = 0; i < 40; ++i) list.push_back(make_sample("n" + std::to_string(i), i % 2 ? Label::Proved : Label::Disproved));
  const SampleSet out = unknownize_half(SampleSet(list), DeletionStrategy::random_sentences(2, 7), 7);
  EXPECT_EQ(out.manifest().unknownized, 20u);
  EXPECT_EQ(out.manifest().unverifiable, 20u);
  EXPECT_TRUE(out.balanced());
  const SampleSet again = unknownize_half(SampleSet(list), DeletionStrategy::random_sentences(2, 7), 7);
  EXPECT_EQ(out.samples(), again.samples());
}

TEST(BalancedSplit, DrawsFloorAndCeilOfHalf) {
  const SampleSet pool = testing::synthetic_samples(90);  // 60 verifiable, 30 unverifiable
  const SampleSet split = build_balanced_split(pool, 41, 3);
  EXPECT_EQ(split.manifest().verifiable, 20u);
  EXPECT_EQ(split.manifest().unverifiable, 21u);
  EXPECT_TRUE(std::is_sorted(split.samples().begin(), split.samples().end(),
                             [](const Sample& a, const Sample& b) { return a.id < b.id; }));
  EXPECT_THROW(build_balanced_split(pool, 70, 3), InsufficientPool);
  try {
    build_balanced_split(pool, 70, 3);
  } catch (const InsufficientPool& e) {
    EXPECT_EQ(e.ftype(), "u");
    EXPECT_EQ(e.need(), 35u);
  }
}

TEST(DatasetStats, CountsPerFormAndType) {
  const SampleSet set = testing::synthetic_samples(30);
  const DatasetStats stats = dataset_stats(set);
  EXPECT_EQ(stats.total, 30u);
  EXPECT_EQ(stats.form_fraction(SampleForm::FactBased), Rational(1, 2));
  EXPECT_EQ(stats.by_ftype.at(FType::Unverifiable), 10u);
  EXPECT_EQ(stats.by_dataset.at("FLD"), 15u);
}

}  // namespace
}  // namespace wakenllm

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "wakenllm/config.hpp"
#include "wakenllm/dataset.hpp"
#include "wakenllm/digest.hpp"
#include "wakenllm/domain.hpp"
#include "wakenllm/provider.hpp"

namespace wakenllm::testing {

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "wk") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Sample make_sample(const std::string& id, Label gold, SampleForm form = SampleForm::FactBased,
                          std::size_t sentences = 4) {
  Sample s;
  s.id = id;
  s.dataset = form == SampleForm::FactBased ? "FLD" : "FOLIO";
  s.subcategory = form == SampleForm::FactBased ? "depth-2" : "narrative";
  s.form = form;
  for (std::size_t i = 0; i < sentences; ++i) {
    if (form == SampleForm::FactBased) {
      s.context += "fact" + std::to_string(i + 1) + ": entity " + id + " has property " + std::to_string(i) + ".";
      if (i + 1 < sentences) s.context += "\n";
    } else {
      s.context += "Sentence " + std::to_string(i) + " about " + id + " ends here.";
      if (i + 1 < sentences) s.context += " ";
    }
  }
  s.hypothesis = "Entity " + id + " has the target property.";
  s.gold = gold;
  return s;
}

/// n samples, alternating forms, golds cycling PROVED, DISPROVED, UNKNOWN
/// unless `unknown_share` is given (then roughly that share is UNKNOWN).
inline SampleSet synthetic_samples(std::size_t n, std::uint64_t seed = 1, double unknown_share = -1) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    Label gold;
    if (unknown_share < 0) {
      gold = static_cast<Label>(i % 3);
    } else if (unit_interval(rng()) < unknown_share) {
      gold = Label::Unknown;
    } else {
      gold = rng() % 2 ? Label::Proved : Label::Disproved;
    }
    const auto form = i % 2 ? SampleForm::StoryBased : SampleForm::FactBased;
    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", i);
    samples.push_back(make_sample(id, gold, form, 3 + i % 4));
  }
  return SampleSet(std::move(samples));
}

inline std::vector<std::pair<Outcome, double>> random_distribution(std::mt19937_64& rng,
                                                                   std::vector<Outcome> outcomes) {
  std::vector<double> w;
  double total = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    w.push_back(0.05 + unit_interval(rng()));
    total += w.back();
  }
  std::vector<std::pair<Outcome, double>> out;
  double acc = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    double p = i + 1 == outcomes.size() ? 1.0 - acc : w[i] / total;
    acc += p;
    out.emplace_back(outcomes[i], p);
  }
  return out;
}

/// Random scripted policy that exercises every verdict in every phase.
inline ScriptedPolicy random_policy(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  using O = Outcome;
  ScriptedPolicy policy;
  policy.seed = rng();
  policy.rules.push_back({"detect", FType::Verifiable, random_distribution(rng, {O::EmitGold, O::EmitWrongDefinite, O::EmitUnknown})});
  policy.rules.push_back({"detect", FType::Unverifiable,
                          random_distribution(rng, {O::EmitUnknownJustified, O::EmitUnknown, O::EmitWrongDefinite})});
  policy.rules.push_back({"stage*", std::nullopt,
                          random_distribution(rng, {O::EmitGold, O::EmitWrongDefinite, O::EmitUnknown, O::EmitUnknownJustified})});
  policy.rules.push_back({"rtg-label-*", std::nullopt,
                          random_distribution(rng, {O::EchoAssigned, O::EmitGold, O::EmitUnknown, O::EmitWrongDefinite})});
  policy.rules.push_back({"rtg-rp-*", std::nullopt,
                          random_distribution(rng, {O::EmitGold, O::EmitUnknown, O::EmitWrongDefinite})});
  policy.rules.push_back({"ablation", std::nullopt, random_distribution(rng, {O::EmitUnknown, O::EmitGold, O::EmitWrongDefinite})});
  return policy;
}

/// Scripted config with every phase enabled.
inline RunConfig scripted_config(std::uint64_t seed, ScriptedPolicy policy) {
  RunConfig c;
  c.run_id = "test-" + std::to_string(seed);
  c.provider.kind = ProviderSettings::Kind::Scripted;
  c.provider.model = "scripted-test";
  c.provider.policy = std::move(policy);
  c.judge.seed = seed + 1;
  c.judge.root_causes = {
      {SampleForm::FactBased, {{RootCause::FactUnderstanding, 0.3}, {RootCause::ReasoningGap, 0.3},
                               {RootCause::ExcessiveCaution, 0.3}, {RootCause::Else, 0.1}}},
      {SampleForm::StoryBased, {{RootCause::FactUnderstanding, 0.5}, {RootCause::ReasoningGap, 0.2},
                                {RootCause::ExcessiveCaution, 0.2}, {RootCause::Else, 0.1}}}};
  c.capture_reasoning = true;
  c.rtg_rp = true;
  c.seed = seed;
  return c;
}

}  // namespace wakenllm::testing

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wakenllm/domain.hpp"
#include "wakenllm/judge.hpp"
#include "wakenllm/prompt.hpp"
#include "wakenllm/provider.hpp"

namespace wakenllm {

struct ProviderSettings {
  enum class Kind { Scripted, Live, Replay };

  Kind kind = Kind::Scripted;
  std::string model = "scripted";
  double temperature = 0.0;
  int max_tokens = 1024;
  ScriptedPolicy policy;
  LiveConfig live;
  std::string replay_transcript;
  double max_requests_per_second = 0;

  RequestSettings request_settings() const { return {model, temperature, max_tokens}; }
};

struct JudgeSettings {
  enum class Kind { Scripted, Model };

  Kind kind = Kind::Scripted;
  std::uint64_t seed = 0;
  std::map<SampleForm, ScriptedJudge::Distribution> root_causes;
};

/// Full description of one experiment. Stored verbatim in the run directory;
/// its digest (operational keys excluded) guards resumption.
struct RunConfig {
  std::string run_id = "run";
  std::string dataset;  // sample file; relative paths resolve against the config file
  std::optional<std::string> templates_dir;
  ProviderSettings provider;
  JudgeSettings judge;
  std::map<SampleForm, TemplateId> style = {{SampleForm::FactBased, TemplateId::DetailedStim},
                                            {SampleForm::StoryBased, TemplateId::ConciseStim}};
  bool capture_reasoning = false;  // stage prompts use the reasoning-eliciting template
  std::vector<Rational> misguide_grid = {Rational{1}, Rational{2, 3}, Rational{1, 2}, Rational{0}};
  std::vector<int> rtg_stages = {1, 2};
  bool rtg_label = true;
  bool rtg_rp = false;
  bool ablation = true;
  bool annotate = true;
  bool allow_empty_prior_reasoning = false;
  std::uint64_t seed = 0;

  // Operational: excluded from the digest.
  std::size_t concurrency_limit = 1;
  std::size_t call_budget = 0;

  /// Throws ConfigError on any invariant violation.
  void validate() const;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);

  /// SHA-256 of the canonical JSON without the operational keys.
  std::string digest() const;
};

/// Parses "fact=detailed,story=concise".
std::map<SampleForm, TemplateId> parse_style_mapping(std::string_view text);
/// Parses "1,0.6667,0.5,0" (also accepts "2/3").
std::vector<Rational> parse_misguide_grid(std::string_view text);

std::shared_ptr<Backend> make_backend(const ProviderSettings& settings);
std::unique_ptr<Judge> make_judge(const JudgeSettings& settings, const ProviderSettings& provider,
                                  const TemplateSet& templates);

}  // namespace wakenllm

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wakenllm/domain.hpp"
#include "wakenllm/prompt.hpp"
#include "wakenllm/provider.hpp"

namespace wakenllm {

enum class RootCause { FactUnderstanding, ReasoningGap, ExcessiveCaution, Else };

std::string_view root_cause_name(RootCause cause);  // "FU", "RG", "EC", "ELSE"
std::optional<RootCause> parse_root_cause(std::string_view text);

enum class JudgeBackend { Scripted, Model };

struct JudgeResult {
  bool justification_valid = false;
  std::optional<RootCause> root_cause;  // root-cause records only
  JudgeBackend backend = JudgeBackend::Scripted;

  nlohmann::json to_json() const;
  static JudgeResult from_json(const nlohmann::json& j);
  bool operator==(const JudgeResult&) const = default;
};

struct JudgeOutcome {
  JudgeResult result;
  std::optional<std::string> prompt;
  std::optional<ModelTurn> turn;
  bool fresh = false;  // turn was produced now rather than reused
};

/// Supplies a turn for a request: either a persisted one or a new provider call.
/// The bool reports whether the turn is new.
using TurnSource =
    std::function<std::pair<ModelTurn, bool>(const CompletionRequest&, const RequestContext&)>;

struct RequestSettings {
  std::string model;
  double temperature = 0.0;
  int max_tokens = 1024;
};

class Judge {
 public:
  virtual ~Judge() = default;
  /// Decides whether an Unknown answer on an unverifiable sample came with a
  /// sound explanation.
  virtual JudgeOutcome judge_justification(const Sample& sample, const std::string& justification,
                                           const std::string& tag, const TurnSource& source) = 0;
  virtual JudgeOutcome judge_root_cause(const Sample& sample, Label predicted, const std::string& tag,
                                        const TurnSource& source) = 0;
};

/// Justifications are valid when they carry kJustificationMarker; root causes
/// are drawn from a seeded per-form distribution.
class ScriptedJudge final : public Judge {
 public:
  using Distribution = std::vector<std::pair<RootCause, double>>;

  ScriptedJudge(std::uint64_t seed, std::map<SampleForm, Distribution> root_causes,
                const TemplateSet& templates);

  JudgeOutcome judge_justification(const Sample& sample, const std::string& justification,
                                   const std::string& tag, const TurnSource& source) override;
  JudgeOutcome judge_root_cause(const Sample& sample, Label predicted, const std::string& tag,
                                const TurnSource& source) override;

 private:
  std::uint64_t seed_;
  std::map<SampleForm, Distribution> root_causes_;
  const TemplateSet& templates_;
};

/// Asks the configured model through the justification and root-cause judge templates.
class ModelJudge final : public Judge {
 public:
  ModelJudge(RequestSettings settings, const TemplateSet& templates);

  JudgeOutcome judge_justification(const Sample& sample, const std::string& justification,
                                   const std::string& tag, const TurnSource& source) override;
  JudgeOutcome judge_root_cause(const Sample& sample, Label predicted, const std::string& tag,
                                const TurnSource& source) override;

 private:
  RequestSettings settings_;
  const TemplateSet& templates_;
};

}  // namespace wakenllm

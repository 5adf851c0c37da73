#include "wakenllm/judge.hpp"

#include <array>
#include <cmath>

#include "wakenllm/digest.hpp"
#include "wakenllm/errors.hpp"

namespace wakenllm {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kCauseTokens = {
    "__FACT_UNDERSTANDING__", "__REASONING_GAP__", "__EXCESSIVE_CAUTION__", "__ELSE__"};
constexpr std::array<RootCause, 4> kCauses = {RootCause::FactUnderstanding, RootCause::ReasoningGap,
                                              RootCause::ExcessiveCaution, RootCause::Else};

RenderedPrompt root_cause_prompt(const TemplateSet& templates, const Sample& sample, Label predicted) {
  Condition condition;
  condition.slots["gold"] = std::string(label_token(sample.gold));
  condition.slots["answer"] = std::string(label_token(predicted));
  return render(templates, TemplateId::RootCauseJudge, sample, condition);
}

std::string_view cause_token(RootCause cause) {
  for (std::size_t i = 0; i < kCauses.size(); ++i)
    if (kCauses[i] == cause) return kCauseTokens[i];
  return "__ELSE__";
}

}  // namespace

std::string_view root_cause_name(RootCause cause) {
  switch (cause) {
    case RootCause::FactUnderstanding: return "FU";
    case RootCause::ReasoningGap: return "RG";
    case RootCause::ExcessiveCaution: return "EC";
    case RootCause::Else: return "ELSE";
  }
  return "ELSE";
}

std::optional<RootCause> parse_root_cause(std::string_view text) {
  for (auto c : kCauses)
    if (root_cause_name(c) == text) return c;
  return std::nullopt;
}

json JudgeResult::to_json() const {
  json j = {{"justification_valid", justification_valid},
            {"backend", backend == JudgeBackend::Scripted ? "scripted" : "model"}};
  if (root_cause) j["root_cause"] = root_cause_name(*root_cause);
  return j;
}

JudgeResult JudgeResult::from_json(const json& j) {
  JudgeResult r;
  r.justification_valid = j.at("justification_valid").get<bool>();
  const auto backend = j.at("backend").get<std::string>();
  if (backend != "scripted" && backend != "model") throw Error("unknown judge backend '" + backend + "'");
  r.backend = backend == "scripted" ? JudgeBackend::Scripted : JudgeBackend::Model;
  if (j.contains("root_cause")) {
    auto cause = parse_root_cause(j.at("root_cause").get<std::string>());
    if (!cause) throw Error("unknown root cause");
    r.root_cause = cause;
  }
  return r;
}

ScriptedJudge::ScriptedJudge(std::uint64_t seed, std::map<SampleForm, Distribution> root_causes,
                             const TemplateSet& templates)
    : seed_(seed), root_causes_(std::move(root_causes)), templates_(templates) {
  for (const auto& [form, dist] : root_causes_) {
    double sum = 0;
    for (const auto& [cause, p] : dist) {
      if (!(p >= 0)) throw ConfigError("root-cause probabilities must be non-negative");
      sum += p;
    }
    if (dist.empty() || std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("root-cause distribution for " + std::string(form_name(form)) +
                        " must sum to 1");
  }
}

JudgeOutcome ScriptedJudge::judge_justification(const Sample&, const std::string& justification,
                                                const std::string&, const TurnSource&) {
  JudgeOutcome out;
  out.result.justification_valid = justification.find(kJustificationMarker) != std::string::npos;
  out.result.backend = JudgeBackend::Scripted;
  return out;
}

JudgeOutcome ScriptedJudge::judge_root_cause(const Sample& sample, Label predicted,
                                             const std::string& tag, const TurnSource&) {
  RootCause cause = RootCause::FactUnderstanding;
  if (auto it = root_causes_.find(sample.form); it != root_causes_.end()) {
    const double u = unit_interval(digest_u64({std::to_string(seed_), sample.id, "root-cause"}));
    double cumulative = 0;
    cause = it->second.back().first;
    for (const auto& [c, p] : it->second) {
      cumulative += p;
      if (u < cumulative) {
        cause = c;
        break;
      }
    }
  }
  JudgeOutcome out;
  out.prompt = root_cause_prompt(templates_, sample, predicted).text;
  ModelTurn turn;
  turn.request_tag = tag;
  turn.raw_completion = std::string(cause_token(cause));
  turn.backend = BackendKind::Scripted;
  out.turn = turn;
  out.fresh = true;
  out.result.root_cause = cause;
  out.result.backend = JudgeBackend::Scripted;
  return out;
}

ModelJudge::ModelJudge(RequestSettings settings, const TemplateSet& templates)
    : settings_(std::move(settings)), templates_(templates) {}

JudgeOutcome ModelJudge::judge_justification(const Sample& sample, const std::string& justification,
                                             const std::string& tag, const TurnSource& source) {
  Condition condition;
  condition.slots["justification"] = justification;
  const auto prompt = render(templates_, TemplateId::JustificationJudge, sample, condition);
  CompletionRequest request{settings_.model, {{Role::User, prompt.text}}, settings_.temperature,
                            settings_.max_tokens, tag};
  RequestContext context;
  context.sample_id = sample.id;
  context.gold = sample.gold;
  context.template_id = TemplateId::JustificationJudge;
  context.role = RequestRole::Judge;
  auto [turn, fresh] = source(request, context);

  static constexpr std::array<std::string_view, 2> kVerdicts = {"__VALID__", "__INVALID__"};
  const auto hit = last_token(turn.raw_completion, kVerdicts);
  JudgeOutcome out;
  // "__INVALID__" contains "VALID__" but not "__VALID__", so the scan is unambiguous.
  out.result.justification_valid = hit && *hit == 0;
  out.result.backend = JudgeBackend::Model;
  out.prompt = prompt.text;
  out.turn = std::move(turn);
  out.fresh = fresh;
  return out;
}

JudgeOutcome ModelJudge::judge_root_cause(const Sample& sample, Label predicted, const std::string& tag,
                                          const TurnSource& source) {
  const auto prompt = root_cause_prompt(templates_, sample, predicted);
  CompletionRequest request{settings_.model, {{Role::User, prompt.text}}, settings_.temperature,
                            settings_.max_tokens, tag};
  RequestContext context;
  context.phase = "root-cause";
  context.sample_id = sample.id;
  context.gold = sample.gold;
  context.template_id = TemplateId::RootCauseJudge;
  context.role = RequestRole::Judge;
  auto [turn, fresh] = source(request, context);

  const auto hit = last_token(turn.raw_completion, kCauseTokens);
  if (!hit) throw Error("root-cause reply for '" + sample.id + "' names no cause");
  JudgeOutcome out;
  out.result.root_cause = kCauses[*hit];
  out.result.backend = JudgeBackend::Model;
  out.prompt = prompt.text;
  out.turn = std::move(turn);
  out.fresh = fresh;
  return out;
}

}  // namespace wakenllm

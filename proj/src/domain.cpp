#include "wakenllm/domain.hpp"

#include <algorithm>
#include <cctype>

#include "wakenllm/errors.hpp"

namespace wakenllm {

namespace {

std::string upper(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ", ";
    out += id;
  }
  return out;
}

}  // namespace

DisjointnessViolation::DisjointnessViolation(std::vector<std::string> ids)
    : Error("sets are not disjoint; shared ids: " + join_ids(ids)), ids_(std::move(ids)) {}

SubsetViolation::SubsetViolation(std::vector<std::string> ids)
    : Error("ids outside the containing set: " + join_ids(ids)), ids_(std::move(ids)) {}

std::string_view label_token(Label label) {
  switch (label) {
    case Label::Proved: return "__PROVED__";
    case Label::Disproved: return "__DISPROVED__";
    case Label::Unknown: return "__UNKNOWN__";
  }
  return "__UNKNOWN__";
}

std::string_view label_name(Label label) {
  switch (label) {
    case Label::Proved: return "PROVED";
    case Label::Disproved: return "DISPROVED";
    case Label::Unknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

std::optional<Label> parse_label_name(std::string_view text) {
  const std::string u = upper(text);
  if (u == "PROVED" || u == "TRUE") return Label::Proved;
  if (u == "DISPROVED" || u == "FALSE") return Label::Disproved;
  if (u == "UNKNOWN") return Label::Unknown;
  return std::nullopt;
}

std::string_view form_name(SampleForm form) {
  return form == SampleForm::FactBased ? "fact" : "story";
}

std::optional<SampleForm> parse_form(std::string_view text) {
  if (text == "fact") return SampleForm::FactBased;
  if (text == "story") return SampleForm::StoryBased;
  return std::nullopt;
}

std::string_view origin_name(Origin origin) {
  return origin == Origin::Native ? "native" : "unknownized";
}

std::optional<Origin> parse_origin(std::string_view text) {
  if (text == "native") return Origin::Native;
  if (text == "unknownized") return Origin::Unknownized;
  return std::nullopt;
}

FType ftype_of(Label gold) {
  return is_definite(gold) ? FType::Verifiable : FType::Unverifiable;
}

FType ftype_of(const Sample& sample) { return ftype_of(sample.gold); }

std::string_view ftype_name(FType ftype) { return ftype == FType::Verifiable ? "v" : "u"; }

std::optional<FType> parse_ftype(std::string_view text) {
  if (text == "v") return FType::Verifiable;
  if (text == "u") return FType::Unverifiable;
  return std::nullopt;
}

std::string_view verdict_name(Verdict verdict) {
  switch (verdict) {
    case Verdict::TrueConverting: return "TC";
    case Verdict::FalseConverting: return "FC";
    case Verdict::UnexcitedConverting: return "UC";
  }
  return "UC";
}

std::optional<Verdict> parse_verdict(std::string_view text) {
  if (text == "TC") return Verdict::TrueConverting;
  if (text == "FC") return Verdict::FalseConverting;
  if (text == "UC") return Verdict::UnexcitedConverting;
  return std::nullopt;
}

Verdict classify_verdict(const Sample& sample, Label predicted,
                         std::optional<bool> justification_valid) {
  if (ftype_of(sample) == FType::Verifiable) {
    if (predicted == sample.gold) return Verdict::TrueConverting;
    if (predicted == Label::Unknown) return Verdict::UnexcitedConverting;
    return Verdict::FalseConverting;
  }
  if (is_definite(predicted)) return Verdict::FalseConverting;
  if (!justification_valid) throw MissingJudgeResult(sample.id);
  return *justification_valid ? Verdict::TrueConverting : Verdict::UnexcitedConverting;
}

Phase Phase::rtg_label(int stage, Rational rate) { return {Kind::RtgLabel, stage, rate}; }

Phase Phase::rtg_rp(int stage) { return {Kind::RtgRp, stage, Rational{0}}; }

bool Phase::stage2_family() const {
  return kind == Kind::Stage2 || ((kind == Kind::RtgLabel || kind == Kind::RtgRp) && stage == 2);
}

std::string Phase::to_string() const {
  switch (kind) {
    case Kind::Detect: return "detect";
    case Kind::Stage1: return "stage1";
    case Kind::Stage2: return "stage2";
    case Kind::RtgLabel:
      return "rtg-label-s" + std::to_string(stage) + "-m" + to_key(misguide_rate);
    case Kind::RtgRp: return "rtg-rp-s" + std::to_string(stage);
    case Kind::AblationRepeat: return "ablation";
    case Kind::RootCause: return "root-cause";
  }
  return "detect";
}

std::optional<Phase> Phase::parse(std::string_view text) {
  if (text == "detect") return detect();
  if (text == "stage1") return stage1();
  if (text == "stage2") return stage2();
  if (text == "ablation") return ablation();
  if (text == "root-cause") return root_cause();
  auto stage_of = [](std::string_view s) -> int {
    if (s == "s1") return 1;
    if (s == "s2") return 2;
    return 0;
  };
  if (text.starts_with("rtg-rp-")) {
    const int stage = stage_of(text.substr(7));
    if (stage == 0) return std::nullopt;
    return rtg_rp(stage);
  }
  if (text.starts_with("rtg-label-")) {
    auto rest = text.substr(10);
    if (rest.size() < 5 || rest[2] != '-' || rest[3] != 'm') return std::nullopt;
    const int stage = stage_of(rest.substr(0, 2));
    auto rate = parse_rational(rest.substr(4));
    if (stage == 0 || !rate || *rate < Rational{0} || *rate > Rational{1}) return std::nullopt;
    return rtg_label(stage, *rate);
  }
  return std::nullopt;
}

}  // namespace wakenllm

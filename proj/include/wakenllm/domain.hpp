#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wakenllm/rational.hpp"

namespace wakenllm {

/// Three-way label. True/False aliases are folded into Proved/Disproved at ingestion.
enum class Label { Proved, Disproved, Unknown };

/// "__PROVED__", "__DISPROVED__", "__UNKNOWN__".
std::string_view label_token(Label label);
/// "PROVED", "DISPROVED", "UNKNOWN".
std::string_view label_name(Label label);
/// Accepts the canonical names plus the True/False/Unknown aliases in any case.
std::optional<Label> parse_label_name(std::string_view text);

inline bool is_definite(Label label) { return label != Label::Unknown; }

enum class SampleForm { FactBased, StoryBased };

std::string_view form_name(SampleForm form);  // "fact" / "story"
std::optional<SampleForm> parse_form(std::string_view text);

enum class Origin { Native, Unknownized };

std::string_view origin_name(Origin origin);  // "native" / "unknownized"
std::optional<Origin> parse_origin(std::string_view text);

struct Sample {
  std::string id;
  std::string dataset;
  std::string subcategory;
  SampleForm form = SampleForm::FactBased;
  std::string context;
  std::string hypothesis;
  std::optional<std::vector<std::string>> choices;
  Label gold = Label::Unknown;
  Origin origin = Origin::Native;
  std::optional<std::vector<std::string>> removed_sentences;

  bool operator==(const Sample&) const = default;
};

enum class FType { Verifiable, Unverifiable };

FType ftype_of(const Sample& sample);
FType ftype_of(Label gold);
std::string_view ftype_name(FType ftype);  // "v" / "u"
std::optional<FType> parse_ftype(std::string_view text);

enum class Verdict { TrueConverting, FalseConverting, UnexcitedConverting };

std::string_view verdict_name(Verdict verdict);  // "TC" / "FC" / "UC"
std::optional<Verdict> parse_verdict(std::string_view text);

/// Maps a prediction onto TC/FC/UC.
///
/// Verifiable gold: exact match is TC, Unknown is UC, the other definite label is FC.
/// Unverifiable gold: any definite label is FC; Unknown is TC when the
/// justification was judged valid and UC otherwise. The judgement is required
/// in that last case and MissingJudgeResult is thrown without it.
Verdict classify_verdict(const Sample& sample, Label predicted,
                         std::optional<bool> justification_valid);

/// One step of the evaluation protocol. Every trajectory record carries exactly one.
struct Phase {
  enum class Kind { Detect, Stage1, Stage2, RtgLabel, RtgRp, AblationRepeat, RootCause };

  Kind kind = Kind::Detect;
  int stage = 0;               // 1 or 2 for the RtG kinds
  Rational misguide_rate{0};   // RtgLabel only

  static Phase detect() { return {Kind::Detect, 0, Rational{0}}; }
  static Phase stage1() { return {Kind::Stage1, 0, Rational{0}}; }
  static Phase stage2() { return {Kind::Stage2, 0, Rational{0}}; }
  static Phase rtg_label(int stage, Rational rate);
  static Phase rtg_rp(int stage);
  static Phase ablation() { return {Kind::AblationRepeat, 0, Rational{0}}; }
  static Phase root_cause() { return {Kind::RootCause, 0, Rational{0}}; }

  /// True for phases whose inputs come from the stage-1 FC set.
  bool stage2_family() const;

  /// "detect", "stage1", "stage2", "rtg-label-s1-m2:3", "rtg-rp-s2", "ablation", "root-cause".
  std::string to_string() const;
  static std::optional<Phase> parse(std::string_view text);

  bool operator==(const Phase&) const = default;
};

}  // namespace wakenllm

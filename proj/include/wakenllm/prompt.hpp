#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wakenllm/domain.hpp"

namespace wakenllm {

/// The first four are the stimulation and Remind-then-Guide templates; the
/// rest are the harness's own detection and judging prompts.
enum class TemplateId {
  ConciseStim,
  DetailedStim,
  RpElicit,
  RtgWithRp,
  RtgLabelGuide,
  DirectPredict,
  JustifyUnknown,
  RootCauseJudge,
  JustificationJudge,
};

inline constexpr TemplateId kAllTemplates[] = {
    TemplateId::ConciseStim,    TemplateId::DetailedStim,   TemplateId::RpElicit,
    TemplateId::RtgWithRp,      TemplateId::RtgLabelGuide,  TemplateId::DirectPredict,
    TemplateId::JustifyUnknown, TemplateId::RootCauseJudge, TemplateId::JustificationJudge,
};

/// Asset file stem, e.g. "concise_stim".
std::string_view template_name(TemplateId id);
std::optional<TemplateId> parse_template_name(std::string_view name);

struct TemplateAsset {
  std::string name;
  std::string text;
  std::string digest;  // SHA-256 of the asset bytes, lower-case hex
  std::vector<std::string> positional_slots;  // names bound to "{}" in order
};

/// Versioned prompt wording. Asset files are plain UTF-8 text; "{}" is a
/// positional slot, "{name}" a named slot, "{{" and "}}" literal braces.
class TemplateSet {
 public:
  /// The assets compiled into the library.
  static TemplateSet defaults();
  /// Defaults overridden by any "<name>.txt" present in `dir`.
  static TemplateSet load_dir(const std::filesystem::path& dir);

  const TemplateAsset& get(TemplateId id) const;
  /// Text prepended to stage-2 prompts; has an {answer} slot.
  const TemplateAsset& stage2_reminder() const { return reminder_; }

  /// name -> digest for every asset, including the reminder.
  std::map<std::string, std::string> digests() const;
  /// Digest over all asset digests; changes if any wording changes.
  std::string digest() const;

 private:
  std::map<TemplateId, TemplateAsset> assets_;
  TemplateAsset reminder_;
};

/// Slot values for one rendering beyond the sample's own hypothesis and facts.
struct Condition {
  std::map<std::string, std::string> slots;
  bool allow_empty_prior_reasoning = false;
};

struct RenderedPrompt {
  TemplateId template_id = TemplateId::DirectPredict;
  std::string text;
  std::map<std::string, std::string> slots;  // every value offered to the template

  bool operator==(const RenderedPrompt&) const = default;
};

/// Substitutes slots into raw template text. Throws MissingSlot.
std::string render_text(std::string_view text, const std::vector<std::string>& positional_slots,
                        const std::map<std::string, std::string>& values);

/// Hypothesis as shown to the model: the hypothesis plus any answer choices.
std::string hypothesis_slot(const Sample& sample);

RenderedPrompt render(const TemplateSet& templates, TemplateId id, const Sample& sample,
                      const Condition& condition);

struct ParsedCompletion {
  std::optional<Label> label;  // empty means ParseFailure
  std::optional<std::string> reasoning;
  std::string matched_token;

  bool parse_failure() const { return !label.has_value(); }
  /// ParseFailure counts as an abstention.
  Label effective_label() const { return label.value_or(Label::Unknown); }
};

/// Label is the last sentinel token in `raw` (case-sensitive). With
/// expect_reasoning, reasoning is the text between "Reasoning Process:" and
/// the following "Conclusion:" when both appear, else the whole completion.
ParsedCompletion parse_completion(std::string_view raw, bool expect_reasoning);

/// Index into `tokens` of whichever occurs last in `raw`.
std::optional<std::size_t> last_token(std::string_view raw, std::span<const std::string_view> tokens);

/// With probability `misguide_rate` a label drawn uniformly from the two
/// labels other than gold, otherwise gold. The rate is applied exactly as a
/// rational.
Label assign_guidance_label(Label gold, const Rational& misguide_rate, std::mt19937_64& rng);

namespace detail {
const std::map<std::string, std::string>& embedded_template_assets();
}

}  // namespace wakenllm

#include "wakenllm/prompt.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "wakenllm/digest.hpp"
#include "wakenllm/errors.hpp"

namespace wakenllm {

namespace {

constexpr std::string_view kReminderName = "stage2_reminder";

std::vector<std::string> positional_slots_for(TemplateId id) {
  switch (id) {
    case TemplateId::ConciseStim:
    case TemplateId::RpElicit: return {"hypothesis", "facts", "answer"};
    case TemplateId::DetailedStim: return {"hypothesis", "facts"};
    case TemplateId::RtgWithRp: return {"hypothesis", "facts", "answer", "prior_reasoning"};
    default: return {};
  }
}

TemplateAsset make_asset(std::string name, std::string text, std::vector<std::string> positional) {
  TemplateAsset asset;
  asset.name = std::move(name);
  asset.digest = sha256_hex(text);
  asset.text = std::move(text);
  asset.positional_slots = std::move(positional);
  return asset;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open template " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

std::string_view template_name(TemplateId id) {
  switch (id) {
    case TemplateId::ConciseStim: return "concise_stim";
    case TemplateId::DetailedStim: return "detailed_stim";
    case TemplateId::RpElicit: return "rp_elicit";
    case TemplateId::RtgWithRp: return "rtg_with_rp";
    case TemplateId::RtgLabelGuide: return "rtg_label_guide";
    case TemplateId::DirectPredict: return "direct_predict";
    case TemplateId::JustifyUnknown: return "justify_unknown";
    case TemplateId::RootCauseJudge: return "root_cause_judge";
    case TemplateId::JustificationJudge: return "justification_judge";
  }
  return "direct_predict";
}

std::optional<TemplateId> parse_template_name(std::string_view name) {
  for (auto id : kAllTemplates)
    if (template_name(id) == name) return id;
  return std::nullopt;
}

TemplateSet TemplateSet::defaults() {
  const auto& embedded = detail::embedded_template_assets();
  TemplateSet set;
  for (auto id : kAllTemplates) {
    const std::string name(template_name(id));
    set.assets_[id] = make_asset(name, embedded.at(name), positional_slots_for(id));
  }
  set.reminder_ = make_asset(std::string(kReminderName), embedded.at(std::string(kReminderName)), {});
  return set;
}

TemplateSet TemplateSet::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("template directory not found: " + dir.string());
  TemplateSet set = defaults();
  for (auto id : kAllTemplates) {
    const auto path = dir / (std::string(template_name(id)) + ".txt");
    if (std::filesystem::exists(path))
      set.assets_[id] = make_asset(std::string(template_name(id)), read_file(path), positional_slots_for(id));
  }
  const auto reminder = dir / (std::string(kReminderName) + ".txt");
  if (std::filesystem::exists(reminder))
    set.reminder_ = make_asset(std::string(kReminderName), read_file(reminder), {});
  return set;
}

const TemplateAsset& TemplateSet::get(TemplateId id) const { return assets_.at(id); }

std::map<std::string, std::string> TemplateSet::digests() const {
  std::map<std::string, std::string> out;
  for (const auto& [id, asset] : assets_) out[asset.name] = asset.digest;
  out[reminder_.name] = reminder_.digest;
  return out;
}

std::string TemplateSet::digest() const {
  std::string joined;
  for (const auto& [name, digest] : digests()) joined += name + ":" + digest + "\n";
  return sha256_hex(joined);
}

std::string render_text(std::string_view text, const std::vector<std::string>& positional_slots,
                        const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size() + 256);
  std::size_t positional = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
      out += '{';
      i += 2;
      continue;
    }
    if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
      out += '}';
      i += 2;
      continue;
    }
    if (c != '{') {
      out += c;
      ++i;
      continue;
    }
    const auto close = text.find('}', i + 1);
    if (close == std::string_view::npos) throw Error("unterminated slot in template");
    std::string name(text.substr(i + 1, close - i - 1));
    if (name.empty()) {
      if (positional >= positional_slots.size()) throw MissingSlot("{}#" + std::to_string(positional));
      name = positional_slots[positional++];
    }
    auto it = values.find(name);
    if (it == values.end()) throw MissingSlot(name);
    out += it->second;
    i = close + 1;
  }
  return out;
}

std::string hypothesis_slot(const Sample& sample) {
  if (!sample.choices || sample.choices->empty()) return sample.hypothesis;
  std::string out = sample.hypothesis + "\nChoices:";
  char letter = 'A';
  for (const auto& choice : *sample.choices) {
    out += "\n";
    out += letter++;
    out += ". " + choice;
  }
  return out;
}

RenderedPrompt render(const TemplateSet& templates, TemplateId id, const Sample& sample,
                      const Condition& condition) {
  std::map<std::string, std::string> values = condition.slots;
  values["hypothesis"] = hypothesis_slot(sample);
  values["facts"] = sample.context;
  if (auto it = values.find("prior_reasoning");
      it != values.end() && it->second.empty() && !condition.allow_empty_prior_reasoning) {
    values.erase(it);
  }
  const auto& asset = templates.get(id);
  RenderedPrompt prompt;
  prompt.template_id = id;
  prompt.text = render_text(asset.text, asset.positional_slots, values);
  prompt.slots = std::move(values);
  return prompt;
}

std::optional<std::size_t> last_token(std::string_view raw, std::span<const std::string_view> tokens) {
  std::optional<std::size_t> best;
  std::size_t best_pos = 0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto pos = raw.rfind(tokens[t]);
    if (pos == std::string_view::npos) continue;
    if (!best || pos > best_pos) {
      best = t;
      best_pos = pos;
    }
  }
  return best;
}

ParsedCompletion parse_completion(std::string_view raw, bool expect_reasoning) {
  static constexpr std::array<std::string_view, 3> kTokens = {"__PROVED__", "__DISPROVED__",
                                                              "__UNKNOWN__"};
  static constexpr std::array<Label, 3> kLabels = {Label::Proved, Label::Disproved, Label::Unknown};
  ParsedCompletion parsed;
  if (auto hit = last_token(raw, kTokens)) {
    parsed.label = kLabels[*hit];
    parsed.matched_token = std::string(kTokens[*hit]);
  }
  if (expect_reasoning) {
    constexpr std::string_view kOpen = "Reasoning Process:";
    constexpr std::string_view kClose = "Conclusion:";
    const auto open = raw.find(kOpen);
    const auto close = open == std::string_view::npos ? open : raw.find(kClose, open + kOpen.size());
    if (open != std::string_view::npos && close != std::string_view::npos) {
      auto body = raw.substr(open + kOpen.size(), close - open - kOpen.size());
      constexpr std::string_view kTrim = " \t\r\n*";
      const auto first = body.find_first_not_of(kTrim);
      if (first == std::string_view::npos) {
        parsed.reasoning = std::string{};
      } else {
        const auto last = body.find_last_not_of(kTrim);
        parsed.reasoning = std::string(body.substr(first, last - first + 1));
      }
    } else {
      parsed.reasoning = std::string(raw);
    }
  }
  return parsed;
}

Label assign_guidance_label(Label gold, const Rational& misguide_rate, std::mt19937_64& rng) {
  const auto den = static_cast<std::uint64_t>(misguide_rate.denominator());
  const auto num = static_cast<std::uint64_t>(misguide_rate.numerator());
  const bool misguide = uniform_below(rng, den) < num;
  if (!misguide) return gold;
  std::array<Label, 2> wrong{};
  std::size_t k = 0;
  for (Label l : {Label::Proved, Label::Disproved, Label::Unknown})
    if (l != gold) wrong[k++] = l;
  return wrong[uniform_below(rng, 2)];
}

}  // namespace wakenllm

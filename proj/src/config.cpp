#include "wakenllm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "wakenllm/digest.hpp"
#include "wakenllm/errors.hpp"

namespace wakenllm {

using nlohmann::json;

namespace {

const std::set<std::string> kTopLevelKeys = {
    "run_id", "dataset",   "templates_dir", "provider",   "judge",
    "style",  "capture_reasoning", "misguide_grid", "rtg_stages", "phases",
    "allow_empty_prior_reasoning", "seed", "concurrency_limit", "call_budget"};

std::string_view provider_kind_name(ProviderSettings::Kind kind) {
  switch (kind) {
    case ProviderSettings::Kind::Scripted: return "scripted";
    case ProviderSettings::Kind::Live: return "live";
    case ProviderSettings::Kind::Replay: return "replay";
  }
  return "scripted";
}

std::optional<TemplateId> parse_style_template(std::string_view text) {
  if (text == "detailed") return TemplateId::DetailedStim;
  if (text == "concise") return TemplateId::ConciseStim;
  auto id = parse_template_name(text);
  if (id == TemplateId::DetailedStim || id == TemplateId::ConciseStim) return id;
  return std::nullopt;
}

std::string_view style_template_name(TemplateId id) {
  return id == TemplateId::DetailedStim ? "detailed" : "concise";
}

Rational rational_from_json(const json& value) {
  std::optional<Rational> r;
  if (value.is_string()) r = parse_rational(value.get<std::string>());
  else if (value.is_number_integer()) r = Rational{value.get<std::int64_t>()};
  else if (value.is_number()) r = parse_rational(value.dump());
  if (!r) throw ConfigError("not a rational number: " + value.dump());
  return *r;
}

json root_causes_to_json(const std::map<SampleForm, ScriptedJudge::Distribution>& dists) {
  json out = json::object();
  for (const auto& [form, dist] : dists) {
    json d = json::array();
    for (const auto& [cause, p] : dist) d.push_back({root_cause_name(cause), p});
    out[std::string(form_name(form))] = d;
  }
  return out;
}

std::map<SampleForm, ScriptedJudge::Distribution> root_causes_from_json(const json& j) {
  std::map<SampleForm, ScriptedJudge::Distribution> out;
  for (const auto& [form_text, dist] : j.items()) {
    auto form = parse_form(form_text);
    if (!form) throw ConfigError("judge.root_causes keys must be \"fact\" or \"story\"");
    ScriptedJudge::Distribution d;
    auto add = [&](const std::string& name, double p) {
      auto cause = parse_root_cause(name);
      if (!cause) throw ConfigError("unknown root cause '" + name + "'");
      d.emplace_back(*cause, p);
    };
    if (dist.is_object()) {
      for (const auto& [name, p] : dist.items()) add(name, p.get<double>());
    } else {
      for (const auto& pair : dist) add(pair.at(0).get<std::string>(), pair.at(1).get<double>());
    }
    out[*form] = std::move(d);
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (run_id.empty()) throw ConfigError("run_id must be non-empty");
  for (const auto& m : misguide_grid)
    if (m < Rational{0} || m > Rational{1}) throw ConfigError("misguide rates must lie in [0, 1]");
  for (int s : rtg_stages)
    if (s != 1 && s != 2) throw ConfigError("rtg_stages may only contain 1 and 2");
  for (auto form : {SampleForm::FactBased, SampleForm::StoryBased})
    if (!style.contains(form)) throw ConfigError("style mapping must cover both sample forms");
  if (concurrency_limit == 0 || concurrency_limit > 1024)
    throw ConfigError("concurrency_limit must be between 1 and 1024");
  if (provider.temperature < 0) throw ConfigError("temperature must be non-negative");
  if (provider.max_tokens <= 0) throw ConfigError("max_tokens must be positive");
  if (rtg_rp && !capture_reasoning)
    throw ConfigError("rtg_rp needs capture_reasoning so stage prompts record a reasoning process");
  provider.policy.validate();
}

json RunConfig::to_json() const {
  json grid = json::array();
  for (const auto& m : misguide_grid) grid.push_back(to_string(m));
  json styles = json::object();
  for (const auto& [form, id] : style) styles[std::string(form_name(form))] = style_template_name(id);
  json provider_json = {{"kind", provider_kind_name(provider.kind)},
                        {"model", provider.model},
                        {"temperature", provider.temperature},
                        {"max_tokens", provider.max_tokens},
                        {"max_requests_per_second", provider.max_requests_per_second},
                        {"policy", provider.policy.to_json()},
                        {"live", provider.live.to_json()},
                        {"replay_transcript", provider.replay_transcript}};
  json judge_json = {{"kind", judge.kind == JudgeSettings::Kind::Scripted ? "scripted" : "model"},
                     {"seed", judge.seed},
                     {"root_causes", root_causes_to_json(judge.root_causes)}};
  return json{{"run_id", run_id},
              {"dataset", dataset},
              {"templates_dir", templates_dir ? json(*templates_dir) : json(nullptr)},
              {"provider", provider_json},
              {"judge", judge_json},
              {"style", styles},
              {"capture_reasoning", capture_reasoning},
              {"misguide_grid", grid},
              {"rtg_stages", rtg_stages},
              {"phases",
               {{"rtg_label", rtg_label}, {"rtg_rp", rtg_rp}, {"ablation", ablation}, {"annotate", annotate}}},
              {"allow_empty_prior_reasoning", allow_empty_prior_reasoning},
              {"seed", seed},
              {"concurrency_limit", concurrency_limit},
              {"call_budget", call_budget}};
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!kTopLevelKeys.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  RunConfig c;
  try {
    c.run_id = j.value("run_id", c.run_id);
    c.dataset = j.value("dataset", c.dataset);
    if (j.contains("templates_dir") && !j.at("templates_dir").is_null())
      c.templates_dir = j.at("templates_dir").get<std::string>();
    if (j.contains("provider")) {
      const auto& p = j.at("provider");
      const auto kind = p.value("kind", std::string("scripted"));
      if (kind == "scripted") c.provider.kind = ProviderSettings::Kind::Scripted;
      else if (kind == "live") c.provider.kind = ProviderSettings::Kind::Live;
      else if (kind == "replay") c.provider.kind = ProviderSettings::Kind::Replay;
      else throw ConfigError("provider.kind must be scripted, live or replay");
      c.provider.model = p.value("model", c.provider.model);
      c.provider.temperature = p.value("temperature", c.provider.temperature);
      c.provider.max_tokens = p.value("max_tokens", c.provider.max_tokens);
      c.provider.max_requests_per_second =
          p.value("max_requests_per_second", c.provider.max_requests_per_second);
      if (p.contains("policy")) c.provider.policy = ScriptedPolicy::from_json(p.at("policy"));
      if (p.contains("live")) c.provider.live = LiveConfig::from_json(p.at("live"));
      c.provider.replay_transcript = p.value("replay_transcript", c.provider.replay_transcript);
    }
    if (j.contains("judge")) {
      const auto& jd = j.at("judge");
      const auto kind = jd.value("kind", std::string("scripted"));
      if (kind == "scripted") c.judge.kind = JudgeSettings::Kind::Scripted;
      else if (kind == "model") c.judge.kind = JudgeSettings::Kind::Model;
      else throw ConfigError("judge.kind must be scripted or model");
      c.judge.seed = jd.value("seed", c.judge.seed);
      if (jd.contains("root_causes")) c.judge.root_causes = root_causes_from_json(jd.at("root_causes"));
    }
    if (j.contains("style")) {
      for (const auto& [form_text, value] : j.at("style").items()) {
        auto form = parse_form(form_text);
        auto id = parse_style_template(value.get<std::string>());
        if (!form || !id) throw ConfigError("invalid style entry '" + form_text + "'");
        c.style[*form] = *id;
      }
    }
    c.capture_reasoning = j.value("capture_reasoning", c.capture_reasoning);
    if (j.contains("misguide_grid")) {
      c.misguide_grid.clear();
      for (const auto& m : j.at("misguide_grid")) c.misguide_grid.push_back(rational_from_json(m));
    }
    c.rtg_stages = j.value("rtg_stages", c.rtg_stages);
    if (j.contains("phases")) {
      const auto& ph = j.at("phases");
      c.rtg_label = ph.value("rtg_label", c.rtg_label);
      c.rtg_rp = ph.value("rtg_rp", c.rtg_rp);
      c.ablation = ph.value("ablation", c.ablation);
      c.annotate = ph.value("annotate", c.annotate);
    }
    c.allow_empty_prior_reasoning = j.value("allow_empty_prior_reasoning", c.allow_empty_prior_reasoning);
    c.seed = j.value("seed", c.seed);
    c.concurrency_limit = j.value("concurrency_limit", c.concurrency_limit);
    c.call_budget = j.value("call_budget", c.call_budget);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::string RunConfig::digest() const {
  json j = to_json();
  j.erase("concurrency_limit");
  j.erase("call_budget");
  j["provider"].erase("max_requests_per_second");
  return sha256_hex(j.dump());
}

std::map<SampleForm, TemplateId> parse_style_mapping(std::string_view text) {
  std::map<SampleForm, TemplateId> out = RunConfig{}.style;
  std::stringstream stream{std::string(text)};
  std::string item;
  while (std::getline(stream, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("style entries look like fact=detailed");
    auto form = parse_form(item.substr(0, eq));
    auto id = parse_style_template(item.substr(eq + 1));
    if (!form || !id) throw ConfigError("invalid style entry '" + item + "'");
    out[*form] = *id;
  }
  return out;
}

std::vector<Rational> parse_misguide_grid(std::string_view text) {
  std::vector<Rational> grid;
  std::stringstream stream{std::string(text)};
  std::string item;
  while (std::getline(stream, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    item = first == std::string::npos ? std::string() : item.substr(first, last - first + 1);
    auto r = parse_rational(item);
    if (!r || *r < Rational{0} || *r > Rational{1})
      throw ConfigError("misguide rate '" + item + "' is not a number in [0, 1]");
    grid.push_back(*r);
  }
  if (grid.empty()) throw ConfigError("misguide grid is empty");
  return grid;
}

std::shared_ptr<Backend> make_backend(const ProviderSettings& settings) {
  switch (settings.kind) {
    case ProviderSettings::Kind::Scripted: return std::make_shared<ScriptedBackend>(settings.policy);
    case ProviderSettings::Kind::Live: return std::make_shared<LiveBackend>(settings.live);
    case ProviderSettings::Kind::Replay:
      if (settings.replay_transcript.empty()) throw ConfigError("provider.replay_transcript is required");
      return load_transcript(settings.replay_transcript);
  }
  throw ConfigError("unsupported provider kind");
}

std::unique_ptr<Judge> make_judge(const JudgeSettings& settings, const ProviderSettings& provider,
                                  const TemplateSet& templates) {
  if (settings.kind == JudgeSettings::Kind::Model)
    return std::make_unique<ModelJudge>(provider.request_settings(), templates);
  return std::make_unique<ScriptedJudge>(settings.seed, settings.root_causes, templates);
}

}  // namespace wakenllm

#include "wakenllm/provider.hpp"

#include <cmath>
#include <sstream>
#include <thread>

#include "wakenllm/digest.hpp"
#include "wakenllm/errors.hpp"

namespace wakenllm {

using nlohmann::json;

std::string_view role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::string request_digest(const CompletionRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages)
    messages.push_back({{"role", role_name(m.role)}, {"text", m.text}});
  const json key = {{"model", request.model_name},
                    {"messages", messages},
                    {"temperature", request.temperature},
                    {"max_tokens", request.max_tokens}};
  return sha256_hex(key.dump());
}

std::string_view backend_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::Live: return "live";
    case BackendKind::Scripted: return "scripted";
    case BackendKind::Replay: return "replay";
    case BackendKind::Cache: return "cache";
  }
  return "scripted";
}

std::optional<BackendKind> parse_backend(std::string_view text) {
  for (auto k : {BackendKind::Live, BackendKind::Scripted, BackendKind::Replay, BackendKind::Cache})
    if (backend_name(k) == text) return k;
  return std::nullopt;
}

json ModelTurn::to_json() const {
  return json{{"request_tag", request_tag},
              {"raw_completion", raw_completion},
              {"latency_ms", latency_ms},
              {"backend", backend_name(backend)},
              {"attempt_count", attempt_count}};
}

ModelTurn ModelTurn::from_json(const json& j) {
  ModelTurn turn;
  turn.request_tag = j.at("request_tag").get<std::string>();
  turn.raw_completion = j.at("raw_completion").get<std::string>();
  turn.latency_ms = j.at("latency_ms").get<std::int64_t>();
  auto backend = parse_backend(j.at("backend").get<std::string>());
  if (!backend) throw Error("unknown backend name");
  turn.backend = *backend;
  turn.attempt_count = j.at("attempt_count").get<int>();
  if (turn.attempt_count < 1 || turn.latency_ms < 0) throw Error("invalid turn metadata");
  return turn;
}

// ---------------------------------------------------------------------------

std::string_view outcome_name(Outcome outcome) {
  switch (outcome) {
    case Outcome::EmitGold: return "gold";
    case Outcome::EmitWrongDefinite: return "wrong";
    case Outcome::EmitUnknown: return "unknown";
    case Outcome::EmitUnknownJustified: return "unknown_justified";
    case Outcome::EchoAssigned: return "echo";
  }
  return "gold";
}

std::optional<Outcome> parse_outcome(std::string_view text) {
  for (auto o : {Outcome::EmitGold, Outcome::EmitWrongDefinite, Outcome::EmitUnknown,
                 Outcome::EmitUnknownJustified, Outcome::EchoAssigned})
    if (outcome_name(o) == text) return o;
  return std::nullopt;
}

void ScriptedPolicy::validate() const {
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto& rule = rules[i];
    if (rule.outcomes.empty()) throw ConfigError("policy rule " + std::to_string(i) + " has no outcomes");
    double sum = 0;
    for (const auto& [outcome, p] : rule.outcomes) {
      if (!(p >= 0.0)) throw ConfigError("policy rule " + std::to_string(i) + " has a negative probability");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      throw ConfigError("policy rule " + std::to_string(i) + " probabilities sum to " + std::to_string(sum));
  }
}

json ScriptedPolicy::to_json() const {
  json out_rules = json::array();
  for (const auto& rule : rules) {
    json outcomes = json::array();
    for (const auto& [o, p] : rule.outcomes) outcomes.push_back({outcome_name(o), p});
    json r = {{"phase", rule.phase_pattern}, {"outcomes", outcomes}};
    if (rule.ftype) r["ftype"] = ftype_name(*rule.ftype);
    out_rules.push_back(r);
  }
  return json{{"seed", seed}, {"rules", out_rules}};
}

ScriptedPolicy ScriptedPolicy::from_json(const json& j) {
  ScriptedPolicy policy;
  policy.seed = j.value("seed", std::uint64_t{0});
  for (const auto& r : j.value("rules", json::array())) {
    PolicyRule rule;
    rule.phase_pattern = r.value("phase", std::string("*"));
    if (r.contains("ftype")) {
      auto f = parse_ftype(r.at("ftype").get<std::string>());
      if (!f) throw ConfigError("policy ftype must be \"v\" or \"u\"");
      rule.ftype = f;
    }
    const auto& outcomes = r.at("outcomes");
    // Either [["gold", 0.5], ...] or {"gold": 0.5, ...}; the object form is
    // ordered by key, the array form keeps the written order.
    auto add = [&](const std::string& name, double p) {
      auto o = parse_outcome(name);
      if (!o) throw ConfigError("unknown policy outcome '" + name + "'");
      rule.outcomes.emplace_back(*o, p);
    };
    if (outcomes.is_object()) {
      for (const auto& [name, p] : outcomes.items()) add(name, p.get<double>());
    } else {
      for (const auto& pair : outcomes) add(pair.at(0).get<std::string>(), pair.at(1).get<double>());
    }
    policy.rules.push_back(std::move(rule));
  }
  policy.validate();
  return policy;
}

ScriptedPolicy ScriptedPolicy::always(Outcome outcome, std::uint64_t seed) {
  return ScriptedPolicy{seed, {PolicyRule{"*", std::nullopt, {{outcome, 1.0}}}}};
}

bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (p < pattern.size() && pattern[p] == text[t]) {
      ++p;
      ++t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

ScriptedBackend::ScriptedBackend(ScriptedPolicy policy) : policy_(std::move(policy)) {
  policy_.validate();
  for (const auto& rule : policy_.rules)
    if (rule.phase_pattern.find("ablation") != std::string::npos) ablation_named_ = true;
}

std::string ScriptedBackend::identity() const {
  return "scripted:" + sha256_hex(policy_.to_json().dump()).substr(0, 16);
}

ScriptedBackend::Decision ScriptedBackend::decide(const CompletionRequest& request,
                                                  const RequestContext& context) const {
  if (!context.gold) throw Error("scripted backend needs the gold label of '" + context.sample_id + "'");
  const Label gold = *context.gold;
  const FType ftype = ftype_of(gold);
  const std::string phase =
      context.phase == "ablation" && !ablation_named_ ? std::string("stage1") : context.phase;

  const CompletionRequest& primary = context.parent ? *context.parent : request;
  const std::string key = primary.temperature == 0.0 ? request_digest(primary) : primary.request_tag;
  const std::string seed = std::to_string(policy_.seed);

  Outcome outcome = Outcome::EmitGold;
  std::string rule_key = "default";
  for (std::size_t i = 0; i < policy_.rules.size(); ++i) {
    const auto& rule = policy_.rules[i];
    if (rule.ftype && *rule.ftype != ftype) continue;
    if (!glob_match(rule.phase_pattern, phase)) continue;
    rule_key = std::to_string(i);
    const double u = unit_interval(digest_u64({seed, key, rule_key, "outcome"}));
    double cumulative = 0;
    outcome = rule.outcomes.back().first;
    for (const auto& [o, p] : rule.outcomes) {
      cumulative += p;
      if (u < cumulative) {
        outcome = o;
        break;
      }
    }
    break;
  }

  const bool coin = (digest_u64({seed, key, rule_key, "wrong"}) & 1U) != 0;
  switch (outcome) {
    case Outcome::EmitGold: return {gold, true};
    case Outcome::EmitWrongDefinite:
      if (ftype == FType::Verifiable)
        return {gold == Label::Proved ? Label::Disproved : Label::Proved, false};
      return {coin ? Label::Proved : Label::Disproved, false};
    case Outcome::EmitUnknown: return {Label::Unknown, false};
    case Outcome::EmitUnknownJustified: return {Label::Unknown, true};
    case Outcome::EchoAssigned: return {context.assigned_label.value_or(gold), true};
  }
  return {gold, true};
}

ModelTurn ScriptedBackend::complete(const CompletionRequest& request, const RequestContext& context) {
  ModelTurn turn;
  turn.request_tag = request.request_tag;
  turn.backend = BackendKind::Scripted;

  if (context.role == RequestRole::Judge) {
    const std::string& prompt = request.messages.empty() ? std::string{} : request.messages.back().text;
    if (context.template_id == TemplateId::JustificationJudge) {
      turn.raw_completion =
          prompt.find(kJustificationMarker) != std::string::npos ? "__VALID__" : "__INVALID__";
    } else {
      static constexpr std::string_view kCauses[] = {"__FACT_UNDERSTANDING__", "__REASONING_GAP__",
                                                     "__EXCESSIVE_CAUTION__", "__ELSE__"};
      const auto pick = digest_u64({std::to_string(policy_.seed), request.request_tag, "cause"}) % 4;
      turn.raw_completion = std::string(kCauses[pick]);
    }
    return turn;
  }

  const Decision decision = decide(request, context);
  if (context.role == RequestRole::Justify) {
    turn.raw_completion = "Reasoning Process: The facts do not settle the hypothesis for " +
                          context.sample_id + ". " +
                          (decision.justified ? std::string(kJustificationMarker)
                                              : std::string("I am not able to work it out.")) +
                          "\nConclusion: __UNKNOWN__";
    return turn;
  }

  const std::string token(label_token(decision.label));
  switch (context.template_id) {
    case TemplateId::DetailedStim: turn.raw_completion = token; break;
    case TemplateId::RpElicit:
      turn.raw_completion = "Reasoning Process: Scripted reasoning for " + context.sample_id + " (" +
                            request_digest(request).substr(0, 8) + ").\nConclusion: " + token;
      break;
    default: turn.raw_completion = "Conclusion: " + token; break;
  }
  return turn;
}

// ---------------------------------------------------------------------------

std::string TranscriptEntry::to_line() const {
  const json j = {{"digest", digest},
                  {"request_tag", turn.request_tag},
                  {"raw_completion", turn.raw_completion},
                  {"meta",
                   {{"model", model},
                    {"backend", backend_name(turn.backend)},
                    {"latency_ms", turn.latency_ms},
                    {"attempt_count", turn.attempt_count}}}};
  return j.dump();
}

std::vector<TranscriptEntry> load_transcript_entries(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TranscriptError(0, "cannot open " + path.string());
  std::vector<TranscriptEntry> entries;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      TranscriptEntry entry;
      entry.digest = j.at("digest").get<std::string>();
      const auto& meta = j.at("meta");
      entry.model = meta.at("model").get<std::string>();
      entry.turn = ModelTurn::from_json(json{{"request_tag", j.at("request_tag")},
                                             {"raw_completion", j.at("raw_completion")},
                                             {"latency_ms", meta.at("latency_ms")},
                                             {"backend", meta.at("backend")},
                                             {"attempt_count", meta.at("attempt_count")}});
      entries.push_back(std::move(entry));
    } catch (const TranscriptError&) {
      throw;
    } catch (const std::exception& e) {
      throw TranscriptError(line_number, e.what());
    }
  }
  return entries;
}

ReplayBackend::ReplayBackend(std::vector<TranscriptEntry> entries, std::string source)
    : source_(std::move(source)) {
  for (auto& entry : entries) turns_[entry.turn.request_tag] = std::move(entry.turn);
}

ModelTurn ReplayBackend::complete(const CompletionRequest& request, const RequestContext&) {
  auto it = turns_.find(request.request_tag);
  if (it == turns_.end()) throw ReplayMiss(request.request_tag);
  return it->second;
}

std::unique_ptr<ReplayBackend> load_transcript(const std::filesystem::path& path) {
  return std::make_unique<ReplayBackend>(load_transcript_entries(path), path.string());
}

// ---------------------------------------------------------------------------

void RateLimiter::acquire() {
  if (per_second_ <= 0) return;
  using clock = std::chrono::steady_clock;
  const auto window = std::chrono::seconds(1);
  const auto capacity = static_cast<std::size_t>(std::max(1.0, std::floor(per_second_)));
  std::lock_guard lock(mutex_);
  for (;;) {
    const auto now = clock::now();
    while (!sent_.empty() && now - sent_.front() >= window) sent_.pop_front();
    if (sent_.size() < capacity) {
      sent_.push_back(now);
      return;
    }
    std::this_thread::sleep_until(sent_.front() + window);
  }
}

ProviderGateway::ProviderGateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      in_flight_(static_cast<std::ptrdiff_t>(
          std::clamp<std::size_t>(options_.concurrency_limit, 1, 1024))),
      limiter_(options_.max_requests_per_second) {
  if (!options_.transcript_path) return;
  const auto& path = *options_.transcript_path;
  if (std::filesystem::exists(path) && backend_->kind() == BackendKind::Live && options_.cache_live) {
    for (auto& entry : load_transcript_entries(path))
      if (entry.turn.backend == BackendKind::Live) cache_.emplace(entry.digest, std::move(entry.turn));
  }
  transcript_.open(path, std::ios::binary | std::ios::app);
  if (!transcript_) throw Error("cannot open transcript " + path.string());
}

ModelTurn ProviderGateway::complete(const CompletionRequest& request, const RequestContext& context) {
  const bool cacheable =
      backend_->kind() == BackendKind::Live && options_.cache_live && !context.bypass_cache;
  std::string digest = request_digest(request);
  if (cacheable) {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(digest); it != cache_.end()) {
      ModelTurn hit;
      hit.request_tag = request.request_tag;
      hit.raw_completion = it->second.raw_completion;
      hit.backend = BackendKind::Cache;
      return hit;
    }
  }

  const auto previous = issued_.fetch_add(1);
  if (options_.call_budget != 0 && previous >= options_.call_budget) {
    issued_.fetch_sub(1);
    throw BudgetExceeded(options_.call_budget);
  }

  in_flight_.acquire();
  ModelTurn turn;
  try {
    limiter_.acquire();
    turn = backend_->complete(request, context);
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();

  if (transcript_.is_open()) {
    const std::string line = TranscriptEntry{digest, request.model_name, turn}.to_line();
    std::lock_guard lock(transcript_mutex_);
    transcript_ << line << '\n';
    transcript_.flush();
  }
  if (cacheable) {
    std::lock_guard lock(cache_mutex_);
    cache_.emplace(std::move(digest), turn);
  }
  return turn;
}

}  // namespace wakenllm

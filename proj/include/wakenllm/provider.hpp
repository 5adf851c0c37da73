#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wakenllm/domain.hpp"
#include "wakenllm/prompt.hpp"

namespace wakenllm {

enum class Role { System, User, Assistant };

std::string_view role_name(Role role);

struct Message {
  Role role = Role::User;
  std::string text;
};

struct CompletionRequest {
  std::string model_name;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::string request_tag;  // "<phase>/<sample id>[/<role>]"
};

/// SHA-256 over (model, messages, temperature, max_tokens). The tag is not part
/// of the key, so identical requests from different phases share a cache entry.
std::string request_digest(const CompletionRequest& request);

enum class BackendKind { Live, Scripted, Replay, Cache };

std::string_view backend_name(BackendKind kind);
std::optional<BackendKind> parse_backend(std::string_view text);

struct ModelTurn {
  std::string request_tag;
  std::string raw_completion;  // verbatim, never trimmed
  std::int64_t latency_ms = 0;
  BackendKind backend = BackendKind::Scripted;
  int attempt_count = 1;

  nlohmann::json to_json() const;
  static ModelTurn from_json(const nlohmann::json& j);
  bool operator==(const ModelTurn&) const = default;
};

enum class RequestRole { Primary, Justify, Judge };

/// What the pipeline knows about a request. Only the scripted backend reads
/// it; nothing here goes over the wire.
struct RequestContext {
  std::string phase;
  std::string sample_id;
  std::optional<Label> gold;
  TemplateId template_id = TemplateId::DirectPredict;
  std::optional<Label> assigned_label;
  RequestRole role = RequestRole::Primary;
  const CompletionRequest* parent = nullptr;  // the primary request of a justify turn
  bool bypass_cache = false;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual ModelTurn complete(const CompletionRequest& request, const RequestContext& context) = 0;
  virtual BackendKind kind() const = 0;
  virtual std::string identity() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend

enum class Outcome { EmitGold, EmitWrongDefinite, EmitUnknown, EmitUnknownJustified, EchoAssigned };

std::string_view outcome_name(Outcome outcome);
std::optional<Outcome> parse_outcome(std::string_view text);

struct PolicyRule {
  std::string phase_pattern = "*";  // glob over phase names, '*' matches any run of characters
  std::optional<FType> ftype;       // empty matches both
  std::vector<std::pair<Outcome, double>> outcomes;
};

/// Offline stand-in for a model. Rules are tried in order; the first whose
/// phase pattern and ftype match decides the outcome distribution. With no
/// matching rule the gold label is emitted.
struct ScriptedPolicy {
  std::uint64_t seed = 0;
  std::vector<PolicyRule> rules;

  /// Throws ConfigError unless every distribution is non-negative and sums to 1.
  void validate() const;

  nlohmann::json to_json() const;
  static ScriptedPolicy from_json(const nlohmann::json& j);
  static ScriptedPolicy always(Outcome outcome, std::uint64_t seed = 0);
};

/// Marker a scripted justification carries when it is meant to be judged valid.
inline constexpr std::string_view kJustificationMarker = "[justification: sufficient]";

bool glob_match(std::string_view pattern, std::string_view text);

/// Deterministic completions in each template's output grammar.
///
/// The outcome draw is a pure function of (seed, rule, key). At temperature 0
/// the key is the request digest, so an identical prompt always gets the same
/// answer; otherwise the key is the request tag. The ablation phase replays
/// the stage-1 protocol, so unless some rule pattern names "ablation" it is
/// answered with the stage-1 rules.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(ScriptedPolicy policy);

  ModelTurn complete(const CompletionRequest& request, const RequestContext& context) override;
  BackendKind kind() const override { return BackendKind::Scripted; }
  std::string identity() const override;

  const ScriptedPolicy& policy() const noexcept { return policy_; }

 private:
  struct Decision {
    Label label;
    bool justified;
  };
  Decision decide(const CompletionRequest& request, const RequestContext& context) const;

  ScriptedPolicy policy_;
  bool ablation_named_ = false;
};

// ---------------------------------------------------------------------------
// Transcript / cache file and replay

struct TranscriptEntry {
  std::string digest;
  std::string model;
  ModelTurn turn;

  std::string to_line() const;
};

/// One entry per line. Throws TranscriptError naming the first bad line.
std::vector<TranscriptEntry> load_transcript_entries(const std::filesystem::path& path);

/// Returns recorded turns verbatim, keyed by request tag.
class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(std::vector<TranscriptEntry> entries, std::string source = {});

  ModelTurn complete(const CompletionRequest& request, const RequestContext& context) override;
  BackendKind kind() const override { return BackendKind::Replay; }
  std::string identity() const override { return "replay:" + source_; }
  std::size_t size() const noexcept { return turns_.size(); }

 private:
  std::map<std::string, ModelTurn, std::less<>> turns_;
  std::string source_;
};

std::unique_ptr<ReplayBackend> load_transcript(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Live HTTP backend

/// Field names are configurable so OpenAI-style and similar chat endpoints
/// work without code changes.
struct LiveConfig {
  std::string url;  // e.g. https://api.openai.com/v1/chat/completions
  std::string credential_env;  // empty: no auth header
  std::string auth_header = "Authorization";
  std::string auth_prefix = "Bearer ";
  std::map<std::string, std::string> extra_headers;
  int timeout_ms = 60000;
  int max_attempts = 4;
  int backoff_ms = 500;
  std::string model_field = "model";
  std::string messages_field = "messages";
  std::string role_field = "role";
  std::string content_field = "content";
  std::string temperature_field = "temperature";
  std::string max_tokens_field = "max_tokens";
  std::string response_pointer = "/choices/0/message/content";

  nlohmann::json to_json() const;
  static LiveConfig from_json(const nlohmann::json& j);
};

class LiveBackend final : public Backend {
 public:
  /// Throws CredentialMissing when the configured variable is unset.
  explicit LiveBackend(LiveConfig config);

  ModelTurn complete(const CompletionRequest& request, const RequestContext& context) override;
  BackendKind kind() const override { return BackendKind::Live; }
  std::string identity() const override { return "live:" + config_.url; }

  nlohmann::json request_body(const CompletionRequest& request) const;

 private:
  LiveConfig config_;
  std::string credential_;
  std::string scheme_host_port_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// Gateway: budget, cache, rate limit and in-flight bound around a backend

/// Sliding one-second window: at most `per_second` acquisitions in any window.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second) : per_second_(per_second) {}
  void acquire();

 private:
  double per_second_;
  std::mutex mutex_;
  std::deque<std::chrono::steady_clock::time_point> sent_;
};

struct GatewayOptions {
  std::size_t call_budget = 0;  // 0: unlimited
  std::size_t concurrency_limit = 1;
  double max_requests_per_second = 0;  // 0: unlimited
  std::optional<std::filesystem::path> transcript_path;
  bool cache_live = true;
};

class ProviderGateway {
 public:
  ProviderGateway(std::shared_ptr<Backend> backend, GatewayOptions options);

  /// Safe to call from many threads. Live responses are cached by request
  /// digest and replayed with backend = Cache.
  ModelTurn complete(const CompletionRequest& request, const RequestContext& context);

  std::size_t calls_issued() const noexcept { return issued_.load(); }
  const Backend& backend() const noexcept { return *backend_; }

 private:
  std::shared_ptr<Backend> backend_;
  GatewayOptions options_;
  std::atomic<std::size_t> issued_{0};
  std::counting_semaphore<1024> in_flight_;
  RateLimiter limiter_;
  std::mutex cache_mutex_;
  std::map<std::string, ModelTurn> cache_;
  std::mutex transcript_mutex_;
  std::ofstream transcript_;
};

}  // namespace wakenllm

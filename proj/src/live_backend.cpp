#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "wakenllm/errors.hpp"
#include "wakenllm/provider.hpp"

namespace wakenllm {

using nlohmann::json;

json LiveConfig::to_json() const {
  return json{{"url", url},
              {"credential_env", credential_env},
              {"auth_header", auth_header},
              {"auth_prefix", auth_prefix},
              {"extra_headers", extra_headers},
              {"timeout_ms", timeout_ms},
              {"max_attempts", max_attempts},
              {"backoff_ms", backoff_ms},
              {"model_field", model_field},
              {"messages_field", messages_field},
              {"role_field", role_field},
              {"content_field", content_field},
              {"temperature_field", temperature_field},
              {"max_tokens_field", max_tokens_field},
              {"response_pointer", response_pointer}};
}

LiveConfig LiveConfig::from_json(const json& j) {
  LiveConfig c;
  c.url = j.value("url", c.url);
  c.credential_env = j.value("credential_env", c.credential_env);
  c.auth_header = j.value("auth_header", c.auth_header);
  c.auth_prefix = j.value("auth_prefix", c.auth_prefix);
  c.extra_headers = j.value("extra_headers", c.extra_headers);
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
  c.model_field = j.value("model_field", c.model_field);
  c.messages_field = j.value("messages_field", c.messages_field);
  c.role_field = j.value("role_field", c.role_field);
  c.content_field = j.value("content_field", c.content_field);
  c.temperature_field = j.value("temperature_field", c.temperature_field);
  c.max_tokens_field = j.value("max_tokens_field", c.max_tokens_field);
  c.response_pointer = j.value("response_pointer", c.response_pointer);
  if (c.max_attempts < 1) throw ConfigError("live.max_attempts must be at least 1");
  return c;
}

LiveBackend::LiveBackend(LiveConfig config) : config_(std::move(config)) {
  if (!config_.credential_env.empty()) {
    const char* value = std::getenv(config_.credential_env.c_str());
    if (value == nullptr || *value == '\0') throw CredentialMissing(config_.credential_env);
    credential_ = value;
  }
  const auto scheme_end = config_.url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("live.url must include a scheme: " + config_.url);
  const auto path_start = config_.url.find('/', scheme_end + 3);
  scheme_host_port_ = config_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.url.substr(path_start);
}

json LiveBackend::request_body(const CompletionRequest& request) const {
  json messages = json::array();
  for (const auto& m : request.messages)
    messages.push_back({{config_.role_field, role_name(m.role)}, {config_.content_field, m.text}});
  return json{{config_.model_field, request.model_name},
              {config_.messages_field, messages},
              {config_.temperature_field, request.temperature},
              {config_.max_tokens_field, request.max_tokens}};
}

ModelTurn LiveBackend::complete(const CompletionRequest& request, const RequestContext&) {
  using clock = std::chrono::steady_clock;
  const std::string body = request_body(request).dump();
  httplib::Headers headers;
  if (!credential_.empty()) headers.emplace(config_.auth_header, config_.auth_prefix + credential_);
  for (const auto& [k, v] : config_.extra_headers) headers.emplace(k, v);

  const auto start = clock::now();
  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    httplib::Client client(scheme_host_port_);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto result = client.Post(path_, headers, body, "application/json");

    bool transient = true;
    if (!result) {
      last_error = "transport error: " + httplib::to_string(result.error());
    } else if (result->status == 200) {
      json parsed;
      try {
        parsed = json::parse(result->body);
      } catch (const json::parse_error& e) {
        throw ProviderUnreachable(std::string("response is not JSON: ") + e.what());
      }
      const json::json_pointer pointer(config_.response_pointer);
      if (!parsed.contains(pointer) || !parsed.at(pointer).is_string())
        throw ProviderUnreachable("response has no string at " + config_.response_pointer);
      ModelTurn turn;
      turn.request_tag = request.request_tag;
      turn.raw_completion = parsed.at(pointer).get<std::string>();
      turn.latency_ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - start).count();
      turn.backend = BackendKind::Live;
      turn.attempt_count = attempt;
      return turn;
    } else {
      last_error = "HTTP " + std::to_string(result->status);
      transient = result->status == 408 || result->status == 429 || result->status >= 500;
    }
    if (!transient) break;
    if (attempt < config_.max_attempts)
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms) * (1 << (attempt - 1)));
  }
  throw ProviderUnreachable(config_.url + " failed for '" + request.request_tag + "': " + last_error);
}

}  // namespace wakenllm

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "mmia/json_util.hpp"

namespace mmia {

enum class Role { planner, executor, auditor, abstractor, extractor, judge, generator };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  std::int64_t total() const { return prompt_tokens + completion_tokens; }
  TokenUsage& operator+=(const TokenUsage& other) {
    prompt_tokens += other.prompt_tokens;
    completion_tokens += other.completion_tokens;
    return *this;
  }
  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

json to_json(const TokenUsage& usage);
TokenUsage usage_from_json(const json& value);

struct ChatRequest {
  Role role = Role::executor;
  std::string system_prompt;
  std::string user_prompt;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string response_schema;  // empty when free text is acceptable
};

struct ChatResponse {
  std::string text;
  TokenUsage usage;
  std::string backend_id;
};

// ceil(utf8 bytes / 4).
std::int64_t count_tokens(std::string_view text);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  // May throw TransportError (retried by the gateway) or Error(backend_error)
  // for non-retryable failures.
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

// Canned replies keyed on role and prompt content ("scenario_v1").
class ScriptedBackend : public Backend {
 public:
  struct Rule {
    std::optional<Role> role;  // nullopt matches any role
    std::string contains;
    std::optional<std::regex> pattern;
    std::string pattern_text;
    std::string response;
    std::optional<TokenUsage> usage;
  };

  ScriptedBackend(std::string id, std::vector<Rule> rules, std::string fallback,
                  std::optional<TokenUsage> fallback_usage = std::nullopt);

  static ScriptedBackend from_json(const json& scenario);
  static ScriptedBackend from_file(const std::filesystem::path& path);

  std::string id() const override { return id_; }
  ChatResponse send(const ChatRequest& request) override;

 private:
  std::string id_;
  std::vector<Rule> rules_;
  std::string fallback_;
  std::optional<TokenUsage> fallback_usage_;
};

// OpenAI-compatible chat-completions client.
class HttpBackend : public Backend {
 public:
  struct Settings {
    std::string url;  // e.g. https://host/v1
    std::string api_key;
    std::string model;
    int timeout_seconds = 60;
  };

  explicit HttpBackend(Settings settings);
  // Reads MMIA_BACKEND_URL / MMIA_BACKEND_KEY / MMIA_BACKEND_MODEL.
  static Settings settings_from_env();

  std::string id() const override { return "http:" + settings_.model; }
  ChatResponse send(const ChatRequest& request) override;

 private:
  Settings settings_;
};

struct GatewayOptions {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  int repair_attempts = 2;
  std::filesystem::path audit_file;  // empty: no audit trail
  Clock clock;
};

struct StructuredReply {
  json document;
  std::string raw_text;
  std::string prompt;  // final user prompt (after repairs)
  TokenUsage usage;    // summed over repair attempts
};

// Validates a parsed reply; throws Error(validation_error) with a message
// fed back to the model on repair.
using ReplyValidator = std::function<void(const json&)>;

class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, GatewayOptions options = {});

  ChatResponse complete(const ChatRequest& request);

  // complete() + JSON extraction + validation, re-prompting with the
  // validation error up to repair_attempts times before protocol_error.
  StructuredReply complete_structured(ChatRequest request, const ReplyValidator& validate);

  Backend& backend() { return *backend_; }
  std::shared_ptr<Backend> backend_handle() const { return backend_; }
  std::uint64_t calls() const;

 private:
  std::shared_ptr<Backend> backend_;
  GatewayOptions options_;
  JsonlWriter audit_;
  mutable std::mutex mutex_;
  std::uint64_t calls_ = 0;
};

}  // namespace mmia

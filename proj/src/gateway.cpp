#include "mmia/gateway.hpp"

#include <thread>

#include "mmia/error.hpp"

namespace mmia {

namespace {

constexpr std::pair<Role, std::string_view> kRoles[] = {
    {Role::planner, "planner"},       {Role::executor, "executor"},
    {Role::auditor, "auditor"},       {Role::abstractor, "abstractor"},
    {Role::extractor, "extractor"},   {Role::judge, "judge"},
    {Role::generator, "generator"},
};

}  // namespace

std::string_view to_string(Role role) {
  for (const auto& [r, name] : kRoles) {
    if (r == role) return name;
  }
  return "executor";
}

Role role_from_string(std::string_view text) {
  for (const auto& [r, name] : kRoles) {
    if (name == text) return r;
  }
  fail(ErrorCode::configuration_error, "unknown role '" + std::string(text) + "'");
}

json to_json(const TokenUsage& usage) {
  return json{{"prompt_tokens", usage.prompt_tokens},
              {"completion_tokens", usage.completion_tokens}};
}

TokenUsage usage_from_json(const json& value) {
  TokenUsage usage;
  usage.prompt_tokens = value.value("prompt_tokens", std::int64_t{0});
  usage.completion_tokens = value.value("completion_tokens", std::int64_t{0});
  if (usage.prompt_tokens < 0 || usage.completion_tokens < 0) {
    fail(ErrorCode::validation_error, "token usage must be non-negative");
  }
  return usage;
}

std::int64_t count_tokens(std::string_view text) {
  return static_cast<std::int64_t>((text.size() + 3) / 4);
}

// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::string id, std::vector<Rule> rules, std::string fallback,
                                 std::optional<TokenUsage> fallback_usage)
    : id_(std::move(id)),
      rules_(std::move(rules)),
      fallback_(std::move(fallback)),
      fallback_usage_(fallback_usage) {}

ScriptedBackend ScriptedBackend::from_json(const json& scenario) {
  if (scenario.value("schema", "") != "scenario_v1") {
    fail(ErrorCode::configuration_error, "scripted scenario must declare schema scenario_v1");
  }
  auto response_text = [](const json& r) {
    return r.is_string() ? r.get<std::string>() : canonical_dump(r);
  };
  std::vector<Rule> rules;
  for (const json& item : scenario.value("rules", json::array())) {
    Rule rule;
    const std::string role = item.value("role", "*");
    if (role != "*") rule.role = role_from_string(role);
    rule.contains = item.value("contains", "");
    if (item.contains("regex")) {
      rule.pattern_text = item.at("regex").get<std::string>();
      try {
        rule.pattern.emplace(rule.pattern_text, std::regex::ECMAScript);
      } catch (const std::regex_error& e) {
        fail(ErrorCode::configuration_error, "bad regex '" + rule.pattern_text + "': " + e.what());
      }
    }
    if (!item.contains("response")) {
      fail(ErrorCode::configuration_error, "scripted rule without response");
    }
    rule.response = response_text(item.at("response"));
    if (item.contains("usage")) rule.usage = usage_from_json(item.at("usage"));
    rules.push_back(std::move(rule));
  }
  std::optional<TokenUsage> fallback_usage;
  std::string fallback;
  if (scenario.contains("default")) {
    const json& d = scenario.at("default");
    if (d.is_object() && d.contains("response")) {
      fallback = response_text(d.at("response"));
      if (d.contains("usage")) fallback_usage = usage_from_json(d.at("usage"));
    } else {
      fallback = response_text(d);
    }
  }
  return ScriptedBackend(scenario.value("id", "scripted"), std::move(rules), std::move(fallback),
                         fallback_usage);
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_text_file(path)));
  } catch (const json::exception& e) {
    fail(ErrorCode::configuration_error, path.string() + ": " + e.what());
  }
}

ChatResponse ScriptedBackend::send(const ChatRequest& request) {
  const std::string haystack = request.system_prompt + "\n" + request.user_prompt;
  for (const Rule& rule : rules_) {
    if (rule.role && *rule.role != request.role) continue;
    if (!rule.contains.empty() && haystack.find(rule.contains) == std::string::npos) continue;
    if (rule.pattern && !std::regex_search(haystack, *rule.pattern)) continue;
    ChatResponse response{rule.response, {}, id_};
    response.usage = rule.usage.value_or(
        TokenUsage{count_tokens(haystack), count_tokens(rule.response)});
    return response;
  }
  ChatResponse response{fallback_, {}, id_};
  response.usage = fallback_usage_.value_or(
      TokenUsage{count_tokens(haystack), count_tokens(fallback_)});
  return response;
}

// ---------------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)), audit_(options_.audit_file) {
  if (!backend_) {
    fail(ErrorCode::configuration_error, "gateway requires a backend");
  }
  require(options_.max_attempts >= 1, "max_attempts must be >= 1");
  require(options_.repair_attempts >= 0, "repair_attempts must be >= 0");
}

std::uint64_t Gateway::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  require(!request.user_prompt.empty(), "user prompt must be non-empty");
  require(!request.system_prompt.empty(), "system prompt must be non-empty");
  require(request.temperature >= 0.0 && request.temperature <= 2.0,
          "temperature must lie in [0, 2]");
  require(request.max_output_tokens > 0, "max_output_tokens must be positive");

  json record{{"role", to_string(request.role)},
              {"backend", backend_->id()},
              {"system_prompt", request.system_prompt},
              {"user_prompt", request.user_prompt},
              {"temperature", request.temperature},
              {"response_schema", request.response_schema},
              {"at", options_.clock.now()}};
  auto backoff = options_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    try {
      ChatResponse response = backend_->send(request);
      if (response.usage.prompt_tokens < 0 || response.usage.completion_tokens < 0) {
        fail(ErrorCode::backend_error, "backend reported negative usage");
      }
      {
        std::lock_guard lock(mutex_);
        ++calls_;
      }
      record["attempts"] = attempt;
      record["response"] = response.text;
      record["usage"] = to_json(response.usage);
      audit_.append(record);
      return response;
    } catch (const TransportError& e) {
      last_error = e.what();
      if (attempt < options_.max_attempts && backoff.count() > 0) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    } catch (const Error& e) {
      record["attempts"] = attempt;
      record["error"] = e.what();
      audit_.append(record);
      throw;
    }
  }
  record["attempts"] = options_.max_attempts;
  record["error"] = last_error;
  audit_.append(record);
  fail(ErrorCode::backend_error, "backend failed after " + std::to_string(options_.max_attempts) +
                                     " attempts: " + last_error);
}

StructuredReply Gateway::complete_structured(ChatRequest request, const ReplyValidator& validate) {
  StructuredReply reply;
  const std::string original_prompt = request.user_prompt;
  std::string problem;
  for (int attempt = 0; attempt <= options_.repair_attempts; ++attempt) {
    if (attempt > 0) {
      request.user_prompt = original_prompt +
                            "\n\nYour previous reply was rejected: " + problem +
                            "\nReply with a single JSON document matching schema " +
                            request.response_schema + ".";
    }
    const ChatResponse response = complete(request);
    reply.usage += response.usage;
    reply.raw_text = response.text;
    reply.prompt = request.user_prompt;
    try {
      reply.document = extract_json_document(response.text);
      validate(reply.document);
      return reply;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::protocol_error && e.code() != ErrorCode::validation_error) {
        throw;
      }
      problem = e.what();
    } catch (const json::exception& e) {
      problem = e.what();
    }
  }
  fail(ErrorCode::protocol_error, "malformed " + request.response_schema + " reply after " +
                                      std::to_string(options_.repair_attempts) +
                                      " repair attempts: " + problem);
}

}  // namespace mmia

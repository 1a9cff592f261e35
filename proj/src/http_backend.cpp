#include <cstdlib>

#include "httplib.h"
#include "mmia/error.hpp"
#include "mmia/gateway.hpp"

namespace mmia {

namespace {

std::string env_or_empty(const char* name) {
  const char* value = std::getenv(name);
  return value ? value : "";
}

// Splits "https://host:port/base" into the origin and the base path.
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    fail(ErrorCode::configuration_error, "backend url needs a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {url, ""};
  }
  std::string base = url.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {url.substr(0, path_start), base};
}

}  // namespace

HttpBackend::HttpBackend(Settings settings) : settings_(std::move(settings)) {
  if (settings_.url.empty() || settings_.model.empty()) {
    fail(ErrorCode::configuration_error,
         "HTTP backend needs MMIA_BACKEND_URL and MMIA_BACKEND_MODEL");
  }
  split_url(settings_.url);
}

HttpBackend::Settings HttpBackend::settings_from_env() {
  Settings s;
  s.url = env_or_empty("MMIA_BACKEND_URL");
  s.api_key = env_or_empty("MMIA_BACKEND_KEY");
  s.model = env_or_empty("MMIA_BACKEND_MODEL");
  return s;
}

ChatResponse HttpBackend::send(const ChatRequest& request) {
  const auto [origin, base] = split_url(settings_.url);
  httplib::Client client(origin);
  client.set_connection_timeout(settings_.timeout_seconds, 0);
  client.set_read_timeout(settings_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!settings_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + settings_.api_key);
  }
  json body{{"model", settings_.model},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens},
            {"messages",
             json::array({json{{"role", "system"}, {"content", request.system_prompt}},
                          json{{"role", "user"}, {"content", request.user_prompt}}})}};
  if (!request.response_schema.empty()) {
    body["response_format"] = json{{"type", "json_object"}};
  }
  auto result = client.Post(base + "/chat/completions", headers, body.dump(), "application/json");
  if (!result) {
    throw TransportError("transport failure: " + httplib::to_string(result.error()));
  }
  if (result->status >= 500) {
    throw TransportError("server error " + std::to_string(result->status));
  }
  if (result->status >= 400) {
    fail(ErrorCode::backend_error,
         "backend rejected request with " + std::to_string(result->status) + ": " + result->body);
  }
  try {
    const json reply = json::parse(result->body);
    ChatResponse response;
    response.backend_id = id();
    response.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    if (reply.contains("usage")) {
      response.usage.prompt_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
      response.usage.completion_tokens =
          reply["usage"].value("completion_tokens", std::int64_t{0});
    } else {
      response.usage = {count_tokens(request.system_prompt + "\n" + request.user_prompt),
                        count_tokens(response.text)};
    }
    return response;
  } catch (const json::exception& e) {
    fail(ErrorCode::backend_error, std::string("unreadable chat-completions reply: ") + e.what());
  }
}

}  // namespace mmia

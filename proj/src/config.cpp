#include "mmia/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <sstream>

#include "mmia/error.hpp"
#include "mmia/grounded_backend.hpp"
#include "mmia/prompts.hpp"

#ifndef MMIA_VERSION
#define MMIA_VERSION "0.0.0"
#endif

namespace mmia {

std::string_view version() { return MMIA_VERSION; }

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::grounded: return "grounded";
    case BackendKind::scripted: return "scripted";
    case BackendKind::http: return "http";
  }
  return "grounded";
}

std::string_view to_string(VerifierMode mode) {
  return mode == VerifierMode::deterministic ? "deterministic" : "llm";
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  fail(ErrorCode::configuration_error, "config key '" + key + "': '" + value + "' is not " + expected);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "a number");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double out = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size()) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "a boolean");
}

std::string env_name(const std::string& key) {
  std::string out = "MMIA_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"backend", "grounded | scripted | http"},
      {"backend.scenario", "scripted backend scenario file (scenario_v1 JSON)"},
      {"backend.url", "chat-completions base URL, e.g. https://host/v1"},
      {"backend.model", "model name sent to the endpoint"},
      {"backend.key", "bearer token for the endpoint"},
      {"backend.timeout_seconds", "per-request timeout"},
      {"verifier", "deterministic | llm"},
      {"consensus.n", "audits per chain"},
      {"consensus.rule", "unanimity | majority"},
      {"similarity_threshold", "theorem match threshold in [0, 1]"},
      {"budget.max_depth", "default decomposition depth cap"},
      {"budget.max_steps", "default reasoning step cap"},
      {"data_dir", "directory for the JSONL stores"},
      {"packs_dir", "scenario pack directory (default: bundled packs)"},
      {"web_fixtures", "directory of canned web-search results"},
      {"seed_pack_axioms", "approve the pack rules on first start"},
      {"auto_approve_chain_theorems", "certified chains become approved theorems"},
      {"replay", "frozen timestamps for reproducible output"},
      {"seed", "default seed for generated suites"},
      {"host", "service bind address"},
      {"port", "service port"},
      {"workers", "request worker threads"},
      {"api_key", "static key required in X-API-Key (empty: open)"},
  };
  return keys;
}

void apply_config_value(EngineConfig& c, const std::string& key, const std::string& value) {
  if (key == "backend") {
    if (value == "grounded") c.backend = BackendKind::grounded;
    else if (value == "scripted") c.backend = BackendKind::scripted;
    else if (value == "http") c.backend = BackendKind::http;
    else bad_value(key, value, "grounded, scripted or http");
  } else if (key == "backend.scenario") {
    c.backend_scenario = value;
  } else if (key == "backend.url") {
    c.backend_url = value;
  } else if (key == "backend.model") {
    c.backend_model = value;
  } else if (key == "backend.key") {
    c.backend_key = value;
  } else if (key == "backend.timeout_seconds") {
    c.backend_timeout_seconds = parse_number<int>(key, value);
  } else if (key == "verifier") {
    if (value == "deterministic") c.verifier = VerifierMode::deterministic;
    else if (value == "llm") c.verifier = VerifierMode::llm;
    else bad_value(key, value, "deterministic or llm");
  } else if (key == "consensus.n") {
    c.consensus_n = parse_number<int>(key, value);
  } else if (key == "consensus.rule") {
    try {
      c.consensus_rule = consensus_rule_from_string(value);
    } catch (const Error&) {
      bad_value(key, value, "unanimity or majority");
    }
  } else if (key == "similarity_threshold") {
    c.similarity_threshold = parse_real(key, value);
  } else if (key == "budget.max_depth") {
    c.budget.max_depth = parse_number<int>(key, value);
  } else if (key == "budget.max_steps") {
    c.budget.max_steps = parse_number<int>(key, value);
  } else if (key == "data_dir") {
    c.data_dir = value;
  } else if (key == "packs_dir") {
    c.packs_dir = value;
  } else if (key == "web_fixtures") {
    c.web_fixtures = value;
  } else if (key == "seed_pack_axioms") {
    c.seed_pack_axioms = parse_bool(key, value);
  } else if (key == "auto_approve_chain_theorems") {
    c.auto_approve_chain_theorems = parse_bool(key, value);
  } else if (key == "replay") {
    c.replay = parse_bool(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "host") {
    c.host = value;
  } else if (key == "port") {
    c.port = parse_number<int>(key, value);
  } else if (key == "workers") {
    c.workers = parse_number<int>(key, value);
  } else if (key == "api_key") {
    c.api_key = value;
  } else {
    fail(ErrorCode::configuration_error, "unknown config key '" + key + "'");
  }
}

EngineConfig parse_config_text(std::string_view text) {
  EngineConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::configuration_error, "config line " + std::to_string(number) + ": expected key = value");
    }
    apply_config_value(c, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
  }
  return c;
}

void apply_env_overrides(EngineConfig& config) {
  for (const auto& [key, doc] : config_keys()) {
    if (const char* value = std::getenv(env_name(key).c_str())) apply_config_value(config, key, trim(value));
  }
}

EngineConfig load_config(const std::filesystem::path& file) {
  EngineConfig c;
  if (!file.empty()) {
    if (!std::filesystem::exists(file)) {
      fail(ErrorCode::configuration_error, "config file not found: " + file.string());
    }
    c = parse_config_text(read_text_file(file));
  }
  apply_env_overrides(c);
  validate(c);
  return c;
}

void validate(const EngineConfig& c) {
  auto bad = [](const std::string& m) { fail(ErrorCode::configuration_error, m); };
  if (c.consensus_n < 1 || c.consensus_n > 15) bad("consensus.n must lie in 1..15");
  if (c.verifier == VerifierMode::llm && c.consensus_n > kAuditPromptVariants) {
    bad("an LLM verifier supports at most " + std::to_string(kAuditPromptVariants) + " audits");
  }
  if (c.verifier == VerifierMode::llm && c.backend == BackendKind::grounded) {
    bad("the grounded backend does not answer audit prompts; use the deterministic verifier");
  }
  if (!(c.similarity_threshold >= 0.0 && c.similarity_threshold <= 1.0)) bad("similarity_threshold must lie in [0, 1]");
  if (c.budget.max_depth < 1 || c.budget.max_depth > 32) bad("budget.max_depth must lie in 1..32");
  if (c.budget.max_steps < 1 || c.budget.max_steps > 100000) bad("budget.max_steps must lie in 1..100000");
  if (c.backend_timeout_seconds < 1) bad("backend.timeout_seconds must be positive");
  if (c.port < 0 || c.port > 65535) bad("port must lie in 0..65535");
  if (c.workers < 1 || c.workers > 256) bad("workers must lie in 1..256");
  if (c.data_dir.empty()) bad("data_dir must not be empty");
  if (c.backend == BackendKind::scripted && c.backend_scenario.empty()) bad("scripted backend needs backend.scenario");
  if (c.backend == BackendKind::http && (c.backend_url.empty() || c.backend_model.empty())) {
    bad("http backend needs backend.url and backend.model");
  }
}

std::string to_config_text(const EngineConfig& c) {
  std::ostringstream out;
  auto put = [&](const std::string& k, const std::string& v) { out << k << " = " << v << "\n"; };
  put("backend", std::string(to_string(c.backend)));
  if (!c.backend_scenario.empty()) put("backend.scenario", c.backend_scenario.string());
  if (!c.backend_url.empty()) put("backend.url", c.backend_url);
  if (!c.backend_model.empty()) put("backend.model", c.backend_model);
  put("backend.timeout_seconds", std::to_string(c.backend_timeout_seconds));
  put("verifier", std::string(to_string(c.verifier)));
  put("consensus.n", std::to_string(c.consensus_n));
  put("consensus.rule", std::string(to_string(c.consensus_rule)));
  std::ostringstream threshold;
  threshold << c.similarity_threshold;
  put("similarity_threshold", threshold.str());
  put("budget.max_depth", std::to_string(c.budget.max_depth));
  put("budget.max_steps", std::to_string(c.budget.max_steps));
  put("data_dir", c.data_dir.string());
  if (!c.packs_dir.empty()) put("packs_dir", c.packs_dir.string());
  if (!c.web_fixtures.empty()) put("web_fixtures", c.web_fixtures.string());
  put("seed_pack_axioms", c.seed_pack_axioms ? "true" : "false");
  put("auto_approve_chain_theorems", c.auto_approve_chain_theorems ? "true" : "false");
  put("replay", c.replay ? "true" : "false");
  put("seed", std::to_string(c.seed));
  put("host", c.host);
  put("port", std::to_string(c.port));
  put("workers", std::to_string(c.workers));
  return out.str();
}

std::shared_ptr<Backend> make_backend(const EngineConfig& c, const PackRegistry& packs) {
  switch (c.backend) {
    case BackendKind::grounded:
      return std::make_shared<GroundedBackend>(packs);
    case BackendKind::scripted:
      return std::make_shared<ScriptedBackend>(ScriptedBackend::from_file(c.backend_scenario));
    case BackendKind::http: {
      HttpBackend::Settings s;
      s.url = c.backend_url;
      s.model = c.backend_model;
      s.api_key = c.backend_key;
      s.timeout_seconds = c.backend_timeout_seconds;
      return std::make_shared<HttpBackend>(s);
    }
  }
  fail(ErrorCode::configuration_error, "unknown backend");
}

ConsensusPolicy consensus_policy(const EngineConfig& c, const std::string& backend_id) {
  ConsensusPolicy policy;
  policy.n = c.consensus_n;
  policy.rule = c.consensus_rule;
  const std::string id = c.verifier == VerifierMode::deterministic ? "deterministic" : backend_id;
  for (int v = 1; v <= c.consensus_n; ++v) policy.diversity.emplace_back("v" + std::to_string(v), id);
  return policy;
}

std::vector<std::unique_ptr<Verifier>> make_verifiers(const EngineConfig& c, Gateway& gateway) {
  std::vector<std::unique_ptr<Verifier>> out;
  for (int v = 1; v <= c.consensus_n; ++v) {
    if (c.verifier == VerifierMode::deterministic) {
      out.push_back(std::make_unique<DeterministicVerifier>(
          c.consensus_n == 1 ? "deterministic" : "deterministic:v" + std::to_string(v)));
    } else {
      out.push_back(std::make_unique<LlmVerifier>(gateway, v, gateway.backend().id()));
    }
  }
  return out;
}

}  // namespace mmia

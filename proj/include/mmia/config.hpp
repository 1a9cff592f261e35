#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mmia/auditor.hpp"
#include "mmia/gateway.hpp"
#include "mmia/log.hpp"
#include "mmia/scenario_packs.hpp"

namespace mmia {

std::string_view version();

enum class BackendKind { grounded, scripted, http };
enum class VerifierMode { deterministic, llm };

std::string_view to_string(BackendKind kind);
std::string_view to_string(VerifierMode mode);

// Flat `key = value` file; every key can be overridden by MMIA_<KEY> with
// dots turned into underscores (consensus.n -> MMIA_CONSENSUS_N).
struct EngineConfig {
  BackendKind backend = BackendKind::grounded;
  std::filesystem::path backend_scenario;  // scripted backend
  std::string backend_url;                 // http backend
  std::string backend_model;
  std::string backend_key;
  int backend_timeout_seconds = 60;

  VerifierMode verifier = VerifierMode::deterministic;
  int consensus_n = 3;
  ConsensusRule consensus_rule = ConsensusRule::unanimity;

  double similarity_threshold = 0.80;
  Budget budget;

  std::filesystem::path data_dir = "mmia-data";
  std::filesystem::path packs_dir;  // empty: bundled packs
  std::filesystem::path web_fixtures;
  bool seed_pack_axioms = true;
  bool auto_approve_chain_theorems = false;
  bool replay = false;
  std::uint64_t seed = 0;

  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 4;
  std::string api_key;
};

// Known keys with their one-line documentation, in file order.
const std::vector<std::pair<std::string, std::string>>& config_keys();

// configuration_error on unknown keys, malformed lines or values.
void apply_config_value(EngineConfig& config, const std::string& key, const std::string& value);
EngineConfig parse_config_text(std::string_view text);

// Applies MMIA_* overrides for every known key present in the environment.
void apply_env_overrides(EngineConfig& config);

// File (optional) then environment, then validate().
EngineConfig load_config(const std::filesystem::path& file);

// configuration_error when a value is out of range or the combination is
// unusable (an LLM verifier needs a model backend).
void validate(const EngineConfig& config);

// Flat text form that parse_config_text reads back unchanged.
std::string to_config_text(const EngineConfig& config);

std::shared_ptr<Backend> make_backend(const EngineConfig& config, const PackRegistry& packs);

ConsensusPolicy consensus_policy(const EngineConfig& config, const std::string& backend_id);

// One verifier per consensus audit, in policy order.
std::vector<std::unique_ptr<Verifier>> make_verifiers(const EngineConfig& config, Gateway& gateway);

}  // namespace mmia

#pragma once

#include "mmia/gateway.hpp"
#include "mmia/scenario_packs.hpp"

namespace mmia {

// Offline, deterministic backend. It answers engine prompts from the
// <context> payload using the scenario packs and the rule evaluator, so runs
// are reproducible without a model endpoint. Audit prompts are not served.
class GroundedBackend : public Backend {
 public:
  explicit GroundedBackend(const PackRegistry& packs);

  std::string id() const override { return "grounded"; }
  ChatResponse send(const ChatRequest& request) override;

  // The reply document alone, for callers that skip the transport.
  json answer(const std::string& schema, const json& context) const;

 private:
  const PackRegistry& packs_;
};

}  // namespace mmia

#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "mmia/gateway.hpp"
#include "mmia/knowledge_base.hpp"
#include "mmia/log.hpp"

namespace mmia {

struct EngineOptions {
  Clock clock;
  double temperature = 0.0;
  // Fixture directory for the web-search stub: <hex fnv1a64(query)>.json.
  std::filesystem::path web_fixtures;
};

// Per-run bookkeeping threaded through the recursion.
struct ExecutionState {
  int next_index = 0;
  int max_steps = 64;
  int max_depth = 5;
  // Claims of finished steps, in execution order.
  std::vector<std::pair<int, Claim>> prior_claims;
};

class ReasoningEngine {
 public:
  ReasoningEngine(Gateway& gateway, std::shared_ptr<const KbSnapshot> kb,
                  EngineOptions options = {});

  AtomicityVerdict assess_atomicity(const TaskSpec& task, int depth, TokenUsage& usage);
  Plan plan_decompose(const TaskSpec& task, TokenUsage& usage);

  // Runs the analyze -> plan -> execute -> aggregate loop. Failures are
  // recorded in the returned log (status + error) rather than thrown, except
  // for invalid input (validation_error).
  ExecutionLog execute_task(const TaskSpec& task);

  ReasoningStep execute_atomic(const TaskSpec& subtask, Tool tool, ExecutionState& state);

  // Throws incomplete_input when any sub-log lacks a final answer.
  FinalAnswer aggregate(const TaskSpec& task, const Plan& plan,
                        const std::vector<ExecutionLog>& sub_results, TokenUsage& usage);

  // Approved rules relevant to a subtask: the goal is the rule's verdict, or
  // the rule mentions a goal or need path without deriving one of the needs.
  std::vector<const Axiom*> retrieve(const TaskSpec& task) const;

  const KbSnapshot& kb() const { return *kb_; }

 private:
  ExecutionLog run(const TaskSpec& task, int depth, ExecutionState& state);

  Gateway& gateway_;
  std::shared_ptr<const KbSnapshot> kb_;
  EngineOptions options_;
};

// Stable 64-bit FNV-1a, used for fixture keys and feature hashing.
std::uint64_t fnv1a64(std::string_view text);

// Claim values from model replies: rule-literal syntax when it parses,
// otherwise plain text.
Value lenient_value(const json& value);

// Numeric order of ids within one prefix: DRG-A2 < DRG-A10.
bool axiom_id_less(std::string_view a, std::string_view b);

}  // namespace mmia

#pragma once

// Execution-log data model shared by the engine, the auditor and the stores.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmia/gateway.hpp"
#include "mmia/json_util.hpp"
#include "mmia/knowledge_base.hpp"
#include "mmia/rules.hpp"

namespace mmia {

enum class Tool { direct_query, kb_retrieval, web_search };

std::string_view to_string(Tool tool);
Tool tool_from_string(std::string_view text);

struct Budget {
  int max_depth = 5;
  int max_steps = 64;
  friend bool operator==(const Budget&, const Budget&) = default;
};

struct TaskSpec {
  std::string id;
  std::string description;
  std::string scenario = "generic";
  FactSet facts;
  std::vector<Document> documents;
  std::vector<std::string> goals;  // fact paths or "<RULE-ID>.verdict"
  std::vector<std::string> needs;  // fact paths consumed
  std::optional<Tool> tool;        // planner's suggestion for subtasks
  Budget budget;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// Throws validation_error on an empty description/id, unknown scenario or
// non-positive budgets.
void validate_task(const TaskSpec& task);

struct AtomicityVerdict {
  bool atomic = false;
  std::optional<Tool> tool;
  std::string rationale;
  bool forced = false;  // set when the depth budget forced the decision
};

struct Plan {
  std::string task_id;
  std::vector<TaskSpec> subtasks;
  std::vector<std::pair<int, int>> dependencies;  // (from, to): `to` consumes `from`
  std::string rationale;
};

// Throws protocol_error on empty plans, out-of-range indices or cycles.
void validate_plan(const Plan& plan);
// Subtask indices in execution order: topological, ties by index.
std::vector<int> execution_order(const Plan& plan);

enum class EvidenceKind { axiom, theorem, prior_step, external_document, web_result };

std::string_view to_string(EvidenceKind kind);
EvidenceKind evidence_kind_from_string(std::string_view text);

struct EvidenceRef {
  EvidenceKind kind = EvidenceKind::axiom;
  std::string target_id;
  std::string excerpt;
  friend bool operator==(const EvidenceRef&, const EvidenceRef&) = default;
};

struct ReasoningStep {
  int index = 0;  // global across the log tree, execution order
  std::string subtask_id;
  Tool tool = Tool::direct_query;
  std::string prompt;
  std::vector<EvidenceRef> evidence;
  std::string conclusion;
  std::vector<Claim> atoms;
  std::string raw_output;
  TokenUsage usage;
};

struct FinalAnswer {
  std::string text;
  std::vector<Claim> atoms;
};

enum class Mode { de_novo, rag_match };
enum class RunStatus { complete, incomplete, failed };

std::string_view to_string(Mode mode);
std::string_view to_string(RunStatus status);

struct RunError {
  std::string code;
  std::string message;
};

struct ExecutionLog {
  TaskSpec task;
  std::optional<AtomicityVerdict> atomicity;
  std::optional<Plan> plan;
  std::vector<ReasoningStep> steps;
  std::vector<ExecutionLog> children;
  std::optional<FinalAnswer> final_answer;
  Mode mode = Mode::de_novo;
  RunStatus status = RunStatus::complete;
  std::optional<RunError> error;
  std::string started;
  std::string finished;
  // Atomicity, planning, aggregation and dispatch calls of this node.
  TokenUsage control_usage;
  std::int64_t total_tokens = 0;
  int depth = 1;
};

// Sum of step, control and child usage, recomputed from scratch.
std::int64_t recount_tokens(const ExecutionLog& log);

// Steps of the whole tree, children before the node's own steps, in index order.
std::vector<const ReasoningStep*> flatten_steps(const ExecutionLog& log);

json to_json(const Budget& budget);
json to_json(const FactSet& facts);
json to_json(const TaskSpec& task);
json to_json(const Plan& plan);
json to_json(const EvidenceRef& ref);
json to_json(const Claim& claim);
json to_json(const ReasoningStep& step);
json to_json(const FinalAnswer& answer);
json to_json(const ExecutionLog& log);

FactSet facts_from_json(const json& value);
TaskSpec task_from_json(const json& value);
Plan plan_from_json(const json& value);
Claim claim_from_json(const json& value);
EvidenceRef evidence_from_json(const json& value);
ExecutionLog log_from_json(const json& value);

// Accepts JSON booleans and numbers, or a string in rule-literal syntax.
Value value_from_json(const json& value);

}  // namespace mmia

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mmia/gateway.hpp"
#include "mmia/knowledge_base.hpp"
#include "mmia/log.hpp"
#include "mmia/prompts.hpp"

namespace mmia {

class ReviewQueue;

enum class IssueKind { plan_mismatch, missing_evidence, logical_fallacy, aggregation_gap, dangling_citation };
std::string_view to_string(IssueKind kind);
IssueKind issue_kind_from_string(std::string_view text);

struct IssueLocation {
  enum class Kind { plan, step, aggregation };
  Kind kind = Kind::aggregation;
  int step_index = -1;  // step locations only
  std::string task_id;  // node the issue belongs to
};

struct AuditIssue {
  IssueLocation location;
  IssueKind kind = IssueKind::missing_evidence;
  std::string message;
  std::optional<std::string> cited_rule;
};

struct AuditReport {
  std::string log_id;
  std::vector<AuditIssue> issues;
  std::string verifier_id;
  TokenUsage usage;

  bool certified() const { return issues.empty(); }
};

json to_json(const AuditIssue& issue);
json to_json(const AuditReport& report);  // "audit_v1"
AuditReport report_from_json(const json& value);

// Where a step sits in the log: the node that owns it and every step of the
// tree for prior-step lookups.
struct StepContext {
  const TaskSpec& task;
  const KbSnapshot& kb;
  const std::vector<const ReasoningStep*>& all_steps;
};

class Verifier {
 public:
  virtual ~Verifier() = default;
  virtual std::string id() const = 0;

  // Each check returns the issues it found; an empty list means ok.
  virtual std::vector<AuditIssue> check_plan(const ExecutionLog& node) = 0;
  virtual std::vector<AuditIssue> check_evidence(const ReasoningStep& step, const StepContext& ctx) = 0;
  virtual std::vector<AuditIssue> check_fallacy(const ReasoningStep& step, const StepContext& ctx) = 0;
  virtual std::vector<AuditIssue> check_aggregation(const ExecutionLog& node) = 0;

  // Whole-chain audit; the default runs verify_reasoning_chain with this verifier.
  virtual AuditReport audit(const ExecutionLog& log, const KbSnapshot& kb);
  // Tokens spent so far (LLM verifiers only).
  virtual TokenUsage usage() const { return {}; }
};

// Rule-grounded verifier: the reproducible reference semantics.
class DeterministicVerifier : public Verifier {
 public:
  explicit DeterministicVerifier(std::string id = "deterministic") : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  std::vector<AuditIssue> check_plan(const ExecutionLog& node) override;
  std::vector<AuditIssue> check_evidence(const ReasoningStep& step, const StepContext& ctx) override;
  std::vector<AuditIssue> check_fallacy(const ReasoningStep& step, const StepContext& ctx) override;
  std::vector<AuditIssue> check_aggregation(const ExecutionLog& node) override;

 private:
  std::string id_;
};

// Verifier backed by the auditor role, using prompt variant 1..3.
class LlmVerifier : public Verifier {
 public:
  LlmVerifier(Gateway& gateway, int variant, std::string backend_id);
  std::string id() const override;
  std::vector<AuditIssue> check_plan(const ExecutionLog& node) override;
  std::vector<AuditIssue> check_evidence(const ReasoningStep& step, const StepContext& ctx) override;
  std::vector<AuditIssue> check_fallacy(const ReasoningStep& step, const StepContext& ctx) override;
  std::vector<AuditIssue> check_aggregation(const ExecutionLog& node) override;
  TokenUsage usage() const override { return usage_; }

 private:
  json ask(const std::string& kind, const Bindings& bindings, const json& context);

  Gateway& gateway_;
  int variant_;
  std::string backend_id_;
  TokenUsage usage_;
};

// Rendered plan-audit prompt for one plan node (variant 1..3).
std::string plan_audit_prompt(const ExecutionLog& node, int variant);

// Always returns the same vote. Used for scripted consensus scenarios.
class FixedVerifier : public Verifier {
 public:
  FixedVerifier(std::string id, bool pass) : id_(std::move(id)), pass_(pass) {}
  std::string id() const override { return id_; }
  std::vector<AuditIssue> check_plan(const ExecutionLog&) override { return {}; }
  std::vector<AuditIssue> check_evidence(const ReasoningStep&, const StepContext&) override { return {}; }
  std::vector<AuditIssue> check_fallacy(const ReasoningStep&, const StepContext&) override { return {}; }
  std::vector<AuditIssue> check_aggregation(const ExecutionLog&) override { return {}; }
  AuditReport audit(const ExecutionLog& log, const KbSnapshot& kb) override;

 private:
  std::string id_;
  bool pass_;
};

// Wraps another verifier and flips its final verdict with probability p.
class FlippingVerifier : public Verifier {
 public:
  FlippingVerifier(std::shared_ptr<Verifier> inner, double p, std::uint64_t seed);
  std::string id() const override { return "flipping(" + inner_->id() + ")"; }
  std::vector<AuditIssue> check_plan(const ExecutionLog& node) override { return inner_->check_plan(node); }
  std::vector<AuditIssue> check_evidence(const ReasoningStep& s, const StepContext& c) override {
    return inner_->check_evidence(s, c);
  }
  std::vector<AuditIssue> check_fallacy(const ReasoningStep& s, const StepContext& c) override {
    return inner_->check_fallacy(s, c);
  }
  std::vector<AuditIssue> check_aggregation(const ExecutionLog& node) override {
    return inner_->check_aggregation(node);
  }
  AuditReport audit(const ExecutionLog& log, const KbSnapshot& kb) override;

 private:
  std::shared_ptr<Verifier> inner_;
  std::bernoulli_distribution flip_;
  std::mt19937_64 rng_;
};

// Plan checks (post-order), then evidence and fallacy per step in index
// order, then aggregation (post-order). Incomplete or empty chains are
// flagged without inspection. Verifier errors abort with audit_error.
AuditReport verify_reasoning_chain(const ExecutionLog& log, const KbSnapshot& kb, Verifier& verifier);

enum class ConsensusRule { unanimity, majority };
std::string_view to_string(ConsensusRule rule);
ConsensusRule consensus_rule_from_string(std::string_view text);

struct ConsensusPolicy {
  int n = 3;
  ConsensusRule rule = ConsensusRule::unanimity;
  // (prompt variant, backend id) per audit; pairwise distinct when n > 1.
  std::vector<std::pair<std::string, std::string>> diversity;

  static ConsensusPolicy defaults(const std::string& backend_id = "deterministic");
};

void validate_policy(const ConsensusPolicy& policy);

enum class ConsensusOutcome { certified, flagged, disagreement };
std::string_view to_string(ConsensusOutcome outcome);

struct ConsensusResult {
  std::vector<AuditReport> reports;
  ConsensusOutcome outcome = ConsensusOutcome::flagged;
  std::optional<std::string> promoted_theorem_id;
  std::optional<std::string> review_entry_id;
};

json to_json(const ConsensusResult& result);
ConsensusResult consensus_from_json(const json& value);

// Folds votes under the rule. Pure; exposed for property tests.
ConsensusOutcome decide_consensus(const std::vector<bool>& passes, ConsensusRule rule);

struct ConsensusHooks {
  ReviewQueue* queue = nullptr;  // disagreement -> enqueued
  KnowledgeBase* kb = nullptr;   // certified -> theorem promotion
  bool auto_approve_chain_theorems = false;
  // Process template attached to promoted theorems; empty skips indexing.
  std::function<std::string(const TaskSpec&)> make_template;
  Clock clock;
};

// Runs one audit per verifier, sequentially, in order.
ConsensusResult consensus_audit(const ExecutionLog& log, const KbSnapshot& kb,
                                const std::vector<Verifier*>& verifiers,
                                const ConsensusPolicy& policy, const ConsensusHooks& hooks = {});

// Theorem distilled from a certified chain: IF the task facts the cited rules
// talk about THEN the final answer atoms. nullopt when nothing can be stated.
std::optional<Axiom> theorem_from_chain(const ExecutionLog& log, const KbSnapshot& kb);

// Adds the theorem (candidate, or approved when auto_approve) unless an
// equivalent live record exists. Returns the stored or existing id.
std::optional<std::string> promote_chain(const ExecutionLog& log, KnowledgeBase& kb, bool auto_approve,
                                         const std::string& template_text, const Clock& clock);

}  // namespace mmia

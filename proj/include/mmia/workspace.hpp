#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mmia/auditor.hpp"
#include "mmia/benchmark.hpp"
#include "mmia/config.hpp"
#include "mmia/cost_model.hpp"
#include "mmia/knowledge_base.hpp"
#include "mmia/retrieval.hpp"
#include "mmia/review_queue.hpp"
#include "mmia/scenario_packs.hpp"

namespace mmia {

struct TaskRecord {
  std::string run_id;  // run-<n>
  ExecutionLog log;
  ConsensusResult consensus;
  CostEntry cost;
};

json task_summary(const TaskRecord& record);

struct IngestResult {
  std::vector<Axiom> candidates;           // every stored record, rejected ones included
  std::vector<std::string> review_entries;  // queue ids of the open candidates
  TokenUsage usage;
};

struct ReviewOutcome {
  ReviewQueueEntry entry;
  std::optional<Axiom> axiom;                   // candidate-axiom entries
  std::optional<std::string> follow_up_entry;  // queue id of an edited version
};

// Everything a running service or one CLI invocation needs, backed by
// append-only JSONL stores under config.data_dir:
//   kb.jsonl, kb_trail.jsonl, review_queue.jsonl, logs.jsonl, audits.jsonl,
//   cost_ledger.jsonl, calls.jsonl, bench/<run>/...
// Stores are reloaded on construction. Safe for concurrent use.
class Workspace {
 public:
  // startup_error when the data directory cannot be created or written.
  explicit Workspace(EngineConfig config);
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  const EngineConfig& config() const { return config_; }
  const PackRegistry& packs() const { return packs_; }
  const Clock& clock() const { return clock_; }
  KnowledgeBase& kb() { return kb_; }
  ReviewQueue& queue() { return queue_; }
  CostLedger& ledger() { return ledger_; }
  Gateway& gateway() { return *gateway_; }

  // TaskSpec from a request body; the configured budget applies when the
  // body has none.
  TaskSpec task_from_request(const json& body) const;

  // Dual-mode execution, consensus audit, ledger entry and persistence.
  // Certified chains are promoted; disagreements and new candidates are queued.
  TaskRecord submit_task(const TaskSpec& task);
  std::optional<TaskRecord> find_task(const std::string& run_id) const;
  std::vector<std::string> task_ids() const;

  // Consensus audit with the configured verifiers and no side effects.
  ConsensusResult audit_log(const ExecutionLog& log);

  IngestResult ingest_document(const Document& document, const std::string& scenario);
  std::vector<Axiom> list_axioms(std::optional<AxiomStatus> status = std::nullopt) const;

  // Body: {decision, reviewer, rule_text?, reason?, note?}. Candidate entries
  // take approve | reject | edit, disagreements certify | flag.
  // not_found, state_error (already resolved) or validation_error.
  ReviewOutcome resolve_review(const std::string& entry_id, const json& body);
  // Reviews an axiom directly, closing its open queue entry if it has one.
  Axiom review_axiom(const std::string& ref, const ReviewDecision& decision, const std::string& reviewer);

  // Runs a suite and writes its outputs to `out_dir` (default bench/<run>).
  BenchmarkRun run_bench(const std::vector<BenchmarkCase>& suite, EngineMode mode,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt);
  std::optional<json> bench_metrics(const std::string& run_id) const;

 private:
  std::string next_run_id();
  std::string next_bench_id();

  EngineConfig config_;
  Clock clock_;
  PackRegistry packs_;
  KnowledgeBase kb_;
  ReviewQueue queue_;
  CostLedger ledger_;
  std::unique_ptr<Gateway> gateway_;
  ConsensusPolicy policy_;
  VectorIndex index_;

  mutable std::mutex tasks_mutex_;
  std::map<std::string, TaskRecord> tasks_;
  std::uint64_t run_counter_ = 0;
  std::uint64_t bench_counter_ = 0;
  std::unique_ptr<JsonlWriter> logs_;
  std::unique_ptr<JsonlWriter> audits_;
  std::mutex review_mutex_;
};

}  // namespace mmia

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mmia/json_util.hpp"
#include "mmia/log.hpp"
#include "mmia/reasoning.hpp"
#include "mmia/retrieval.hpp"

namespace mmia {

// Exact fraction in lowest terms with a positive denominator. Overflow of
// the 64-bit representation is a validation_error, never silent.
class Rational {
 public:
  Rational(std::int64_t num = 0, std::int64_t den = 1);

  // "3500", "0.8", "-1.25", "4/5". validation_error on anything else.
  static Rational parse(std::string_view text);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  Rational operator+(const Rational& o) const;
  Rational operator-(const Rational& o) const;
  Rational operator*(const Rational& o) const;
  Rational operator/(const Rational& o) const;
  friend bool operator==(const Rational&, const Rational&) = default;
  std::strong_ordering operator<=>(const Rational& o) const;

  // "1100" or "11/35".
  std::string str() const;
  // Rounded half away from zero: decimal(1) of 11/35 is "0.3".
  std::string decimal(int places) const;
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

 private:
  std::int64_t num_;
  std::int64_t den_;
};

// Percentage with one decimal, e.g. 11/35 -> "31.4%".
std::string percent_text(const Rational& ratio);

struct PhaseSimConfig {
  std::int64_t n_initial = 100;
  std::int64_t n_mature = 100;
  Rational match_fraction{4, 5};
  std::int64_t denovo_tokens = 3500;
  std::int64_t match_tokens = 500;
};

// validation_error unless counts are positive, tokens non-negative with a
// positive de-novo cost, and 0 <= match_fraction <= 1.
void validate(const PhaseSimConfig& config);

struct PhaseRow {
  std::string phase;
  std::string task_type;
  Rational share;     // of the phase's tasks
  Rational tokens;    // average per task
  Rational relative;  // tokens relative to the initial average
};

struct PhaseReport {
  PhaseSimConfig config;
  Rational initial_average;
  Rational mature_average;
  Rational relative_cost;     // mature / initial
  Rational matched_relative;  // match / de novo, per matched task
  Rational total_tokens;      // both phases
  std::vector<PhaseRow> rows;
};

PhaseReport simulate_phases(const PhaseSimConfig& config);
json to_json(const PhaseReport& report);
std::string format_phase_table(const PhaseReport& report);

enum class DispatchMode { de_novo, rag_match };
std::string_view to_string(DispatchMode mode);
DispatchMode dispatch_mode_from_string(std::string_view text);

struct CostEntry {
  std::string task_id;
  DispatchMode mode = DispatchMode::de_novo;
  std::int64_t tokens = 0;
  double wall_seconds = 0.0;
  std::string scenario;
  std::optional<std::string> theorem_id;  // rag-match entries
  double similarity = 0.0;                // best theorem similarity seen
};

json to_json(const CostEntry& entry);  // "cost_v1"
CostEntry cost_entry_from_json(const json& value);

// Append-only per-task ledger; optionally persisted as JSONL.
class CostLedger {
 public:
  CostLedger() = default;
  explicit CostLedger(std::filesystem::path file);

  // ledger_error on a duplicate task id or negative tokens.
  void record(const CostEntry& entry);

  std::vector<CostEntry> entries() const;
  std::size_t size() const;
  bool contains(const std::string& task_id) const;
  std::int64_t total_tokens(std::optional<DispatchMode> mode = std::nullopt) const;
  // nullopt when no entry matches.
  std::optional<Rational> average_tokens(std::optional<DispatchMode> mode = std::nullopt) const;

 private:
  mutable std::shared_mutex mutex_;
  std::vector<CostEntry> entries_;
  std::unique_ptr<JsonlWriter> log_;
};

struct DispatchDecision {
  DispatchMode mode = DispatchMode::de_novo;
  MatchResult match;
};

// rag-match iff match_theorem reports matched.
DispatchDecision dispatch_mode(const TaskSpec& task, const KbSnapshot& kb, const VectorIndex& index,
                               double threshold, Gateway& gateway);

struct DualModeRun {
  ExecutionLog log;
  DispatchDecision decision;
  double wall_seconds = 0.0;  // zero under a frozen clock
};

// Dispatches, then answers from the matched theorem or runs the full loop.
// Matching calls are charged to the log's control usage either way.
DualModeRun execute_dual_mode(const TaskSpec& task, ReasoningEngine& engine, const VectorIndex& index,
                              double threshold, Gateway& gateway, const Clock& clock);

CostEntry ledger_entry(const DualModeRun& run);

}  // namespace mmia

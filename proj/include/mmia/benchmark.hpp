#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmia/auditor.hpp"
#include "mmia/gateway.hpp"
#include "mmia/knowledge_base.hpp"
#include "mmia/log.hpp"
#include "mmia/scenario_packs.hpp"

namespace mmia {

enum class GoldLabel { correct, erroneous };
std::string_view to_string(GoldLabel label);

struct InjectedError {
  std::string kind;
  json parameters = json::object();  // what changed: {"path": {"from": .., "to": ..}}
  std::string gold_rule;             // rule whose violation justifies the flag
};

struct BenchmarkCase {
  std::string id;
  std::string scenario;
  std::string template_id;
  std::uint64_t seed = 0;
  FactSet facts;
  std::vector<Document> documents;
  std::string narrative;  // only when generated with a backend
  GoldLabel gold = GoldLabel::correct;
  std::string ground_truth;  // expected adjudication label
  std::optional<InjectedError> injected;
  std::string provenance = "generated";
};

json to_json(const BenchmarkCase& c);  // "bench_v1"
BenchmarkCase case_from_json(const json& value);
std::vector<BenchmarkCase> read_suite(const std::filesystem::path& path);
void write_suite(const std::filesystem::path& path, const std::vector<BenchmarkCase>& suite);

std::vector<std::string> template_ids(std::string_view scenario);
std::vector<std::string> injector_kinds(std::string_view scenario);
// Injectors that can act on cases of this template.
std::vector<std::string> applicable_injectors(std::string_view template_id);

// Offline case from a template and seed. Template parameters override the
// seeded values (insurance: "enrollment_months"); a parameter that triggers
// an exclusion yields an erroneous case with its descriptor. With a gateway,
// a narrative is requested from the generator role.
BenchmarkCase generate_case(std::string_view scenario, std::string_view template_id, std::uint64_t seed,
                            const std::map<std::string, std::string>& params = {},
                            Gateway* gateway = nullptr);

// Applies one catalogued error to a gold-correct case.
BenchmarkCase inject_error(const BenchmarkCase& c, std::string_view kind, std::uint64_t seed);

inline constexpr int kDefaultSuiteSize = 40;
// Error count for a suite of `size` cases (20/20/25/30 percent).
int suite_error_count(std::string_view scenario, int size);
std::vector<BenchmarkCase> generate_suite(std::string_view scenario, std::uint64_t seed,
                                          int size = kDefaultSuiteSize);

TaskSpec task_for_case(const BenchmarkCase& c, const ScenarioPack& pack);

struct BaselineVerdict {
  bool flag = false;
  std::string justification;
  std::optional<std::string> cited_rule;
  TokenUsage usage;
};

inline constexpr int kBaselineTopK = 8;

// One prompt with the case facts and the top-k scenario rules by embedding
// similarity; one parsed verdict.
BaselineVerdict baseline_oneshot(const BenchmarkCase& c, const KbSnapshot& kb, Gateway& gateway,
                                 int top_k = kBaselineTopK);

struct ConfusionMatrix {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct Metrics {
  ConfusionMatrix cm;
  std::optional<double> recall;  // nullopt: undefined
  std::optional<double> false_positive_rate;
  std::optional<double> accuracy;
};

// validation_error on negative counts.
Metrics compute_metrics(const ConfusionMatrix& cm);
json to_json(const Metrics& m);

enum class EngineMode { mmia, baseline };
std::string_view to_string(EngineMode mode);
EngineMode engine_mode_from_string(std::string_view text);

struct CaseRecord {
  std::string case_id;
  std::string scenario;
  GoldLabel gold = GoldLabel::correct;
  bool flagged = false;
  std::optional<std::string> error;  // set when the case could not be evaluated
  std::optional<std::string> cited_rule;
  std::optional<std::string> gold_rule;
  std::string consensus;  // mmia mode
  std::int64_t tokens = 0;
  json log;    // mmia mode: full execution log
  json audit;  // mmia mode: consensus result
};

json to_json(const CaseRecord& r);
CaseRecord record_from_json(const json& value);

struct MetricsReport {
  EngineMode mode = EngineMode::mmia;
  Metrics overall;
  std::map<std::string, Metrics> per_scenario;
  std::optional<double> justification_accuracy;  // correctly cited rule among true positives
  std::int64_t errored = 0;
};

json to_json(const MetricsReport& report);
std::string format_metrics_table(const MetricsReport& report);

struct BenchmarkRun {
  std::string run_id;
  std::vector<CaseRecord> records;
  MetricsReport metrics;
};

struct BenchmarkEnv {
  Gateway& gateway;
  std::shared_ptr<const KbSnapshot> kb;
  const PackRegistry& packs;
  std::vector<Verifier*> verifiers;  // mmia mode, one per consensus audit
  ConsensusPolicy policy;
  Clock clock;
  std::filesystem::path web_fixtures;
};

// Matrix and metrics from per-case records; errored cases are excluded.
MetricsReport summarize(const std::vector<CaseRecord>& records, EngineMode mode);

// MMIA: full loop plus consensus audit, flag iff not certified or the
// answer adjudicates the case erroneous. Baseline: one-shot verdict.
BenchmarkRun run_benchmark(const std::vector<BenchmarkCase>& suite, EngineMode mode, BenchmarkEnv& env,
                           std::string run_id = "bench");

// results.jsonl, logs.jsonl, audits.jsonl and metrics.json under `dir`.
void write_benchmark_outputs(const BenchmarkRun& run, const std::filesystem::path& dir);

}  // namespace mmia

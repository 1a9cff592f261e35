#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmia/benchmark.hpp"
#include "mmia/knowledge_base.hpp"
#include "mmia/log.hpp"
#include "mmia/scenario_packs.hpp"

namespace mmia {

// Hand-authored worked example, one correct and one erroneous case per domain.
struct CaseStudy {
  std::string name;  // fixture file stem, e.g. "drg-fz19-certified"
  std::string title;
  BenchmarkCase source;
  // Expected audit of the fixture chain. Flawed chains miss the violation
  // and must be flagged with a logical fallacy citing `flagged_rule`.
  bool certified = true;
  std::optional<std::string> flagged_rule;
};

std::vector<CaseStudy> case_studies();
const CaseStudy& find_case_study(std::string_view name);

// Knowledge base with every pack rule approved, as used for the fixtures.
std::shared_ptr<const KbSnapshot> fixture_kb(const PackRegistry& packs, const Clock& clock);

// The chain the fixture stands for: the engine run on the case with the
// grounded backend; for flawed fixtures, that chain with every violated
// verdict restated as satisfied and the answer changed to "correct".
ExecutionLog build_fixture_log(const CaseStudy& study, const PackRegistry& packs,
                               std::shared_ptr<const KbSnapshot> kb, const Clock& clock);

// Restates violated verdicts as satisfied, as an LLM that overlooked them would.
ExecutionLog overlook_violations(ExecutionLog log, const ScenarioPack& pack);

enum class MutationKind {
  dangling_citation,            // a rule citation retargeted to an unknown id
  removed_evidence_fact,        // a recorded fact behind a document citation deleted
  contradicting_atom,           // a later step asserts the negation of an earlier claim
  underived_final_atom,         // the answer gains patient.status = "stable"
  forward_prior_step_citation,  // a step cites itself as a prior step
  plan_goal_drop,               // a plan subtask loses a goal nothing else provides
  empty_chain,                  // every step removed
  flipped_verdict,              // a definite verdict reversed
  non_sequitur,                 // a step relies on an excerpt its cited step never derived
};

std::string_view to_string(MutationKind kind);
MutationKind mutation_kind_from_string(std::string_view text);
std::vector<MutationKind> mutation_kinds();

struct Mutant {
  MutationKind kind;
  std::string site;
  ExecutionLog log;
};

// One mutant per applicable site.
std::vector<Mutant> mutate(const ExecutionLog& log, MutationKind kind);

// Writes <name>.case.json and <name>.log.json for every case study.
void export_fixtures(const std::filesystem::path& dir, const PackRegistry& packs, const Clock& clock);

// Reads <dir>/<name>.log.json.
ExecutionLog load_fixture_log(const std::filesystem::path& dir, std::string_view name);

}  // namespace mmia

#include <gtest/gtest.h>

#include "mmia/auditor.hpp"
#include "mmia/case_studies.hpp"
#include "mmia/error.hpp"
#include "mmia/review_queue.hpp"

using namespace mmia;

namespace {

struct Fixture {
  const PackRegistry& packs = PackRegistry::builtin();
  Clock clock{true};
  std::shared_ptr<const KbSnapshot> kb = fixture_kb(packs, clock);

  ExecutionLog log(std::string_view name) const {
    return load_fixture_log(default_data_dir() / "fixtures", name);
  }
};

std::vector<Verifier*> panel(std::vector<std::unique_ptr<Verifier>>& owned) {
  std::vector<Verifier*> out;
  for (auto& v : owned) out.push_back(v.get());
  return out;
}

bool has_issue(const AuditReport& r, IssueKind kind) {
  return std::any_of(r.issues.begin(), r.issues.end(), [&](const AuditIssue& i) { return i.kind == kind; });
}

}  // namespace

TEST(Consensus, DecisionTable) {
  using C = ConsensusOutcome;
  EXPECT_EQ(decide_consensus({true, true, true}, ConsensusRule::unanimity), C::certified);
  EXPECT_EQ(decide_consensus({false, false, false}, ConsensusRule::unanimity), C::flagged);
  EXPECT_EQ(decide_consensus({true, false, true}, ConsensusRule::unanimity), C::disagreement);
  EXPECT_EQ(decide_consensus({true, false, true}, ConsensusRule::majority), C::certified);
  EXPECT_EQ(decide_consensus({false, false, true}, ConsensusRule::majority), C::flagged);
  EXPECT_EQ(decide_consensus({true, false}, ConsensusRule::majority), C::disagreement);
  EXPECT_EQ(decide_consensus({true}, ConsensusRule::unanimity), C::certified);
  EXPECT_THROW(decide_consensus({}, ConsensusRule::majority), Error);
}

TEST(Consensus, PolicyValidation) {
  ConsensusPolicy p = ConsensusPolicy::defaults();
  EXPECT_EQ(p.n, 3);
  EXPECT_NO_THROW(validate_policy(p));
  p.diversity[1] = p.diversity[0];
  EXPECT_THROW(validate_policy(p), Error);
  p = ConsensusPolicy::defaults();
  p.n = 2;
  EXPECT_THROW(validate_policy(p), Error);
}

TEST(Fixtures, CertifiedAndFlawedChainsAuditAsDocumented) {
  Fixture f;
  DeterministicVerifier v;
  for (const CaseStudy& study : case_studies()) {
    const AuditReport r = verify_reasoning_chain(f.log(study.name), *f.kb, v);
    EXPECT_EQ(r.certified(), study.certified) << study.name;
    if (!study.certified) {
      ASSERT_TRUE(study.flagged_rule) << study.name;
      const bool cites = std::any_of(r.issues.begin(), r.issues.end(), [&](const AuditIssue& i) {
        return i.kind == IssueKind::logical_fallacy && i.cited_rule == study.flagged_rule;
      });
      EXPECT_TRUE(cites) << study.name << " should cite " << *study.flagged_rule;
    }
  }
}

TEST(Auditor, EmptyAndIncompleteChainsAreFlagged) {
  Fixture f;
  DeterministicVerifier v;
  ExecutionLog empty = f.log("ehr-macrolide-certified");
  empty.children.clear();
  empty.steps.clear();
  EXPECT_FALSE(verify_reasoning_chain(empty, *f.kb, v).certified());
  ExecutionLog incomplete = f.log("ehr-macrolide-certified");
  incomplete.status = RunStatus::incomplete;
  incomplete.final_answer.reset();
  EXPECT_FALSE(verify_reasoning_chain(incomplete, *f.kb, v).certified());
}

TEST(Auditor, DanglingCitationIsReported) {
  Fixture f;
  DeterministicVerifier v;
  const ExecutionLog log = f.log("regulatory-consistent-certified");
  const auto mutants = mutate(log, MutationKind::dangling_citation);
  ASSERT_FALSE(mutants.empty());
  const AuditReport r = verify_reasoning_chain(mutants.front().log, *f.kb, v);
  EXPECT_TRUE(has_issue(r, IssueKind::dangling_citation));
}

TEST(Auditor, ReportJsonRoundTrip) {
  Fixture f;
  DeterministicVerifier v;
  const AuditReport r = verify_reasoning_chain(f.log("drg-pneumonia-stent-flawed"), *f.kb, v);
  ASSERT_FALSE(r.issues.empty());
  const json j = to_json(r);
  EXPECT_EQ(j.at("schema"), "audit_v1");
  EXPECT_EQ(to_json(report_from_json(j)), j);
}

TEST(Auditor, PlanAuditPromptMatchesGolden) {
  Fixture f;
  const std::string golden = read_text_file(std::filesystem::path(MMIA_TEST_DATA_DIR) / "plan_audit_prompt_v1.txt");
  EXPECT_EQ(plan_audit_prompt(f.log("drg-fz19-certified"), 1), golden);
  EXPECT_NE(plan_audit_prompt(f.log("drg-fz19-certified"), 2), golden);
  EXPECT_THROW(plan_audit_prompt(f.log("drg-fz19-certified"), 4), Error);
}

TEST(Consensus, DisagreementIsQueued) {
  Fixture f;
  std::vector<std::unique_ptr<Verifier>> owned;
  owned.push_back(std::make_unique<FixedVerifier>("yes", true));
  owned.push_back(std::make_unique<FixedVerifier>("no", false));
  owned.push_back(std::make_unique<FixedVerifier>("yes2", true));
  ReviewQueue queue;
  ConsensusHooks hooks;
  hooks.queue = &queue;
  const ExecutionLog log = f.log("ehr-macrolide-certified");
  const ConsensusResult r = consensus_audit(log, *f.kb, panel(owned), ConsensusPolicy::defaults(), hooks);
  EXPECT_EQ(r.outcome, ConsensusOutcome::disagreement);
  ASSERT_TRUE(r.review_entry_id);
  const auto entry = queue.find(*r.review_entry_id);
  ASSERT_TRUE(entry);
  EXPECT_EQ(entry->kind, QueueKind::audit_disagreement);
  EXPECT_EQ(entry->payload, log.task.id);
  EXPECT_EQ(entry->reports.size(), 3u);
}

TEST(Consensus, VerifierCountMustMatchPolicy) {
  Fixture f;
  std::vector<std::unique_ptr<Verifier>> owned;
  owned.push_back(std::make_unique<DeterministicVerifier>());
  EXPECT_THROW(consensus_audit(f.log("ehr-macrolide-certified"), *f.kb, panel(owned), ConsensusPolicy::defaults()),
               Error);
}

TEST(Consensus, CertifiedChainsArePromotedOnce) {
  Fixture f;
  KnowledgeBase kb;
  seed_pack_axioms(kb, f.packs, f.clock);
  std::vector<std::unique_ptr<Verifier>> owned;
  for (int i = 1; i <= 3; ++i) owned.push_back(std::make_unique<DeterministicVerifier>("v" + std::to_string(i)));
  ConsensusHooks hooks;
  hooks.kb = &kb;
  hooks.auto_approve_chain_theorems = true;
  hooks.clock = f.clock;
  hooks.make_template = [&](const TaskSpec& t) { return f.packs.get(t.scenario).abstraction_template; };
  const ExecutionLog log = f.log("ehr-macrolide-certified");
  const ConsensusResult first = consensus_audit(log, *kb.snapshot(), panel(owned), ConsensusPolicy::defaults(), hooks);
  ASSERT_EQ(first.outcome, ConsensusOutcome::certified);
  ASSERT_TRUE(first.promoted_theorem_id);
  const Axiom* theorem = kb.snapshot()->find_approved(*first.promoted_theorem_id);
  ASSERT_NE(theorem, nullptr);
  EXPECT_EQ(theorem->kind, AxiomKind::theorem);
  EXPECT_EQ(theorem->origin, Origin::chain_promoted);
  EXPECT_FALSE(theorem->derived_from.empty());
  EXPECT_EQ(theorem->template_text, f.packs.get("ehr").abstraction_template);

  const std::size_t size = kb.snapshot()->size();
  const ConsensusResult again = consensus_audit(log, *kb.snapshot(), panel(owned), ConsensusPolicy::defaults(), hooks);
  EXPECT_EQ(again.promoted_theorem_id, first.promoted_theorem_id);
  EXPECT_EQ(kb.snapshot()->size(), size);
}

TEST(Consensus, FlawedChainsAreNeverPromoted) {
  Fixture f;
  KnowledgeBase kb;
  seed_pack_axioms(kb, f.packs, f.clock);
  std::vector<std::unique_ptr<Verifier>> owned;
  for (int i = 1; i <= 3; ++i) owned.push_back(std::make_unique<DeterministicVerifier>("v" + std::to_string(i)));
  ConsensusHooks hooks;
  hooks.kb = &kb;
  const std::size_t size = kb.snapshot()->size();
  const ConsensusResult r =
      consensus_audit(f.log("ehr-allergy-conflict-flawed"), *kb.snapshot(), panel(owned), ConsensusPolicy::defaults(), hooks);
  EXPECT_EQ(r.outcome, ConsensusOutcome::flagged);
  EXPECT_FALSE(r.promoted_theorem_id);
  EXPECT_EQ(kb.snapshot()->size(), size);
  EXPECT_EQ(to_json(consensus_from_json(to_json(r))), to_json(r));
}

TEST(LlmVerifier, UsesTheAuditorRole) {
  Fixture f;
  auto backend = std::make_shared<ScriptedBackend>(ScriptedBackend::from_json(json::parse(R"({
    "schema": "scenario_v1", "id": "auditor",
    "rules": [
      {"role": "auditor", "contains": "Proposed plan", "response": {"ok": false, "reason": "goal dropped"}},
      {"role": "auditor", "contains": "{\"fallacy\": text", "response": {"fallacy": null}},
      {"role": "auditor", "response": {"ok": true, "reason": "fine"}}
    ]
  })")));
  Gateway gateway(backend);
  LlmVerifier v(gateway, 1, backend->id());
  const AuditReport r = verify_reasoning_chain(f.log("ehr-macrolide-certified"), *f.kb, v);
  EXPECT_TRUE(has_issue(r, IssueKind::plan_mismatch));
  EXPECT_GT(v.usage().total(), 0);
  EXPECT_NE(v.id().find("auditor"), std::string::npos);
}

TEST(Mutations, EveryKindHasASiteOnEveryCertifiedFixture) {
  Fixture f;
  for (const CaseStudy& study : case_studies()) {
    if (!study.certified) continue;
    const ExecutionLog log = f.log(study.name);
    for (MutationKind kind : mutation_kinds()) {
      const auto ms = mutate(log, kind);
      EXPECT_FALSE(ms.empty()) << study.name << " " << to_string(kind);
      for (const auto& m : ms) EXPECT_NE(to_json(m.log), to_json(log)) << m.site;
    }
  }
  EXPECT_EQ(mutation_kind_from_string("flipped-verdict"), MutationKind::flipped_verdict);
}

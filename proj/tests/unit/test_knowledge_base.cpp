#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>

#include "mmia/error.hpp"
#include "mmia/grounded_backend.hpp"
#include "mmia/knowledge_base.hpp"
#include "mmia/review_queue.hpp"
#include "mmia/scenario_packs.hpp"

using namespace mmia;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mmia-kb-" + std::to_string(::getpid())) / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Axiom candidate(std::string id, std::string rule) {
  Axiom a;
  a.id = std::move(id);
  a.scenario = "ehr";
  a.rule_text = std::move(rule);
  return a;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::io_error;
}

}  // namespace

TEST(AxiomIds, ParseAndValidate) {
  EXPECT_TRUE(is_valid_axiom_id("EHR-A1"));
  EXPECT_TRUE(is_valid_axiom_id("DRG-T12"));
  EXPECT_FALSE(is_valid_axiom_id("EHR-1"));
  EXPECT_FALSE(is_valid_axiom_id("ehr-A1"));
  const AxiomRef r = parse_axiom_ref("REG-A3@v2");
  EXPECT_EQ(r.id, "REG-A3");
  EXPECT_EQ(r.version, 2);
  EXPECT_EQ(parse_axiom_ref("REG-A3").version, 0);
  EXPECT_EQ(scenario_prefix("insurance"), "INS");
  EXPECT_THROW(scenario_prefix("astrology"), Error);
}

TEST(KnowledgeBase, AssignsIdsAndNormalizesRuleText) {
  KnowledgeBase kb;
  Axiom a = candidate("", "IF  order.drug IN {\"x\"}   THEN order.drug_class = \"y\"");
  const Axiom stored = kb.add(a);
  EXPECT_EQ(stored.id, "EHR-A1");
  EXPECT_EQ(stored.rule_text, R"(IF order.drug IN {"x"} THEN order.drug_class = "y")");
  EXPECT_EQ(kb.next_id("ehr", AxiomKind::axiom), "EHR-A2");
  EXPECT_EQ(kb.next_id("ehr", AxiomKind::theorem), "EHR-T1");
  EXPECT_EQ(code_of([&] { kb.add(stored); }), ErrorCode::validation_error);
}

TEST(KnowledgeBase, ProvenanceIsRequired) {
  KnowledgeBase kb;
  Axiom extracted = candidate("", "a.b = 1");
  extracted.origin = Origin::llm_extracted;
  EXPECT_EQ(code_of([&] { kb.add(extracted); }), ErrorCode::validation_error);
  Axiom derived = candidate("", "a.b = 1");
  derived.origin = Origin::llm_derived;
  EXPECT_EQ(code_of([&] { kb.add(derived); }), ErrorCode::validation_error);
}

TEST(KnowledgeBase, ReviewLifecycle) {
  KnowledgeBase kb;
  std::vector<std::string> approved;
  kb.on_approved([&](const Axiom& a) { approved.push_back(a.key()); });
  kb.add(candidate("EHR-A1", "a.b = 1"));
  kb.add(candidate("EHR-A2", "a.b = 2"));
  kb.add(candidate("EHR-A3", "a.b = 3"));

  const auto snap_before = kb.snapshot();
  EXPECT_EQ(kb.review("EHR-A1", {ReviewDecision::Kind::approve, "", ""}, "alice").status, AxiomStatus::approved);
  EXPECT_EQ(snap_before->find("EHR-A1")->status, AxiomStatus::candidate);  // old snapshots are immutable
  EXPECT_NE(kb.snapshot()->find_approved("EHR-A1"), nullptr);

  const Axiom rejected = kb.review("EHR-A2", {ReviewDecision::Kind::reject, "", "duplicate"}, "bob");
  EXPECT_EQ(rejected.rejection_reason, "duplicate");
  EXPECT_EQ(kb.snapshot()->find_approved("EHR-A2"), nullptr);

  const Axiom edited = kb.review("EHR-A3", {ReviewDecision::Kind::edit, "a.b = 4", ""}, "carol");
  EXPECT_EQ(edited.key(), "EHR-A3@v2");
  EXPECT_EQ(edited.status, AxiomStatus::candidate);
  EXPECT_EQ(kb.snapshot()->find("EHR-A3@v1")->status, AxiomStatus::superseded);
  EXPECT_EQ(kb.snapshot()->find("EHR-A3")->version, 2);

  EXPECT_EQ(code_of([&] { kb.review("EHR-A1", {}, "alice"); }), ErrorCode::state_error);
  EXPECT_EQ(code_of([&] { kb.review("EHR-A9", {}, "alice"); }), ErrorCode::not_found);
  EXPECT_EQ(code_of([&] { kb.review("EHR-A3", {ReviewDecision::Kind::edit, "a.b =", ""}, "c"); }),
            ErrorCode::parse_error);
  EXPECT_EQ(kb.snapshot()->find("EHR-A3")->version, 2);  // bad edit left no trace
  EXPECT_EQ(code_of([&] { kb.review("EHR-A3", {}, ""); }), ErrorCode::precondition_violation);

  const auto trail = kb.trail();
  ASSERT_EQ(trail.size(), 3u);
  EXPECT_EQ(trail[2].decision, "edit");
  EXPECT_EQ(trail[2].detail, "EHR-A3@v2");
  EXPECT_EQ(approved, std::vector<std::string>{"EHR-A1@v1"});
}

TEST(KnowledgeBase, PersistsAndReloads) {
  const fs::path dir = temp_dir("persist");
  {
    KnowledgeBase kb(dir, Clock{true});
    kb.add(candidate("EHR-A1", "a.b = 1"));
    kb.review("EHR-A1", {ReviewDecision::Kind::edit, "a.b = 2", ""}, "alice");
    kb.review("EHR-A1", {ReviewDecision::Kind::approve, "", ""}, "bob");
  }
  KnowledgeBase reloaded(dir, Clock{true});
  const auto snap = reloaded.snapshot();
  EXPECT_EQ(snap->size(), 2u);
  EXPECT_EQ(snap->find("EHR-A1@v1")->status, AxiomStatus::superseded);
  const Axiom* live = snap->find_approved("EHR-A1");
  ASSERT_NE(live, nullptr);
  EXPECT_EQ(live->rule_text, "a.b = 2");
  EXPECT_EQ(live->review->reviewer, "bob");
  EXPECT_EQ(reloaded.trail().size(), 2u);
}

TEST(KnowledgeBase, AxiomJsonRoundTrip) {
  Axiom a = candidate("EHR-A5", "IF a.b = 1 THEN c.d = 2");
  a.rule = parse_rule(a.rule_text);
  a.source = SourceSpan{"DOC", 3, 9, "abcdef"};
  a.origin = Origin::llm_extracted;
  a.template_text = "Check {x}";
  const Axiom back = axiom_from_json(to_json(a));
  EXPECT_EQ(to_json(back), to_json(a));
  EXPECT_EQ(back.source->end, 9u);
}

TEST(Extraction, VerbatimExcerptsBecomeCandidates) {
  const auto& packs = PackRegistry::builtin();
  Gateway gateway(std::make_shared<GroundedBackend>(packs));
  KnowledgeBase kb;
  const ScenarioPack& ehr = packs.get("ehr");
  ASSERT_FALSE(ehr.reference_documents.empty());
  const Document& doc = ehr.reference_documents.front();
  TokenUsage usage;
  const auto stored = extract_candidates(doc, "ehr", gateway, kb, &usage);
  ASSERT_EQ(stored.size(), 2u);
  EXPECT_GT(usage.total(), 0);
  for (const Axiom& a : stored) {
    EXPECT_EQ(a.status, AxiomStatus::candidate);
    EXPECT_EQ(a.origin, Origin::llm_extracted);
    ASSERT_TRUE(a.source);
    EXPECT_EQ(doc.text.substr(a.source->begin, a.source->end - a.source->begin), a.source->excerpt);
  }
}

TEST(Extraction, UnsupportedProposalsAreStoredRejected) {
  auto backend = std::make_shared<ScriptedBackend>(ScriptedBackend::from_json(json::parse(R"({
    "schema": "scenario_v1", "id": "extract",
    "rules": [{"role": "extractor", "response": {"candidates": [
      {"rule": "IF a.b = 1 THEN c.d = 2", "excerpt": "Rule one holds."},
      {"rule": "IF a.b = THEN", "excerpt": "Rule one holds."},
      {"rule": "a.b = 3", "excerpt": "invented sentence"}
    ]}}]
  })")));
  Gateway gateway(backend);
  KnowledgeBase kb;
  const auto stored = extract_candidates(Document{"D1", "Preamble. Rule one holds."}, "regulatory", gateway, kb);
  ASSERT_EQ(stored.size(), 3u);
  EXPECT_EQ(stored[0].status, AxiomStatus::candidate);
  EXPECT_EQ(stored[1].status, AxiomStatus::rejected);
  EXPECT_FALSE(stored[1].rejection_reason.empty());
  EXPECT_EQ(stored[2].status, AxiomStatus::rejected);
  EXPECT_EQ(kb.snapshot()->size(), 3u);
}

TEST(Derivation, ContrapositiveTheoremsCiteApprovedAxioms) {
  const auto& packs = PackRegistry::builtin();
  Gateway gateway(std::make_shared<GroundedBackend>(packs));
  KnowledgeBase kb;
  seed_pack_axioms(kb, packs, Clock{true});
  const DerivationResult r = derive_theorems(kb, "ehr", gateway);
  ASSERT_FALSE(r.theorems.empty());
  for (const Axiom& t : r.theorems) {
    EXPECT_EQ(t.kind, AxiomKind::theorem);
    EXPECT_EQ(t.status, AxiomStatus::candidate);
    EXPECT_EQ(t.origin, Origin::llm_derived);
    for (const auto& src : t.derived_from) EXPECT_NE(kb.snapshot()->find_approved(src), nullptr) << src;
  }
}

TEST(Derivation, UnapprovedPremisesAreDiscarded) {
  auto backend = std::make_shared<ScriptedBackend>(ScriptedBackend::from_json(json::parse(R"({
    "schema": "scenario_v1", "id": "derive",
    "rules": [{"role": "planner", "response": {"theorems": [
      {"rule": "IF a.b = 1 THEN c.d = 2", "derived_from": ["EHR-A1", "EHR-A2"]}
    ]}}],
    "default": {"theorems": [{"rule": "IF a.b = 1 THEN c.d = 2", "derived_from": ["EHR-A1", "EHR-A2"]}]}
  })")));
  Gateway gateway(backend);
  KnowledgeBase kb;
  kb.add(candidate("EHR-A1", "IF a.b = 1 THEN e.f = 1"));
  kb.add(candidate("EHR-A2", "IF e.f = 1 THEN c.d = 2"));
  kb.review("EHR-A1", {}, "alice");
  const DerivationResult r = derive_theorems(kb, "ehr", gateway);
  EXPECT_TRUE(r.theorems.empty());
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(ReviewQueue, ResolveOnceAndReload) {
  const fs::path dir = temp_dir("queue");
  std::string id;
  {
    ReviewQueue q(dir, Clock{true});
    Axiom a = candidate("EHR-A1", "a.b = 1");
    id = q.enqueue_candidate(a);
    EXPECT_EQ(id, "RQ-1");
    q.enqueue_disagreement("run-3", {});
    EXPECT_EQ(q.list(EntryStatus::open).size(), 2u);
    EXPECT_EQ(q.list(std::nullopt, QueueKind::audit_disagreement).size(), 1u);
    EXPECT_TRUE(q.find_open("EHR-A1@v1"));
    q.resolve(id, Resolution{"approve", "alice", "", ""});
    EXPECT_EQ(code_of([&] { q.resolve(id, Resolution{"approve", "alice", "", ""}); }), ErrorCode::state_error);
    EXPECT_EQ(code_of([&] { q.resolve("RQ-99", Resolution{}); }), ErrorCode::not_found);
  }
  ReviewQueue reloaded(dir, Clock{true});
  EXPECT_EQ(reloaded.find(id)->status, EntryStatus::resolved);
  EXPECT_EQ(reloaded.find(id)->resolution->reviewer, "alice");
  EXPECT_EQ(reloaded.list(EntryStatus::open).size(), 1u);
  EXPECT_EQ(reloaded.enqueue_candidate(candidate("EHR-A2", "a.b = 2")), "RQ-3");
  EXPECT_EQ(reloaded.sample(5, 1).size(), 2u);
}

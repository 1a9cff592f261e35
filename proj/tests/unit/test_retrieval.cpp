#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>

#include "mmia/error.hpp"
#include "mmia/grounded_backend.hpp"
#include "mmia/retrieval.hpp"
#include "mmia/scenario_packs.hpp"

using namespace mmia;
namespace fs = std::filesystem;

namespace {

Axiom stent_theorem() {
  Axiom t;
  t.id = "DRG-T1";
  t.kind = AxiomKind::theorem;
  t.scenario = "drg";
  t.rule_text = R"(IF case.principal_diagnosis IN {`J18.9`} AND case.procedure IN {`36.0601`} THEN task.outcome = "erroneous")";
  t.rule = parse_rule(t.rule_text);
  t.status = AxiomStatus::approved;
  t.template_text = "Verify clinical logic consistency between {diagnosis} and {procedure}";
  return t;
}

TaskSpec stent_task(const std::string& diagnosis) {
  TaskSpec t;
  t.id = "m1";
  t.scenario = "drg";
  t.description = "Verify clinical logic consistency between pneumonia and stent";
  t.facts.add("case", "principal_diagnosis", Value::code(diagnosis));
  t.facts.add("case", "procedure", Value::code("36.0601"));
  return t;
}

std::shared_ptr<Backend> matcher_backend() {
  return std::make_shared<ScriptedBackend>(ScriptedBackend::from_json(json::parse(R"({
    "schema": "scenario_v1", "id": "matcher",
    "rules": [
      {"role": "abstractor", "response": {"template": "Verify clinical logic consistency between {diagnosis} and {procedure}",
                                           "bindings": {"diagnosis": "J18.9", "procedure": "36.0601"}},
       "usage": {"prompt_tokens": 10, "completion_tokens": 10}},
      {"role": "judge", "contains": "I21.001", "response": {"fits": false, "justification": "conditions fail"}},
      {"role": "judge", "response": {"fits": true, "justification": "conditions hold"},
       "usage": {"prompt_tokens": 20, "completion_tokens": 5}}
    ]
  })")));
}

}  // namespace

TEST(Embedding, UnitNormAndDeterministic) {
  const Embedding a = embed("Verify clinical logic consistency between diagnosis and procedure");
  ASSERT_EQ(a.values.size(), static_cast<std::size_t>(kEmbeddingDimension));
  double norm = 0;
  for (double v : a.values) norm += v * v;
  EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-12);
  EXPECT_EQ(a.values, embed("verify CLINICAL logic consistency between diagnosis and procedure").values);
  EXPECT_NEAR(cosine(a, a), 1.0, 1e-12);
  EXPECT_LT(cosine(a, embed("Reconcile the discharge medication list against the formulary")), 0.5);
  EXPECT_NO_THROW(embed("short"));
  EXPECT_THROW(embed(""), Error);
}

TEST(VectorIndex, TopKOrdersBySimilarityThenId) {
  VectorIndex idx;
  const Embedding e = embed("one two three four");
  idx.upsert("b", e);
  idx.upsert("a", e);
  idx.upsert("c", embed("completely different words here"));
  const auto top = idx.query_topk(e, 5);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].id, "a");
  EXPECT_EQ(top[1].id, "b");
  EXPECT_EQ(top[2].id, "c");
  idx.upsert("a", embed("completely different words here"));
  EXPECT_EQ(idx.query_topk(e, 1)[0].id, "b");
  EXPECT_TRUE(idx.erase("b"));
  EXPECT_FALSE(idx.erase("b"));
  EXPECT_EQ(idx.size(), 2u);
}

TEST(VectorIndex, RejectsMismatchedEmbeddings) {
  VectorIndex idx;
  Embedding shortv;
  shortv.values = {1.0, 0.0};
  try {
    idx.upsert("x", shortv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::index_error);
  }
  Embedding other = embed("a b c");
  other.embedder = "other";
  EXPECT_THROW(idx.upsert("x", other), Error);
  EXPECT_THROW(idx.query_topk(embed("a b c"), 0), Error);
}

TEST(VectorIndex, SaveAndLoad) {
  const fs::path file = fs::temp_directory_path() / ("mmia-index-" + std::to_string(::getpid()) + ".jsonl");
  VectorIndex idx;
  idx.upsert("DRG-T1", embed("alpha beta gamma"));
  idx.upsert("DRG-T2", embed("delta epsilon zeta"));
  idx.save(file);
  const VectorIndex back = VectorIndex::load(file);
  EXPECT_EQ(back.size(), 2u);
  const auto q = back.query_topk(embed("alpha beta gamma"), 1);
  EXPECT_EQ(q[0].id, "DRG-T1");
  EXPECT_NEAR(q[0].similarity, 1.0, 1e-12);
  write_text_file(file, "{\"not\": \"an index\"}\n");
  EXPECT_THROW(VectorIndex::load(file), Error);
  fs::remove(file);
}

TEST(Templates, Placeholders) {
  EXPECT_EQ(template_placeholders("Check {drug} against {allergy} and {drug}"),
            (std::vector<std::string>{"drug", "allergy"}));
  EXPECT_TRUE(template_placeholders("no slots").empty());
}

TEST(Matching, EmptyIndexSkipsModelCalls) {
  Gateway g(matcher_backend());
  KnowledgeBase kb;
  const MatchResult r = match_theorem(stent_task("J18.9"), *kb.snapshot(), VectorIndex{}, 0.8, g);
  EXPECT_EQ(r.decision, MatchDecision::below_threshold);
  EXPECT_TRUE(r.theorem_id.empty());
  EXPECT_EQ(g.calls(), 0u);
}

TEST(Matching, JudgeConfirmsTheFit) {
  Gateway g(matcher_backend());
  KnowledgeBase kb;
  kb.add(stent_theorem());
  const auto snap = kb.snapshot();
  const VectorIndex idx = build_theorem_index(*snap);
  ASSERT_EQ(idx.size(), 1u);

  const MatchResult hit = match_theorem(stent_task("J18.9"), *snap, idx, 0.8, g);
  EXPECT_EQ(hit.decision, MatchDecision::matched);
  EXPECT_EQ(hit.theorem_id, "DRG-T1");
  EXPECT_NEAR(hit.similarity, 1.0, 1e-12);
  EXPECT_EQ(hit.usage.total(), 45);

  const MatchResult miss = match_theorem(stent_task("I21.001"), *snap, idx, 0.8, g);
  EXPECT_EQ(miss.decision, MatchDecision::below_threshold);
  ASSERT_TRUE(miss.judgment);
  EXPECT_FALSE(miss.judgment->fits);

  const ExecutionLog log = rag_match_log(stent_task("J18.9"), hit, *snap->find("DRG-T1"), Clock{true});
  EXPECT_EQ(log.mode, Mode::rag_match);
  ASSERT_EQ(log.steps.size(), 1u);
  EXPECT_EQ(log.steps[0].tool, Tool::kb_retrieval);
  ASSERT_FALSE(log.steps[0].evidence.empty());
  EXPECT_EQ(log.steps[0].evidence[0].target_id, "DRG-T1");
  ASSERT_TRUE(log.final_answer);
  EXPECT_EQ(log.total_tokens, recount_tokens(log));
  EXPECT_EQ(log.control_usage.total(), 45);
}

TEST(Matching, HighThresholdRejectsWithoutJudge) {
  Gateway g(matcher_backend());
  KnowledgeBase kb;
  Axiom t = stent_theorem();
  t.template_text = "Reconcile the discharge medication list against the formulary";
  kb.add(t);
  const auto snap = kb.snapshot();
  const MatchResult r = match_theorem(stent_task("J18.9"), *snap, build_theorem_index(*snap), 0.8, g);
  EXPECT_EQ(r.decision, MatchDecision::below_threshold);
  EXPECT_FALSE(r.judgment);
  EXPECT_EQ(r.theorem_id, "DRG-T1");
  EXPECT_THROW(match_theorem(stent_task("J18.9"), *snap, build_theorem_index(*snap), 1.5, g), Error);
}

TEST(Matching, GroundedAbstractionBindsPackPlaceholders) {
  const auto& packs = PackRegistry::builtin();
  Gateway g(std::make_shared<GroundedBackend>(packs));
  TaskSpec t;
  t.id = "a1";
  t.scenario = "ehr";
  t.description = "Check medication order safety for encounter E-1";
  t.facts.declare_multi_valued("patient.allergy");
  t.facts.add("patient", "allergy", Value::text("penicillin"));
  t.facts.add("order", "drug", Value::text("amoxicillin"));
  const ProcessTemplate tpl = abstract_task(t, g);
  EXPECT_EQ(tpl.text, packs.get("ehr").abstraction_template);
  ASSERT_TRUE(tpl.bindings.count("drug"));
  EXPECT_TRUE(tpl.bindings.at("drug").has_value());
}

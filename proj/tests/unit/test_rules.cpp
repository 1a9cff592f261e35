#include <gtest/gtest.h>

#include <random>

#include "mmia/error.hpp"
#include "mmia/rules.hpp"
#include "mmia/scenario_packs.hpp"
#include "rule_gen.hpp"

using namespace mmia;

namespace {

FactSet allergy_facts() {
  FactSet f;
  f.declare_multi_valued("patient.allergy");
  f.add("patient", "allergy", Value::text("penicillin"));
  f.add("patient", "allergy", Value::text("latex"));
  return f;
}

}  // namespace

TEST(RuleParser, ParsesImplicationWithForbid) {
  const RuleExpr r = parse_rule(R"(IF patient.allergy CONTAINS "penicillin" THEN FORBID order.drug_class = "penicillin-class")");
  ASSERT_EQ(r.kind(), RuleExpr::Kind::implies);
  EXPECT_EQ(r.first().atom().op, Comparator::contains);
  ASSERT_EQ(r.second().kind(), RuleExpr::Kind::negation);
  EXPECT_EQ(r.second().children().front().atom().path(), "order.drug_class");
}

TEST(RuleParser, RequireIsTheBareConsequence) {
  EXPECT_EQ(parse_rule("IF a.b = 1 THEN REQUIRE c.d = 2"), parse_rule("IF a.b = 1 THEN c.d = 2"));
}

TEST(RuleParser, PrecedenceAndBindsTighterThanOr) {
  const RuleExpr r = parse_rule("a.x = 1 OR a.y = 2 AND a.z = 3");
  ASSERT_EQ(r.kind(), RuleExpr::Kind::disjunction);
  ASSERT_EQ(r.children().size(), 2u);
  EXPECT_EQ(r.children()[1].kind(), RuleExpr::Kind::conjunction);
}

TEST(RuleParser, UnicodeComparators) {
  EXPECT_EQ(parse_rule("a.b ≤ 3"), parse_rule("a.b <= 3"));
  EXPECT_EQ(parse_rule("a.b ≥ 3"), parse_rule("a.b >= 3"));
  EXPECT_EQ(parse_rule("a.b ≠ 3"), parse_rule("a.b != 3"));
}

TEST(RuleParser, LiteralKinds) {
  EXPECT_EQ(parse_literal("`I21.001`"), Value::code("I21.001"));
  EXPECT_EQ(parse_literal("\"text\""), Value::text("text"));
  EXPECT_EQ(parse_literal("12 months"), Value::duration(12, "months"));
  EXPECT_EQ(parse_literal("2.5 mm"), Value::number(2.5, "mm"));
  EXPECT_EQ(parse_literal("true"), Value::boolean(true));
  EXPECT_EQ(parse_literal("-4"), Value::number(-4));
}

TEST(RuleParser, ErrorCarriesLocation) {
  try {
    parse_rule("IF a.b = 1\nTHEN c.d =");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse_error);
    EXPECT_EQ(e.line(), 2);
    EXPECT_GT(e.column(), 1);
    EXPECT_FALSE(e.expected().empty());
  }
}

TEST(RuleParser, RejectsMalformedInput) {
  for (const char* bad : {"", "a = 1", "a.b", "a.b IN {}", "IF a.b = 1", "(a.b = 1", "a.b = \"open",
                          "a.b = 1 UNLESS", "IF IF a.b = 1 THEN c.d = 1 THEN e.f = 1"}) {
    EXPECT_THROW(parse_rule(bad), Error) << bad;
  }
}

TEST(RuleParser, NestedImplicationIsInvalid) {
  const RuleExpr inner = parse_rule("IF a.b = 1 THEN c.d = 2");
  EXPECT_THROW(validate_rule(RuleExpr::all_of({inner, parse_rule("e.f = 1")})), Error);
}

TEST(RuleParser, MixedSetKindsAreInvalid) {
  EXPECT_THROW(parse_rule("a.b IN {1, \"x\"}"), Error);
  EXPECT_THROW(parse_rule("a.b IN {1 mm, 2}"), Error);
}

TEST(RulePrinter, QuotesAndEscapes) {
  Atom a{"note", "text", Comparator::eq, {Value::text("say \"hi\"\\\n")}};
  const std::string printed = print_rule(RuleExpr::make_atom(a));
  EXPECT_EQ(printed, R"(note.text = "say \"hi\"\\\n")");
  EXPECT_EQ(parse_rule(printed), RuleExpr::make_atom(a));
}

TEST(RulePrinter, ParenthesizesNestedGroups) {
  const RuleExpr r = parse_rule("(a.x = 1 OR a.y = 2) AND NOT (a.z = 3 AND a.w = 4)");
  EXPECT_EQ(print_rule(r), "(a.x = 1 OR a.y = 2) AND NOT (a.z = 3 AND a.w = 4)");
  EXPECT_EQ(parse_rule(print_rule(r)), r);
}

TEST(RulePrinter, RoundTripsGeneratedAsts) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    const RuleExpr ast = gen::random_ast(rng);
    const std::string text = print_rule(ast);
    EXPECT_EQ(parse_rule(text), ast) << text;
  }
}

TEST(RuleFiles, PackRulesAreFixpoints) {
  for (const auto& pack : PackRegistry::builtin().packs()) {
    for (const auto& rule : pack.rules) {
      const std::string once = print_rule(rule.rule);
      EXPECT_EQ(print_rule(parse_rule(once)), once) << rule.id;
    }
  }
}

TEST(Values, DurationsNormalizeToHours) {
  EXPECT_TRUE(values_equal(Value::duration(12, "months"), Value::duration(360, "days")));
  EXPECT_TRUE(values_equal(Value::duration(1, "year"), Value::duration(12, "months")));
  EXPECT_LT(compare_values(Value::duration(7, "hours"), Value::duration(8, "hours")), 0);
  EXPECT_EQ(Value::duration(2, "weeks").hours(), 336.0);
  EXPECT_NE(Value::duration(12, "months"), Value::duration(360, "days"));
}

TEST(Values, IncompatibleKindsAreEvaluationErrors) {
  EXPECT_THROW(compare_values(Value::number(1, "mm"), Value::number(1, "mg")), Error);
  EXPECT_THROW(compare_values(Value::text("a"), Value::number(1)), Error);
  FactSet f;
  f.add("a", "b", Value::text("x"));
  try {
    eval_rule(parse_rule("a.b < 3"), f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::evaluation_error);
  }
}

TEST(FactSets, SingleValuedConflictsAreRejected) {
  FactSet f;
  f.add("case", "drg", Value::code("FZ19"));
  f.add("case", "drg", Value::code("FZ19"));
  EXPECT_EQ(f.size(), 1u);
  EXPECT_THROW(f.add("case", "drg", Value::code("FZ11")), Error);
  EXPECT_FALSE(f.try_add(Fact{"case", "drg", Value::code("FZ11")}));
  FactSet m = allergy_facts();
  EXPECT_EQ(m.find("patient", "allergy")->size(), 2u);
}

TEST(Evaluation, KleeneConnectives) {
  FactSet f;
  f.add("a", "x", Value::number(1));
  EXPECT_EQ(eval_expr(parse_rule("a.x = 1 AND a.missing = 1"), f), Truth::unknown);
  EXPECT_EQ(eval_expr(parse_rule("a.x = 2 AND a.missing = 1"), f), Truth::no);
  EXPECT_EQ(eval_expr(parse_rule("a.x = 1 OR a.missing = 1"), f), Truth::yes);
  EXPECT_EQ(eval_expr(parse_rule("a.x = 2 OR a.missing = 1"), f), Truth::unknown);
  EXPECT_EQ(eval_expr(parse_rule("NOT a.missing = 1"), f), Truth::unknown);
}

TEST(Evaluation, ImplicationVerdicts) {
  const RuleExpr a1 =
      parse_rule(R"(IF patient.allergy CONTAINS "penicillin" THEN FORBID order.drug_class = "penicillin-class")");
  FactSet f = allergy_facts();
  EXPECT_EQ(eval_rule(a1, f).outcome, Outcome::inapplicable);  // consequence undecidable
  f.add("order", "drug_class", Value::text("penicillin-class"));
  const RuleVerdict v = eval_rule(a1, f);
  EXPECT_EQ(v.outcome, Outcome::violated);
  EXPECT_FALSE(v.trace.empty());
  FactSet g = allergy_facts();
  g.add("order", "drug_class", Value::text("macrolide"));
  EXPECT_EQ(eval_rule(a1, g).outcome, Outcome::satisfied);
  FactSet none;
  none.add("order", "drug_class", Value::text("penicillin-class"));
  EXPECT_EQ(eval_rule(a1, none).outcome, Outcome::inapplicable);
}

TEST(Evaluation, UnlessVerdicts) {
  const RuleExpr r = parse_rule("IF p.a = 1 THEN p.b = 1 UNLESS p.c = 1");
  auto run = [&](std::optional<int> b, std::optional<int> c) {
    FactSet f;
    f.add("p", "a", Value::number(1));
    if (b) f.add("p", "b", Value::number(*b));
    if (c) f.add("p", "c", Value::number(*c));
    return eval_rule(r, f).outcome;
  };
  EXPECT_EQ(run(1, 0), Outcome::satisfied);
  EXPECT_EQ(run(0, 0), Outcome::violated);
  EXPECT_EQ(run(1, 1), Outcome::violated);
  EXPECT_EQ(run(0, std::nullopt), Outcome::violated);
  EXPECT_EQ(run(1, std::nullopt), Outcome::inapplicable);
  EXPECT_EQ(run(std::nullopt, 1), Outcome::inapplicable);
}

TEST(Evaluation, AnyMatchOverMultiValuedAttributes) {
  const FactSet f = allergy_facts();
  EXPECT_EQ(eval_atom(parse_rule(R"(patient.allergy = "latex")").atom(), f), Truth::yes);
  EXPECT_EQ(eval_atom(parse_rule(R"(patient.allergy != "latex")").atom(), f), Truth::no);
  EXPECT_EQ(eval_atom(parse_rule(R"(patient.allergy IN {"nuts", "latex"})").atom(), f), Truth::yes);
  EXPECT_EQ(eval_atom(parse_rule(R"(patient.allergy CONTAINS "nuts")").atom(), f), Truth::no);
}

TEST(Evaluation, DoesNotMutateFacts) {
  FactSet f = allergy_facts();
  const FactSet before = f;
  eval_rule(parse_rule(R"(IF patient.allergy CONTAINS "penicillin" THEN order.x = 1)"), f);
  EXPECT_EQ(f, before);
}

TEST(Claims, ConsequencesAndVerdicts) {
  const auto claims = consequence_claims(parse_rule(R"(IF a.b = 1 THEN c.d = "x" AND NOT e.f = 2)"));
  ASSERT_EQ(claims.size(), 2u);
  EXPECT_FALSE(claims[0].negated);
  EXPECT_TRUE(claims[1].negated);
  EXPECT_EQ(derived_paths(parse_rule(R"(IF a.b = 1 THEN c.d = "x" AND NOT e.f = 2)")), std::set<std::string>{"c.d"});
  const Claim v = verdict_claim("EHR-A1", Outcome::violated);
  EXPECT_TRUE(is_verdict_claim(v));
  EXPECT_EQ(v.path(), "EHR-A1.verdict");
  EXPECT_EQ(outcome_from_string(to_string(Outcome::violated)), Outcome::violated);
}

TEST(Claims, PremiseOfBareExpressionIsUnknown) {
  FactSet f;
  f.add("a", "b", Value::number(1));
  EXPECT_EQ(rule_premise(parse_rule("a.b = 1"), f), Truth::unknown);
  EXPECT_EQ(rule_premise(parse_rule("IF a.b = 1 THEN c.d = 1"), f), Truth::yes);
  EXPECT_EQ(rule_premise(parse_rule("IF a.b = 1 THEN c.d = 1 UNLESS a.b = 1"), f), Truth::no);
}

#include <gtest/gtest.h>

#include "mmia/benchmark.hpp"
#include "mmia/case_studies.hpp"
#include "mmia/error.hpp"
#include "mmia/grounded_backend.hpp"
#include "mmia/reasoning.hpp"

using namespace mmia;

namespace {

struct Fixture {
  const PackRegistry& packs = PackRegistry::builtin();
  Clock clock{true};
  std::shared_ptr<const KbSnapshot> kb = fixture_kb(packs, clock);
  Gateway gateway{std::make_shared<GroundedBackend>(packs)};

  TaskSpec task(std::string_view scenario, std::uint64_t seed = 3) const {
    const auto cases = generate_suite(scenario, seed, 10);
    return task_for_case(cases.front(), packs.get(scenario));
  }
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::io_error;
}

Plan plan_of(int n, std::vector<std::pair<int, int>> deps) {
  Plan p;
  p.task_id = "t";
  for (int i = 0; i < n; ++i) {
    TaskSpec s;
    s.id = "t." + std::to_string(i + 1);
    s.description = "sub " + std::to_string(i);
    p.subtasks.push_back(s);
  }
  p.dependencies = std::move(deps);
  return p;
}

}  // namespace

TEST(Plans, ExecutionOrderIsTopologicalWithIndexTies) {
  EXPECT_EQ(execution_order(plan_of(4, {{2, 0}, {3, 1}})), (std::vector<int>{2, 0, 3, 1}));
  EXPECT_EQ(execution_order(plan_of(3, {})), (std::vector<int>{0, 1, 2}));
}

TEST(Plans, InvalidPlansAreProtocolErrors) {
  EXPECT_EQ(code_of([] { validate_plan(plan_of(0, {})); }), ErrorCode::protocol_error);
  EXPECT_EQ(code_of([] { validate_plan(plan_of(2, {{0, 1}, {1, 0}})); }), ErrorCode::protocol_error);
  EXPECT_EQ(code_of([] { validate_plan(plan_of(2, {{0, 5}})); }), ErrorCode::protocol_error);
}

TEST(Tasks, Validation) {
  TaskSpec t;
  t.id = "x";
  t.description = "d";
  EXPECT_NO_THROW(validate_task(t));
  t.budget.max_depth = 0;
  EXPECT_EQ(code_of([&] { validate_task(t); }), ErrorCode::validation_error);
  t.budget.max_depth = 3;
  t.description.clear();
  EXPECT_EQ(code_of([&] { validate_task(t); }), ErrorCode::validation_error);
  t.description = "d";
  t.scenario = "astrology";
  EXPECT_EQ(code_of([&] { validate_task(t); }), ErrorCode::validation_error);
}

TEST(Engine, RunsTheFullLoopOnEveryScenario) {
  Fixture f;
  for (const char* scenario : {"drg", "regulatory", "ehr", "insurance"}) {
    ReasoningEngine engine(f.gateway, f.kb, EngineOptions{f.clock, 0.0, {}});
    const TaskSpec task = f.task(scenario);
    const ExecutionLog log = engine.execute_task(task);
    ASSERT_EQ(log.status, RunStatus::complete) << scenario << ": " << (log.error ? log.error->message : "");
    ASSERT_TRUE(log.plan) << scenario;
    EXPECT_FALSE(log.atomicity->atomic);
    EXPECT_EQ(log.children.size(), log.plan->subtasks.size());
    ASSERT_TRUE(log.final_answer);
    EXPECT_EQ(log.total_tokens, recount_tokens(log));
    EXPECT_GT(log.total_tokens, 0);
    const auto steps = flatten_steps(log);
    ASSERT_FALSE(steps.empty());
    for (std::size_t i = 0; i < steps.size(); ++i) {
      EXPECT_EQ(steps[i]->index, static_cast<int>(i));
      EXPECT_NE(steps[i]->prompt.find("<context>"), std::string::npos);
    }
    EXPECT_EQ(log.started, Clock{true}.now());
  }
}

TEST(Engine, LogsRoundTripThroughJson) {
  Fixture f;
  ReasoningEngine engine(f.gateway, f.kb, EngineOptions{f.clock, 0.0, {}});
  const ExecutionLog log = engine.execute_task(f.task("ehr"));
  const json j = to_json(log);
  EXPECT_EQ(to_json(log_from_json(j)), j);
}

TEST(Engine, StepCapLeavesTheRunIncomplete) {
  Fixture f;
  ReasoningEngine engine(f.gateway, f.kb, EngineOptions{f.clock, 0.0, {}});
  TaskSpec task = f.task("drg");
  task.budget.max_steps = 2;
  const ExecutionLog log = engine.execute_task(task);
  EXPECT_EQ(log.status, RunStatus::incomplete);
  ASSERT_TRUE(log.error);
  EXPECT_EQ(log.error->code, "budget-exhausted");
  EXPECT_FALSE(log.final_answer);
  EXPECT_LE(flatten_steps(log).size(), 2u);
}

TEST(Engine, DepthLimitOnANonAtomicRoot) {
  Fixture f;
  ReasoningEngine engine(f.gateway, f.kb, EngineOptions{f.clock, 0.0, {}});
  TaskSpec task = f.task("drg");
  task.budget.max_depth = 1;
  const ExecutionLog log = engine.execute_task(task);
  EXPECT_EQ(log.status, RunStatus::incomplete);
  EXPECT_EQ(log.error->code, "budget-exhausted");
}

TEST(Engine, SubtasksAtTheDepthLimitAreForcedAtomic) {
  Fixture f;
  ReasoningEngine engine(f.gateway, f.kb, EngineOptions{f.clock, 0.0, {}});
  TaskSpec sub = f.task("drg");
  sub.budget.max_depth = 2;
  TokenUsage usage;
  const AtomicityVerdict v = engine.assess_atomicity(sub, 2, usage);
  EXPECT_TRUE(v.atomic);
  EXPECT_TRUE(v.forced);
  EXPECT_EQ(usage.total(), 0);
}

TEST(Engine, AggregateRejectsIncompleteChildren) {
  Fixture f;
  ReasoningEngine engine(f.gateway, f.kb, EngineOptions{f.clock, 0.0, {}});
  const TaskSpec task = f.task("drg");
  const Plan plan = plan_of(2, {});
  ExecutionLog done;
  done.task = plan.subtasks[0];
  done.final_answer = FinalAnswer{"ok", {}};
  ExecutionLog missing;
  missing.task = plan.subtasks[1];
  TokenUsage usage;
  EXPECT_EQ(code_of([&] { engine.aggregate(task, plan, {done, missing}, usage); }), ErrorCode::incomplete_input);
}

TEST(Engine, RetrievalFollowsVerdictGoals) {
  Fixture f;
  ReasoningEngine engine(f.gateway, f.kb, EngineOptions{f.clock, 0.0, {}});
  TaskSpec t;
  t.id = "r";
  t.description = "check";
  t.scenario = "ehr";
  t.goals = {"EHR-A1.verdict"};
  const auto rules = engine.retrieve(t);
  ASSERT_FALSE(rules.empty());
  EXPECT_TRUE(std::any_of(rules.begin(), rules.end(), [](const Axiom* a) { return a->id == "EHR-A1"; }));
  for (const Axiom* a : rules) EXPECT_EQ(a->status, AxiomStatus::approved);
}

TEST(Helpers, StableHashAndIdOrder) {
  EXPECT_EQ(fnv1a64(""), 14695981039346656037ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_TRUE(axiom_id_less("DRG-A2", "DRG-A10"));
  EXPECT_FALSE(axiom_id_less("DRG-A10", "DRG-A2"));
  EXPECT_EQ(lenient_value(json("`J18.9`")), Value::code("J18.9"));
  EXPECT_EQ(lenient_value(json("free words here")), Value::text("free words here"));
  EXPECT_EQ(lenient_value(json(3)), Value::number(3));
}

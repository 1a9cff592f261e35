#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <functional>
#include <limits>

#include "mmia/cost_model.hpp"
#include "mmia/error.hpp"
#include "mmia/gateway.hpp"

using namespace mmia;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::io_error;
}

PhaseSimConfig config(std::int64_t denovo, std::int64_t match, const char* fraction) {
  PhaseSimConfig c;
  c.denovo_tokens = denovo;
  c.match_tokens = match;
  c.match_fraction = Rational::parse(fraction);
  return c;
}

}  // namespace

TEST(Rational, NormalizesAndParses) {
  EXPECT_EQ(Rational(6, -8), Rational(-3, 4));
  EXPECT_EQ(Rational::parse("0.8"), Rational(4, 5));
  EXPECT_EQ(Rational::parse("4/5"), Rational(4, 5));
  EXPECT_EQ(Rational::parse(" -1.25 "), Rational(-5, 4));
  EXPECT_EQ(Rational::parse("+3500"), Rational(3500));
  EXPECT_EQ(Rational::parse("3500").str(), "3500");
  EXPECT_EQ(Rational(11, 35).str(), "11/35");
  for (const char* bad : {"", "abc", "1.2.3", "1/0", "0.8x", "--1", "."}) {
    EXPECT_EQ(code_of([&] { Rational::parse(bad); }), ErrorCode::validation_error) << bad;
  }
}

TEST(Rational, ArithmeticAndOrdering) {
  EXPECT_EQ(Rational(1, 3) + Rational(1, 6), Rational(1, 2));
  EXPECT_EQ(Rational(1, 3) - Rational(1, 2), Rational(-1, 6));
  EXPECT_EQ(Rational(4, 5) * Rational(500), Rational(400));
  EXPECT_EQ(Rational(1100) / Rational(3500), Rational(11, 35));
  EXPECT_LT(Rational(1, 3), Rational(1, 2));
  EXPECT_GT(Rational(-1, 3), Rational(-1, 2));
  EXPECT_THROW(Rational(1) / Rational(0), Error);
}

TEST(Rational, OverflowIsAnError) {
  const std::int64_t big = std::numeric_limits<std::int64_t>::max();
  EXPECT_EQ(code_of([&] { Rational(big) + Rational(1); }), ErrorCode::validation_error);
  EXPECT_EQ(code_of([&] { Rational(big) * Rational(2); }), ErrorCode::validation_error);
  EXPECT_EQ(code_of([] { Rational::parse("99999999999999999999"); }), ErrorCode::validation_error);
}

TEST(Rational, DecimalRoundsHalfAwayFromZero) {
  EXPECT_EQ(Rational(11, 35).decimal(3), "0.314");
  EXPECT_EQ(Rational(1, 8).decimal(2), "0.13");
  EXPECT_EQ(Rational(-1, 8).decimal(2), "-0.13");
  EXPECT_EQ(Rational(1, 7).decimal(0), "0");
  EXPECT_EQ(Rational(5).decimal(1), "5.0");
  EXPECT_EQ(percent_text(Rational(11, 35)), "31.4%");
  EXPECT_EQ(percent_text(Rational(1, 7)), "14.3%");
  EXPECT_EQ(percent_text(Rational(1)), "100.0%");
}

TEST(PhaseSimulation, ReferenceNumbers) {
  const PhaseReport r = simulate_phases(config(3500, 500, "0.8"));
  EXPECT_EQ(r.initial_average, Rational(3500));
  EXPECT_EQ(r.mature_average, Rational(1100));
  EXPECT_EQ(r.relative_cost, Rational(11, 35));
  EXPECT_EQ(r.matched_relative, Rational(1, 7));
  EXPECT_EQ(r.total_tokens, Rational(100 * 3500 + 100 * 1100));
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.rows[3].tokens, Rational(1100));
  EXPECT_EQ(r.rows[3].relative, Rational(11, 35));
  const json j = to_json(r);
  EXPECT_EQ(j.at("mature_average_tokens"), "1100");
  EXPECT_EQ(j.at("relative_cost"), "31.4%");
  EXPECT_EQ(j.at("matched_task_reduction"), "85.7%");
  EXPECT_EQ(j.at("schema"), "phase_report_v1");
  const std::string table = format_phase_table(r);
  EXPECT_NE(table.find("1100"), std::string::npos);
  EXPECT_NE(table.find("31.4%"), std::string::npos);
}

TEST(PhaseSimulation, EdgeFractions) {
  EXPECT_EQ(simulate_phases(config(3500, 500, "0")).mature_average, Rational(3500));
  EXPECT_EQ(simulate_phases(config(3500, 500, "1")).mature_average, Rational(500));
  EXPECT_EQ(simulate_phases(config(1000, 250, "1/3")).mature_average, Rational(750));
}

TEST(PhaseSimulation, Validation) {
  EXPECT_EQ(code_of([] { simulate_phases(config(0, 500, "0.8")); }), ErrorCode::validation_error);
  EXPECT_EQ(code_of([] { simulate_phases(config(3500, -1, "0.8")); }), ErrorCode::validation_error);
  EXPECT_EQ(code_of([] { simulate_phases(config(3500, 500, "1.2")); }), ErrorCode::validation_error);
  EXPECT_EQ(code_of([] { simulate_phases(config(3500, 500, "-0.1")); }), ErrorCode::validation_error);
  PhaseSimConfig c = config(3500, 500, "0.8");
  c.n_mature = 0;
  EXPECT_EQ(code_of([&] { simulate_phases(c); }), ErrorCode::validation_error);
}

TEST(CostLedger, RecordsAndAverages) {
  CostLedger ledger;
  EXPECT_FALSE(ledger.average_tokens());
  ledger.record(CostEntry{"t1", DispatchMode::de_novo, 3500, 0.0, "drg", std::nullopt, 0.1});
  ledger.record(CostEntry{"t2", DispatchMode::rag_match, 500, 0.0, "drg", "DRG-T1", 0.93});
  ledger.record(CostEntry{"t3", DispatchMode::rag_match, 500, 0.0, "drg", "DRG-T1", 0.91});
  EXPECT_EQ(*ledger.average_tokens(), Rational(4500, 3));
  EXPECT_EQ(*ledger.average_tokens(DispatchMode::rag_match), Rational(500));
  EXPECT_EQ(ledger.total_tokens(DispatchMode::de_novo), 3500);
  EXPECT_EQ(code_of([&] { ledger.record(CostEntry{"t1", DispatchMode::de_novo, 1}); }), ErrorCode::ledger_error);
  EXPECT_EQ(code_of([&] { ledger.record(CostEntry{"t9", DispatchMode::de_novo, -1}); }), ErrorCode::ledger_error);
  EXPECT_EQ(ledger.size(), 3u);
}

TEST(CostLedger, PersistsAsJsonl) {
  const fs::path file = fs::temp_directory_path() / ("mmia-ledger-" + std::to_string(::getpid()) + ".jsonl");
  fs::remove(file);
  {
    CostLedger ledger(file);
    ledger.record(CostEntry{"run-1", DispatchMode::de_novo, 3500});
    ledger.record(CostEntry{"run-2", DispatchMode::rag_match, 500, 0.0, "drg", "DRG-T1", 0.95});
  }
  CostLedger reloaded(file);
  EXPECT_EQ(reloaded.size(), 2u);
  EXPECT_TRUE(reloaded.contains("run-2"));
  EXPECT_EQ(reloaded.entries()[1].theorem_id, std::optional<std::string>("DRG-T1"));
  EXPECT_EQ(to_json(reloaded.entries()[1]).at("mode"), "rag-match");
  EXPECT_EQ(to_json(reloaded.entries()[1]).at("schema"), "cost_v1");
  EXPECT_THROW(reloaded.record(CostEntry{"run-1", DispatchMode::de_novo, 1}), Error);
  // A file that repeats a task id is rejected on load.
  write_text_file(file, read_text_file(file) + to_json(CostEntry{"run-1", DispatchMode::de_novo, 7}).dump() + "\n");
  EXPECT_THROW(CostLedger{file}, Error);
  fs::remove(file);
}

TEST(CostLedger, ModeStrings) {
  EXPECT_EQ(to_string(DispatchMode::de_novo), "de-novo");
  EXPECT_EQ(dispatch_mode_from_string("rag-match"), DispatchMode::rag_match);
  EXPECT_THROW(dispatch_mode_from_string("other"), Error);
}

TEST(DualMode, MatchedTasksSkipTheReasoningLoop) {
  const Clock clock{true};
  KnowledgeBase kb;
  Axiom t;
  t.id = "DRG-T1";
  t.kind = AxiomKind::theorem;
  t.scenario = "drg";
  t.rule_text = R"(IF case.principal_diagnosis IN {`J18.9`} AND case.procedure IN {`36.0601`} THEN task.outcome = "erroneous")";
  t.rule = parse_rule(t.rule_text);
  t.status = AxiomStatus::approved;
  t.template_text = "Verify clinical logic consistency between {diagnosis} and {procedure}";
  kb.add(t);
  const auto snap = kb.snapshot();
  const VectorIndex index = build_theorem_index(*snap);
  Gateway gateway(std::make_shared<ScriptedBackend>(
      ScriptedBackend::from_file(fs::path(MMIA_TEST_DATA_DIR) / "cost_scenario.json")));
  ReasoningEngine engine(gateway, snap, EngineOptions{clock, 0.0, {}});

  TaskSpec task;
  task.id = "d1";
  task.scenario = "drg";
  task.description = "Audit a pneumonia admission billed with a coronary stent";
  task.facts.add("case", "principal_diagnosis", Value::code("J18.9"));
  task.facts.add("case", "procedure", Value::code("36.0601"));
  task.goals = {"task.outcome"};
  const DualModeRun matched = execute_dual_mode(task, engine, index, 0.8, gateway, clock);
  EXPECT_EQ(matched.decision.mode, DispatchMode::rag_match);
  EXPECT_EQ(matched.log.total_tokens, 500);
  EXPECT_EQ(matched.wall_seconds, 0.0);
  const CostEntry e = ledger_entry(matched);
  EXPECT_EQ(e.theorem_id, std::optional<std::string>("DRG-T1"));
  EXPECT_EQ(e.task_id, "d1");

  task.id = "d2";
  task.description = "Reconcile the discharge medication list of admission 7";
  const DualModeRun fresh = execute_dual_mode(task, engine, index, 0.8, gateway, clock);
  EXPECT_EQ(fresh.decision.mode, DispatchMode::de_novo);
  EXPECT_EQ(fresh.log.total_tokens, 3500);
  EXPECT_FALSE(ledger_entry(fresh).theorem_id);
}

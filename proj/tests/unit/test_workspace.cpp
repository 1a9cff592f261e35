#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>

#include "mmia/error.hpp"
#include "mmia/workspace.hpp"

using namespace mmia;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mmia-ws-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

EngineConfig replay_config(const fs::path& dir) {
  EngineConfig c;
  c.replay = true;
  c.data_dir = dir;
  return c;
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

TaskSpec ehr_task(Workspace& ws) {
  const BenchmarkCase c = generate_case("ehr", "ehr-strep-macrolide", 1);
  return task_for_case(c, ws.packs().get("ehr"));
}

}  // namespace

TEST(Workspace, TasksSurviveARestart) {
  const fs::path dir = scratch("restart");
  std::string answer;
  {
    Workspace ws(replay_config(dir));
    const TaskRecord first = ws.submit_task(ehr_task(ws));
    EXPECT_EQ(first.run_id, "run-1");
    EXPECT_EQ(first.cost.task_id, "run-1");
    ASSERT_TRUE(first.log.final_answer);
    answer = first.log.final_answer->text;
    EXPECT_EQ(ws.submit_task(ehr_task(ws)).run_id, "run-2");
    EXPECT_EQ(ws.ledger().size(), 2u);
  }
  Workspace ws(replay_config(dir));
  EXPECT_EQ(ws.task_ids(), (std::vector<std::string>{"run-1", "run-2"}));
  const auto back = ws.find_task("run-1");
  ASSERT_TRUE(back);
  ASSERT_TRUE(back->log.final_answer);
  EXPECT_EQ(back->log.final_answer->text, answer);
  EXPECT_EQ(back->consensus.outcome, ConsensusOutcome::certified);
  EXPECT_EQ(back->cost.task_id, "run-1");
  EXPECT_EQ(ws.submit_task(ehr_task(ws)).run_id, "run-3");
  EXPECT_FALSE(ws.find_task("run-99"));
  EXPECT_EQ(task_summary(*back).at("task_id"), "run-1");
  fs::remove_all(dir);
}

TEST(Workspace, TaskRequestsGetTheDefaultBudget) {
  const fs::path dir = scratch("request");
  EngineConfig c = replay_config(dir);
  c.budget.max_steps = 17;
  Workspace ws(c);
  json body = to_json(ehr_task(ws));
  body.erase("budget");
  EXPECT_EQ(ws.task_from_request(body).budget.max_steps, 17);
  EXPECT_EQ(code_of([&] { ws.task_from_request(json::array()); }), ErrorCode::validation_error);
  fs::remove_all(dir);
}

TEST(Workspace, IngestAndReview) {
  const fs::path dir = scratch("ingest");
  EngineConfig c = replay_config(dir);
  c.seed_pack_axioms = false;
  Workspace ws(c);
  EXPECT_TRUE(ws.list_axioms().empty());
  const Document doc = ws.packs().get("ehr").reference_documents.front();
  const IngestResult r = ws.ingest_document(doc, "ehr");
  ASSERT_EQ(r.review_entries.size(), 2u);
  EXPECT_EQ(ws.list_axioms(AxiomStatus::candidate).size(), 2u);

  const ReviewOutcome approved = ws.resolve_review(r.review_entries[0], json{{"decision", "approve"}, {"reviewer", "ana"}});
  ASSERT_TRUE(approved.axiom);
  EXPECT_EQ(approved.axiom->status, AxiomStatus::approved);
  EXPECT_EQ(approved.entry.status, EntryStatus::resolved);
  EXPECT_EQ(code_of([&] { ws.resolve_review(r.review_entries[0], json{{"decision", "approve"}, {"reviewer", "ana"}}); }),
            ErrorCode::state_error);

  const Axiom original = *ws.kb().snapshot()->find(ws.queue().find(r.review_entries[1])->payload);
  const ReviewOutcome edited = ws.resolve_review(
      r.review_entries[1], json{{"decision", "edit"}, {"reviewer", "ana"}, {"rule_text", original.rule_text}});
  ASSERT_TRUE(edited.follow_up_entry);
  EXPECT_EQ(ws.queue().find(*edited.follow_up_entry)->status, EntryStatus::open);
  EXPECT_EQ(ws.list_axioms(AxiomStatus::approved).size(), 1u);

  EXPECT_EQ(code_of([&] { ws.resolve_review("RQ-404", json{{"decision", "approve"}, {"reviewer", "ana"}}); }),
            ErrorCode::not_found);
  EXPECT_EQ(code_of([&] { ws.resolve_review(*edited.follow_up_entry, json{{"decision", "approve"}}); }),
            ErrorCode::validation_error);
  EXPECT_EQ(code_of([&] { ws.resolve_review(*edited.follow_up_entry, json{{"decision", "certify"}, {"reviewer", "a"}}); }),
            ErrorCode::validation_error);
  EXPECT_EQ(code_of([&] { ws.ingest_document(doc, "astrology"); }), ErrorCode::validation_error);
  EXPECT_EQ(code_of([&] { ws.ingest_document(Document{"", ""}, "ehr"); }), ErrorCode::validation_error);
  fs::remove_all(dir);
}

TEST(Workspace, BenchRunsAreNumberedAndStored) {
  const fs::path dir = scratch("bench");
  Workspace ws(replay_config(dir));
  const auto suite = generate_suite("drg", 3, 5);
  const BenchmarkRun run = ws.run_bench(suite, EngineMode::mmia);
  EXPECT_EQ(run.run_id, "bench-1");
  const auto metrics = ws.bench_metrics("bench-1");
  ASSERT_TRUE(metrics);
  EXPECT_EQ(metrics->at("overall"), to_json(run.metrics.overall));
  EXPECT_FALSE(ws.bench_metrics("bench-2"));
  EXPECT_FALSE(ws.bench_metrics("../bench-1"));
  EXPECT_EQ(ws.run_bench(suite, EngineMode::baseline).run_id, "bench-2");
  fs::remove_all(dir);
}

TEST(Workspace, UnwritableDataDirIsAStartupError) {
  EngineConfig c;
  c.data_dir = "/proc/mmia-cannot-exist";
  EXPECT_EQ(code_of([&] { Workspace ws(c); }), ErrorCode::startup_error);
}

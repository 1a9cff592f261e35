#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include <pthread.h>

#include "CLI11.hpp"
#include "mmia/benchmark.hpp"
#include "mmia/case_studies.hpp"
#include "mmia/config.hpp"
#include "mmia/cost_model.hpp"
#include "mmia/error.hpp"
#include "mmia/http_service.hpp"
#include "mmia/workspace.hpp"

using namespace mmia;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitFlagged = 2;
constexpr int kExitDisagreement = 3;

int exit_code(ConsensusOutcome outcome) {
  switch (outcome) {
    case ConsensusOutcome::certified: return kExitOk;
    case ConsensusOutcome::flagged: return kExitFlagged;
    case ConsensusOutcome::disagreement: return kExitDisagreement;
  }
  return kExitError;
}

json read_json_file(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::not_found, "no such file: " + path.string());
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::validation_error, path.string() + " is not JSON: " + e.what());
  }
}

void print_consensus(const std::string& label, const ConsensusResult& result) {
  std::cout << label << ": " << to_string(result.outcome) << "\n";
  for (const auto& report : result.reports) {
    std::cout << "  " << report.verifier_id << ": " << (report.certified() ? "pass" : "fail") << "\n";
    for (const auto& issue : report.issues) {
      std::cout << "    [" << to_string(issue.kind) << "] ";
      if (issue.location.step_index >= 0) std::cout << "step " << issue.location.step_index << " ";
      if (!issue.location.task_id.empty()) std::cout << "(" << issue.location.task_id << ") ";
      std::cout << issue.message;
      if (issue.cited_rule) std::cout << " {" << *issue.cited_rule << "}";
      std::cout << "\n";
    }
  }
}

// Logs stored as a bare ExecutionLog, a {run_id, log} record, or JSONL of records.
std::vector<std::pair<std::string, ExecutionLog>> read_logs(const fs::path& path) {
  std::vector<std::pair<std::string, ExecutionLog>> out;
  auto add = [&](const json& v, const std::string& fallback) {
    if (v.contains("log")) out.emplace_back(v.value("run_id", fallback), log_from_json(v.at("log")));
    else out.emplace_back(fallback, log_from_json(v));
  };
  if (path.extension() == ".jsonl") {
    if (!fs::exists(path)) fail(ErrorCode::not_found, "no such file: " + path.string());
    int n = 0;
    for (const json& v : read_jsonl(path)) add(v, "record-" + std::to_string(++n));
  } else {
    add(read_json_file(path), path.stem().string());
  }
  if (out.empty()) fail(ErrorCode::validation_error, path.string() + " holds no logs");
  return out;
}

int serve(Workspace& ws) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  HttpService service(ws);
  const int port = service.start();
  std::cout << "mmia " << version() << " listening on " << ws.config().host << ":" << port << std::endl;
  int received = 0;
  sigwait(&signals, &received);
  std::cout << "shutting down" << std::endl;
  service.stop();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verifiable multi-step reasoning engine with audited chains"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));
  std::string config_file;
  app.add_option("--config", config_file, "flat key = value config file (MMIA_* env vars override)");
  app.fallthrough();

  std::function<int()> action;
  auto workspace = [&] { return std::make_unique<Workspace>(load_config(config_file)); };

  // run
  auto* run = app.add_subcommand("run", "execute a task and audit its chain");
  std::string task_file, log_out;
  run->add_option("task-file", task_file, "TaskSpec JSON")->required();
  run->add_option("--log-out", log_out, "also write the execution log here");
  run->callback([&] {
    action = [&] {
      auto ws = workspace();
      const TaskRecord rec = ws->submit_task(ws->task_from_request(read_json_file(task_file)));
      if (!log_out.empty()) write_text_file(log_out, to_json(rec.log).dump(2) + "\n");
      std::cout << task_summary(rec).dump(2) << "\n";
      print_consensus(rec.run_id, rec.consensus);
      return exit_code(rec.consensus.outcome);
    };
  });

  // audit
  auto* audit = app.add_subcommand("audit", "audit a stored execution log");
  std::string audit_file;
  bool audit_json = false;
  audit->add_option("log-file", audit_file, "ExecutionLog JSON")->required();
  audit->add_flag("--json", audit_json, "print the consensus result as JSON");
  audit->callback([&] {
    action = [&] {
      auto ws = workspace();
      const json doc = read_json_file(audit_file);
      const ExecutionLog log = log_from_json(doc.contains("log") ? doc.at("log") : doc);
      const ConsensusResult result = ws->audit_log(log);
      if (audit_json) std::cout << to_json(result).dump(2) << "\n";
      else print_consensus(log.task.id, result);
      return exit_code(result.outcome);
    };
  });

  // replay
  auto* replay = app.add_subcommand("replay", "re-audit stored logs with frozen timestamps");
  std::string replay_file;
  replay->add_option("log-file", replay_file, "log JSON, or a logs.jsonl store")->required();
  replay->callback([&] {
    action = [&] {
      EngineConfig config = load_config(config_file);
      config.replay = true;
      Workspace ws(config);
      std::map<std::string, std::string> stored;
      const fs::path audits = fs::path(replay_file).parent_path() / "audits.jsonl";
      if (fs::path(replay_file).extension() == ".jsonl" && fs::exists(audits)) {
        for (const json& r : read_jsonl(audits)) {
          stored[r.value("run_id", "")] = r.at("consensus").value("outcome", "");
        }
      }
      int worst = kExitOk;
      for (const auto& [id, log] : read_logs(replay_file)) {
        const ConsensusResult result = ws.audit_log(log);
        print_consensus(id, result);
        if (auto it = stored.find(id); it != stored.end() && it->second != to_string(result.outcome)) {
          std::cout << "  stored outcome was " << it->second << "\n";
        }
        worst = std::max(worst, exit_code(result.outcome));
      }
      return worst;
    };
  });

  // bench
  auto* bench = app.add_subcommand("bench", "benchmark suites");
  bench->require_subcommand(1);
  auto* bench_run = bench->add_subcommand("run", "run a suite and print metrics");
  std::string suite_file, mode_text = "mmia", bench_out;
  bench_run->add_option("suite", suite_file, "suite JSONL (bench_v1)")->required();
  bench_run->add_option("--mode", mode_text, "mmia | baseline")->check(CLI::IsMember({"mmia", "baseline"}));
  bench_run->add_option("--out", bench_out, "output directory (default: <data_dir>/bench/<run>)");
  bench_run->callback([&] {
    action = [&] {
      auto ws = workspace();
      const auto suite = read_suite(suite_file);
      std::optional<fs::path> out;
      if (!bench_out.empty()) out = bench_out;
      const BenchmarkRun result = ws->run_bench(suite, engine_mode_from_string(mode_text), out);
      std::cout << format_metrics_table(result.metrics);
      const fs::path dir = out ? *out : ws->config().data_dir / "bench" / result.run_id;
      std::cout << "run " << result.run_id << ": " << (dir / "results.jsonl").string() << "\n";
      return kExitOk;
    };
  });
  auto* bench_gen = bench->add_subcommand("generate", "write a synthetic suite");
  std::string gen_scenario, gen_out;
  std::uint64_t gen_seed = 0;
  int gen_size = kDefaultSuiteSize;
  bench_gen->add_option("scenario", gen_scenario, "drg | regulatory | ehr | insurance | all")->required();
  bench_gen->add_option("--seed", gen_seed, "suite seed");
  bench_gen->add_option("--size", gen_size, "cases per scenario");
  bench_gen->add_option("--out", gen_out, "suite JSONL to write")->required();
  bench_gen->callback([&] {
    action = [&] {
      std::vector<BenchmarkCase> suite;
      std::vector<std::string> scenarios{gen_scenario};
      if (gen_scenario == "all") scenarios = {"drg", "regulatory", "ehr", "insurance"};
      for (const auto& s : scenarios) {
        for (auto& c : generate_suite(s, gen_seed, gen_size)) suite.push_back(std::move(c));
      }
      write_suite(gen_out, suite);
      std::cout << suite.size() << " cases written to " << gen_out << "\n";
      return kExitOk;
    };
  });

  // simulate-cost
  auto* sim = app.add_subcommand("simulate-cost", "two-phase token cost simulation");
  std::string denovo = "3500", match = "500", fraction = "0.8", n_initial = "100", n_mature = "100";
  bool sim_json = false;
  sim->add_option("--denovo", denovo, "tokens per de novo task");
  sim->add_option("--match", match, "tokens per matched task");
  sim->add_option("--fraction", fraction, "share of mature-phase tasks that match, e.g. 0.8 or 4/5");
  sim->add_option("--n-initial", n_initial, "initial-phase task count");
  sim->add_option("--n-mature", n_mature, "mature-phase task count");
  sim->add_flag("--json", sim_json, "print the report as JSON");
  sim->callback([&] {
    action = [&] {
      auto whole = [](const std::string& text, const char* name) {
        const Rational r = Rational::parse(text);
        if (r.den() != 1) fail(ErrorCode::validation_error, std::string(name) + " must be a whole number");
        return r.num();
      };
      PhaseSimConfig c;
      c.denovo_tokens = whole(denovo, "--denovo");
      c.match_tokens = whole(match, "--match");
      c.match_fraction = Rational::parse(fraction);
      c.n_initial = whole(n_initial, "--n-initial");
      c.n_mature = whole(n_mature, "--n-mature");
      const PhaseReport report = simulate_phases(c);
      if (sim_json) std::cout << to_json(report).dump(2) << "\n";
      else std::cout << format_phase_table(report);
      return kExitOk;
    };
  });

  // kb
  auto* kb = app.add_subcommand("kb", "knowledge base");
  kb->require_subcommand(1);
  auto* ingest = kb->add_subcommand("ingest", "extract candidate axioms from a document");
  std::string doc_file, doc_scenario, doc_id;
  ingest->add_option("doc", doc_file, "document text file")->required();
  ingest->add_option("--scenario", doc_scenario, "scenario pack")->required();
  ingest->add_option("--id", doc_id, "document id (default: file stem)");
  ingest->callback([&] {
    action = [&] {
      auto ws = workspace();
      const Document doc{doc_id.empty() ? fs::path(doc_file).stem().string() : doc_id, read_text_file(doc_file)};
      const IngestResult r = ws->ingest_document(doc, doc_scenario);
      for (std::size_t i = 0; i < r.candidates.size(); ++i) {
        const Axiom& a = r.candidates[i];
        std::cout << a.key() << " [" << to_string(a.status) << "] " << a.rule_text;
        if (!a.rejection_reason.empty()) std::cout << "  (" << a.rejection_reason << ")";
        std::cout << "\n";
      }
      std::cout << r.review_entries.size() << " queued for review\n";
      return kExitOk;
    };
  });
  auto* list = kb->add_subcommand("list", "list axioms and theorems");
  std::string list_status;
  list->add_option("--status", list_status, "candidate | approved | rejected | superseded");
  list->callback([&] {
    action = [&] {
      auto ws = workspace();
      std::optional<AxiomStatus> status;
      if (!list_status.empty()) status = status_from_string(list_status);
      for (const auto& a : ws->list_axioms(status)) {
        std::cout << a.key() << "\t" << to_string(a.status) << "\t" << to_string(a.kind) << "\t" << a.rule_text
                  << "\n";
      }
      return kExitOk;
    };
  });
  std::string review_id, reviewer = "cli", reason;
  auto* approve = kb->add_subcommand("approve", "approve a candidate");
  approve->add_option("id", review_id, "axiom id")->required();
  approve->add_option("--reviewer", reviewer, "reviewer name");
  auto* reject = kb->add_subcommand("reject", "reject a candidate");
  reject->add_option("id", review_id, "axiom id")->required();
  reject->add_option("--reviewer", reviewer, "reviewer name");
  reject->add_option("--reason", reason, "why");
  auto review = [&](ReviewDecision::Kind kind) {
    action = [&, kind] {
      auto ws = workspace();
      ReviewDecision d;
      d.kind = kind;
      d.reason = reason;
      const Axiom a = ws->review_axiom(review_id, d, reviewer);
      std::cout << a.key() << " " << to_string(a.status) << "\n";
      return kExitOk;
    };
  };
  approve->callback([&] { review(ReviewDecision::Kind::approve); });
  reject->callback([&] { review(ReviewDecision::Kind::reject); });

  // serve
  auto* srv = app.add_subcommand("serve", "run the HTTP service");
  srv->callback([&] {
    action = [&] {
      EngineConfig config;
      try {
        config = load_config(config_file);
      } catch (const Error& e) {
        fail(ErrorCode::startup_error, e.what());
      }
      Workspace ws(config);
      return serve(ws);
    };
  });

  // fixtures
  auto* fixtures = app.add_subcommand("fixtures", "case-study fixtures");
  fixtures->require_subcommand(1);
  auto* fx_export = fixtures->add_subcommand("export", "regenerate the case-study fixture files");
  std::string fx_dir = (default_data_dir() / "fixtures").string();
  fx_export->add_option("--dir", fx_dir, "output directory");
  fx_export->callback([&] {
    action = [&] {
      export_fixtures(fx_dir, PackRegistry::builtin(), Clock{true});
      std::cout << case_studies().size() << " case studies written to " << fx_dir << "\n";
      return kExitOk;
    };
  });

  // config
  auto* cfg = app.add_subcommand("config", "print the effective configuration");
  cfg->callback([&] {
    action = [&] {
      std::cout << to_config_text(load_config(config_file));
      return kExitOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }
  try {
    return action ? action() : kExitError;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}

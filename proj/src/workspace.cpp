#include "mmia/workspace.hpp"

#include <fstream>

#include "mmia/error.hpp"
#include "mmia/reasoning.hpp"

namespace mmia {

namespace fs = std::filesystem;

namespace {

EngineConfig prepared(EngineConfig config) {
  validate(config);
  std::error_code ec;
  fs::create_directories(config.data_dir, ec);
  if (ec || !fs::is_directory(config.data_dir)) {
    fail(ErrorCode::startup_error, "data directory " + config.data_dir.string() + " cannot be created");
  }
  const fs::path probe = config.data_dir / ".write-probe";
  {
    std::ofstream out(probe);
    if (!out || !(out << "ok")) {
      fail(ErrorCode::startup_error, "data directory " + config.data_dir.string() + " is not writable");
    }
  }
  fs::remove(probe, ec);
  return config;
}

PackRegistry load_packs(const EngineConfig& config) {
  if (config.packs_dir.empty()) return PackRegistry::builtin();
  return PackRegistry::load_directory(config.packs_dir);
}

std::uint64_t counter_of(const std::string& id, std::string_view prefix) {
  if (id.rfind(prefix, 0) != 0) return 0;
  try {
    return std::stoull(id.substr(prefix.size()));
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

json task_summary(const TaskRecord& r) {
  return json{{"task_id", r.run_id},
              {"task", r.log.task.id},
              {"status", to_string(r.log.status)},
              {"mode", to_string(r.cost.mode)},
              {"final_answer", r.log.final_answer ? to_json(*r.log.final_answer) : json(nullptr)},
              {"error", r.log.error ? json{{"code", r.log.error->code}, {"message", r.log.error->message}}
                                    : json(nullptr)},
              {"consensus", to_string(r.consensus.outcome)},
              {"review_entry_id", r.consensus.review_entry_id ? json(*r.consensus.review_entry_id) : json(nullptr)},
              {"promoted_theorem_id",
               r.consensus.promoted_theorem_id ? json(*r.consensus.promoted_theorem_id) : json(nullptr)},
              {"total_tokens", r.log.total_tokens}};
}

Workspace::Workspace(EngineConfig config)
    : config_(prepared(std::move(config))),
      clock_{config_.replay},
      packs_(load_packs(config_)),
      kb_(config_.data_dir, clock_),
      queue_(config_.data_dir, clock_),
      ledger_(config_.data_dir / "cost_ledger.jsonl") {
  GatewayOptions options;
  options.audit_file = config_.data_dir / "calls.jsonl";
  options.clock = clock_;
  gateway_ = std::make_unique<Gateway>(make_backend(config_, packs_), options);
  policy_ = consensus_policy(config_, gateway_->backend().id());
  validate_policy(policy_);

  if (config_.seed_pack_axioms) seed_pack_axioms(kb_, packs_, clock_);
  index_ = build_theorem_index(*kb_.snapshot());
  kb_.on_approved([this](const Axiom& a) {
    if (a.kind == AxiomKind::theorem && !a.template_text.empty()) index_.upsert(a.id, embed(a.template_text));
  });

  std::map<std::string, ConsensusResult> audits;
  for (const json& r : read_jsonl(config_.data_dir / "audits.jsonl")) {
    audits[r.at("run_id").get<std::string>()] = consensus_from_json(r.at("consensus"));
  }
  std::map<std::string, CostEntry> costs;
  for (const auto& e : ledger_.entries()) costs[e.task_id] = e;
  for (const json& r : read_jsonl(config_.data_dir / "logs.jsonl")) {
    TaskRecord rec;
    rec.run_id = r.at("run_id").get<std::string>();
    rec.log = log_from_json(r.at("log"));
    if (auto it = audits.find(rec.run_id); it != audits.end()) rec.consensus = it->second;
    if (auto it = costs.find(rec.run_id); it != costs.end()) rec.cost = it->second;
    run_counter_ = std::max(run_counter_, counter_of(rec.run_id, "run-"));
    tasks_[rec.run_id] = std::move(rec);
  }
  std::error_code ec;
  if (fs::is_directory(config_.data_dir / "bench", ec)) {
    for (const auto& entry : fs::directory_iterator(config_.data_dir / "bench")) {
      bench_counter_ = std::max(bench_counter_, counter_of(entry.path().filename().string(), "bench-"));
    }
  }
  logs_ = std::make_unique<JsonlWriter>(config_.data_dir / "logs.jsonl");
  audits_ = std::make_unique<JsonlWriter>(config_.data_dir / "audits.jsonl");
}

std::string Workspace::next_run_id() {
  std::lock_guard lock(tasks_mutex_);
  return "run-" + std::to_string(++run_counter_);
}

std::string Workspace::next_bench_id() {
  std::lock_guard lock(tasks_mutex_);
  return "bench-" + std::to_string(++bench_counter_);
}

TaskSpec Workspace::task_from_request(const json& body) const {
  if (!body.is_object()) fail(ErrorCode::validation_error, "task body must be a JSON object");
  if (body.contains("budget")) return task_from_json(body);
  json with_budget = body;
  with_budget["budget"] = to_json(config_.budget);
  return task_from_json(with_budget);
}

TaskRecord Workspace::submit_task(const TaskSpec& task) {
  validate_task(task);
  TaskRecord rec;
  rec.run_id = next_run_id();

  const auto snapshot = kb_.snapshot();
  ReasoningEngine engine(*gateway_, snapshot, EngineOptions{clock_, 0.0, config_.web_fixtures});
  DualModeRun run = execute_dual_mode(task, engine, index_, config_.similarity_threshold, *gateway_, clock_);

  auto verifiers = make_verifiers(config_, *gateway_);
  std::vector<Verifier*> ptrs;
  for (auto& v : verifiers) ptrs.push_back(v.get());
  ConsensusHooks hooks;
  hooks.kb = &kb_;
  hooks.auto_approve_chain_theorems = config_.auto_approve_chain_theorems;
  hooks.clock = clock_;
  hooks.make_template = [this](const TaskSpec& t) {
    const ScenarioPack* pack = packs_.find(t.scenario);
    return pack ? pack->abstraction_template : std::string();
  };
  rec.consensus = consensus_audit(run.log, *snapshot, ptrs, policy_, hooks);
  if (rec.consensus.outcome == ConsensusOutcome::disagreement) {
    rec.consensus.review_entry_id = queue_.enqueue_disagreement(rec.run_id, rec.consensus.reports);
  }
  if (rec.consensus.promoted_theorem_id) {
    const Axiom* promoted = kb_.snapshot()->find(*rec.consensus.promoted_theorem_id);
    if (promoted && promoted->status == AxiomStatus::candidate) queue_.enqueue_candidate(*promoted);
  }

  rec.cost = ledger_entry(run);
  rec.cost.task_id = rec.run_id;
  rec.log = std::move(run.log);
  ledger_.record(rec.cost);
  logs_->append(json{{"run_id", rec.run_id}, {"log", to_json(rec.log)}});
  audits_->append(json{{"run_id", rec.run_id}, {"consensus", to_json(rec.consensus)}});
  std::lock_guard lock(tasks_mutex_);
  tasks_[rec.run_id] = rec;
  return rec;
}

std::optional<TaskRecord> Workspace::find_task(const std::string& run_id) const {
  std::lock_guard lock(tasks_mutex_);
  auto it = tasks_.find(run_id);
  if (it == tasks_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Workspace::task_ids() const {
  std::lock_guard lock(tasks_mutex_);
  std::vector<std::pair<std::uint64_t, std::string>> ids;
  for (const auto& [id, rec] : tasks_) ids.emplace_back(counter_of(id, "run-"), id);
  std::sort(ids.begin(), ids.end());
  std::vector<std::string> out;
  for (auto& [n, id] : ids) out.push_back(std::move(id));
  return out;
}

ConsensusResult Workspace::audit_log(const ExecutionLog& log) {
  auto verifiers = make_verifiers(config_, *gateway_);
  std::vector<Verifier*> ptrs;
  for (auto& v : verifiers) ptrs.push_back(v.get());
  return consensus_audit(log, *kb_.snapshot(), ptrs, policy_);
}

IngestResult Workspace::ingest_document(const Document& document, const std::string& scenario) {
  if (document.id.empty() || document.text.empty()) {
    fail(ErrorCode::validation_error, "document needs an id and text");
  }
  if (!packs_.find(scenario)) fail(ErrorCode::validation_error, "unknown scenario '" + scenario + "'");
  IngestResult out;
  out.candidates = extract_candidates(document, scenario, *gateway_, kb_, &out.usage);
  for (const auto& a : out.candidates) {
    if (a.status == AxiomStatus::candidate) out.review_entries.push_back(queue_.enqueue_candidate(a));
  }
  return out;
}

std::vector<Axiom> Workspace::list_axioms(std::optional<AxiomStatus> status) const {
  std::vector<Axiom> out;
  for (const Axiom* a : kb_.snapshot()->records(status)) out.push_back(*a);
  return out;
}

ReviewOutcome Workspace::resolve_review(const std::string& entry_id, const json& body) {
  if (!body.is_object()) fail(ErrorCode::validation_error, "review body must be a JSON object");
  const std::string decision = body.value("decision", "");
  const std::string reviewer = body.value("reviewer", "");
  if (reviewer.empty()) fail(ErrorCode::validation_error, "reviewer is required");

  std::lock_guard lock(review_mutex_);
  const auto entry = queue_.find(entry_id);
  if (!entry) fail(ErrorCode::not_found, "no review entry " + entry_id);
  if (entry->status == EntryStatus::resolved) {
    fail(ErrorCode::state_error, "review entry " + entry_id + " is already resolved");
  }
  ReviewOutcome out;
  Resolution resolution{decision, reviewer, clock_.now(), body.value("note", "")};
  if (entry->kind == QueueKind::candidate_axiom) {
    ReviewDecision d;
    try {
      d.kind = review_kind_from_string(decision);
    } catch (const Error&) {
      fail(ErrorCode::validation_error, "candidate entries take approve, reject or edit");
    }
    d.rule_text = body.value("rule_text", "");
    d.reason = body.value("reason", "");
    if (d.kind == ReviewDecision::Kind::edit && d.rule_text.empty()) {
      fail(ErrorCode::validation_error, "edit needs rule_text");
    }
    out.axiom = kb_.review(entry->payload, d, reviewer);
    if (resolution.note.empty()) resolution.note = out.axiom->key();
    out.entry = queue_.resolve(entry_id, resolution);
    if (d.kind == ReviewDecision::Kind::edit) out.follow_up_entry = queue_.enqueue_candidate(*out.axiom);
  } else {
    if (decision != "certify" && decision != "flag") {
      fail(ErrorCode::validation_error, "disagreement entries take certify or flag");
    }
    out.entry = queue_.resolve(entry_id, resolution);
  }
  return out;
}

Axiom Workspace::review_axiom(const std::string& ref, const ReviewDecision& decision, const std::string& reviewer) {
  const Axiom* target = kb_.snapshot()->find(ref);
  if (!target) fail(ErrorCode::not_found, "no axiom '" + ref + "'");
  if (const auto entry = queue_.find_open(target->key())) {
    json body{{"reviewer", reviewer}, {"rule_text", decision.rule_text}, {"reason", decision.reason}};
    switch (decision.kind) {
      case ReviewDecision::Kind::approve: body["decision"] = "approve"; break;
      case ReviewDecision::Kind::reject: body["decision"] = "reject"; break;
      case ReviewDecision::Kind::edit: body["decision"] = "edit"; break;
    }
    return *resolve_review(entry->id, body).axiom;
  }
  return kb_.review(target->key(), decision, reviewer);
}

BenchmarkRun Workspace::run_bench(const std::vector<BenchmarkCase>& suite, EngineMode mode,
                                  const std::optional<fs::path>& out_dir) {
  auto verifiers = make_verifiers(config_, *gateway_);
  BenchmarkEnv env{*gateway_, kb_.snapshot(), packs_, {}, policy_, clock_, config_.web_fixtures};
  for (auto& v : verifiers) env.verifiers.push_back(v.get());
  const std::string run_id = next_bench_id();
  BenchmarkRun run = run_benchmark(suite, mode, env, run_id);
  write_benchmark_outputs(run, out_dir ? *out_dir : config_.data_dir / "bench" / run_id);
  return run;
}

std::optional<json> Workspace::bench_metrics(const std::string& run_id) const {
  if (run_id.find('/') != std::string::npos || run_id.find("..") != std::string::npos) return std::nullopt;
  const fs::path file = config_.data_dir / "bench" / run_id / "metrics.json";
  if (!fs::exists(file)) return std::nullopt;
  return json::parse(read_text_file(file));
}

}  // namespace mmia

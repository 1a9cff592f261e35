#include <algorithm>
#include <map>
#include <set>

#include "mmia/error.hpp"
#include "mmia/log.hpp"

namespace mmia {

namespace {

constexpr std::pair<Tool, std::string_view> kTools[] = {
    {Tool::direct_query, "direct-query"},
    {Tool::kb_retrieval, "kb-retrieval"},
    {Tool::web_search, "web-search"},
};

constexpr std::pair<EvidenceKind, std::string_view> kEvidenceKinds[] = {
    {EvidenceKind::axiom, "axiom"},
    {EvidenceKind::theorem, "theorem"},
    {EvidenceKind::prior_step, "prior-step"},
    {EvidenceKind::external_document, "external-document"},
    {EvidenceKind::web_result, "web-result"},
};

template <typename T>
json optional_json(const std::optional<T>& value) {
  return value ? to_json(*value) : json(nullptr);
}

}  // namespace

std::string_view to_string(Tool tool) {
  for (const auto& [t, name] : kTools) {
    if (t == tool) return name;
  }
  return "direct-query";
}

Tool tool_from_string(std::string_view text) {
  for (const auto& [t, name] : kTools) {
    if (name == text) return t;
  }
  fail(ErrorCode::configuration_error, "unknown tool '" + std::string(text) + "'");
}

std::string_view to_string(EvidenceKind kind) {
  for (const auto& [k, name] : kEvidenceKinds) {
    if (k == kind) return name;
  }
  return "axiom";
}

EvidenceKind evidence_kind_from_string(std::string_view text) {
  for (const auto& [k, name] : kEvidenceKinds) {
    if (name == text) return k;
  }
  fail(ErrorCode::validation_error, "unknown evidence kind '" + std::string(text) + "'");
}

std::string_view to_string(Mode mode) {
  return mode == Mode::de_novo ? "de-novo" : "rag-match";
}

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::complete: return "complete";
    case RunStatus::incomplete: return "incomplete";
    case RunStatus::failed: return "failed";
  }
  return "failed";
}

void validate_task(const TaskSpec& task) {
  if (task.id.empty()) fail(ErrorCode::validation_error, "task id must be non-empty");
  if (task.description.empty()) {
    fail(ErrorCode::validation_error, "task " + task.id + ": description must be non-empty");
  }
  scenario_prefix(task.scenario);
  if (task.budget.max_depth < 1 || task.budget.max_steps < 1) {
    fail(ErrorCode::validation_error, "task " + task.id + ": budgets must be >= 1");
  }
}

void validate_plan(const Plan& plan) {
  const int n = static_cast<int>(plan.subtasks.size());
  if (n == 0) fail(ErrorCode::protocol_error, "plan has no subtasks");
  for (const auto& [from, to] : plan.dependencies) {
    if (from < 0 || from >= n || to < 0 || to >= n) {
      fail(ErrorCode::protocol_error, "dependency (" + std::to_string(from) + ", " +
                                          std::to_string(to) + ") out of range");
    }
  }
  execution_order(plan);
}

std::vector<int> execution_order(const Plan& plan) {
  const int n = static_cast<int>(plan.subtasks.size());
  std::vector<int> indegree(n, 0);
  std::vector<std::vector<int>> out(n);
  for (const auto& [from, to] : plan.dependencies) {
    out[from].push_back(to);
    ++indegree[to];
  }
  std::set<int> ready;
  for (int i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.insert(i);
  }
  std::vector<int> order;
  while (!ready.empty()) {
    const int next = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(next);
    for (int to : out[next]) {
      if (--indegree[to] == 0) ready.insert(to);
    }
  }
  if (static_cast<int>(order.size()) != n) {
    fail(ErrorCode::protocol_error, "plan dependencies contain a cycle");
  }
  return order;
}

std::int64_t recount_tokens(const ExecutionLog& log) {
  std::int64_t total = log.control_usage.total();
  for (const auto& step : log.steps) total += step.usage.total();
  for (const auto& child : log.children) total += recount_tokens(child);
  return total;
}

std::vector<const ReasoningStep*> flatten_steps(const ExecutionLog& log) {
  std::vector<const ReasoningStep*> out;
  std::vector<const ExecutionLog*> stack{&log};
  while (!stack.empty()) {
    const ExecutionLog* node = stack.back();
    stack.pop_back();
    for (const auto& step : node->steps) out.push_back(&step);
    for (const auto& child : node->children) stack.push_back(&child);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ReasoningStep* a, const ReasoningStep* b) { return a->index < b->index; });
  return out;
}

// ---------------------------------------------------------------------------

Value value_from_json(const json& value) {
  if (value.is_boolean()) return Value::boolean(value.get<bool>());
  if (value.is_number()) return Value::number(value.get<double>());
  if (value.is_string()) return parse_literal(value.get<std::string>());
  fail(ErrorCode::validation_error, "unsupported fact value " + value.dump());
}

json to_json(const Budget& budget) {
  return json{{"max_depth", budget.max_depth}, {"max_steps", budget.max_steps}};
}

json to_json(const FactSet& facts) {
  json list = json::array();
  for (const Fact& f : facts.facts()) {
    list.push_back(json{{"entity", f.entity}, {"attribute", f.attribute},
                        {"value", f.value.to_literal()}});
  }
  return json{{"facts", list},
              {"multi_valued", std::vector<std::string>(facts.multi_valued().begin(),
                                                        facts.multi_valued().end())}};
}

FactSet facts_from_json(const json& value) {
  FactSet facts;
  for (const json& path : value.value("multi_valued", json::array())) {
    facts.declare_multi_valued(path.get<std::string>());
  }
  for (const json& f : value.value("facts", json::array())) {
    facts.add(f.at("entity").get<std::string>(), f.at("attribute").get<std::string>(),
              value_from_json(f.at("value")));
  }
  return facts;
}

json to_json(const TaskSpec& task) {
  json out = to_json(task.facts);
  json documents = json::array();
  for (const auto& d : task.documents) documents.push_back(json{{"id", d.id}, {"text", d.text}});
  out["id"] = task.id;
  out["description"] = task.description;
  out["scenario"] = task.scenario;
  out["documents"] = documents;
  out["goals"] = task.goals;
  out["needs"] = task.needs;
  out["tool"] = task.tool ? json(to_string(*task.tool)) : json(nullptr);
  out["budget"] = to_json(task.budget);
  return out;
}

TaskSpec task_from_json(const json& value) {
  try {
    TaskSpec task;
    task.id = value.at("id").get<std::string>();
    task.description = value.at("description").get<std::string>();
    task.scenario = value.value("scenario", "generic");
    task.facts = facts_from_json(value);
    for (const json& d : value.value("documents", json::array())) {
      task.documents.push_back(Document{d.at("id").get<std::string>(), d.at("text").get<std::string>()});
    }
    task.goals = value.value("goals", std::vector<std::string>{});
    task.needs = value.value("needs", std::vector<std::string>{});
    if (value.contains("tool") && value["tool"].is_string()) {
      task.tool = tool_from_string(value["tool"].get<std::string>());
    }
    if (value.contains("budget")) {
      task.budget.max_depth = value["budget"].value("max_depth", 5);
      task.budget.max_steps = value["budget"].value("max_steps", 64);
    }
    validate_task(task);
    return task;
  } catch (const json::exception& e) {
    fail(ErrorCode::validation_error, std::string("bad task: ") + e.what());
  }
}

json to_json(const Plan& plan) {
  json subtasks = json::array();
  for (const auto& t : plan.subtasks) subtasks.push_back(to_json(t));
  json deps = json::array();
  for (const auto& [from, to] : plan.dependencies) deps.push_back(json::array({from, to}));
  return json{{"task_id", plan.task_id},
              {"subtasks", subtasks},
              {"dependencies", deps},
              {"rationale", plan.rationale}};
}

Plan plan_from_json(const json& value) {
  Plan plan;
  plan.task_id = value.at("task_id").get<std::string>();
  for (const json& t : value.at("subtasks")) plan.subtasks.push_back(task_from_json(t));
  for (const json& d : value.at("dependencies")) {
    plan.dependencies.emplace_back(d.at(0).get<int>(), d.at(1).get<int>());
  }
  plan.rationale = value.value("rationale", "");
  return plan;
}

json to_json(const EvidenceRef& ref) {
  return json{{"kind", to_string(ref.kind)}, {"target", ref.target_id}, {"excerpt", ref.excerpt}};
}

EvidenceRef evidence_from_json(const json& value) {
  EvidenceRef ref;
  ref.kind = evidence_kind_from_string(value.at("kind").get<std::string>());
  const json& target = value.at("target");
  ref.target_id = target.is_string() ? target.get<std::string>() : target.dump();
  ref.excerpt = value.value("excerpt", "");
  return ref;
}

json to_json(const Claim& claim) {
  return json{{"entity", claim.entity},
              {"attribute", claim.attribute},
              {"value", claim.value.to_literal()},
              {"negated", claim.negated}};
}

Claim claim_from_json(const json& value) {
  Claim claim;
  claim.entity = value.at("entity").get<std::string>();
  claim.attribute = value.at("attribute").get<std::string>();
  claim.value = value_from_json(value.at("value"));
  claim.negated = value.value("negated", false);
  if (claim.entity.empty() || claim.attribute.empty()) {
    fail(ErrorCode::validation_error, "claim needs entity and attribute");
  }
  return claim;
}

json to_json(const ReasoningStep& step) {
  json evidence = json::array();
  for (const auto& e : step.evidence) evidence.push_back(to_json(e));
  json atoms = json::array();
  for (const auto& c : step.atoms) atoms.push_back(to_json(c));
  return json{{"index", step.index},
              {"subtask_id", step.subtask_id},
              {"tool", to_string(step.tool)},
              {"prompt", step.prompt},
              {"evidence", evidence},
              {"conclusion", step.conclusion},
              {"atoms", atoms},
              {"raw_output", step.raw_output},
              {"usage", to_json(step.usage)}};
}

json to_json(const FinalAnswer& answer) {
  json atoms = json::array();
  for (const auto& c : answer.atoms) atoms.push_back(to_json(c));
  return json{{"text", answer.text}, {"atoms", atoms}};
}

namespace {

json atomicity_json(const AtomicityVerdict& v) {
  return json{{"atomic", v.atomic},
              {"tool", v.tool ? json(to_string(*v.tool)) : json(nullptr)},
              {"rationale", v.rationale},
              {"forced", v.forced}};
}

}  // namespace

json to_json(const ExecutionLog& log) {
  json steps = json::array();
  for (const auto& s : log.steps) steps.push_back(to_json(s));
  json children = json::array();
  for (const auto& c : log.children) children.push_back(to_json(c));
  json out{{"schema", "log_v1"},
           {"task", to_json(log.task)},
           {"atomicity", log.atomicity ? atomicity_json(*log.atomicity) : json(nullptr)},
           {"plan", optional_json(log.plan)},
           {"steps", steps},
           {"children", children},
           {"final_answer", optional_json(log.final_answer)},
           {"mode", to_string(log.mode)},
           {"status", to_string(log.status)},
           {"started", log.started},
           {"finished", log.finished},
           {"control_usage", to_json(log.control_usage)},
           {"total_tokens", log.total_tokens},
           {"depth", log.depth}};
  out["error"] = log.error ? json{{"code", log.error->code}, {"message", log.error->message}}
                           : json(nullptr);
  return out;
}

ExecutionLog log_from_json(const json& value) {
  try {
    if (value.value("schema", "") != "log_v1") {
      fail(ErrorCode::validation_error, "expected a log_v1 document");
    }
    ExecutionLog log;
    log.task = task_from_json(value.at("task"));
    if (value.contains("atomicity") && !value["atomicity"].is_null()) {
      const json& a = value["atomicity"];
      AtomicityVerdict v;
      v.atomic = a.at("atomic").get<bool>();
      if (a.contains("tool") && a["tool"].is_string()) v.tool = tool_from_string(a["tool"].get<std::string>());
      v.rationale = a.value("rationale", "");
      v.forced = a.value("forced", false);
      log.atomicity = v;
    }
    if (value.contains("plan") && !value["plan"].is_null()) log.plan = plan_from_json(value["plan"]);
    for (const json& s : value.at("steps")) {
      ReasoningStep step;
      step.index = s.at("index").get<int>();
      step.subtask_id = s.at("subtask_id").get<std::string>();
      step.tool = tool_from_string(s.at("tool").get<std::string>());
      step.prompt = s.value("prompt", "");
      for (const json& e : s.at("evidence")) step.evidence.push_back(evidence_from_json(e));
      step.conclusion = s.value("conclusion", "");
      for (const json& c : s.at("atoms")) step.atoms.push_back(claim_from_json(c));
      step.raw_output = s.value("raw_output", "");
      step.usage = usage_from_json(s.value("usage", json::object()));
      log.steps.push_back(std::move(step));
    }
    for (const json& c : value.at("children")) log.children.push_back(log_from_json(c));
    if (value.contains("final_answer") && !value["final_answer"].is_null()) {
      FinalAnswer answer;
      answer.text = value["final_answer"].value("text", "");
      for (const json& c : value["final_answer"].at("atoms")) answer.atoms.push_back(claim_from_json(c));
      log.final_answer = std::move(answer);
    }
    const std::string mode = value.value("mode", "de-novo");
    log.mode = mode == "rag-match" ? Mode::rag_match : Mode::de_novo;
    const std::string status = value.value("status", "complete");
    log.status = status == "complete"     ? RunStatus::complete
                 : status == "incomplete" ? RunStatus::incomplete
                                          : RunStatus::failed;
    if (value.contains("error") && !value["error"].is_null()) {
      log.error = RunError{value["error"].value("code", ""), value["error"].value("message", "")};
    }
    log.started = value.value("started", "");
    log.finished = value.value("finished", "");
    log.control_usage = usage_from_json(value.value("control_usage", json::object()));
    log.total_tokens = value.value("total_tokens", std::int64_t{0});
    log.depth = value.value("depth", 1);
    return log;
  } catch (const json::exception& e) {
    fail(ErrorCode::validation_error, std::string("bad log_v1 document: ") + e.what());
  }
}

}  // namespace mmia

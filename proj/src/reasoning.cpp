#include "mmia/reasoning.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>

#include "mmia/error.hpp"
#include "mmia/prompts.hpp"

namespace mmia {

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

Value lenient_value(const json& value) {
  if (value.is_string()) {
    try {
      return parse_literal(value.get<std::string>());
    } catch (const Error&) {
      return Value::text(value.get<std::string>());
    }
  }
  return value_from_json(value);
}

bool axiom_id_less(std::string_view a, std::string_view b) {
  auto split = [](std::string_view id) {
    const auto dash = id.find('-');
    int n = 0;
    if (dash != std::string_view::npos && dash + 2 <= id.size()) {
      const auto digits = id.substr(dash + 2);
      std::from_chars(digits.data(), digits.data() + digits.size(), n);
    }
    return std::tuple(id.substr(0, dash == std::string_view::npos ? id.size() : dash + 2), n, id);
  };
  return split(a) < split(b);
}

namespace {

json task_context(const TaskSpec& task, int depth) {
  return json{{"id", task.id},
              {"description", task.description},
              {"scenario", task.scenario},
              {"goals", task.goals},
              {"needs", task.needs},
              {"tool", task.tool ? json(to_string(*task.tool)) : json(nullptr)},
              {"depth", depth},
              {"max_depth", task.budget.max_depth},
              {"is_root", depth == 1}};
}

json claims_json(const std::vector<Claim>& claims) {
  json out = json::array();
  for (const auto& c : claims) out.push_back(to_json(c));
  return out;
}

ChatRequest make_request(Role role, std::string prompt, std::string schema, double temperature) {
  ChatRequest request;
  request.role = role;
  request.system_prompt = system_prompt(role);
  request.user_prompt = std::move(prompt);
  request.response_schema = std::move(schema);
  request.temperature = temperature;
  return request;
}

std::vector<std::string> string_list(const json& doc, const char* key) {
  std::vector<std::string> out;
  if (!doc.contains(key) || doc[key].is_null()) return out;
  if (!doc[key].is_array()) fail(ErrorCode::validation_error, std::string(key) + " must be a list");
  for (const json& item : doc[key]) {
    if (!item.is_string()) fail(ErrorCode::validation_error, std::string(key) + " must hold strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

void validate_atomicity(const json& doc) {
  if (!doc.is_object() || !doc.contains("atomic") || !doc["atomic"].is_boolean()) {
    fail(ErrorCode::validation_error, "expected {\"atomic\": bool, ...}");
  }
  const bool has_tool = doc.contains("tool") && !doc["tool"].is_null();
  if (doc["atomic"].get<bool>() != has_tool) {
    fail(ErrorCode::validation_error, "tool must be given exactly when atomic is true");
  }
  if (has_tool) {
    if (!doc["tool"].is_string()) fail(ErrorCode::validation_error, "tool must be a string");
    try {
      tool_from_string(doc["tool"].get<std::string>());
    } catch (const Error& e) {
      fail(ErrorCode::validation_error, e.what());
    }
  }
}

Plan plan_from_reply(const TaskSpec& task, const json& doc) {
  if (!doc.is_object() || !doc.contains("subtasks") || !doc["subtasks"].is_array()) {
    fail(ErrorCode::validation_error, "expected {\"subtasks\": [...], ...}");
  }
  Plan plan;
  plan.task_id = task.id;
  plan.rationale = doc.value("rationale", "");
  int index = 0;
  for (const json& s : doc["subtasks"]) {
    if (!s.is_object() || !s.contains("description") || !s["description"].is_string() ||
        s["description"].get<std::string>().empty()) {
      fail(ErrorCode::validation_error, "each subtask needs a non-empty description");
    }
    TaskSpec sub;
    sub.id = task.id + "." + std::to_string(++index);
    sub.description = s["description"].get<std::string>();
    sub.scenario = task.scenario;
    sub.facts = task.facts;
    sub.documents = task.documents;
    sub.budget = task.budget;
    sub.goals = string_list(s, "goals");
    sub.needs = string_list(s, "needs");
    if (s.contains("tool") && !s["tool"].is_null()) {
      try {
        sub.tool = tool_from_string(s["tool"].get<std::string>());
      } catch (const std::exception& e) {
        fail(ErrorCode::validation_error, e.what());
      }
    }
    plan.subtasks.push_back(std::move(sub));
  }
  if (doc.contains("dependencies")) {
    if (!doc["dependencies"].is_array()) {
      fail(ErrorCode::validation_error, "dependencies must be a list of pairs");
    }
    for (const json& d : doc["dependencies"]) {
      if (!d.is_array() || d.size() != 2 || !d[0].is_number_integer() || !d[1].is_number_integer()) {
        fail(ErrorCode::validation_error, "dependencies must be [from, to] integer pairs");
      }
      plan.dependencies.emplace_back(d[0].get<int>(), d[1].get<int>());
    }
  }
  validate_plan(plan);
  return plan;
}

Claim claim_from_reply(const json& item) {
  if (!item.is_object() || !item.contains("entity") || !item.contains("attribute") ||
      !item.contains("value")) {
    fail(ErrorCode::protocol_error, "atoms need entity, attribute and value");
  }
  Claim c;
  c.entity = item["entity"].get<std::string>();
  c.attribute = item["attribute"].get<std::string>();
  c.value = lenient_value(item["value"]);
  c.negated = item.value("negated", false);
  return c;
}

std::vector<Claim> claims_from_reply(const json& doc, const char* key) {
  std::vector<Claim> out;
  if (!doc.contains(key)) return out;
  if (!doc[key].is_array()) fail(ErrorCode::protocol_error, std::string(key) + " must be a list");
  for (const json& item : doc[key]) out.push_back(claim_from_reply(item));
  return out;
}

std::string fact_lines(const FactSet& facts, const std::vector<std::string>& paths) {
  std::string out;
  for (const Fact& f : facts.facts()) {
    if (paths.empty() || std::find(paths.begin(), paths.end(), f.path()) != paths.end()) {
      out += f.path() + " = " + f.value.to_literal() + "\n";
    }
  }
  return out.empty() ? "(none)\n" : out;
}

std::string hex64(std::uint64_t value) {
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(value));
  return buffer;
}

constexpr const char* kNoEvidence = "no evidence found";

}  // namespace

ReasoningEngine::ReasoningEngine(Gateway& gateway, std::shared_ptr<const KbSnapshot> kb,
                                 EngineOptions options)
    : gateway_(gateway), kb_(std::move(kb)), options_(std::move(options)) {
  if (!kb_) kb_ = std::make_shared<KbSnapshot>();
}

AtomicityVerdict ReasoningEngine::assess_atomicity(const TaskSpec& task, int depth,
                                                   TokenUsage& usage) {
  validate_task(task);
  if (depth > 1 && depth >= task.budget.max_depth) {
    return AtomicityVerdict{true, Tool::direct_query, "depth budget reached; forced atomic", true};
  }
  const json context{{"purpose", "atomicity"},
                     {"task", task_context(task, depth)},
                     {"facts", to_json(task.facts)}};
  const std::string prompt =
      render_prompt("atomicity", {{"task_id", task.id},
                                  {"description", task.description},
                                  {"context", context_block(context)}});
  const StructuredReply reply = gateway_.complete_structured(
      make_request(Role::planner, prompt, "atomicity_v1", options_.temperature), validate_atomicity);
  usage += reply.usage;
  AtomicityVerdict verdict;
  verdict.atomic = reply.document["atomic"].get<bool>();
  if (verdict.atomic) verdict.tool = tool_from_string(reply.document["tool"].get<std::string>());
  verdict.rationale = reply.document.value("rationale", "");
  return verdict;
}

Plan ReasoningEngine::plan_decompose(const TaskSpec& task, TokenUsage& usage) {
  const json context{{"purpose", "plan"}, {"task", task_context(task, 1)}};
  const std::string prompt = render_prompt(
      "plan", {{"task_id", task.id}, {"description", task.description}, {"context", context_block(context)}});
  Plan plan;
  const StructuredReply reply = gateway_.complete_structured(
      make_request(Role::planner, prompt, "plan_v1", options_.temperature),
      [&](const json& doc) {
        try {
          plan_from_reply(task, doc);
        } catch (const Error& e) {
          // Cycles and bad indices are repairable protocol faults.
          fail(ErrorCode::validation_error, e.what());
        }
      });
  usage += reply.usage;
  return plan_from_reply(task, reply.document);
}

std::vector<const Axiom*> ReasoningEngine::retrieve(const TaskSpec& task) const {
  std::string prefix;
  try {
    prefix = scenario_prefix(task.scenario) + "-";
  } catch (const Error&) {
    return {};
  }
  std::set<std::string> wanted(task.goals.begin(), task.goals.end());
  wanted.insert(task.needs.begin(), task.needs.end());
  const std::set<std::string> needs(task.needs.begin(), task.needs.end());
  std::vector<const Axiom*> out;
  for (const Axiom* a : kb_->approved()) {
    if (!a->rule || a->id.rfind(prefix, 0) != 0) continue;
    bool relevant = false;
    for (const auto& path : a->rule->paths()) relevant = relevant || wanted.count(path) != 0;
    for (const auto& path : derived_paths(*a->rule)) relevant = relevant && needs.count(path) == 0;
    if (relevant || wanted.count(a->id + ".verdict") != 0) out.push_back(a);
  }
  std::sort(out.begin(), out.end(),
            [](const Axiom* x, const Axiom* y) { return axiom_id_less(x->id, y->id); });
  return out;
}

ReasoningStep ReasoningEngine::execute_atomic(const TaskSpec& subtask, Tool tool,
                                              ExecutionState& state) {
  if (state.next_index >= state.max_steps) {
    fail(ErrorCode::budget_exhausted,
         "step cap of " + std::to_string(state.max_steps) + " reached at " + subtask.id);
  }
  ReasoningStep step;
  step.index = state.next_index;
  step.subtask_id = subtask.id;
  step.tool = tool;

  json prior = json::array();
  for (const auto& [index, claim] : state.prior_claims) {
    json c = to_json(claim);
    c["step"] = index;
    prior.push_back(std::move(c));
  }
  json documents = json::array();
  for (const auto& d : subtask.documents) documents.push_back(d.id);
  json context{{"purpose", "step"},
               {"tool", to_string(tool)},
               {"task", task_context(subtask, 0)},
               {"facts", to_json(subtask.facts)},
               {"prior", prior},
               {"documents", documents}};

  std::string evidence_text;
  std::vector<EvidenceRef> default_evidence;
  bool call_backend = true;
  switch (tool) {
    case Tool::direct_query: {
      evidence_text = fact_lines(subtask.facts, subtask.goals);
      break;
    }
    case Tool::kb_retrieval: {
      const auto rules = retrieve(subtask);
      json retrieved = json::array();
      for (const Axiom* a : rules) {
        retrieved.push_back(json{{"id", a->id}, {"kind", to_string(a->kind)}, {"rule", a->rule_text}});
        evidence_text += a->id + ": " + a->rule_text + "\n";
        default_evidence.push_back(EvidenceRef{
            a->kind == AxiomKind::axiom ? EvidenceKind::axiom : EvidenceKind::theorem, a->id,
            a->rule_text});
      }
      context["retrieved"] = retrieved;
      if (rules.empty()) {
        call_backend = false;
        evidence_text = "(none)\n";
      }
      break;
    }
    case Tool::web_search: {
      call_backend = false;
      const auto path = options_.web_fixtures / (hex64(fnv1a64(subtask.description)) + ".json");
      std::string joined;
      if (!options_.web_fixtures.empty() && std::filesystem::exists(path)) {
        const json fixture = json::parse(read_text_file(path));
        for (const json& r : fixture.value("results", json::array())) {
          const std::string text = r.value("text", "");
          default_evidence.push_back(
              EvidenceRef{EvidenceKind::web_result, r.value("id", ""), text});
          joined += (joined.empty() ? "" : " ") + text;
        }
      }
      step.conclusion = joined;
      step.evidence = default_evidence;
      evidence_text = joined.empty() ? "(none)\n" : joined + "\n";
      break;
    }
  }

  step.prompt = render_prompt("step", {{"task_id", subtask.id},
                                       {"description", subtask.description},
                                       {"tool", std::string(to_string(tool))},
                                       {"evidence", evidence_text},
                                       {"context", context_block(context)}});
  if (!call_backend) {
    if (step.conclusion.empty()) {
      step.conclusion = kNoEvidence;
      step.evidence.clear();
    }
  } else {
    const ChatResponse response =
        gateway_.complete(make_request(Role::executor, step.prompt, "step_v1", options_.temperature));
    step.usage = response.usage;
    step.raw_output = response.text;
    std::optional<json> doc;
    try {
      doc = extract_json_document(response.text);
    } catch (const Error&) {
      // plain-text answer: no structured atoms
    }
    if (doc && doc->is_object() && doc->contains("conclusion")) {
      step.conclusion = (*doc)["conclusion"].is_string() ? (*doc)["conclusion"].get<std::string>()
                                                         : (*doc)["conclusion"].dump();
      step.atoms = claims_from_reply(*doc, "atoms");
      if (doc->contains("citations")) {
        if (!(*doc)["citations"].is_array()) {
          fail(ErrorCode::protocol_error, "citations must be a list");
        }
        for (const json& c : (*doc)["citations"]) {
          try {
            step.evidence.push_back(evidence_from_json(c));
          } catch (const std::exception& e) {
            fail(ErrorCode::protocol_error, std::string("bad citation: ") + e.what());
          }
        }
      } else {
        step.evidence = default_evidence;
      }
    } else {
      step.conclusion = response.text;
      step.evidence = default_evidence;
    }
  }
  ++state.next_index;
  for (const Claim& c : step.atoms) state.prior_claims.emplace_back(step.index, c);
  return step;
}

FinalAnswer ReasoningEngine::aggregate(const TaskSpec& task, const Plan& plan,
                                       const std::vector<ExecutionLog>& sub_results,
                                       TokenUsage& usage) {
  for (const auto& child : sub_results) {
    if (child.status != RunStatus::complete || !child.final_answer) {
      fail(ErrorCode::incomplete_input, "sub-log " + child.task.id + " is not complete");
    }
  }
  require(!sub_results.empty(), "aggregation needs at least one sub-result");
  if (sub_results.size() == 1) {
    return *sub_results.front().final_answer;
  }
  json results = json::array();
  std::string listing;
  for (const auto& child : sub_results) {
    results.push_back(json{{"subtask_id", child.task.id},
                           {"conclusion", child.final_answer->text},
                           {"atoms", claims_json(child.final_answer->atoms)}});
    listing += child.task.id + ": " + child.final_answer->text + "\n";
  }
  const json context{{"purpose", "aggregate"},
                     {"task", task_context(task, 1)},
                     {"plan_size", plan.subtasks.size()},
                     {"results", results}};
  const std::string prompt = render_prompt("aggregate", {{"task_id", task.id},
                                                         {"description", task.description},
                                                         {"conclusions", listing},
                                                         {"context", context_block(context)}});
  const StructuredReply reply = gateway_.complete_structured(
      make_request(Role::planner, prompt, "aggregate_v1", options_.temperature),
      [](const json& doc) {
        if (!doc.is_object() || !doc.contains("answer") || !doc["answer"].is_string()) {
          fail(ErrorCode::validation_error, "expected {\"answer\": text, \"atoms\": [...]}");
        }
        try {
          claims_from_reply(doc, "atoms");
        } catch (const std::exception& e) {
          fail(ErrorCode::validation_error, e.what());
        }
      });
  usage += reply.usage;
  return FinalAnswer{reply.document["answer"].get<std::string>(),
                     claims_from_reply(reply.document, "atoms")};
}

ExecutionLog ReasoningEngine::run(const TaskSpec& task, int depth, ExecutionState& state) {
  ExecutionLog log;
  log.task = task;
  log.depth = depth;
  log.started = options_.clock.now();
  try {
    const AtomicityVerdict verdict = assess_atomicity(task, depth, log.control_usage);
    log.atomicity = verdict;
    if (verdict.atomic) {
      log.steps.push_back(execute_atomic(task, *verdict.tool, state));
      log.final_answer = FinalAnswer{log.steps.back().conclusion, log.steps.back().atoms};
    } else {
      if (depth >= state.max_depth) {
        fail(ErrorCode::budget_exhausted, "task " + task.id + " is not atomic at depth limit " +
                                              std::to_string(state.max_depth));
      }
      log.plan = plan_decompose(task, log.control_usage);
      for (int i : execution_order(*log.plan)) {
        log.children.push_back(run(log.plan->subtasks[i], depth + 1, state));
        const ExecutionLog& child = log.children.back();
        if (child.status != RunStatus::complete) {
          log.status = child.status;
          log.error = child.error;
          if (log.error) log.error->message = "subtask " + child.task.id + ": " + log.error->message;
          break;
        }
      }
      if (log.status == RunStatus::complete) {
        log.final_answer = aggregate(task, *log.plan, log.children, log.control_usage);
      }
    }
  } catch (const Error& e) {
    log.status = e.code() == ErrorCode::budget_exhausted ? RunStatus::incomplete : RunStatus::failed;
    log.error = RunError{std::string(to_string(e.code())), e.what()};
    log.final_answer.reset();
  } catch (const json::exception& e) {
    log.status = RunStatus::failed;
    log.error = RunError{std::string(to_string(ErrorCode::protocol_error)), e.what()};
    log.final_answer.reset();
  }
  if (log.status != RunStatus::complete) log.final_answer.reset();
  log.finished = options_.clock.now();
  log.total_tokens = recount_tokens(log);
  return log;
}

ExecutionLog ReasoningEngine::execute_task(const TaskSpec& task) {
  validate_task(task);
  ExecutionState state;
  state.max_steps = task.budget.max_steps;
  state.max_depth = task.budget.max_depth;
  return run(task, 1, state);
}

}  // namespace mmia

#include "mmia/auditor.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>

#include "mmia/error.hpp"
#include "mmia/review_queue.hpp"

namespace mmia {

namespace {

constexpr std::pair<IssueKind, std::string_view> kIssueNames[] = {
    {IssueKind::plan_mismatch, "plan-mismatch"},
    {IssueKind::missing_evidence, "missing-evidence"},
    {IssueKind::logical_fallacy, "logical-fallacy"},
    {IssueKind::aggregation_gap, "aggregation-gap"},
    {IssueKind::dangling_citation, "dangling-citation"},
};

std::string_view to_string(IssueLocation::Kind kind) {
  switch (kind) {
    case IssueLocation::Kind::plan: return "plan";
    case IssueLocation::Kind::step: return "step";
    case IssueLocation::Kind::aggregation: return "aggregation";
  }
  return "aggregation";
}

AuditIssue step_issue(const ReasoningStep& step, IssueKind kind, std::string message,
                      std::optional<std::string> rule = std::nullopt) {
  return AuditIssue{IssueLocation{IssueLocation::Kind::step, step.index, step.subtask_id}, kind,
                    std::move(message), std::move(rule)};
}

AuditIssue node_issue(IssueLocation::Kind where, const ExecutionLog& node, IssueKind kind,
                      std::string message) {
  return AuditIssue{IssueLocation{where, -1, node.task.id}, kind, std::move(message), std::nullopt};
}

std::optional<int> parse_index(const std::string& text) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

const ReasoningStep* step_at(const std::vector<const ReasoningStep*>& steps, int index) {
  for (const auto* s : steps) {
    if (s->index == index) return s;
  }
  return nullptr;
}

bool is_rule_citation(const EvidenceRef& ev) {
  return ev.kind == EvidenceKind::axiom || ev.kind == EvidenceKind::theorem;
}

bool valid_document(const TaskSpec& task, const std::string& id) {
  if (id == "case-record") return true;
  return std::any_of(task.documents.begin(), task.documents.end(),
                     [&](const Document& d) { return d.id == id; });
}

// Task facts plus earlier non-negated, non-verdict claims.
FactSet base_facts(const ReasoningStep& step, const StepContext& ctx) {
  FactSet facts = ctx.task.facts;
  for (const auto* s : ctx.all_steps) {
    if (s->index >= step.index) continue;
    for (const Claim& c : s->atoms) {
      if (!c.negated && !is_verdict_claim(c)) facts.try_add(c.fact());
    }
  }
  return facts;
}

bool supports_fact(const Claim& claim, const ReasoningStep& step, const StepContext& ctx,
                   const FactSet& facts) {
  for (const EvidenceRef& ev : step.evidence) {
    if (is_rule_citation(ev)) {
      const Axiom* a = ctx.kb.find_approved(ev.target_id);
      if (!a || !a->rule) continue;
      Truth premise = Truth::unknown;
      try {
        premise = rule_premise(*a->rule, facts);
      } catch (const Error&) {
        continue;
      }
      if (premise != Truth::yes) continue;
      const auto conseq = consequence_claims(*a->rule);
      if (std::find(conseq.begin(), conseq.end(), claim) != conseq.end()) return true;
    } else if (ev.kind == EvidenceKind::prior_step) {
      const auto index = parse_index(ev.target_id);
      if (!index || *index >= step.index) continue;
      const ReasoningStep* cited = step_at(ctx.all_steps, *index);
      if (cited && std::find(cited->atoms.begin(), cited->atoms.end(), claim) != cited->atoms.end()) {
        return true;
      }
    } else if (ev.kind == EvidenceKind::external_document) {
      if (!valid_document(ctx.task, ev.target_id)) continue;
      const FactSet& recorded = ctx.task.facts;
      if (!claim.negated && recorded.contains(claim.fact())) return true;
      if (claim.negated && !recorded.is_multi_valued(claim.path())) {
        const auto* values = recorded.find(claim.entity, claim.attribute);
        if (values && !values->empty() && !recorded.contains(claim.fact())) return true;
      }
    }
  }
  return false;
}

struct StepAnalysis {
  FactSet facts;                     // after the step's supported claims
  std::vector<const Claim*> unsupported;
};

StepAnalysis analyze_facts(const ReasoningStep& step, const StepContext& ctx) {
  StepAnalysis out{base_facts(step, ctx), {}};
  std::vector<const Claim*> pending;
  for (const Claim& c : step.atoms) {
    if (!is_verdict_claim(c)) pending.push_back(&c);
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (auto it = pending.begin(); it != pending.end();) {
      if (supports_fact(**it, step, ctx, out.facts)) {
        if (!(*it)->negated) out.facts.try_add((*it)->fact());
        it = pending.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
  }
  out.unsupported = pending;
  return out;
}

const Axiom* cited_rule(const ReasoningStep& step, const StepContext& ctx, const std::string& id) {
  for (const EvidenceRef& ev : step.evidence) {
    if (is_rule_citation(ev) && ev.target_id == id) return ctx.kb.find_approved(id);
  }
  return nullptr;
}

bool cites(const ReasoningStep& step, const std::string& id) {
  return std::any_of(step.evidence.begin(), step.evidence.end(),
                     [&](const EvidenceRef& ev) { return is_rule_citation(ev) && ev.target_id == id; });
}

std::optional<Outcome> claimed_outcome(const Claim& c) {
  try {
    return outcome_from_string(c.value.str());
  } catch (const Error&) {
    return std::nullopt;
  }
}

bool conflicts(const Claim& a, const Claim& b, const FactSet& schema) {
  if (a.path() != b.path()) return false;
  if (a.negated != b.negated) return a.value == b.value;
  if (a.negated) return false;
  return !schema.is_multi_valued(a.path()) && a.value != b.value;
}

void post_order(const ExecutionLog& node, std::vector<const ExecutionLog*>& out) {
  for (const auto& child : node.children) post_order(child, out);
  out.push_back(&node);
}

void index_owners(const ExecutionLog& node, std::map<int, const ExecutionLog*>& owners) {
  for (const auto& s : node.steps) owners[s.index] = &node;
  for (const auto& child : node.children) index_owners(child, owners);
}

std::vector<Claim> subtree_claims(const ExecutionLog& node) {
  std::vector<Claim> out;
  for (const auto* s : flatten_steps(node)) out.insert(out.end(), s->atoms.begin(), s->atoms.end());
  return out;
}

std::string claim_listing(const std::vector<Claim>& claims) {
  std::string out;
  for (const auto& c : claims) out += (out.empty() ? "" : "; ") + c.text();
  return out;
}

}  // namespace

std::string_view to_string(IssueKind kind) {
  for (const auto& [k, name] : kIssueNames) {
    if (k == kind) return name;
  }
  return "missing-evidence";
}

IssueKind issue_kind_from_string(std::string_view text) {
  for (const auto& [k, name] : kIssueNames) {
    if (name == text) return k;
  }
  fail(ErrorCode::validation_error, "unknown issue kind '" + std::string(text) + "'");
}

json to_json(const AuditIssue& issue) {
  json location{{"kind", to_string(issue.location.kind)}, {"task_id", issue.location.task_id}};
  if (issue.location.kind == IssueLocation::Kind::step) location["step"] = issue.location.step_index;
  return json{{"location", location},
              {"kind", to_string(issue.kind)},
              {"message", issue.message},
              {"cited_rule", issue.cited_rule ? json(*issue.cited_rule) : json(nullptr)}};
}

json to_json(const AuditReport& report) {
  json issues = json::array();
  for (const auto& i : report.issues) issues.push_back(to_json(i));
  return json{{"schema", "audit_v1"},
              {"log_id", report.log_id},
              {"verdict", report.certified() ? "certification-passed" : "error-flagged"},
              {"issues", issues},
              {"verifier_id", report.verifier_id},
              {"usage", to_json(report.usage)}};
}

AuditReport report_from_json(const json& value) {
  AuditReport report;
  report.log_id = value.at("log_id").get<std::string>();
  report.verifier_id = value.value("verifier_id", "");
  report.usage = usage_from_json(value.value("usage", json::object()));
  for (const json& i : value.at("issues")) {
    AuditIssue issue;
    const json& loc = i.at("location");
    const std::string where = loc.at("kind").get<std::string>();
    issue.location.kind = where == "plan"   ? IssueLocation::Kind::plan
                          : where == "step" ? IssueLocation::Kind::step
                                            : IssueLocation::Kind::aggregation;
    issue.location.step_index = loc.value("step", -1);
    issue.location.task_id = loc.value("task_id", "");
    issue.kind = issue_kind_from_string(i.at("kind").get<std::string>());
    issue.message = i.value("message", "");
    if (i.contains("cited_rule") && !i["cited_rule"].is_null()) {
      issue.cited_rule = i["cited_rule"].get<std::string>();
    }
    report.issues.push_back(std::move(issue));
  }
  return report;
}

AuditReport Verifier::audit(const ExecutionLog& log, const KbSnapshot& kb) {
  return verify_reasoning_chain(log, kb, *this);
}

// ---- deterministic verifier ------------------------------------------------

std::vector<AuditIssue> DeterministicVerifier::check_plan(const ExecutionLog& node) {
  std::vector<AuditIssue> issues;
  if (!node.plan) return issues;
  const Plan& plan = *node.plan;
  std::set<std::string> produced;
  for (const auto& s : plan.subtasks) produced.insert(s.goals.begin(), s.goals.end());
  for (const auto& goal : node.task.goals) {
    if (!produced.count(goal)) {
      issues.push_back(node_issue(IssueLocation::Kind::plan, node, IssueKind::plan_mismatch,
                                  "Plan does not align with the task goal: no subtask produces " + goal));
    }
  }
  const int n = static_cast<int>(plan.subtasks.size());
  // ancestors[i][j]: subtask j runs before and feeds subtask i.
  std::vector<std::vector<bool>> ancestors(n, std::vector<bool>(n, false));
  for (const auto& [from, to] : plan.dependencies) {
    if (from >= 0 && from < n && to >= 0 && to < n) ancestors[to][from] = true;
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (ancestors[i][k] && ancestors[k][j]) ancestors[i][j] = true;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    for (const auto& need : plan.subtasks[i].needs) {
      if (node.task.facts.has_path(need)) continue;
      bool fed = false;
      for (int j = 0; j < n && !fed; ++j) {
        fed = ancestors[i][j] && std::count(plan.subtasks[j].goals.begin(),
                                            plan.subtasks[j].goals.end(), need) > 0;
      }
      if (!fed) {
        issues.push_back(node_issue(
            IssueLocation::Kind::plan, node, IssueKind::plan_mismatch,
            "Plan does not align with the data flow: subtask " + std::to_string(i + 1) + " (" +
                plan.subtasks[i].description + ") consumes " + need + " which no earlier subtask produces"));
      }
    }
  }
  return issues;
}

std::vector<AuditIssue> DeterministicVerifier::check_evidence(const ReasoningStep& step,
                                                              const StepContext& ctx) {
  std::vector<AuditIssue> issues;
  for (const EvidenceRef& ev : step.evidence) {
    if (is_rule_citation(ev)) {
      if (!ctx.kb.find_approved(ev.target_id)) {
        const Axiom* any = ctx.kb.find(ev.target_id);
        issues.push_back(step_issue(step, IssueKind::dangling_citation,
                                    "Step " + std::to_string(step.index) + " cites " + ev.target_id +
                                        (any ? " which is " + std::string(to_string(any->status))
                                             : std::string(" which does not exist")),
                                    ev.target_id));
      }
    } else if (ev.kind == EvidenceKind::prior_step) {
      const auto index = parse_index(ev.target_id);
      if (!index || *index >= step.index || !step_at(ctx.all_steps, *index)) {
        issues.push_back(step_issue(step, IssueKind::dangling_citation,
                                    "Step " + std::to_string(step.index) + " cites step " +
                                        ev.target_id + " which does not precede it"));
      }
    } else if (ev.kind == EvidenceKind::external_document && !valid_document(ctx.task, ev.target_id)) {
      issues.push_back(step_issue(step, IssueKind::dangling_citation,
                                  "Step " + std::to_string(step.index) + " cites unknown document " +
                                      ev.target_id));
    }
  }

  const StepAnalysis analysis = analyze_facts(step, ctx);
  for (const Claim* c : analysis.unsupported) {
    issues.push_back(step_issue(step, IssueKind::missing_evidence,
                                "Step " + std::to_string(step.index) + " lacks evidence support for " +
                                    c->text()));
  }
  for (const Claim& c : step.atoms) {
    if (!is_verdict_claim(c)) continue;
    const std::string prefix = "Step " + std::to_string(step.index) + " lacks evidence support for " +
                               c.text();
    const auto claimed = claimed_outcome(c);
    if (!claimed) {
      issues.push_back(step_issue(step, IssueKind::missing_evidence, prefix + ": not an outcome", c.entity));
      continue;
    }
    if (!cites(step, c.entity)) {
      issues.push_back(step_issue(step, IssueKind::missing_evidence,
                                  prefix + ": " + c.entity + " is not cited", c.entity));
      continue;
    }
    const Axiom* rule = cited_rule(step, ctx, c.entity);
    if (!rule || !rule->rule) continue;  // reported as dangling above
    Outcome actual = Outcome::inapplicable;
    try {
      actual = eval_rule(*rule->rule, analysis.facts).outcome;
    } catch (const Error& e) {
      issues.push_back(step_issue(step, IssueKind::missing_evidence, prefix + ": " + e.what(), c.entity));
      continue;
    }
    if (actual == Outcome::inapplicable && *claimed != Outcome::inapplicable) {
      issues.push_back(step_issue(step, IssueKind::missing_evidence,
                                  prefix + ": " + c.entity + " is inapplicable on the established facts",
                                  c.entity));
    }
  }
  return issues;
}

std::vector<AuditIssue> DeterministicVerifier::check_fallacy(const ReasoningStep& step,
                                                             const StepContext& ctx) {
  std::vector<AuditIssue> issues;
  const std::string where = "Logical fallacy detected in step " + std::to_string(step.index) + ": ";
  std::vector<std::pair<int, const Claim*>> earlier;
  for (const auto* s : ctx.all_steps) {
    if (s->index >= step.index) continue;
    for (const Claim& c : s->atoms) earlier.emplace_back(s->index, &c);
  }
  const FactSet& recorded = ctx.task.facts;
  for (std::size_t i = 0; i < step.atoms.size(); ++i) {
    const Claim& c = step.atoms[i];
    std::optional<std::string> clash;
    for (const auto& [index, other] : earlier) {
      if (conflicts(c, *other, recorded)) {
        clash = other->text() + " (step " + std::to_string(index) + ")";
        break;
      }
    }
    for (std::size_t j = 0; j < i && !clash; ++j) {
      if (conflicts(c, step.atoms[j], recorded)) clash = step.atoms[j].text() + " (same step)";
    }
    if (!clash && !is_verdict_claim(c)) {
      const auto* values = recorded.find(c.entity, c.attribute);
      if (values && !values->empty()) {
        const bool held = std::find(values->begin(), values->end(), c.value) != values->end();
        if (c.negated && held) {
          clash = "recorded fact " + c.path() + " = " + c.value.to_literal();
        } else if (!c.negated && !held && !recorded.is_multi_valued(c.path())) {
          clash = "recorded fact " + c.path() + " = " + values->front().to_literal();
        }
      }
    }
    if (clash) {
      issues.push_back(step_issue(step, IssueKind::logical_fallacy,
                                  where + c.text() + " contradicts " + *clash));
    }
  }

  for (const EvidenceRef& ev : step.evidence) {
    if (ev.kind != EvidenceKind::prior_step || ev.excerpt.empty()) continue;
    const auto index = parse_index(ev.target_id);
    if (!index || *index >= step.index) continue;
    const ReasoningStep* cited = step_at(ctx.all_steps, *index);
    if (!cited) continue;
    const bool derived =
        cited->conclusion == ev.excerpt ||
        std::any_of(cited->atoms.begin(), cited->atoms.end(),
                    [&](const Claim& c) { return c.text() == ev.excerpt; });
    if (!derived) {
      issues.push_back(step_issue(step, IssueKind::logical_fallacy,
                                  where + "relies on '" + ev.excerpt + "' which step " + ev.target_id +
                                      " never derived"));
    }
  }

  bool has_verdict = false;
  for (const Claim& c : step.atoms) has_verdict = has_verdict || is_verdict_claim(c);
  if (has_verdict) {
    const StepAnalysis analysis = analyze_facts(step, ctx);
    for (const Claim& c : step.atoms) {
      if (!is_verdict_claim(c)) continue;
      const auto claimed = claimed_outcome(c);
      const Axiom* rule = cited_rule(step, ctx, c.entity);
      if (!claimed || !rule || !rule->rule) continue;
      Outcome actual = Outcome::inapplicable;
      try {
        actual = eval_rule(*rule->rule, analysis.facts).outcome;
      } catch (const Error&) {
        continue;
      }
      if (actual != Outcome::inapplicable && actual != *claimed) {
        issues.push_back(step_issue(step, IssueKind::logical_fallacy,
                                    where + c.text() + " contradicts what " + c.entity +
                                        " entails on the established facts (" +
                                        std::string(to_string(actual)) + ")",
                                    c.entity));
      }
    }
  }
  return issues;
}

std::vector<AuditIssue> DeterministicVerifier::check_aggregation(const ExecutionLog& node) {
  std::vector<AuditIssue> issues;
  if (!node.final_answer) {
    issues.push_back(node_issue(IssueLocation::Kind::aggregation, node, IssueKind::aggregation_gap,
                                "Task " + node.task.id + " has no final answer"));
    return issues;
  }
  const auto claims = subtree_claims(node);
  const bool violated = std::any_of(claims.begin(), claims.end(), [](const Claim& c) {
    return is_verdict_claim(c) && c.value.str() == "violated";
  });
  for (const Claim& a : node.final_answer->atoms) {
    if (std::find(claims.begin(), claims.end(), a) != claims.end()) continue;
    if (a.path() == "task.outcome" && !a.negated &&
        a.value == Value::text(violated ? "erroneous" : "correct")) {
      continue;
    }
    issues.push_back(node_issue(IssueLocation::Kind::aggregation, node, IssueKind::aggregation_gap,
                                "Final answer atom " + a.text() +
                                    " cannot be logically derived from the step conclusions"));
  }
  return issues;
}

// ---- LLM verifier -----------------------------------------------------------

namespace {

std::string plan_listing(const Plan& plan) {
  std::string out;
  for (std::size_t i = 0; i < plan.subtasks.size(); ++i) {
    const TaskSpec& s = plan.subtasks[i];
    out += std::to_string(i + 1) + ". " + s.description;
    if (s.tool) out += " [" + std::string(to_string(*s.tool)) + "]";
    out += "\n";
  }
  if (!plan.dependencies.empty()) {
    out += "Dependencies:";
    for (const auto& [from, to] : plan.dependencies) {
      out += " " + std::to_string(from + 1) + "->" + std::to_string(to + 1);
    }
    out += "\n";
  }
  return out;
}

void check_variant(int variant) {
  require(variant >= 1 && variant <= kAuditPromptVariants, "audit prompt variant must be 1..3");
}

}  // namespace

std::string plan_audit_prompt(const ExecutionLog& node, int variant) {
  check_variant(variant);
  require(node.plan.has_value(), "plan audit needs a plan");
  const json context{{"purpose", "audit-plan"}, {"task", to_json(node.task)}, {"plan", to_json(*node.plan)}};
  return render_prompt("audit_plan_v" + std::to_string(variant),
                       {{"description", node.task.description},
                        {"plan", plan_listing(*node.plan)},
                        {"context", context_block(context)}});
}

LlmVerifier::LlmVerifier(Gateway& gateway, int variant, std::string backend_id)
    : gateway_(gateway), variant_(variant), backend_id_(std::move(backend_id)) {
  check_variant(variant);
}

std::string LlmVerifier::id() const {
  return "llm:v" + std::to_string(variant_) + "@" + backend_id_;
}

json LlmVerifier::ask(const std::string& kind, const Bindings& bindings, const json& context) {
  Bindings all = bindings;
  all["context"] = context_block(context);
  ChatRequest request;
  request.role = Role::auditor;
  request.system_prompt = system_prompt(Role::auditor);
  request.user_prompt = render_prompt("audit_" + kind + "_v" + std::to_string(variant_), all);
  request.response_schema = "audit_" + kind + "_v1";
  const bool fallacy = kind == "fallacy";
  const StructuredReply reply = gateway_.complete_structured(request, [fallacy](const json& doc) {
    if (!doc.is_object()) fail(ErrorCode::validation_error, "expected a JSON object");
    if (fallacy) {
      if (!doc.contains("fallacy") || !(doc["fallacy"].is_null() || doc["fallacy"].is_string())) {
        fail(ErrorCode::validation_error, "expected {\"fallacy\": text or null}");
      }
    } else if (!doc.contains("ok") || !doc["ok"].is_boolean()) {
      fail(ErrorCode::validation_error, "expected {\"ok\": bool, \"reason\": text}");
    }
  });
  usage_ += reply.usage;
  return reply.document;
}

std::vector<AuditIssue> LlmVerifier::check_plan(const ExecutionLog& node) {
  if (!node.plan) return {};
  const json context{{"purpose", "audit-plan"}, {"task", to_json(node.task)}, {"plan", to_json(*node.plan)}};
  const json reply = ask("plan", {{"description", node.task.description}, {"plan", plan_listing(*node.plan)}},
                         context);
  if (reply["ok"].get<bool>()) return {};
  return {node_issue(IssueLocation::Kind::plan, node, IssueKind::plan_mismatch,
                     "Plan does not align with the task goal: " + reply.value("reason", ""))};
}

std::vector<AuditIssue> LlmVerifier::check_evidence(const ReasoningStep& step, const StepContext&) {
  std::string evidence;
  json refs = json::array();
  for (const auto& ev : step.evidence) {
    evidence += std::string(to_string(ev.kind)) + " " + ev.target_id + ": " + ev.excerpt + "\n";
    refs.push_back(to_json(ev));
  }
  const std::string claim = step.atoms.empty() ? step.conclusion : claim_listing(step.atoms);
  const json context{{"purpose", "audit-evidence"}, {"step", to_json(step)}};
  const json reply = ask("evidence", {{"claim", claim}, {"evidence", evidence.empty() ? "(none)\n" : evidence}},
                         context);
  if (reply["ok"].get<bool>()) return {};
  return {step_issue(step, IssueKind::missing_evidence,
                     "Step " + std::to_string(step.index) + " lacks evidence support: " +
                         reply.value("reason", ""))};
}

std::vector<AuditIssue> LlmVerifier::check_fallacy(const ReasoningStep& step, const StepContext& ctx) {
  std::string previous;
  for (const auto* s : ctx.all_steps) {
    if (s->index < step.index) previous += std::to_string(s->index) + ": " + s->conclusion + "\n";
  }
  if (previous.empty()) return {};
  const json context{{"purpose", "audit-fallacy"}, {"step", to_json(step)}};
  const json reply = ask("fallacy", {{"previous", previous}, {"conclusion", step.conclusion}}, context);
  if (reply["fallacy"].is_null()) return {};
  return {step_issue(step, IssueKind::logical_fallacy,
                     "Logical fallacy detected in step " + std::to_string(step.index) + ": " +
                         reply["fallacy"].get<std::string>())};
}

std::vector<AuditIssue> LlmVerifier::check_aggregation(const ExecutionLog& node) {
  if (!node.final_answer) {
    return {node_issue(IssueLocation::Kind::aggregation, node, IssueKind::aggregation_gap,
                       "Task " + node.task.id + " has no final answer")};
  }
  std::string conclusions;
  for (const auto* s : flatten_steps(node)) conclusions += std::to_string(s->index) + ": " + s->conclusion + "\n";
  const json context{{"purpose", "audit-aggregation"}, {"answer", to_json(*node.final_answer)}};
  const json reply =
      ask("aggregation", {{"conclusions", conclusions}, {"answer", node.final_answer->text}}, context);
  if (reply["ok"].get<bool>()) return {};
  return {node_issue(IssueLocation::Kind::aggregation, node, IssueKind::aggregation_gap,
                     "Final answer cannot be logically derived from the step conclusions: " +
                         reply.value("reason", ""))};
}

// ---- scripted verifiers --------------------------------------------------------

AuditReport FixedVerifier::audit(const ExecutionLog& log, const KbSnapshot&) {
  AuditReport report{log.task.id, {}, id_, {}};
  if (!pass_) {
    report.issues.push_back(node_issue(IssueLocation::Kind::aggregation, log, IssueKind::aggregation_gap,
                                       "scripted verifier " + id_ + " flags the chain"));
  }
  return report;
}

FlippingVerifier::FlippingVerifier(std::shared_ptr<Verifier> inner, double p, std::uint64_t seed)
    : inner_(std::move(inner)), flip_(p), rng_(seed) {
  require(inner_ != nullptr, "flipping verifier needs an inner verifier");
  require(p >= 0.0 && p <= 1.0, "flip probability must lie in [0, 1]");
}

AuditReport FlippingVerifier::audit(const ExecutionLog& log, const KbSnapshot& kb) {
  AuditReport report = inner_->audit(log, kb);
  report.verifier_id = id();
  if (!flip_(rng_)) return report;
  if (report.certified()) {
    report.issues.push_back(node_issue(IssueLocation::Kind::aggregation, log, IssueKind::aggregation_gap,
                                       "spurious flag from a noisy verifier"));
  } else {
    report.issues.clear();
  }
  return report;
}

// ---- chain audit -----------------------------------------------------------------

AuditReport verify_reasoning_chain(const ExecutionLog& log, const KbSnapshot& kb, Verifier& verifier) {
  AuditReport report{log.task.id, {}, verifier.id(), {}};
  const TokenUsage before = verifier.usage();
  auto add = [&](std::vector<AuditIssue> found) {
    report.issues.insert(report.issues.end(), std::make_move_iterator(found.begin()),
                         std::make_move_iterator(found.end()));
  };
  const auto steps = flatten_steps(log);
  if (log.status != RunStatus::complete) {
    add({node_issue(IssueLocation::Kind::aggregation, log, IssueKind::aggregation_gap,
                    "Run is " + std::string(to_string(log.status)) + "; an unfinished chain cannot be certified")});
  } else if (steps.empty()) {
    add({node_issue(IssueLocation::Kind::aggregation, log, IssueKind::aggregation_gap,
                    "Chain has no steps; a vacuous chain cannot be certified")});
  } else {
    try {
      std::vector<const ExecutionLog*> nodes;
      post_order(log, nodes);
      std::map<int, const ExecutionLog*> owners;
      index_owners(log, owners);
      for (const auto* node : nodes) {
        if (node->plan) add(verifier.check_plan(*node));
      }
      for (const auto* step : steps) {
        const StepContext ctx{owners.at(step->index)->task, kb, steps};
        add(verifier.check_evidence(*step, ctx));
        add(verifier.check_fallacy(*step, ctx));
      }
      for (const auto* node : nodes) {
        if (node->plan || node == &log) add(verifier.check_aggregation(*node));
      }
    } catch (const Error& e) {
      fail(ErrorCode::audit_error, "audit of " + log.task.id + " by " + verifier.id() + " aborted: " + e.what());
    }
  }
  const TokenUsage after = verifier.usage();
  report.usage.prompt_tokens = after.prompt_tokens - before.prompt_tokens;
  report.usage.completion_tokens = after.completion_tokens - before.completion_tokens;
  return report;
}

// ---- consensus ----------------------------------------------------------------------

std::string_view to_string(ConsensusRule rule) {
  return rule == ConsensusRule::unanimity ? "unanimity" : "majority";
}

ConsensusRule consensus_rule_from_string(std::string_view text) {
  if (text == "unanimity") return ConsensusRule::unanimity;
  if (text == "majority") return ConsensusRule::majority;
  fail(ErrorCode::configuration_error, "unknown consensus rule '" + std::string(text) + "'");
}

std::string_view to_string(ConsensusOutcome outcome) {
  switch (outcome) {
    case ConsensusOutcome::certified: return "certified";
    case ConsensusOutcome::flagged: return "flagged";
    case ConsensusOutcome::disagreement: return "disagreement";
  }
  return "flagged";
}

ConsensusPolicy ConsensusPolicy::defaults(const std::string& backend_id) {
  ConsensusPolicy policy;
  for (int v = 1; v <= policy.n; ++v) policy.diversity.emplace_back("v" + std::to_string(v), backend_id);
  return policy;
}

void validate_policy(const ConsensusPolicy& policy) {
  if (policy.n < 1) fail(ErrorCode::configuration_error, "consensus needs n >= 1");
  if (static_cast<int>(policy.diversity.size()) != policy.n) {
    fail(ErrorCode::configuration_error, "diversity list must have n entries");
  }
  if (policy.n > 1) {
    const std::set<std::pair<std::string, std::string>> distinct(policy.diversity.begin(),
                                                                 policy.diversity.end());
    if (static_cast<int>(distinct.size()) != policy.n) {
      fail(ErrorCode::configuration_error, "diversity entries must be pairwise distinct");
    }
  }
}

ConsensusOutcome decide_consensus(const std::vector<bool>& passes, ConsensusRule rule) {
  require(!passes.empty(), "consensus needs at least one vote");
  const auto n = static_cast<long>(passes.size());
  const long yes = std::count(passes.begin(), passes.end(), true);
  const long no = n - yes;
  if (rule == ConsensusRule::unanimity) {
    if (yes == n) return ConsensusOutcome::certified;
    if (no == n) return ConsensusOutcome::flagged;
    return ConsensusOutcome::disagreement;
  }
  if (2 * yes > n) return ConsensusOutcome::certified;
  if (2 * no > n) return ConsensusOutcome::flagged;
  return ConsensusOutcome::disagreement;
}

json to_json(const ConsensusResult& result) {
  json reports = json::array();
  for (const auto& r : result.reports) reports.push_back(to_json(r));
  return json{{"schema", "consensus_v1"},
              {"outcome", to_string(result.outcome)},
              {"reports", reports},
              {"promoted_theorem_id",
               result.promoted_theorem_id ? json(*result.promoted_theorem_id) : json(nullptr)},
              {"review_entry_id", result.review_entry_id ? json(*result.review_entry_id) : json(nullptr)}};
}

ConsensusResult consensus_from_json(const json& value) {
  ConsensusResult result;
  const std::string outcome = value.at("outcome").get<std::string>();
  result.outcome = outcome == "certified"   ? ConsensusOutcome::certified
                   : outcome == "flagged"   ? ConsensusOutcome::flagged
                                            : ConsensusOutcome::disagreement;
  for (const json& r : value.at("reports")) result.reports.push_back(report_from_json(r));
  if (value.contains("promoted_theorem_id") && !value["promoted_theorem_id"].is_null()) {
    result.promoted_theorem_id = value["promoted_theorem_id"].get<std::string>();
  }
  if (value.contains("review_entry_id") && !value["review_entry_id"].is_null()) {
    result.review_entry_id = value["review_entry_id"].get<std::string>();
  }
  return result;
}

ConsensusResult consensus_audit(const ExecutionLog& log, const KbSnapshot& kb,
                                const std::vector<Verifier*>& verifiers, const ConsensusPolicy& policy,
                                const ConsensusHooks& hooks) {
  validate_policy(policy);
  require(static_cast<int>(verifiers.size()) == policy.n, "one verifier per consensus audit");
  ConsensusResult result;
  std::vector<bool> passes;
  for (Verifier* v : verifiers) {
    require(v != nullptr, "null verifier");
    try {
      result.reports.push_back(v->audit(log, kb));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::audit_error) throw;
      fail(ErrorCode::audit_error, "consensus aborted: " + std::string(e.what()));
    }
    passes.push_back(result.reports.back().certified());
  }
  result.outcome = decide_consensus(passes, policy.rule);
  if (result.outcome == ConsensusOutcome::disagreement && hooks.queue) {
    result.review_entry_id = hooks.queue->enqueue_disagreement(log.task.id, result.reports);
  }
  if (result.outcome == ConsensusOutcome::certified && hooks.kb) {
    const std::string tpl = hooks.make_template ? hooks.make_template(log.task) : std::string();
    result.promoted_theorem_id =
        promote_chain(log, *hooks.kb, hooks.auto_approve_chain_theorems, tpl, hooks.clock);
  }
  return result;
}

// ---- promotion --------------------------------------------------------------------------

std::optional<Axiom> theorem_from_chain(const ExecutionLog& log, const KbSnapshot& kb) {
  if (log.status != RunStatus::complete || !log.final_answer) return std::nullopt;
  std::set<std::string> cited;
  std::set<std::string> paths;
  for (const auto* s : flatten_steps(log)) {
    for (const auto& ev : s->evidence) {
      if (!is_rule_citation(ev)) continue;
      const Axiom* a = kb.find_approved(ev.target_id);
      if (!a || !a->rule) continue;
      cited.insert(a->id);
      const auto p = a->rule->paths();
      paths.insert(p.begin(), p.end());
    }
  }
  const auto join = [](std::vector<RuleExpr> terms) {
    return terms.size() == 1 ? terms.front() : RuleExpr::all_of(std::move(terms));
  };
  std::vector<RuleExpr> premise;
  for (const Fact& f : log.task.facts.facts()) {
    if (!paths.count(f.path())) continue;
    const Comparator op = log.task.facts.is_multi_valued(f.path()) ? Comparator::contains : Comparator::eq;
    premise.push_back(RuleExpr::make_atom(Atom{f.entity, f.attribute, op, {f.value}}));
  }
  std::vector<RuleExpr> conclusion;
  for (const Claim& c : log.final_answer->atoms) {
    if (is_verdict_claim(c)) continue;
    RuleExpr atom = RuleExpr::make_atom(Atom{c.entity, c.attribute, Comparator::eq, {c.value}});
    conclusion.push_back(c.negated ? RuleExpr::negate(std::move(atom)) : std::move(atom));
  }
  if (premise.empty() || conclusion.empty() || cited.empty()) return std::nullopt;
  Axiom theorem;
  try {
    const RuleExpr rule = RuleExpr::implies(join(std::move(premise)), join(std::move(conclusion)));
    theorem.rule_text = print_rule(rule);
    theorem.rule = parse_rule(theorem.rule_text);
  } catch (const Error&) {
    return std::nullopt;
  }
  theorem.kind = AxiomKind::theorem;
  theorem.scenario = log.task.scenario;
  theorem.origin = Origin::chain_promoted;
  theorem.derived_from.assign(cited.begin(), cited.end());
  std::sort(theorem.derived_from.begin(), theorem.derived_from.end());
  theorem.statement = log.final_answer->text;
  return theorem;
}

std::optional<std::string> promote_chain(const ExecutionLog& log, KnowledgeBase& kb, bool auto_approve,
                                         const std::string& template_text, const Clock& clock) {
  const auto snap = kb.snapshot();
  auto theorem = theorem_from_chain(log, *snap);
  if (!theorem) return std::nullopt;
  for (const Axiom* existing : snap->records()) {
    if (existing->kind == AxiomKind::theorem && existing->rule_text == theorem->rule_text &&
        (existing->status == AxiomStatus::candidate || existing->status == AxiomStatus::approved)) {
      return existing->id;
    }
  }
  theorem->template_text = template_text;
  if (auto_approve) {
    theorem->status = AxiomStatus::approved;
    theorem->review = ReviewRecord{"auto-approve", clock.now(), "approve"};
  }
  return kb.add(std::move(*theorem)).id;
}

}  // namespace mmia

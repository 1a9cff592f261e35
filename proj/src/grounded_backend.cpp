#include "mmia/grounded_backend.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "mmia/error.hpp"
#include "mmia/prompts.hpp"

namespace mmia {

namespace {

std::string display(const Value& v) {
  return v.kind() == ValueKind::text || v.kind() == ValueKind::code ? v.str() : v.to_literal();
}

json claims_json(const std::vector<Claim>& claims) {
  json out = json::array();
  for (const auto& c : claims) out.push_back(to_json(c));
  return out;
}

std::string join_claims(const std::vector<Claim>& claims) {
  std::string out;
  for (const auto& c : claims) out += (out.empty() ? "" : "; ") + c.text();
  return out;
}

std::vector<std::string> strings(const json& ctx, const char* key) {
  if (!ctx.contains(key) || !ctx[key].is_array()) return {};
  return ctx[key].get<std::vector<std::string>>();
}

Claim context_claim(const json& c) {
  Claim claim;
  claim.entity = c.at("entity").get<std::string>();
  claim.attribute = c.at("attribute").get<std::string>();
  claim.value = value_from_json(c.at("value"));
  claim.negated = c.value("negated", false);
  return claim;
}

json atomicity(const PackRegistry& packs, const json& ctx) {
  const json& task = ctx.at("task");
  const ScenarioPack* pack = packs.find(task.value("scenario", ""));
  const bool has_hint = task.contains("tool") && !task["tool"].is_null();
  if (task.value("is_root", false) && !has_hint && pack && !pack->plan.empty()) {
    return json{{"atomic", false}, {"tool", nullptr},
                {"rationale", "the audit spans several dependent checks"}};
  }
  if (has_hint) {
    return json{{"atomic", true}, {"tool", task["tool"]}, {"rationale", "single planned check"}};
  }
  const FactSet facts = facts_from_json(ctx.value("facts", json::object()));
  bool all_present = true;
  for (const auto& goal : strings(task, "goals")) all_present = all_present && facts.has_path(goal);
  return json{{"atomic", true},
              {"tool", all_present ? "direct-query" : "kb-retrieval"},
              {"rationale", all_present ? "answer is recorded in the case" : "answer needs rules"}};
}

json plan(const PackRegistry& packs, const json& ctx) {
  const ScenarioPack& pack = packs.get(ctx.at("task").value("scenario", ""));
  json subtasks = json::array();
  for (const auto& s : pack.plan) {
    subtasks.push_back(json{{"description", s.description},
                            {"tool", to_string(s.tool)},
                            {"goals", s.goals},
                            {"needs", s.needs}});
  }
  json deps = json::array();
  for (const auto& [from, to] : pack.dependencies) deps.push_back(json::array({from, to}));
  return json{{"subtasks", subtasks}, {"dependencies", deps}, {"rationale", pack.plan_rationale}};
}

json direct_query(const json& ctx) {
  const FactSet facts = facts_from_json(ctx.at("facts"));
  std::set<std::string> documents;
  for (const json& d : ctx.value("documents", json::array())) documents.insert(d.get<std::string>());
  std::vector<Claim> claims;
  json citations = json::array();
  for (const auto& goal : strings(ctx.at("task"), "goals")) {
    for (const Fact& f : facts.facts()) {
      if (f.path() != goal) continue;
      Claim c{f.entity, f.attribute, f.value, false};
      std::string doc = f.entity;
      std::transform(doc.begin(), doc.end(), doc.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
      if (!documents.count(doc)) doc = "case-record";
      citations.push_back(json{{"kind", "external-document"}, {"target", doc}, {"excerpt", c.text()}});
      claims.push_back(std::move(c));
    }
  }
  return json{{"conclusion", claims.empty() ? "no evidence found" : join_claims(claims)},
              {"atoms", claims_json(claims)},
              {"citations", citations}};
}

struct Retrieved {
  std::string id;
  std::string kind;
  RuleExpr rule;
};

json kb_retrieval(const json& ctx) {
  const FactSet task_facts = facts_from_json(ctx.at("facts"));
  FactSet facts = task_facts;
  std::map<std::string, std::pair<int, Claim>> prior_by_path;
  for (const json& p : ctx.value("prior", json::array())) {
    const Claim c = context_claim(p);
    if (c.negated || is_verdict_claim(c)) continue;
    facts.try_add(c.fact());
    prior_by_path.insert_or_assign(c.path(), std::pair(p.at("step").get<int>(), c));
  }
  std::vector<Retrieved> rules;
  for (const json& r : ctx.value("retrieved", json::array())) {
    rules.push_back(Retrieved{r.at("id").get<std::string>(), r.value("kind", "axiom"),
                              parse_rule(r.at("rule").get<std::string>())});
  }
  const auto goals = strings(ctx.at("task"), "goals");
  const std::set<std::string> goal_set(goals.begin(), goals.end());

  std::vector<Claim> claims;
  json citations = json::array();
  std::set<std::string> cited;
  auto cite = [&](const Retrieved& r) {
    if (cited.insert(r.id).second) {
      citations.push_back(json{{"kind", r.kind}, {"target", r.id}, {"excerpt", print_rule(r.rule)}});
    }
    for (const auto& path : r.rule.paths()) {
      if (task_facts.has_path(path)) continue;
      const auto it = prior_by_path.find(path);
      if (it == prior_by_path.end()) continue;
      const std::string key = "step:" + path;
      if (!cited.insert(key).second) continue;
      citations.push_back(json{{"kind", "prior-step"},
                               {"target", std::to_string(it->second.first)},
                               {"excerpt", it->second.second.text()}});
    }
  };

  std::vector<const Retrieved*> deriving;
  std::vector<const Retrieved*> checking;
  for (const auto& r : rules) {
    bool derives_goal = false;
    for (const auto& path : derived_paths(r.rule)) derives_goal = derives_goal || goal_set.count(path);
    (derives_goal ? deriving : checking).push_back(&r);
  }

  for (bool changed = true; changed;) {
    changed = false;
    for (const Retrieved* r : deriving) {
      Truth premise = Truth::unknown;
      try {
        premise = rule_premise(r->rule, facts);
      } catch (const Error&) {
        continue;
      }
      if (premise != Truth::yes) continue;
      for (const Claim& c : consequence_claims(r->rule)) {
        if (c.negated || facts.contains(c.fact())) continue;
        if (!facts.try_add(c.fact())) continue;
        claims.push_back(c);
        cite(*r);
        changed = true;
      }
    }
  }
  for (const Retrieved* r : checking) {
    RuleVerdict verdict;
    try {
      verdict = eval_rule(r->rule, facts);
    } catch (const Error&) {
      continue;
    }
    if (verdict.outcome == Outcome::inapplicable) continue;
    claims.push_back(verdict_claim(r->id, verdict.outcome));
    cite(*r);
  }
  return json{{"conclusion", claims.empty() ? "no applicable rule" : join_claims(claims)},
              {"atoms", claims_json(claims)},
              {"citations", citations}};
}

json aggregate(const PackRegistry& packs, const json& ctx) {
  const json& task = ctx.at("task");
  const ScenarioPack* pack = packs.find(task.value("scenario", ""));
  std::vector<Claim> all;
  for (const json& r : ctx.at("results")) {
    for (const json& c : r.value("atoms", json::array())) all.push_back(context_claim(c));
  }
  std::vector<Claim> atoms;
  std::string text;
  for (const auto& goal : strings(task, "goals")) {
    const auto it = std::find_if(all.rbegin(), all.rend(),
                                 [&](const Claim& c) { return c.path() == goal && !c.negated; });
    if (it == all.rend()) continue;
    atoms.push_back(*it);
    std::string label = goal;
    if (pack) {
      const auto l = pack->goal_labels.find(goal);
      if (l != pack->goal_labels.end()) label = l->second;
    }
    text += (text.empty() ? "" : ", ") + label + " = " + display(it->value);
  }
  const bool erroneous = std::any_of(all.begin(), all.end(), [](const Claim& c) {
    return is_verdict_claim(c) && c.value.str() == "violated";
  });
  atoms.push_back(Claim{"task", "outcome", Value::text(erroneous ? "erroneous" : "correct"), false});
  std::string outcome_label = erroneous ? "erroneous" : "correct";
  if (pack) outcome_label = erroneous ? pack->erroneous_label : pack->correct_label;
  text += (text.empty() ? "" : ", ") + outcome_label;
  return json{{"answer", text}, {"atoms", claims_json(atoms)}};
}

json judge(const json& ctx) {
  const RuleExpr theorem = parse_rule(ctx.at("theorem").at("rule").get<std::string>());
  const FactSet facts = facts_from_json(ctx.at("facts"));
  Truth premise = Truth::unknown;
  try {
    premise = rule_premise(theorem, facts);
  } catch (const Error&) {
  }
  const bool fits = premise == Truth::yes;
  return json{{"fits", fits},
              {"justification", fits ? "the case satisfies the theorem's conditions"
                                 : "the theorem's conditions are not established for this case"}};
}

json abstract(const PackRegistry& packs, const json& ctx) {
  const ScenarioPack* pack = packs.find(ctx.value("scenario", ""));
  if (!pack) return json{{"template", ctx.value("description", "")}, {"bindings", json::object()}};
  const FactSet facts = facts_from_json(ctx.value("facts", json::object()));
  json bindings = json::object();
  for (const auto& [name, path] : pack->abstraction_bindings) {
    const auto dot = path.find('.');
    const auto* values = facts.find(path.substr(0, dot), path.substr(dot + 1));
    bindings[name] = values && !values->empty() ? json(display(values->front())) : json(nullptr);
  }
  return json{{"template", pack->abstraction_template}, {"bindings", bindings}};
}

json extract(const PackRegistry& packs, const json& ctx) {
  json candidates = json::array();
  const ScenarioPack* pack = packs.find(ctx.value("scenario", ""));
  const std::string text = ctx.at("document").value("text", "");
  if (pack) {
    for (const auto& r : pack->rules) {
      if (!r.excerpt.empty() && text.find(r.excerpt) != std::string::npos) {
        candidates.push_back(json{{"rule", r.text}, {"excerpt", r.excerpt}});
      }
    }
  }
  return json{{"candidates", candidates}};
}

// Contrapositive composition: from A = IF c THEN NOT p and B = IF q THEN p,
// derive IF c THEN NOT q.
json derive(const json& ctx) {
  struct Entry {
    std::string id;
    RuleExpr rule;
  };
  std::vector<Entry> axioms;
  for (const json& a : ctx.at("axioms")) {
    try {
      axioms.push_back(Entry{a.at("id").get<std::string>(), parse_rule(a.at("rule").get<std::string>())});
    } catch (const Error&) {
    }
  }
  json theorems = json::array();
  for (const auto& a : axioms) {
    if (a.rule.kind() != RuleExpr::Kind::implies) continue;
    const RuleExpr& forbidden = a.rule.second();
    if (forbidden.kind() != RuleExpr::Kind::negation) continue;
    const RuleExpr& p = forbidden.children().front();
    if (p.kind() != RuleExpr::Kind::atom) continue;
    for (const auto& b : axioms) {
      if (&a == &b || b.rule.kind() != RuleExpr::Kind::implies || !(b.rule.second() == p)) continue;
      const RuleExpr derived = RuleExpr::implies(a.rule.first(), RuleExpr::negate(b.rule.first()));
      theorems.push_back(json{{"rule", print_rule(derived)},
                              {"derived_from", json::array({a.id, b.id})},
                              {"statement", "contrapositive of " + b.id + " under " + a.id}});
    }
  }
  return json{{"theorems", theorems}};
}

json baseline(const json& ctx) {
  const FactSet facts = facts_from_json(ctx.at("facts"));
  for (const json& r : ctx.value("rules", json::array())) {
    try {
      const RuleVerdict v = eval_rule(parse_rule(r.at("rule").get<std::string>()), facts);
      if (v.outcome == Outcome::violated) {
        return json{{"verdict", "flag"},
                    {"justification", r.at("id").get<std::string>() + " is violated"},
                    {"cited_rule", r.at("id")}};
      }
    } catch (const Error&) {
    }
  }
  return json{{"verdict", "pass"}, {"justification", "no rule is violated"}, {"cited_rule", nullptr}};
}

json generate(const json& ctx) {
  const FactSet facts = facts_from_json(ctx.at("facts"));
  std::string text = "Synthetic " + ctx.value("scenario", std::string("case")) + " case.";
  for (const Fact& f : facts.facts()) text += " " + f.path() + " is " + display(f.value) + ".";
  return json{{"narrative", text}};
}

}  // namespace

GroundedBackend::GroundedBackend(const PackRegistry& packs) : packs_(packs) {}

json GroundedBackend::answer(const std::string& schema, const json& ctx) const {
  if (schema == "atomicity_v1") return atomicity(packs_, ctx);
  if (schema == "plan_v1") return plan(packs_, ctx);
  if (schema == "step_v1") {
    const std::string tool = ctx.value("tool", "");
    if (tool == "kb-retrieval") return kb_retrieval(ctx);
    return direct_query(ctx);
  }
  if (schema == "aggregate_v1") return aggregate(packs_, ctx);
  if (schema == "judge_v1") return judge(ctx);
  if (schema == "abstract_v1") return abstract(packs_, ctx);
  if (schema == "extract_v1") return extract(packs_, ctx);
  if (schema == "derive_v1") return derive(ctx);
  if (schema == "baseline_v1") return baseline(ctx);
  if (schema == "generate_v1") return generate(ctx);
  fail(ErrorCode::backend_error, "grounded backend cannot answer '" + schema + "' requests");
}

ChatResponse GroundedBackend::send(const ChatRequest& request) {
  const json ctx = parse_context(request.user_prompt);
  const std::string text = answer(request.response_schema, ctx).dump();
  ChatResponse response;
  response.text = text;
  response.usage.prompt_tokens = count_tokens(request.system_prompt) + count_tokens(request.user_prompt);
  response.usage.completion_tokens = count_tokens(text);
  response.backend_id = id();
  return response;
}

}  // namespace mmia

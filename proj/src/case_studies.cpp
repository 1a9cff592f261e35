#include "mmia/case_studies.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include "mmia/error.hpp"
#include "mmia/grounded_backend.hpp"
#include "mmia/reasoning.hpp"

namespace mmia {

namespace {

BenchmarkCase hand_case(std::string id, std::string scenario, const std::string& gold_rule = {}) {
  BenchmarkCase c;
  c.id = std::move(id);
  c.scenario = std::move(scenario);
  c.template_id = "case-study";
  c.provenance = "hand-authored";
  if (!gold_rule.empty()) {
    c.gold = GoldLabel::erroneous;
    c.injected = InjectedError{"case-study", json::object(), gold_rule};
  }
  const ScenarioPack& pack = PackRegistry::builtin().get(c.scenario);
  c.facts = pack.empty_facts();
  if (c.scenario == "insurance") {
    c.ground_truth = c.gold == GoldLabel::correct ? "Approve" : "Deny";
  } else {
    c.ground_truth = c.gold == GoldLabel::correct ? pack.correct_label : pack.erroneous_label;
  }
  return c;
}

BenchmarkCase drg(const std::string& id, const std::string& diagnosis, const std::string& gold_rule) {
  BenchmarkCase c = hand_case(id, "drg", gold_rule);
  c.facts.add("case", "principal_diagnosis", Value::code(diagnosis));
  c.facts.add("case", "procedure", Value::code("36.0601"));
  c.facts.add("case", "secondary_count", Value::number(1));
  c.facts.add("case", "secondary_diagnosis", Value::code("I10"));
  c.facts.add("case", "documented_condition", Value::text("hypertension"));
  c.facts.add("case", "claimed_drg", Value::text("FZ19"));
  return c;
}

BenchmarkCase regulatory(const std::string& id, double p, const std::string& gold_rule) {
  BenchmarkCase c = hand_case(id, "regulatory", gold_rule);
  c.facts.add("ifu", "max_lesion_claim", Value::number(30, "mm"));
  c.facts.add("cer", "large_lesion_p", Value::number(p));
  c.facts.add("ifu", "success_rate_claim", Value::number(90, "%"));
  c.facts.add("cer", "success_rate", Value::number(92, "%"));
  const std::string p_text = p < 0.05 ? "0.03" : "0.08";
  c.documents = {
      Document{"IFU", "Instructions for use. The stent is indicated for de novo lesions up to 30 mm in "
                      "length. Procedural success rate: 90%."},
      Document{"CER", "Clinical evaluation report. Lesions longer than 25 mm: subgroup analysis p = " +
                          p_text + ". Observed procedural success rate: 92%."}};
  return c;
}

BenchmarkCase ehr(const std::string& id, const std::string& drug, const std::string& diagnosis,
                  const std::string& gold_rule) {
  BenchmarkCase c = hand_case(id, "ehr", gold_rule);
  c.facts.add("patient", "allergy", Value::text("penicillin"));
  c.facts.add("encounter", "diagnosis", Value::code(diagnosis));
  c.facts.add("encounter", "event", Value::text("admission"));
  c.facts.add("note", "initial_progress_hours", Value::duration(6, "hours"));
  c.facts.add("order", "drug", Value::text(drug));
  return c;
}

BenchmarkCase insurance(const std::string& id, int months, const std::string& gold_rule) {
  BenchmarkCase c = hand_case(id, "insurance", gold_rule);
  c.facts.add("claim", "procedure", Value::code("55.69"));
  c.facts.add("claim", "medically_necessary", Value::boolean(true));
  c.facts.add("claim", "preauthorized", Value::boolean(true));
  c.facts.add("member", "enrollment", Value::duration(months, "months"));
  return c;
}

std::vector<CaseStudy> build_case_studies() {
  return {
      {"drg-fz19-certified", "Acute myocardial infarction with stent, grouped to FZ19",
       drg("DRG-CS-1", "I21.001", ""), true, std::nullopt},
      {"drg-pneumonia-stent-flawed", "Pneumonia with a coronary stent, mismatch overlooked",
       drg("DRG-CS-2", "J18.9", "DRG-A5"), false, "DRG-A5"},
      {"regulatory-consistent-certified", "Stent IFU claims supported by the CER",
       regulatory("REG-CS-1", 0.03, ""), true, std::nullopt},
      {"regulatory-p008-flawed", "Large-lesion claim with p = 0.08, inconsistency overlooked",
       regulatory("REG-CS-2", 0.08, "REG-A1"), false, "REG-A1"},
      {"ehr-macrolide-certified", "Macrolide ordered for a penicillin-allergic patient",
       ehr("EHR-CS-1", "azithromycin", "J02.0", ""), true, std::nullopt},
      {"ehr-allergy-conflict-flawed", "Amoxicillin ordered despite a penicillin allergy, conflict overlooked",
       ehr("EHR-CS-2", "amoxicillin", "J02.9", "EHR-A1"), false, "EHR-A1"},
      {"insurance-transplant-certified", "Transplant claim after 18 months of enrollment",
       insurance("INS-CS-1", 18, ""), true, std::nullopt},
      {"insurance-enrollment-flawed", "Transplant claim after 8 months, exclusion overlooked",
       insurance("INS-CS-2", 8, "INS-A1"), false, "INS-A1"},
  };
}

void collect_steps(ExecutionLog& node, std::vector<ReasoningStep*>& out) {
  for (auto& child : node.children) collect_steps(child, out);
  for (auto& s : node.steps) out.push_back(&s);
}

std::vector<ReasoningStep*> steps_of(ExecutionLog& log) {
  std::vector<ReasoningStep*> out;
  collect_steps(log, out);
  std::sort(out.begin(), out.end(), [](const ReasoningStep* a, const ReasoningStep* b) { return a->index < b->index; });
  return out;
}

void for_each_node(ExecutionLog& node, const std::function<void(ExecutionLog&)>& fn) {
  fn(node);
  for (auto& child : node.children) for_each_node(child, fn);
}

void replace_all(std::string& text, const std::string& from, const std::string& to) {
  if (from.empty()) return;
  for (auto at = text.find(from); at != std::string::npos; at = text.find(from, at + to.size())) {
    text.replace(at, from.size(), to);
  }
}

void remove_fact(FactSet& facts, const Fact& fact) {
  if (facts.contains(fact)) facts.erase(fact);
}

Mutant make(MutationKind kind, std::string site, ExecutionLog log) {
  return Mutant{kind, std::move(site), std::move(log)};
}

std::string step_site(const ReasoningStep& s) { return "step " + std::to_string(s.index); }

std::string prefix_of(const std::string& id) {
  const auto dash = id.find('-');
  return dash == std::string::npos ? id : id.substr(0, dash);
}

}  // namespace

std::vector<CaseStudy> case_studies() {
  static const std::vector<CaseStudy> studies = build_case_studies();
  return studies;
}

const CaseStudy& find_case_study(std::string_view name) {
  static const std::vector<CaseStudy> studies = build_case_studies();
  for (const auto& s : studies) {
    if (s.name == name) return s;
  }
  fail(ErrorCode::not_found, "no case study named '" + std::string(name) + "'");
}

std::shared_ptr<const KbSnapshot> fixture_kb(const PackRegistry& packs, const Clock& clock) {
  KnowledgeBase kb;
  seed_pack_axioms(kb, packs, clock);
  return kb.snapshot();
}

ExecutionLog overlook_violations(ExecutionLog log, const ScenarioPack& pack) {
  const auto flip = [](Claim& c, std::vector<std::string*> texts) {
    if (!is_verdict_claim(c) || c.negated || c.value.str() != "violated") return;
    const std::string before = c.text();
    c.value = Value::text("satisfied");
    for (std::string* t : texts) {
      replace_all(*t, before, c.text());
      replace_all(*t, c.path() + " = violated", c.path() + " = satisfied");
    }
  };
  for_each_node(log, [&](ExecutionLog& node) {
    for (auto& s : node.steps) {
      for (auto& c : s.atoms) flip(c, {&s.conclusion, &s.raw_output});
    }
    if (node.final_answer) {
      for (auto& c : node.final_answer->atoms) flip(c, {&node.final_answer->text});
    }
  });
  if (log.final_answer) {
    for (auto& c : log.final_answer->atoms) {
      if (c.path() == "task.outcome" && c.value == Value::text("erroneous")) c.value = Value::text("correct");
    }
    replace_all(log.final_answer->text, pack.erroneous_label, pack.correct_label);
  }
  return log;
}

ExecutionLog build_fixture_log(const CaseStudy& study, const PackRegistry& packs,
                               std::shared_ptr<const KbSnapshot> kb, const Clock& clock) {
  const ScenarioPack& pack = packs.get(study.source.scenario);
  Gateway gateway(std::make_shared<GroundedBackend>(packs));
  ReasoningEngine engine(gateway, std::move(kb), EngineOptions{clock, 0.0, {}});
  ExecutionLog log = engine.execute_task(task_for_case(study.source, pack));
  if (log.status != RunStatus::complete) {
    fail(ErrorCode::state_error, "case study " + study.name + " did not complete");
  }
  return study.certified ? log : overlook_violations(std::move(log), pack);
}

std::string_view to_string(MutationKind kind) {
  switch (kind) {
    case MutationKind::dangling_citation: return "dangling-citation";
    case MutationKind::removed_evidence_fact: return "removed-evidence-fact";
    case MutationKind::contradicting_atom: return "contradicting-atom";
    case MutationKind::underived_final_atom: return "underived-final-atom";
    case MutationKind::forward_prior_step_citation: return "forward-prior-step-citation";
    case MutationKind::plan_goal_drop: return "plan-goal-drop";
    case MutationKind::empty_chain: return "empty-chain";
    case MutationKind::flipped_verdict: return "flipped-verdict";
    case MutationKind::non_sequitur: return "non-sequitur";
  }
  return "dangling-citation";
}

std::vector<MutationKind> mutation_kinds() {
  return {MutationKind::dangling_citation,           MutationKind::removed_evidence_fact,
          MutationKind::contradicting_atom,          MutationKind::underived_final_atom,
          MutationKind::forward_prior_step_citation, MutationKind::plan_goal_drop,
          MutationKind::empty_chain,                 MutationKind::flipped_verdict,
          MutationKind::non_sequitur};
}

MutationKind mutation_kind_from_string(std::string_view text) {
  for (MutationKind k : mutation_kinds()) {
    if (to_string(k) == text) return k;
  }
  fail(ErrorCode::validation_error, "unknown mutation kind '" + std::string(text) + "'");
}

std::vector<Mutant> mutate(const ExecutionLog& original, MutationKind kind) {
  std::vector<Mutant> out;
  ExecutionLog probe = original;
  const std::vector<ReasoningStep*> probe_steps = steps_of(probe);
  const std::size_t n = probe_steps.size();

  switch (kind) {
    case MutationKind::dangling_citation:
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t e = 0; e < probe_steps[i]->evidence.size(); ++e) {
          const EvidenceRef& ev = probe_steps[i]->evidence[e];
          if (ev.kind != EvidenceKind::axiom && ev.kind != EvidenceKind::theorem) continue;
          ExecutionLog log = original;
          EvidenceRef& target = steps_of(log)[i]->evidence[e];
          target.target_id = prefix_of(ev.target_id) + "-A99";
          out.push_back(make(kind, step_site(*probe_steps[i]) + " cites " + target.target_id, std::move(log)));
        }
      }
      break;

    case MutationKind::removed_evidence_fact: {
      std::set<Fact> done;
      for (std::size_t i = 0; i < n; ++i) {
        const ReasoningStep& s = *probe_steps[i];
        const bool documented = std::any_of(s.evidence.begin(), s.evidence.end(), [](const EvidenceRef& ev) {
          return ev.kind == EvidenceKind::external_document;
        });
        if (!documented) continue;
        for (const Claim& c : s.atoms) {
          if (c.negated || is_verdict_claim(c) || !original.task.facts.contains(c.fact())) continue;
          if (!done.insert(c.fact()).second) continue;
          ExecutionLog log = original;
          for_each_node(log, [&](ExecutionLog& node) {
            remove_fact(node.task.facts, c.fact());
            if (node.plan) {
              for (auto& sub : node.plan->subtasks) remove_fact(sub.facts, c.fact());
            }
          });
          out.push_back(make(kind, step_site(s) + " loses " + c.text(), std::move(log)));
        }
      }
      break;
    }

    case MutationKind::contradicting_atom:
      if (n < 2) break;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        for (const Claim& c : probe_steps[i]->atoms) {
          if (is_verdict_claim(c)) continue;
          ExecutionLog log = original;
          Claim negation = c;
          negation.negated = !c.negated;
          steps_of(log).back()->atoms.push_back(negation);
          out.push_back(make(kind, step_site(*probe_steps[n - 1]) + " asserts " + negation.text(), std::move(log)));
        }
      }
      break;

    case MutationKind::underived_final_atom:
      if (original.final_answer) {
        ExecutionLog log = original;
        log.final_answer->atoms.push_back(Claim{"patient", "status", Value::text("stable"), false});
        log.final_answer->text += ", patient stable";
        out.push_back(make(kind, "final answer", std::move(log)));
      }
      break;

    case MutationKind::forward_prior_step_citation:
      for (std::size_t i = 0; i < n; ++i) {
        ExecutionLog log = original;
        ReasoningStep& s = *steps_of(log)[i];
        const std::string self = std::to_string(s.index);
        auto it = std::find_if(s.evidence.begin(), s.evidence.end(),
                               [](const EvidenceRef& ev) { return ev.kind == EvidenceKind::prior_step; });
        if (it != s.evidence.end()) {
          it->target_id = self;
        } else {
          s.evidence.push_back(EvidenceRef{EvidenceKind::prior_step, self, s.conclusion});
        }
        out.push_back(make(kind, step_site(s) + " cites itself", std::move(log)));
      }
      break;

    case MutationKind::plan_goal_drop: {
      std::vector<std::vector<int>> path;  // child indices from the root
      std::function<void(const ExecutionLog&, std::vector<int>)> visit = [&](const ExecutionLog& node,
                                                                             std::vector<int> where) {
        if (node.plan) path.push_back(where);
        for (std::size_t c = 0; c < node.children.size(); ++c) {
          auto next = where;
          next.push_back(static_cast<int>(c));
          visit(node.children[c], next);
        }
      };
      visit(original, {});
      auto locate = [](ExecutionLog& root, const std::vector<int>& where) -> ExecutionLog& {
        ExecutionLog* node = &root;
        for (int c : where) node = &node->children[static_cast<std::size_t>(c)];
        return *node;
      };
      for (const auto& where : path) {
        const ExecutionLog& node = locate(probe, where);
        const Plan& plan = *node.plan;
        for (std::size_t i = 0; i < plan.subtasks.size(); ++i) {
          for (const std::string& goal : plan.subtasks[i].goals) {
            const bool elsewhere = std::any_of(plan.subtasks.begin(), plan.subtasks.end(), [&](const TaskSpec& s) {
              return &s != &plan.subtasks[i] && std::count(s.goals.begin(), s.goals.end(), goal) > 0;
            });
            if (elsewhere) continue;
            const bool task_goal = std::count(node.task.goals.begin(), node.task.goals.end(), goal) > 0;
            const bool consumed =
                !node.task.facts.has_path(goal) &&
                std::any_of(plan.subtasks.begin(), plan.subtasks.end(), [&](const TaskSpec& s) {
                  return std::count(s.needs.begin(), s.needs.end(), goal) > 0;
                });
            if (!task_goal && !consumed) continue;
            ExecutionLog log = original;
            auto& goals = locate(log, where).plan->subtasks[i].goals;
            goals.erase(std::remove(goals.begin(), goals.end(), goal), goals.end());
            out.push_back(make(kind, "plan of " + node.task.id + " subtask " + std::to_string(i + 1) + " drops " + goal,
                               std::move(log)));
          }
        }
      }
      break;
    }

    case MutationKind::empty_chain: {
      ExecutionLog log = original;
      for_each_node(log, [](ExecutionLog& node) { node.steps.clear(); });
      out.push_back(make(kind, "all steps", std::move(log)));
      break;
    }

    case MutationKind::flipped_verdict:
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < probe_steps[i]->atoms.size(); ++a) {
          const Claim& c = probe_steps[i]->atoms[a];
          if (!is_verdict_claim(c) || c.negated) continue;
          const std::string v = c.value.str();
          if (v != "satisfied" && v != "violated") continue;
          ExecutionLog log = original;
          Claim& target = steps_of(log)[i]->atoms[a];
          target.value = Value::text(v == "satisfied" ? "violated" : "satisfied");
          out.push_back(make(kind, step_site(*probe_steps[i]) + " restates " + target.text(), std::move(log)));
        }
      }
      break;

    case MutationKind::non_sequitur:
      for (std::size_t i = 1; i < n; ++i) {
        const ReasoningStep& s = *probe_steps[i];
        bool cited = false;
        for (std::size_t e = 0; e < s.evidence.size(); ++e) {
          if (s.evidence[e].kind != EvidenceKind::prior_step) continue;
          cited = true;
          ExecutionLog log = original;
          EvidenceRef& ev = steps_of(log)[i]->evidence[e];
          ev.excerpt = "NOT " + ev.excerpt;
          out.push_back(make(kind, step_site(s) + " relies on '" + ev.excerpt + "'", std::move(log)));
        }
        if (!cited) {
          const ReasoningStep& before = *probe_steps[i - 1];
          ExecutionLog log = original;
          const std::string excerpt = "NOT " + before.conclusion;
          steps_of(log)[i]->evidence.push_back(
              EvidenceRef{EvidenceKind::prior_step, std::to_string(before.index), excerpt});
          out.push_back(make(kind, step_site(s) + " relies on '" + excerpt + "'", std::move(log)));
        }
      }
      break;
  }
  return out;
}

void export_fixtures(const std::filesystem::path& dir, const PackRegistry& packs, const Clock& clock) {
  std::filesystem::create_directories(dir);
  const auto kb = fixture_kb(packs, clock);
  for (const CaseStudy& study : case_studies()) {
    const ExecutionLog log = build_fixture_log(study, packs, kb, clock);
    json meta = to_json(study.source);
    meta["title"] = study.title;
    meta["expected"] = study.certified ? "certified" : "flagged";
    meta["flagged_rule"] = study.flagged_rule ? json(*study.flagged_rule) : json(nullptr);
    write_text_file(dir / (study.name + ".case.json"), meta.dump(2) + "\n");
    write_text_file(dir / (study.name + ".log.json"), to_json(log).dump(2) + "\n");
  }
}

ExecutionLog load_fixture_log(const std::filesystem::path& dir, std::string_view name) {
  const auto path = dir / (std::string(name) + ".log.json");
  if (!std::filesystem::exists(path)) fail(ErrorCode::not_found, "no fixture " + path.string());
  try {
    return log_from_json(json::parse(read_text_file(path)));
  } catch (const json::exception& e) {
    fail(ErrorCode::validation_error, "fixture " + path.string() + " is malformed: " + e.what());
  }
}

}  // namespace mmia

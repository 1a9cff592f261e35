#include "mmia/prompts.hpp"

#include <algorithm>

#include "mmia/error.hpp"

namespace mmia {

namespace {

const std::map<std::string, std::string, std::less<>>& templates() {
  static const std::map<std::string, std::string, std::less<>> table{
      {"atomicity",
       "Task {{task_id}}: {{description}}\n"
       "Decide whether this task is atomic, i.e. solvable by a single call to one tool "
       "(direct-query, kb-retrieval, web-search).\n"
       "Reply with JSON {\"atomic\": bool, \"tool\": tool or null, \"rationale\": text}.\n"
       "{{context}}"},
      {"plan",
       "Task {{task_id}}: {{description}}\n"
       "Decompose the task into an ordered list of subtasks with explicit data dependencies. "
       "Each subtask names the fact paths it produces (goals) and consumes (needs).\n"
       "Reply with JSON {\"subtasks\": [{\"description\", \"tool\", \"goals\", \"needs\"}], "
       "\"dependencies\": [[from, to]], \"rationale\": text}.\n"
       "{{context}}"},
      {"step",
       "Subtask {{task_id}}: {{description}}\n"
       "Tool: {{tool}}\n"
       "Answer using only the evidence provided. Cite every source you rely on.\n"
       "Reply with JSON {\"conclusion\": text, \"atoms\": [{\"entity\", \"attribute\", "
       "\"value\", \"negated\"}], \"citations\": [{\"kind\", \"target\", \"excerpt\"}]}.\n"
       "Evidence:\n{{evidence}}\n"
       "{{context}}"},
      {"aggregate",
       "Task {{task_id}}: {{description}}\n"
       "Synthesize the subtask conclusions below into a final answer. Use only atoms that "
       "the subtasks established.\n"
       "Subtask conclusions:\n{{conclusions}}\n"
       "Reply with JSON {\"answer\": text, \"atoms\": [...]}.\n"
       "{{context}}"},
      {"judge",
       "Does the theorem below apply to the task?\n"
       "Theorem {{theorem_id}}: {{theorem}}\n"
       "Task: {{description}}\n"
       "Reply with JSON {\"fits\": bool, \"justification\": text}.\n"
       "{{context}}"},
      {"abstract",
       "Rewrite the task as a reusable process template. Replace every case-specific entity "
       "with a typed placeholder from: {diagnosis}, {procedure}, {drug}, {allergy}, {clause}, "
       "{duration}.\n"
       "Task: {{description}}\n"
       "Reply with JSON {\"template\": text, \"bindings\": {placeholder: value}}.\n"
       "{{context}}"},
      {"extract",
       "Extract candidate IF-THEN rules from the document below. For each rule quote the "
       "exact sentence it comes from.\n"
       "Document {{document_id}}:\n{{document}}\n"
       "Reply with JSON {\"candidates\": [{\"rule\": text, \"excerpt\": text}]}.\n"
       "{{context}}"},
      {"derive",
       "Derive new theorems that follow logically from the approved axioms below. List the "
       "axiom ids each theorem depends on.\n"
       "Axioms:\n{{axioms}}\n"
       "Reply with JSON {\"theorems\": [{\"rule\", \"derived_from\", \"statement\"}]}.\n"
       "{{context}}"},
      {"baseline",
       "Review the case below against the retrieved rules and decide in one pass whether it "
       "contains an error.\n"
       "Case {{task_id}}: {{description}}\n"
       "Facts:\n{{facts}}\n"
       "Rules:\n{{rules}}\n"
       "Reply with JSON {\"verdict\": \"flag\"|\"pass\", \"justification\": text, "
       "\"cited_rule\": id or null}.\n"
       "{{context}}"},
      {"generate",
       "Write a short, realistic case narrative for a synthetic {{scenario}} case. It must "
       "agree with every structured fact below and add no new findings.\n"
       "Facts:\n{{facts}}\n"
       "Reply with JSON {\"narrative\": text}.\n"
       "{{context}}"},
      // Plan audit.
      {"audit_plan_v1",
       "Act as a reviewer. Task: {{description}}\nProposed plan:\n{{plan}}\n"
       "Does the plan align with the task goal, and do dependencies respect the data flow?\n"
       "Reply with JSON {\"ok\": bool, \"reason\": text}.\n{{context}}"},
      {"audit_plan_v2",
       "You are an independent auditor checking a decomposition.\nGoal: {{description}}\n"
       "Subtasks:\n{{plan}}\n"
       "List any goal the plan fails to produce or any subtask that consumes data before it "
       "is produced. Reply with JSON {\"ok\": bool, \"reason\": text}.\n{{context}}"},
      {"audit_plan_v3",
       "Check this plan for completeness and ordering.\nTask: {{description}}\n"
       "Plan:\n{{plan}}\nReply with JSON {\"ok\": bool, \"reason\": text}.\n{{context}}"},
      // Evidence audit.
      {"audit_evidence_v1",
       "Is every factual claim in this step supported by a reliable cited source?\n"
       "Claim: {{claim}}\nEvidence:\n{{evidence}}\n"
       "Reply with JSON {\"ok\": bool, \"reason\": text}.\n{{context}}"},
      {"audit_evidence_v2",
       "Verify the claim strictly against the evidence; do not use outside knowledge.\n"
       "Claim: {{claim}}\nEvidence:\n{{evidence}}\n"
       "Reply with JSON {\"ok\": bool, \"reason\": text}.\n{{context}}"},
      {"audit_evidence_v3",
       "Does the cited evidence entail the conclusion?\nConclusion: {{claim}}\n"
       "Cited evidence:\n{{evidence}}\n"
       "Reply with JSON {\"ok\": bool, \"reason\": text}.\n{{context}}"},
      // Fallacy audit.
      {"audit_fallacy_v1",
       "Are there any logical leaps or contradictions between the new conclusion and the "
       "earlier ones?\nEarlier conclusions:\n{{previous}}\nNew conclusion: {{conclusion}}\n"
       "Reply with JSON {\"fallacy\": text or null}.\n{{context}}"},
      {"audit_fallacy_v2",
       "Check the reasoning step for contradiction or non-sequitur.\n"
       "Established so far:\n{{previous}}\nStep conclusion: {{conclusion}}\n"
       "Reply with JSON {\"fallacy\": text or null}.\n{{context}}"},
      {"audit_fallacy_v3",
       "Given the prior conclusions, does this conclusion follow without contradiction?\n"
       "Prior:\n{{previous}}\nConclusion: {{conclusion}}\n"
       "Reply with JSON {\"fallacy\": text or null}.\n{{context}}"},
      // Aggregation audit.
      {"audit_aggregation_v1",
       "Can the final answer be logically derived from the step conclusions?\n"
       "Step conclusions:\n{{conclusions}}\nFinal answer: {{answer}}\n"
       "Reply with JSON {\"ok\": bool, \"reason\": text}.\n{{context}}"},
      {"audit_aggregation_v2",
       "Does the final answer introduce anything the steps did not establish?\n"
       "Steps:\n{{conclusions}}\nAnswer: {{answer}}\n"
       "Reply with JSON {\"ok\": bool, \"reason\": text}.\n{{context}}"},
      {"audit_aggregation_v3",
       "Confirm the summary is faithful to the step results.\nResults:\n{{conclusions}}\n"
       "Summary: {{answer}}\nReply with JSON {\"ok\": bool, \"reason\": text}.\n{{context}}"},
  };
  return table;
}

}  // namespace

std::string render_template(std::string_view text, const Bindings& bindings) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    const auto close = text.find("}}", open + 2);
    if (close == std::string_view::npos) {
      fail(ErrorCode::template_error, "unterminated placeholder in template");
    }
    out.append(text.substr(pos, open - pos));
    const std::string name(text.substr(open + 2, close - open - 2));
    const auto it = bindings.find(name);
    if (it == bindings.end()) {
      fail(ErrorCode::template_error, "unbound placeholder {{" + name + "}}");
    }
    out += it->second;
    pos = close + 2;
  }
  return out;
}

const std::string& prompt_template(std::string_view template_id) {
  const auto& table = templates();
  const auto it = table.find(template_id);
  if (it == table.end()) {
    fail(ErrorCode::template_error, "unknown prompt template '" + std::string(template_id) + "'");
  }
  return it->second;
}

std::string render_prompt(std::string_view template_id, const Bindings& bindings) {
  return render_template(prompt_template(template_id), bindings);
}

std::vector<std::string> prompt_template_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, text] : templates()) ids.push_back(id);
  return ids;
}

std::string system_prompt(Role role) {
  switch (role) {
    case Role::planner:
      return "You are the Planner of a verifiable reasoning engine. Decompose tasks into "
             "atomic, dependency-ordered subtasks. Answer in JSON only.";
    case Role::executor:
      return "You are the Executor. Solve one atomic subtask with the given tool and cite "
             "every source. Answer in JSON only.";
    case Role::auditor:
      return "You are the Auditor. Check reasoning chains for plan alignment, evidence "
             "support and logical soundness. Answer in JSON only.";
    case Role::abstractor:
      return "You abstract concrete tasks into reusable process templates. Answer in JSON "
             "only.";
    case Role::extractor:
      return "You extract formal rules from regulatory and clinical documents. Answer in "
             "JSON only.";
    case Role::judge:
      return "You decide whether a stored theorem applies to a task. Answer in JSON only.";
    case Role::generator:
      return "You generate realistic synthetic cases for benchmarking. Answer in JSON only.";
  }
  return "Answer in JSON only.";
}

std::string context_block(const json& context) {
  return "<context>" + canonical_dump(context) + "</context>";
}

json parse_context(std::string_view prompt) {
  constexpr std::string_view open = "<context>";
  constexpr std::string_view close = "</context>";
  const auto begin = prompt.find(open);
  const auto end = begin == std::string_view::npos ? begin : prompt.find(close, begin);
  if (begin == std::string_view::npos || end == std::string_view::npos) {
    fail(ErrorCode::protocol_error, "prompt carries no context block");
  }
  const auto payload = prompt.substr(begin + open.size(), end - begin - open.size());
  try {
    return json::parse(payload);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::protocol_error, std::string("bad context block: ") + e.what());
  }
}

}  // namespace mmia

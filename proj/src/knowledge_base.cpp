#include "mmia/knowledge_base.hpp"

#include <algorithm>
#include <charconv>

#include "mmia/error.hpp"
#include "mmia/prompts.hpp"

namespace mmia {

std::string_view to_string(AxiomKind kind) {
  return kind == AxiomKind::axiom ? "axiom" : "theorem";
}

std::string_view to_string(AxiomStatus status) {
  switch (status) {
    case AxiomStatus::candidate: return "candidate";
    case AxiomStatus::approved: return "approved";
    case AxiomStatus::rejected: return "rejected";
    case AxiomStatus::superseded: return "superseded";
  }
  return "candidate";
}

std::string_view to_string(Origin origin) {
  switch (origin) {
    case Origin::expert_authored: return "expert-authored";
    case Origin::llm_extracted: return "llm-extracted";
    case Origin::llm_derived: return "llm-derived";
    case Origin::chain_promoted: return "chain-promoted";
  }
  return "expert-authored";
}

AxiomStatus status_from_string(std::string_view text) {
  for (auto s : {AxiomStatus::candidate, AxiomStatus::approved, AxiomStatus::rejected,
                 AxiomStatus::superseded}) {
    if (to_string(s) == text) return s;
  }
  fail(ErrorCode::validation_error, "unknown axiom status '" + std::string(text) + "'");
}

namespace {

AxiomKind kind_from_string(std::string_view text) {
  if (text == "axiom") return AxiomKind::axiom;
  if (text == "theorem") return AxiomKind::theorem;
  fail(ErrorCode::validation_error, "unknown axiom kind '" + std::string(text) + "'");
}

Origin origin_from_string(std::string_view text) {
  for (auto o : {Origin::expert_authored, Origin::llm_extracted, Origin::llm_derived,
                 Origin::chain_promoted}) {
    if (to_string(o) == text) return o;
  }
  fail(ErrorCode::validation_error, "unknown origin '" + std::string(text) + "'");
}

constexpr std::pair<std::string_view, std::string_view> kPrefixes[] = {
    {"drg", "DRG"}, {"regulatory", "REG"}, {"ehr", "EHR"}, {"insurance", "INS"}, {"generic", "GEN"},
};

// Splits "DRG-A12" into ("DRG", 'A', 12).
bool split_id(std::string_view id, std::string_view& prefix, char& letter, int& counter) {
  const auto dash = id.find('-');
  if (dash == std::string_view::npos || dash + 2 >= id.size()) return false;
  prefix = id.substr(0, dash);
  if (std::none_of(std::begin(kPrefixes), std::end(kPrefixes),
                   [&](const auto& p) { return p.second == prefix; })) {
    return false;
  }
  letter = id[dash + 1];
  if (letter != 'A' && letter != 'T') return false;
  const auto digits = id.substr(dash + 2);
  if (digits.empty() || digits.front() == '0') return false;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), counter);
  return ec == std::errc{} && ptr == digits.data() + digits.size();
}

}  // namespace

std::string scenario_prefix(std::string_view scenario) {
  for (const auto& [name, prefix] : kPrefixes) {
    if (name == scenario) return std::string(prefix);
  }
  fail(ErrorCode::validation_error, "unknown scenario '" + std::string(scenario) + "'");
}

bool is_valid_axiom_id(std::string_view id) {
  std::string_view prefix;
  char letter = 0;
  int counter = 0;
  return split_id(id, prefix, letter, counter);
}

AxiomRef parse_axiom_ref(std::string_view text) {
  AxiomRef ref;
  const auto at = text.find("@v");
  ref.id = std::string(text.substr(0, at));
  if (at != std::string_view::npos) {
    const auto digits = text.substr(at + 2);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), ref.version);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || ref.version < 1) {
      fail(ErrorCode::validation_error, "bad version suffix in '" + std::string(text) + "'");
    }
  }
  return ref;
}

json to_json(const Axiom& a) {
  json out{{"schema", "kb_v1"},
           {"id", a.id},
           {"version", a.version},
           {"kind", to_string(a.kind)},
           {"scenario", a.scenario},
           {"rule_text", a.rule_text},
           {"status", to_string(a.status)},
           {"origin", to_string(a.origin)},
           {"derived_from", a.derived_from},
           {"statement", a.statement},
           {"template", a.template_text},
           {"rejection_reason", a.rejection_reason}};
  if (a.source) {
    out["source"] = json{{"document_id", a.source->document_id},
                         {"begin", a.source->begin},
                         {"end", a.source->end},
                         {"excerpt", a.source->excerpt}};
  }
  if (a.review) {
    out["review"] = json{{"reviewer", a.review->reviewer},
                         {"at", a.review->at},
                         {"decision", a.review->decision}};
  }
  return out;
}

Axiom axiom_from_json(const json& v) {
  try {
    Axiom a;
    a.id = v.at("id").get<std::string>();
    a.version = v.at("version").get<int>();
    a.kind = kind_from_string(v.at("kind").get<std::string>());
    a.scenario = v.value("scenario", "");
    a.rule_text = v.at("rule_text").get<std::string>();
    a.status = status_from_string(v.at("status").get<std::string>());
    a.origin = origin_from_string(v.value("origin", "expert-authored"));
    a.derived_from = v.value("derived_from", std::vector<std::string>{});
    a.statement = v.value("statement", "");
    a.template_text = v.value("template", "");
    a.rejection_reason = v.value("rejection_reason", "");
    if (v.contains("source")) {
      const json& s = v["source"];
      a.source = SourceSpan{s.at("document_id").get<std::string>(), s.at("begin").get<std::size_t>(),
                            s.at("end").get<std::size_t>(), s.at("excerpt").get<std::string>()};
    }
    if (v.contains("review")) {
      const json& r = v["review"];
      a.review = ReviewRecord{r.at("reviewer").get<std::string>(), r.at("at").get<std::string>(),
                              r.at("decision").get<std::string>()};
    }
    if (a.status != AxiomStatus::rejected || a.rejection_reason.empty()) {
      a.rule = parse_rule(a.rule_text);
    } else {
      try {
        a.rule = parse_rule(a.rule_text);
      } catch (const Error&) {
        // rejected because unparseable; keep the text only
      }
    }
    return a;
  } catch (const json::exception& e) {
    fail(ErrorCode::validation_error, std::string("bad kb_v1 record: ") + e.what());
  }
}

json to_json(const TrailEntry& e) {
  return json{{"axiom_id", e.axiom_id}, {"version", e.version},   {"from", e.from},
              {"to", e.to},             {"decision", e.decision}, {"reviewer", e.reviewer},
              {"at", e.at},             {"detail", e.detail}};
}

ReviewDecision::Kind review_kind_from_string(std::string_view text) {
  if (text == "approve") return ReviewDecision::Kind::approve;
  if (text == "reject") return ReviewDecision::Kind::reject;
  if (text == "edit") return ReviewDecision::Kind::edit;
  fail(ErrorCode::validation_error, "unknown review decision '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------

const Axiom* KbSnapshot::find(std::string_view text) const {
  const AxiomRef ref = parse_axiom_ref(text);
  const auto it = by_id_.find(ref.id);
  if (it == by_id_.end()) return nullptr;
  if (ref.version == 0) return &it->second.back();
  for (const Axiom& a : it->second) {
    if (a.version == ref.version) return &a;
  }
  return nullptr;
}

const Axiom* KbSnapshot::find_approved(std::string_view text) const {
  AxiomRef ref;
  try {
    ref = parse_axiom_ref(text);
  } catch (const Error&) {
    return nullptr;
  }
  const auto it = by_id_.find(ref.id);
  if (it == by_id_.end()) return nullptr;
  for (auto a = it->second.rbegin(); a != it->second.rend(); ++a) {
    if (a->status == AxiomStatus::approved && (ref.version == 0 || a->version == ref.version)) {
      return &*a;
    }
  }
  return nullptr;
}

std::vector<const Axiom*> KbSnapshot::records(std::optional<AxiomStatus> status) const {
  std::vector<const Axiom*> out;
  for (const auto& [id, versions] : by_id_) {
    for (const Axiom& a : versions) {
      if (!status || a.status == *status) out.push_back(&a);
    }
  }
  return out;
}

std::vector<const Axiom*> KbSnapshot::approved(std::optional<AxiomKind> kind) const {
  std::vector<const Axiom*> out;
  for (const Axiom* a : records(AxiomStatus::approved)) {
    if (!kind || a->kind == *kind) out.push_back(a);
  }
  return out;
}

std::size_t KbSnapshot::size() const {
  std::size_t n = 0;
  for (const auto& [id, versions] : by_id_) n += versions.size();
  return n;
}

// ---------------------------------------------------------------------------

KnowledgeBase::KnowledgeBase(std::filesystem::path dir, Clock clock)
    : dir_(std::move(dir)), clock_(clock) {
  auto loaded = std::make_shared<KbSnapshot>();
  for (const json& record : read_jsonl(dir_ / "kb.jsonl")) {
    Axiom a = axiom_from_json(record);
    auto& versions = loaded->by_id_[a.id];
    auto same = std::find_if(versions.begin(), versions.end(),
                             [&](const Axiom& v) { return v.version == a.version; });
    if (same != versions.end()) {
      *same = std::move(a);  // later record for the same version wins
    } else {
      versions.push_back(std::move(a));
      std::sort(versions.begin(), versions.end(),
                [](const Axiom& x, const Axiom& y) { return x.version < y.version; });
    }
  }
  for (const json& record : read_jsonl(dir_ / "kb_trail.jsonl")) {
    trail_.push_back(TrailEntry{record.at("axiom_id"), record.at("version"), record.at("from"),
                                record.at("to"), record.at("decision"), record.at("reviewer"),
                                record.at("at"), record.value("detail", "")});
  }
  current_ = std::move(loaded);
  kb_log_ = std::make_unique<JsonlWriter>(dir_ / "kb.jsonl");
  trail_log_ = std::make_unique<JsonlWriter>(dir_ / "kb_trail.jsonl");
}

std::shared_ptr<const KbSnapshot> KnowledgeBase::snapshot() const {
  std::lock_guard lock(writer_);
  return current_;
}

std::vector<TrailEntry> KnowledgeBase::trail() const {
  std::lock_guard lock(writer_);
  return trail_;
}

void KnowledgeBase::on_approved(std::function<void(const Axiom&)> listener) {
  std::lock_guard lock(writer_);
  listeners_.push_back(std::move(listener));
}

void KnowledgeBase::persist(const Axiom& record) {
  if (kb_log_) kb_log_->append(to_json(record));
}

std::string KnowledgeBase::next_id_locked(std::string_view scenario, AxiomKind kind) const {
  const std::string prefix = scenario_prefix(scenario);
  const char letter = kind == AxiomKind::axiom ? 'A' : 'T';
  int highest = 0;
  for (const auto& [id, versions] : current_->by_id_) {
    std::string_view p;
    char l = 0;
    int counter = 0;
    if (split_id(id, p, l, counter) && p == prefix && l == letter) {
      highest = std::max(highest, counter);
    }
  }
  return prefix + "-" + letter + std::to_string(highest + 1);
}

std::string KnowledgeBase::next_id(std::string_view scenario, AxiomKind kind) const {
  std::lock_guard lock(writer_);
  return next_id_locked(scenario, kind);
}

Axiom KnowledgeBase::add(Axiom record) {
  if (record.version < 1) {
    fail(ErrorCode::validation_error, "axiom version must be >= 1");
  }
  if (!record.rule && record.status != AxiomStatus::rejected) {
    record.rule = parse_rule(record.rule_text);
  }
  if (record.rule) {
    record.rule_text = print_rule(*record.rule);
  }
  if ((record.origin == Origin::llm_extracted && !record.source &&
       record.status != AxiomStatus::rejected) ||
      ((record.origin == Origin::llm_derived || record.origin == Origin::chain_promoted) &&
       record.derived_from.empty())) {
    fail(ErrorCode::validation_error, "record " + record.id + " lacks its provenance trace");
  }

  std::lock_guard lock(writer_);
  if (record.id.empty()) {
    record.id = next_id_locked(record.scenario, record.kind);
  }
  if (!is_valid_axiom_id(record.id)) {
    fail(ErrorCode::validation_error, "invalid axiom id '" + record.id + "'");
  }
  auto next = std::make_shared<KbSnapshot>(*current_);
  auto& versions = next->by_id_[record.id];
  for (const Axiom& existing : versions) {
    if (existing.version == record.version) {
      fail(ErrorCode::validation_error, "duplicate axiom " + record.key());
    }
  }
  versions.push_back(record);
  std::sort(versions.begin(), versions.end(),
            [](const Axiom& x, const Axiom& y) { return x.version < y.version; });
  persist(record);
  current_ = std::move(next);
  if (record.status == AxiomStatus::approved) {
    for (const auto& listener : listeners_) listener(record);
  }
  return record;
}

Axiom KnowledgeBase::review(std::string_view id, const ReviewDecision& decision,
                            const std::string& reviewer) {
  require(!reviewer.empty(), "reviewer identity required");
  // Parse before taking the lock; a bad edit leaves the store untouched.
  std::optional<RuleExpr> edited;
  if (decision.kind == ReviewDecision::Kind::edit) {
    edited = parse_rule(decision.rule_text);
  }

  std::lock_guard lock(writer_);
  const Axiom* target = current_->find(id);
  if (!target) {
    fail(ErrorCode::not_found, "no axiom '" + std::string(id) + "'");
  }
  if (target->status != AxiomStatus::candidate) {
    fail(ErrorCode::state_error, target->key() + " is " + std::string(to_string(target->status)) +
                                     ", only candidates can be reviewed");
  }
  if (!target->rule && decision.kind == ReviewDecision::Kind::approve) {
    fail(ErrorCode::state_error, target->key() + " has no parseable rule");
  }

  auto next = std::make_shared<KbSnapshot>(*current_);
  auto& versions = next->by_id_[target->id];
  auto it = std::find_if(versions.begin(), versions.end(),
                         [&](const Axiom& a) { return a.version == target->version; });
  Axiom& record = *it;
  const std::string at = clock_.now();
  TrailEntry entry{record.id, record.version, "candidate", "", "", reviewer, at, ""};
  Axiom result;
  switch (decision.kind) {
    case ReviewDecision::Kind::approve:
      record.status = AxiomStatus::approved;
      record.review = ReviewRecord{reviewer, at, "approve"};
      entry.to = "approved";
      entry.decision = "approve";
      persist(record);
      result = record;
      break;
    case ReviewDecision::Kind::reject:
      record.status = AxiomStatus::rejected;
      record.review = ReviewRecord{reviewer, at, "reject"};
      record.rejection_reason = decision.reason;
      entry.to = "rejected";
      entry.decision = "reject";
      entry.detail = decision.reason;
      persist(record);
      result = record;
      break;
    case ReviewDecision::Kind::edit: {
      record.status = AxiomStatus::superseded;
      record.review = ReviewRecord{reviewer, at, "edit"};
      Axiom successor = record;
      successor.version = versions.back().version + 1;
      successor.status = AxiomStatus::candidate;
      successor.review.reset();
      successor.rule = std::move(edited);
      successor.rule_text = print_rule(*successor.rule);
      successor.rejection_reason.clear();
      entry.to = "superseded";
      entry.decision = "edit";
      entry.detail = successor.key();
      persist(record);
      persist(successor);
      versions.push_back(successor);
      result = successor;
      break;
    }
  }
  trail_.push_back(entry);
  if (trail_log_) trail_log_->append(to_json(entry));
  current_ = std::move(next);
  if (result.status == AxiomStatus::approved) {
    for (const auto& listener : listeners_) listener(result);
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

void validate_extract_reply(const json& doc) {
  if (!doc.is_object() || !doc.contains("candidates") || !doc["candidates"].is_array()) {
    fail(ErrorCode::validation_error, "expected {\"candidates\": [...]}");
  }
  for (const json& c : doc["candidates"]) {
    if (!c.is_object() || !c.contains("rule") || !c["rule"].is_string() ||
        !c.contains("excerpt") || !c["excerpt"].is_string()) {
      fail(ErrorCode::validation_error, "each candidate needs string fields rule and excerpt");
    }
  }
}

void validate_derive_reply(const json& doc) {
  if (!doc.is_object() || !doc.contains("theorems") || !doc["theorems"].is_array()) {
    fail(ErrorCode::validation_error, "expected {\"theorems\": [...]}");
  }
  for (const json& t : doc["theorems"]) {
    if (!t.is_object() || !t.contains("rule") || !t["rule"].is_string() ||
        !t.contains("derived_from") || !t["derived_from"].is_array()) {
      fail(ErrorCode::validation_error, "each theorem needs rule and derived_from");
    }
  }
}

}  // namespace

std::vector<Axiom> extract_candidates(const Document& document, std::string_view scenario,
                                      Gateway& gateway, KnowledgeBase& kb, TokenUsage* usage) {
  require(!document.text.empty(), "document must be non-empty");
  require(!document.id.empty(), "document id must be non-empty");
  scenario_prefix(scenario);

  const json context{{"purpose", "extract"},
                     {"scenario", scenario},
                     {"document", {{"id", document.id}, {"text", document.text}}}};
  ChatRequest request;
  request.role = Role::extractor;
  request.system_prompt = system_prompt(Role::extractor);
  request.user_prompt = render_prompt("extract", {{"document_id", document.id},
                                                  {"document", document.text},
                                                  {"context", context_block(context)}});
  request.response_schema = "extract_v1";
  const StructuredReply reply = gateway.complete_structured(request, validate_extract_reply);
  if (usage) *usage += reply.usage;

  std::vector<Axiom> stored;
  for (const json& c : reply.document["candidates"]) {
    Axiom a;
    a.kind = AxiomKind::axiom;
    a.scenario = std::string(scenario);
    a.origin = Origin::llm_extracted;
    a.rule_text = c["rule"].get<std::string>();
    const std::string excerpt = c["excerpt"].get<std::string>();
    const auto pos = excerpt.empty() ? std::string::npos : document.text.find(excerpt);
    if (pos != std::string::npos) {
      a.source = SourceSpan{document.id, pos, pos + excerpt.size(), excerpt};
    }
    try {
      a.rule = parse_rule(a.rule_text);
      a.rule_text = print_rule(*a.rule);
    } catch (const ParseError& e) {
      a.status = AxiomStatus::rejected;
      a.rejection_reason = std::string("unparseable rule: ") + e.what();
    }
    if (a.status != AxiomStatus::rejected && !a.source) {
      a.status = AxiomStatus::rejected;
      a.rejection_reason = "excerpt not found verbatim in " + document.id;
    }
    stored.push_back(kb.add(std::move(a)));
  }
  return stored;
}

DerivationResult derive_theorems(KnowledgeBase& kb, std::string_view scenario, Gateway& gateway,
                                 TokenUsage* usage) {
  const auto snap = kb.snapshot();
  const std::string prefix = scenario_prefix(scenario) + "-";
  json axioms = json::array();
  std::string listing;
  for (const Axiom* a : snap->approved(AxiomKind::axiom)) {
    if (a->id.rfind(prefix, 0) != 0) continue;
    axioms.push_back(json{{"id", a->id}, {"rule", a->rule_text}});
    listing += a->id + ": " + a->rule_text + "\n";
  }
  require(!axioms.empty(), "derivation needs at least one approved axiom");

  const json context{{"purpose", "derive"}, {"scenario", scenario}, {"axioms", axioms}};
  ChatRequest request;
  request.role = Role::extractor;
  request.system_prompt = system_prompt(Role::extractor);
  request.user_prompt =
      render_prompt("derive", {{"axioms", listing}, {"context", context_block(context)}});
  request.response_schema = "derive_v1";
  const StructuredReply reply = gateway.complete_structured(request, validate_derive_reply);
  if (usage) *usage += reply.usage;

  DerivationResult result;
  for (const json& t : reply.document["theorems"]) {
    const std::string text = t["rule"].get<std::string>();
    std::vector<std::string> sources;
    std::string problem;
    for (const json& s : t["derived_from"]) {
      const std::string id = s.is_string() ? s.get<std::string>() : s.dump();
      sources.push_back(id);
      const Axiom* source = snap->find_approved(id);
      if (!source || source->kind != AxiomKind::axiom) {
        const Axiom* any = snap->find(id);
        problem = "cites " + id + " which is " +
                  (any ? std::string(to_string(any->status)) : std::string("unknown"));
        break;
      }
    }
    if (sources.empty()) problem = "no source axioms listed";
    std::optional<RuleExpr> rule;
    if (problem.empty()) {
      try {
        rule = parse_rule(text);
      } catch (const ParseError& e) {
        problem = std::string("unparseable: ") + e.what();
      }
    }
    if (!problem.empty()) {
      result.warnings.push_back("discarded derived theorem '" + text + "': " + problem);
      continue;
    }
    Axiom theorem;
    theorem.kind = AxiomKind::theorem;
    theorem.scenario = std::string(scenario);
    theorem.origin = Origin::llm_derived;
    theorem.rule = std::move(rule);
    theorem.rule_text = text;
    theorem.derived_from = sources;
    theorem.statement = t.value("statement", "");
    result.theorems.push_back(kb.add(std::move(theorem)));
  }
  return result;
}

}  // namespace mmia

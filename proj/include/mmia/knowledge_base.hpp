#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mmia/gateway.hpp"
#include "mmia/json_util.hpp"
#include "mmia/rules.hpp"

namespace mmia {

enum class AxiomKind { axiom, theorem };
enum class AxiomStatus { candidate, approved, rejected, superseded };
enum class Origin { expert_authored, llm_extracted, llm_derived, chain_promoted };

std::string_view to_string(AxiomKind kind);
std::string_view to_string(AxiomStatus status);
std::string_view to_string(Origin origin);
AxiomStatus status_from_string(std::string_view text);

struct Document {
  std::string id;
  std::string text;
  friend bool operator==(const Document&, const Document&) = default;
};

struct SourceSpan {
  std::string document_id;
  std::size_t begin = 0;  // byte offsets into the document, [begin, end)
  std::size_t end = 0;
  std::string excerpt;
};

struct ReviewRecord {
  std::string reviewer;
  std::string at;
  std::string decision;
};

struct Axiom {
  std::string id;  // e.g. EHR-A1
  int version = 1;
  AxiomKind kind = AxiomKind::axiom;
  std::string scenario;
  std::string rule_text;
  std::optional<RuleExpr> rule;  // absent only for rejected unparseable extractions
  std::optional<SourceSpan> source;
  AxiomStatus status = AxiomStatus::candidate;
  std::optional<ReviewRecord> review;
  Origin origin = Origin::expert_authored;
  std::vector<std::string> derived_from;
  std::string statement;      // optional prose form
  std::string template_text;  // process template for theorem matching
  std::string rejection_reason;

  std::string key() const { return id + "@v" + std::to_string(version); }
};

json to_json(const Axiom& axiom);
Axiom axiom_from_json(const json& value);

// Scenario tag -> id prefix (drg -> DRG, regulatory -> REG, ...).
std::string scenario_prefix(std::string_view scenario);

// "EHR-A1" or "EHR-A1@v2"; version 0 means "latest".
struct AxiomRef {
  std::string id;
  int version = 0;
};
AxiomRef parse_axiom_ref(std::string_view text);
bool is_valid_axiom_id(std::string_view id);

struct TrailEntry {
  std::string axiom_id;
  int version = 0;
  std::string from;
  std::string to;
  std::string decision;
  std::string reviewer;
  std::string at;
  std::string detail;
};

json to_json(const TrailEntry& entry);

// Immutable view of the knowledge base at one point in time.
class KbSnapshot {
 public:
  const Axiom* find(std::string_view ref) const;
  // Citable records: approved axioms/theorems only.
  const Axiom* find_approved(std::string_view ref) const;
  std::vector<const Axiom*> records(std::optional<AxiomStatus> status = std::nullopt) const;
  std::vector<const Axiom*> approved(std::optional<AxiomKind> kind = std::nullopt) const;
  std::size_t size() const;

 private:
  friend class KnowledgeBase;
  std::map<std::string, std::vector<Axiom>> by_id_;  // versions ascending
};

struct ReviewDecision {
  enum class Kind { approve, reject, edit };
  Kind kind = Kind::approve;
  std::string rule_text;  // edit only
  std::string reason;     // reject only
};

ReviewDecision::Kind review_kind_from_string(std::string_view text);

// Copy-on-write store. Mutations go through one mutex-serialized writer and
// publish a fresh snapshot; readers keep whatever snapshot they hold.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  // Loads kb.jsonl and kb_trail.jsonl from `dir`, persisting later changes.
  KnowledgeBase(std::filesystem::path dir, Clock clock);

  std::shared_ptr<const KbSnapshot> snapshot() const;

  // Inserts a new record. Empty id -> next id for (scenario, kind).
  // Throws validation_error on bad ids or duplicate (id, version).
  Axiom add(Axiom record);

  // Candidate -> approved | rejected, or edit -> new candidate version with
  // the old one superseded. One trail entry per call.
  Axiom review(std::string_view id, const ReviewDecision& decision, const std::string& reviewer);

  std::vector<TrailEntry> trail() const;

  // Called under the writer lock after every approval; listeners must not
  // call back into the knowledge base.
  void on_approved(std::function<void(const Axiom&)> listener);

  std::string next_id(std::string_view scenario, AxiomKind kind) const;

 private:
  void persist(const Axiom& record);
  std::string next_id_locked(std::string_view scenario, AxiomKind kind) const;

  mutable std::mutex writer_;
  std::shared_ptr<const KbSnapshot> current_ = std::make_shared<KbSnapshot>();
  std::vector<TrailEntry> trail_;
  std::vector<std::function<void(const Axiom&)>> listeners_;
  std::filesystem::path dir_;
  Clock clock_;
  std::unique_ptr<JsonlWriter> kb_log_;
  std::unique_ptr<JsonlWriter> trail_log_;
};

// Extraction: one extractor call; every proposed rule is stored. Rules that
// do not parse, or whose excerpt is not verbatim in the document, are stored
// as rejected with a reason; the rest become candidates.
std::vector<Axiom> extract_candidates(const Document& document, std::string_view scenario,
                                      Gateway& gateway, KnowledgeBase& kb,
                                      TokenUsage* usage = nullptr);

struct DerivationResult {
  std::vector<Axiom> theorems;        // stored as candidates
  std::vector<std::string> warnings;  // discarded proposals
};

// Proposals citing anything but approved axioms are discarded with a warning.
DerivationResult derive_theorems(KnowledgeBase& kb, std::string_view scenario, Gateway& gateway,
                                 TokenUsage* usage = nullptr);

}  // namespace mmia

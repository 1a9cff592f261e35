#include "mmia/review_queue.hpp"

#include <algorithm>
#include <random>

#include "mmia/error.hpp"

namespace mmia {

std::string_view to_string(QueueKind kind) {
  return kind == QueueKind::candidate_axiom ? "candidate-axiom" : "audit-disagreement";
}

std::string_view to_string(EntryStatus status) {
  return status == EntryStatus::open ? "open" : "resolved";
}

QueueKind queue_kind_from_string(std::string_view text) {
  if (text == "candidate-axiom") return QueueKind::candidate_axiom;
  if (text == "audit-disagreement") return QueueKind::audit_disagreement;
  fail(ErrorCode::validation_error, "unknown queue kind '" + std::string(text) + "'");
}

EntryStatus entry_status_from_string(std::string_view text) {
  if (text == "open") return EntryStatus::open;
  if (text == "resolved") return EntryStatus::resolved;
  fail(ErrorCode::validation_error, "unknown entry status '" + std::string(text) + "'");
}

json to_json(const ReviewQueueEntry& entry) {
  json out{{"schema", "review_v1"},
           {"id", entry.id},
           {"kind", to_string(entry.kind)},
           {"payload", entry.payload},
           {"summary", entry.summary},
           {"status", to_string(entry.status)},
           {"enqueued", entry.enqueued},
           {"reports", entry.reports},
           {"resolution", nullptr}};
  if (entry.resolution) {
    out["resolution"] = json{{"decision", entry.resolution->decision},
                             {"reviewer", entry.resolution->reviewer},
                             {"at", entry.resolution->at},
                             {"note", entry.resolution->note}};
  }
  return out;
}

ReviewQueueEntry entry_from_json(const json& value) {
  ReviewQueueEntry e;
  e.id = value.at("id").get<std::string>();
  e.kind = queue_kind_from_string(value.at("kind").get<std::string>());
  e.payload = value.at("payload").get<std::string>();
  e.summary = value.value("summary", "");
  e.status = entry_status_from_string(value.at("status").get<std::string>());
  e.enqueued = value.value("enqueued", "");
  e.reports = value.value("reports", json::array());
  if (value.contains("resolution") && !value["resolution"].is_null()) {
    const json& r = value["resolution"];
    e.resolution = Resolution{r.value("decision", ""), r.value("reviewer", ""), r.value("at", ""),
                              r.value("note", "")};
  }
  return e;
}

ReviewQueue::ReviewQueue(std::filesystem::path dir, Clock clock) : clock_(clock) {
  const auto path = dir / "review_queue.jsonl";
  if (std::filesystem::exists(path)) {
    for (const json& record : read_jsonl(path)) {
      ReviewQueueEntry e = entry_from_json(record);
      auto it = std::find_if(entries_.begin(), entries_.end(),
                             [&](const ReviewQueueEntry& x) { return x.id == e.id; });
      if (it != entries_.end()) {
        *it = std::move(e);
      } else {
        entries_.push_back(std::move(e));
      }
    }
  }
  log_ = std::make_unique<JsonlWriter>(path);
}

void ReviewQueue::persist_locked(const ReviewQueueEntry& entry) {
  if (log_) log_->append(to_json(entry));
}

std::string ReviewQueue::add_locked(ReviewQueueEntry entry) {
  entry.id = "RQ-" + std::to_string(entries_.size() + 1);
  entry.enqueued = clock_.now();
  persist_locked(entry);
  entries_.push_back(entry);
  return entry.id;
}

std::string ReviewQueue::enqueue_candidate(const Axiom& candidate) {
  require(candidate.status == AxiomStatus::candidate, "only candidates enter the review queue");
  std::lock_guard lock(mutex_);
  for (const auto& e : entries_) {
    if (e.status == EntryStatus::open && e.payload == candidate.key()) return e.id;
  }
  ReviewQueueEntry entry;
  entry.kind = QueueKind::candidate_axiom;
  entry.payload = candidate.key();
  entry.summary = candidate.rule_text;
  if (candidate.source) entry.summary += " | " + candidate.source->excerpt;
  return add_locked(std::move(entry));
}

std::string ReviewQueue::enqueue_disagreement(const std::string& log_id,
                                              const std::vector<AuditReport>& reports) {
  std::lock_guard lock(mutex_);
  ReviewQueueEntry entry;
  entry.kind = QueueKind::audit_disagreement;
  entry.payload = log_id;
  int passes = 0;
  for (const auto& r : reports) {
    entry.reports.push_back(to_json(r));
    passes += r.certified() ? 1 : 0;
  }
  entry.summary = std::to_string(passes) + " of " + std::to_string(reports.size()) +
                  " audits passed for " + log_id;
  return add_locked(std::move(entry));
}

std::vector<ReviewQueueEntry> ReviewQueue::list(std::optional<EntryStatus> status,
                                                std::optional<QueueKind> kind) const {
  std::lock_guard lock(mutex_);
  std::vector<ReviewQueueEntry> out;
  for (const auto& e : entries_) {
    if ((!status || e.status == *status) && (!kind || e.kind == *kind)) out.push_back(e);
  }
  return out;
}

std::optional<ReviewQueueEntry> ReviewQueue::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  for (const auto& e : entries_) {
    if (e.id == id) return e;
  }
  return std::nullopt;
}

std::optional<ReviewQueueEntry> ReviewQueue::find_open(const std::string& payload) const {
  std::lock_guard lock(mutex_);
  for (const auto& e : entries_) {
    if (e.status == EntryStatus::open && e.payload == payload) return e;
  }
  return std::nullopt;
}

ReviewQueueEntry ReviewQueue::resolve(const std::string& id, Resolution resolution) {
  std::lock_guard lock(mutex_);
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const ReviewQueueEntry& e) { return e.id == id; });
  if (it == entries_.end()) fail(ErrorCode::not_found, "no review entry " + id);
  if (it->status == EntryStatus::resolved) {
    fail(ErrorCode::state_error, "review entry " + id + " is already resolved");
  }
  if (resolution.at.empty()) resolution.at = clock_.now();
  it->status = EntryStatus::resolved;
  it->resolution = std::move(resolution);
  persist_locked(*it);
  return *it;
}

std::vector<ReviewQueueEntry> ReviewQueue::sample(std::size_t n, std::uint64_t seed) const {
  auto open = list(EntryStatus::open);
  std::mt19937_64 rng(seed);
  std::shuffle(open.begin(), open.end(), rng);
  if (open.size() > n) open.resize(n);
  return open;
}

}  // namespace mmia

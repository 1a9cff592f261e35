#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mmia/auditor.hpp"
#include "mmia/json_util.hpp"
#include "mmia/knowledge_base.hpp"

namespace mmia {

enum class QueueKind { candidate_axiom, audit_disagreement };
enum class EntryStatus { open, resolved };

std::string_view to_string(QueueKind kind);
std::string_view to_string(EntryStatus status);
QueueKind queue_kind_from_string(std::string_view text);
EntryStatus entry_status_from_string(std::string_view text);

struct Resolution {
  std::string decision;  // approve | reject | edit | certify | flag
  std::string reviewer;
  std::string at;
  std::string note;
};

struct ReviewQueueEntry {
  std::string id;  // RQ-<n>
  QueueKind kind = QueueKind::candidate_axiom;
  std::string payload;  // axiom key (ID@vN) or log id
  std::string summary;
  EntryStatus status = EntryStatus::open;
  std::optional<Resolution> resolution;
  std::string enqueued;
  json reports = json::array();  // disagreement entries only
};

json to_json(const ReviewQueueEntry& entry);
ReviewQueueEntry entry_from_json(const json& value);

// Human-review queue. Appends one JSONL record per state change; the last
// record per id wins on reload.
class ReviewQueue {
 public:
  ReviewQueue() = default;
  ReviewQueue(std::filesystem::path dir, Clock clock);

  std::string enqueue_candidate(const Axiom& candidate);
  std::string enqueue_disagreement(const std::string& log_id, const std::vector<AuditReport>& reports);

  std::vector<ReviewQueueEntry> list(std::optional<EntryStatus> status = std::nullopt,
                                     std::optional<QueueKind> kind = std::nullopt) const;
  std::optional<ReviewQueueEntry> find(const std::string& id) const;
  std::optional<ReviewQueueEntry> find_open(const std::string& payload) const;

  // not_found for unknown ids, state_error when already resolved.
  ReviewQueueEntry resolve(const std::string& id, Resolution resolution);

  // Up to n open entries chosen with a seeded shuffle, for blind spot checks.
  std::vector<ReviewQueueEntry> sample(std::size_t n, std::uint64_t seed) const;

 private:
  std::string add_locked(ReviewQueueEntry entry);
  void persist_locked(const ReviewQueueEntry& entry);

  mutable std::mutex mutex_;
  std::vector<ReviewQueueEntry> entries_;
  Clock clock_;
  std::unique_ptr<JsonlWriter> log_;
};

}  // namespace mmia

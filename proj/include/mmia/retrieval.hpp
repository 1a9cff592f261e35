#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mmia/gateway.hpp"
#include "mmia/knowledge_base.hpp"
#include "mmia/log.hpp"

namespace mmia {

// Task text with typed placeholders such as {diagnosis}; bindings map each
// placeholder to its concrete value (nullopt when unbound).
struct ProcessTemplate {
  std::string text;
  std::map<std::string, std::optional<std::string>> bindings;
  std::vector<std::string> warnings;
};

std::vector<std::string> template_placeholders(std::string_view text);

// Asks the abstractor role for a template. Adds warnings when a placeholder
// is unbound or a concrete fact value survives in the text.
ProcessTemplate abstract_task(const TaskSpec& task, Gateway& gateway, TokenUsage* usage = nullptr);

inline constexpr int kEmbeddingDimension = 256;
inline constexpr const char* kDefaultEmbedder = "hash3-256";

struct Embedding {
  std::vector<double> values;
  std::string embedder = kDefaultEmbedder;
};

// Feature hashing of lowercased word 3-grams into 256 bins, L2-normalized.
// Texts shorter than three words hash as a single gram.
Embedding embed(std::string_view text);
double cosine(const Embedding& a, const Embedding& b);

struct ScoredId {
  std::string id;
  double similarity = 0.0;
};

// Exact cosine index. Queries take a shared lock; upserts are exclusive.
class VectorIndex {
 public:
  explicit VectorIndex(std::string embedder = kDefaultEmbedder, int dimension = kEmbeddingDimension);
  VectorIndex(const VectorIndex& other);
  VectorIndex& operator=(const VectorIndex& other);

  // Replaces any vector stored under the same id. index_error on dimension
  // or embedder mismatch.
  void upsert(const std::string& id, const Embedding& embedding);
  bool erase(const std::string& id);
  // Descending similarity, ties by ascending id.
  std::vector<ScoredId> query_topk(const Embedding& query, int k) const;
  std::size_t size() const;
  int dimension() const { return dimension_; }
  const std::string& embedder() const { return embedder_; }

  // vec_v1 JSONL: a header line, then one {id, vector} line per entry.
  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

 private:
  std::string embedder_;
  int dimension_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::vector<double>> entries_;
};

// Embeds the template text of every approved theorem that carries one.
VectorIndex build_theorem_index(const KbSnapshot& kb);

inline constexpr double kDefaultMatchThreshold = 0.80;

struct JudgeResult {
  bool fits = false;
  std::string justification;
};

// Single judge call. The theorem must be approved.
JudgeResult rapid_judge(const TaskSpec& task, const Axiom& theorem, Gateway& gateway,
                        TokenUsage* usage = nullptr);

enum class MatchDecision { matched, below_threshold };
std::string_view to_string(MatchDecision decision);

struct MatchResult {
  std::string theorem_id;  // empty when the index had nothing to offer
  double similarity = 0.0;
  ProcessTemplate template_;
  MatchDecision decision = MatchDecision::below_threshold;
  std::optional<JudgeResult> judgment;
  TokenUsage usage;  // abstraction + judgment
};

// Top-1 theorem for the task; matched iff similarity >= threshold and the
// judge confirms the fit.
MatchResult match_theorem(const TaskSpec& task, const KbSnapshot& kb, const VectorIndex& index,
                          double threshold, Gateway& gateway);

// Log for a task answered by a matched theorem: one kb-retrieval step citing
// the theorem, its consequences as the final answer. The abstraction and
// judgment calls are recorded as control usage.
ExecutionLog rag_match_log(const TaskSpec& task, const MatchResult& match, const Axiom& theorem,
                           const Clock& clock);

json to_json(const ProcessTemplate& tpl);
json to_json(const MatchResult& match);

}  // namespace mmia

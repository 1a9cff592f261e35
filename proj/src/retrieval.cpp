#include "mmia/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <mutex>

#include "mmia/error.hpp"
#include "mmia/prompts.hpp"
#include "mmia/reasoning.hpp"

namespace mmia {

std::vector<std::string> template_placeholders(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t pos = 0; (pos = text.find('{', pos)) != std::string_view::npos; ++pos) {
    const auto close = text.find('}', pos);
    if (close == std::string_view::npos) break;
    const auto name = text.substr(pos + 1, close - pos - 1);
    const bool ident = !name.empty() && std::all_of(name.begin(), name.end(), [](unsigned char c) {
      return std::isalnum(c) || c == '_';
    });
    if (ident && std::find(out.begin(), out.end(), name) == out.end()) out.emplace_back(name);
  }
  return out;
}

namespace {

std::string display(const Value& v) {
  return v.kind() == ValueKind::text || v.kind() == ValueKind::code ? v.str() : v.to_literal();
}

void validate_abstract(const json& doc) {
  if (!doc.is_object() || !doc.contains("template") || !doc["template"].is_string() ||
      doc["template"].get<std::string>().empty()) {
    fail(ErrorCode::validation_error, "expected {\"template\": non-empty text, \"bindings\": {...}}");
  }
  if (doc.contains("bindings") && !doc["bindings"].is_object()) {
    fail(ErrorCode::validation_error, "bindings must be an object");
  }
}

void validate_judge(const json& doc) {
  if (!doc.is_object() || !doc.contains("fits") || !doc["fits"].is_boolean()) {
    fail(ErrorCode::validation_error, "expected {\"fits\": bool, \"justification\": text}");
  }
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '{' || c == '}' || c == '_' || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

}  // namespace

ProcessTemplate abstract_task(const TaskSpec& task, Gateway& gateway, TokenUsage* usage) {
  validate_task(task);
  const json context{{"purpose", "abstract"},
                     {"scenario", task.scenario},
                     {"description", task.description},
                     {"facts", to_json(task.facts)}};
  ChatRequest request;
  request.role = Role::abstractor;
  request.system_prompt = system_prompt(Role::abstractor);
  request.user_prompt = render_prompt("abstract", {{"task_id", task.id},
                                                   {"description", task.description},
                                                   {"context", context_block(context)}});
  request.response_schema = "abstract_v1";
  const StructuredReply reply = gateway.complete_structured(request, validate_abstract);
  if (usage) *usage += reply.usage;

  ProcessTemplate tpl;
  tpl.text = reply.document["template"].get<std::string>();
  const json bindings = reply.document.value("bindings", json::object());
  for (const auto& name : template_placeholders(tpl.text)) {
    const auto it = bindings.find(name);
    if (it != bindings.end() && it->is_string()) {
      tpl.bindings[name] = it->get<std::string>();
    } else {
      tpl.bindings[name] = std::nullopt;
      tpl.warnings.push_back("placeholder {" + name + "} is unbound");
    }
  }
  std::string lowered = tpl.text;
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const Fact& f : task.facts.facts()) {
    if (f.value.kind() != ValueKind::text && f.value.kind() != ValueKind::code) continue;
    std::string needle = display(f.value);
    if (needle.size() < 3) continue;
    std::transform(needle.begin(), needle.end(), needle.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lowered.find(needle) != std::string::npos) {
      tpl.warnings.push_back("concrete value '" + display(f.value) + "' of " + f.path() +
                             " left in template");
    }
  }
  return tpl;
}

Embedding embed(std::string_view text) {
  const auto tokens = words(text);
  require(!tokens.empty(), "embed needs non-empty text");
  Embedding e;
  e.values.assign(kEmbeddingDimension, 0.0);
  auto add = [&](std::size_t begin, std::size_t end) {
    std::string gram;
    for (std::size_t i = begin; i < end; ++i) gram += (i == begin ? "" : " ") + tokens[i];
    e.values[fnv1a64(gram) % kEmbeddingDimension] += 1.0;
  };
  if (tokens.size() < 3) {
    add(0, tokens.size());
  } else {
    for (std::size_t i = 0; i + 3 <= tokens.size(); ++i) add(i, i + 3);
  }
  double norm = 0.0;
  for (double v : e.values) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : e.values) v /= norm;
  return e;
}

double cosine(const Embedding& a, const Embedding& b) {
  if (a.values.size() != b.values.size()) {
    fail(ErrorCode::index_error, "embedding dimensions differ");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

VectorIndex::VectorIndex(std::string embedder, int dimension)
    : embedder_(std::move(embedder)), dimension_(dimension) {
  require(dimension_ > 0, "index dimension must be positive");
}

VectorIndex::VectorIndex(const VectorIndex& other) {
  std::shared_lock lock(other.mutex_);
  embedder_ = other.embedder_;
  dimension_ = other.dimension_;
  entries_ = other.entries_;
}

VectorIndex& VectorIndex::operator=(const VectorIndex& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  embedder_ = other.embedder_;
  dimension_ = other.dimension_;
  entries_ = other.entries_;
  return *this;
}

void VectorIndex::upsert(const std::string& id, const Embedding& embedding) {
  if (static_cast<int>(embedding.values.size()) != dimension_) {
    fail(ErrorCode::index_error, "embedding for " + id + " has dimension " +
                                     std::to_string(embedding.values.size()) + ", index expects " +
                                     std::to_string(dimension_));
  }
  if (embedding.embedder != embedder_) {
    fail(ErrorCode::index_error,
         "embedding from " + embedding.embedder + " cannot join a " + embedder_ + " index");
  }
  std::unique_lock lock(mutex_);
  entries_[id] = embedding.values;
}

bool VectorIndex::erase(const std::string& id) {
  std::unique_lock lock(mutex_);
  return entries_.erase(id) > 0;
}

std::vector<ScoredId> VectorIndex::query_topk(const Embedding& query, int k) const {
  require(k >= 1, "k must be at least 1");
  if (static_cast<int>(query.values.size()) != dimension_) {
    fail(ErrorCode::index_error, "query dimension " + std::to_string(query.values.size()) +
                                     " does not match index dimension " + std::to_string(dimension_));
  }
  std::vector<ScoredId> scored;
  {
    std::shared_lock lock(mutex_);
    scored.reserve(entries_.size());
    for (const auto& [id, values] : entries_) {
      scored.push_back(ScoredId{id, cosine(query, Embedding{values, embedder_})});
    }
  }
  const auto better = [](const ScoredId& a, const ScoredId& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
  };
  const std::size_t n = std::min<std::size_t>(scored.size(), static_cast<std::size_t>(k));
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    better);
  scored.resize(n);
  return scored;
}

std::size_t VectorIndex::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

void VectorIndex::save(const std::filesystem::path& path) const {
  std::string out =
      json{{"schema", "vec_v1"}, {"embedder", embedder_}, {"dimension", dimension_}}.dump() + "\n";
  std::shared_lock lock(mutex_);
  for (const auto& [id, values] : entries_) out += json{{"id", id}, {"vector", values}}.dump() + "\n";
  write_text_file(path, out);
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  const auto lines = read_jsonl(path);
  if (lines.empty() || lines.front().value("schema", "") != "vec_v1") {
    fail(ErrorCode::index_error, path.string() + " is not a vec_v1 index");
  }
  VectorIndex index(lines.front().at("embedder").get<std::string>(),
                    lines.front().at("dimension").get<int>());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    index.upsert(lines[i].at("id").get<std::string>(),
                 Embedding{lines[i].at("vector").get<std::vector<double>>(), index.embedder_});
  }
  return index;
}

VectorIndex build_theorem_index(const KbSnapshot& kb) {
  VectorIndex index;
  for (const Axiom* a : kb.approved(AxiomKind::theorem)) {
    if (!a->template_text.empty()) index.upsert(a->id, embed(a->template_text));
  }
  return index;
}

JudgeResult rapid_judge(const TaskSpec& task, const Axiom& theorem, Gateway& gateway,
                        TokenUsage* usage) {
  require(theorem.status == AxiomStatus::approved, "rapid_judge needs an approved theorem");
  const json context{{"purpose", "judge"},
                     {"scenario", task.scenario},
                     {"theorem", {{"id", theorem.id}, {"rule", theorem.rule_text}}},
                     {"facts", to_json(task.facts)}};
  ChatRequest request;
  request.role = Role::judge;
  request.system_prompt = system_prompt(Role::judge);
  request.user_prompt = render_prompt("judge", {{"theorem_id", theorem.id},
                                                {"theorem", theorem.rule_text},
                                                {"description", task.description},
                                                {"context", context_block(context)}});
  request.response_schema = "judge_v1";
  const StructuredReply reply = gateway.complete_structured(request, validate_judge);
  if (usage) *usage += reply.usage;
  return JudgeResult{reply.document["fits"].get<bool>(), reply.document.value("justification", "")};
}

std::string_view to_string(MatchDecision decision) {
  return decision == MatchDecision::matched ? "matched" : "below-threshold";
}

MatchResult match_theorem(const TaskSpec& task, const KbSnapshot& kb, const VectorIndex& index,
                          double threshold, Gateway& gateway) {
  require(threshold >= -1.0 && threshold <= 1.0, "threshold must lie in [-1, 1]");
  MatchResult result;
  if (index.size() == 0) return result;
  result.template_ = abstract_task(task, gateway, &result.usage);
  const auto top = index.query_topk(embed(result.template_.text), 1);
  if (top.empty()) return result;
  result.theorem_id = top.front().id;
  result.similarity = top.front().similarity;
  if (result.similarity < threshold) return result;
  const Axiom* theorem = kb.find_approved(result.theorem_id);
  if (!theorem || theorem->kind != AxiomKind::theorem) return result;
  result.judgment = rapid_judge(task, *theorem, gateway, &result.usage);
  if (result.judgment->fits) result.decision = MatchDecision::matched;
  return result;
}

ExecutionLog rag_match_log(const TaskSpec& task, const MatchResult& match, const Axiom& theorem,
                           const Clock& clock) {
  require(match.decision == MatchDecision::matched && match.theorem_id == theorem.id,
          "rag-match log needs the matched theorem");
  require(theorem.rule.has_value(), "matched theorem has no parsed rule");
  ExecutionLog log;
  log.task = task;
  log.mode = Mode::rag_match;
  log.started = clock.now();
  log.atomicity = AtomicityVerdict{true, Tool::kb_retrieval, "answered by theorem " + theorem.id, false};
  ReasoningStep step;
  step.index = 0;
  step.subtask_id = task.id;
  step.tool = Tool::kb_retrieval;
  step.prompt = "match " + theorem.id + ": " + match.template_.text;
  step.evidence.push_back(EvidenceRef{EvidenceKind::theorem, theorem.id, theorem.rule_text});
  step.atoms = consequence_claims(*theorem.rule);
  std::string text;
  for (const Claim& c : step.atoms) text += (text.empty() ? "" : "; ") + c.text();
  step.conclusion = theorem.id + " applies: " + text;
  if (match.judgment) step.raw_output = match.judgment->justification;
  log.steps.push_back(step);
  log.final_answer = FinalAnswer{step.conclusion, step.atoms};
  log.control_usage = match.usage;
  log.finished = clock.now();
  log.total_tokens = recount_tokens(log);
  return log;
}

json to_json(const ProcessTemplate& tpl) {
  json bindings = json::object();
  for (const auto& [name, value] : tpl.bindings) bindings[name] = value ? json(*value) : json(nullptr);
  return json{{"text", tpl.text}, {"bindings", bindings}, {"warnings", tpl.warnings}};
}

json to_json(const MatchResult& match) {
  json out{{"theorem_id", match.theorem_id.empty() ? json(nullptr) : json(match.theorem_id)},
           {"similarity", match.similarity},
           {"template", to_json(match.template_)},
           {"decision", to_string(match.decision)},
           {"usage", to_json(match.usage)}};
  if (match.judgment) {
    out["judgment"] = json{{"fits", match.judgment->fits},
                           {"justification", match.judgment->justification}};
  }
  return out;
}

}  // namespace mmia

#include "mmia/cost_model.hpp"

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <numeric>

#include "mmia/error.hpp"

namespace mmia {

namespace {

[[noreturn]] void overflow() { fail(ErrorCode::validation_error, "rational arithmetic overflow"); }

std::int64_t mul(std::int64_t a, std::int64_t b) {
  std::int64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) overflow();
  return out;
}

std::int64_t add(std::int64_t a, std::int64_t b) {
  std::int64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) overflow();
  return out;
}

std::int64_t parse_int(std::string_view digits, std::string_view whole) {
  if (digits.empty()) fail(ErrorCode::validation_error, "not a number: '" + std::string(whole) + "'");
  std::int64_t value = 0;
  for (char c : digits) {
    if (c < '0' || c > '9') fail(ErrorCode::validation_error, "not a number: '" + std::string(whole) + "'");
    value = add(mul(value, 10), c - '0');
  }
  return value;
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) fail(ErrorCode::validation_error, "rational with zero denominator");
  if (den < 0) {
    num = mul(num, -1);
    den = mul(den, -1);
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

Rational Rational::parse(std::string_view text) {
  const std::string_view whole = text;
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  const auto slash = text.find('/');
  if (slash != std::string_view::npos) {
    return parse(text.substr(0, slash)) / parse(text.substr(slash + 1));
  }
  bool negative = false;
  if (!text.empty() && (text.front() == '-' || text.front() == '+')) {
    negative = text.front() == '-';
    text.remove_prefix(1);
  }
  const auto dot = text.find('.');
  std::int64_t num = parse_int(text.substr(0, dot), whole);
  std::int64_t den = 1;
  if (dot != std::string_view::npos) {
    const std::string_view frac = text.substr(dot + 1);
    for (char c : frac) {
      if (c < '0' || c > '9') fail(ErrorCode::validation_error, "not a number: '" + std::string(whole) + "'");
      num = add(mul(num, 10), c - '0');
      den = mul(den, 10);
    }
  }
  return Rational(negative ? -num : num, den);
}

Rational Rational::operator+(const Rational& o) const {
  return Rational(add(mul(num_, o.den_), mul(o.num_, den_)), mul(den_, o.den_));
}

Rational Rational::operator-(const Rational& o) const { return *this + Rational(mul(o.num_, -1), o.den_); }

Rational Rational::operator*(const Rational& o) const {
  // Cross-reduce first to keep intermediates small.
  const std::int64_t g1 = std::gcd(num_, o.den_);
  const std::int64_t g2 = std::gcd(o.num_, den_);
  return Rational(mul(num_ / g1, o.num_ / g2), mul(den_ / g2, o.den_ / g1));
}

Rational Rational::operator/(const Rational& o) const {
  if (o.num_ == 0) fail(ErrorCode::validation_error, "division by zero");
  return *this * Rational(o.den_, o.num_);
}

std::strong_ordering Rational::operator<=>(const Rational& o) const {
  return mul(num_, o.den_) <=> mul(o.num_, den_);
}

std::string Rational::str() const {
  return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
}

std::string Rational::decimal(int places) const {
  require(places >= 0 && places <= 12, "decimal places must lie in 0..12");
  std::int64_t scale = 1;
  for (int i = 0; i < places; ++i) scale = mul(scale, 10);
  const std::int64_t scaled = mul(std::llabs(num_), scale);
  const std::int64_t rounded = add(mul(scaled, 2), den_) / mul(den_, 2);
  std::string digits = std::to_string(rounded);
  if (places > 0) {
    if (digits.size() <= static_cast<std::size_t>(places)) {
      digits.insert(0, static_cast<std::size_t>(places) + 1 - digits.size(), '0');
    }
    digits.insert(digits.size() - static_cast<std::size_t>(places), ".");
  }
  return (num_ < 0 && rounded != 0 ? "-" : "") + digits;
}

std::string percent_text(const Rational& ratio) { return (ratio * Rational(100)).decimal(1) + "%"; }

void validate(const PhaseSimConfig& c) {
  if (c.n_initial <= 0 || c.n_mature <= 0) fail(ErrorCode::validation_error, "phase task counts must be positive");
  if (c.denovo_tokens <= 0) fail(ErrorCode::validation_error, "de novo cost must be positive");
  if (c.match_tokens < 0) fail(ErrorCode::validation_error, "match cost must be non-negative");
  if (c.match_fraction < Rational(0) || c.match_fraction > Rational(1)) {
    fail(ErrorCode::validation_error, "match fraction must lie in [0, 1]");
  }
}

PhaseReport simulate_phases(const PhaseSimConfig& config) {
  validate(config);
  PhaseReport r;
  r.config = config;
  const Rational denovo(config.denovo_tokens);
  const Rational match(config.match_tokens);
  const Rational f = config.match_fraction;
  const Rational rest = Rational(1) - f;
  r.initial_average = denovo;
  r.mature_average = f * match + rest * denovo;
  r.relative_cost = r.mature_average / r.initial_average;
  r.matched_relative = match / denovo;
  r.total_tokens = Rational(config.n_initial) * denovo + Rational(config.n_mature) * r.mature_average;
  r.rows = {
      {"Initial phase", "De novo reasoning", Rational(1), denovo, Rational(1)},
      {"Mature phase", "RAG matching", f, match, r.matched_relative},
      {"Mature phase", "De novo reasoning", rest, denovo, denovo / r.initial_average},
      {"Mature phase (avg.)", "-", Rational(1), r.mature_average, r.relative_cost},
  };
  return r;
}

namespace {

std::string token_text(const Rational& tokens) { return tokens.den() == 1 ? tokens.str() : tokens.decimal(1); }

json rational_json(const Rational& r) {
  return json{{"exact", r.str()}, {"value", r.to_double()}};
}

}  // namespace

json to_json(const PhaseReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back(json{{"phase", row.phase},
                        {"task_type", row.task_type},
                        {"share", percent_text(row.share)},
                        {"avg_tokens", token_text(row.tokens)},
                        {"relative", percent_text(row.relative)}});
  }
  return json{{"schema", "phase_report_v1"},
              {"config",
               {{"n_initial", r.config.n_initial},
                {"n_mature", r.config.n_mature},
                {"match_fraction", r.config.match_fraction.str()},
                {"denovo_tokens", r.config.denovo_tokens},
                {"match_tokens", r.config.match_tokens}}},
              {"initial_average", rational_json(r.initial_average)},
              {"mature_average", rational_json(r.mature_average)},
              {"mature_average_tokens", token_text(r.mature_average)},
              {"relative_cost", percent_text(r.relative_cost)},
              {"relative_cost_exact", r.relative_cost.str()},
              {"matched_task_relative", percent_text(r.matched_relative)},
              {"matched_task_reduction", percent_text(Rational(1) - r.matched_relative)},
              {"total_tokens", rational_json(r.total_tokens)},
              {"relative_time_basis", "token ratio"},
              {"rows", rows}};
}

std::string format_phase_table(const PhaseReport& r) {
  char line[200];
  std::string out;
  std::snprintf(line, sizeof line, "%-21s %-19s %8s %18s %15s\n", "Phase", "Task type", "Share",
                "Avg. tokens/task", "Relative cost");
  out += line;
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof line, "%-21s %-19s %8s %18s %15s\n", row.phase.c_str(), row.task_type.c_str(),
                  percent_text(row.share).c_str(), token_text(row.tokens).c_str(),
                  percent_text(row.relative).c_str());
    out += line;
  }
  out += "Mature-phase average: " + token_text(r.mature_average) + " tokens/task (" +
         percent_text(r.relative_cost) + " of the initial phase)\n";
  out += "Per matched task: " + percent_text(r.matched_relative) + " of de novo cost (" +
         percent_text(Rational(1) - r.matched_relative) + " reduction)\n";
  out += "Relative time is reported as the token ratio.\n";
  return out;
}

std::string_view to_string(DispatchMode mode) { return mode == DispatchMode::de_novo ? "de-novo" : "rag-match"; }

DispatchMode dispatch_mode_from_string(std::string_view text) {
  if (text == "de-novo") return DispatchMode::de_novo;
  if (text == "rag-match") return DispatchMode::rag_match;
  fail(ErrorCode::validation_error, "unknown dispatch mode '" + std::string(text) + "'");
}

json to_json(const CostEntry& e) {
  return json{{"schema", "cost_v1"},
              {"task_id", e.task_id},
              {"mode", to_string(e.mode)},
              {"tokens", e.tokens},
              {"wall_seconds", e.wall_seconds},
              {"scenario", e.scenario},
              {"theorem_id", e.theorem_id ? json(*e.theorem_id) : json(nullptr)},
              {"similarity", e.similarity}};
}

CostEntry cost_entry_from_json(const json& value) {
  if (value.value("schema", "") != "cost_v1") fail(ErrorCode::ledger_error, "expected a cost_v1 record");
  CostEntry e;
  e.task_id = value.at("task_id").get<std::string>();
  e.mode = dispatch_mode_from_string(value.at("mode").get<std::string>());
  e.tokens = value.at("tokens").get<std::int64_t>();
  e.wall_seconds = value.value("wall_seconds", 0.0);
  e.scenario = value.value("scenario", "");
  if (value.contains("theorem_id") && value["theorem_id"].is_string()) {
    e.theorem_id = value["theorem_id"].get<std::string>();
  }
  e.similarity = value.value("similarity", 0.0);
  return e;
}

CostLedger::CostLedger(std::filesystem::path file) {
  for (const json& record : read_jsonl(file)) {
    const CostEntry e = cost_entry_from_json(record);
    if (contains(e.task_id)) fail(ErrorCode::ledger_error, "ledger file repeats task " + e.task_id);
    entries_.push_back(e);
  }
  log_ = std::make_unique<JsonlWriter>(std::move(file));
}

void CostLedger::record(const CostEntry& entry) {
  if (entry.tokens < 0) fail(ErrorCode::ledger_error, "negative token count for " + entry.task_id);
  std::unique_lock lock(mutex_);
  for (const auto& e : entries_) {
    if (e.task_id == entry.task_id) fail(ErrorCode::ledger_error, "task " + entry.task_id + " is already recorded");
  }
  if (log_) log_->append(to_json(entry));
  entries_.push_back(entry);
}

std::vector<CostEntry> CostLedger::entries() const {
  std::shared_lock lock(mutex_);
  return entries_;
}

std::size_t CostLedger::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

bool CostLedger::contains(const std::string& task_id) const {
  std::shared_lock lock(mutex_);
  for (const auto& e : entries_) {
    if (e.task_id == task_id) return true;
  }
  return false;
}

std::int64_t CostLedger::total_tokens(std::optional<DispatchMode> mode) const {
  std::shared_lock lock(mutex_);
  std::int64_t total = 0;
  for (const auto& e : entries_) {
    if (!mode || e.mode == *mode) total = add(total, e.tokens);
  }
  return total;
}

std::optional<Rational> CostLedger::average_tokens(std::optional<DispatchMode> mode) const {
  std::shared_lock lock(mutex_);
  std::int64_t total = 0;
  std::int64_t count = 0;
  for (const auto& e : entries_) {
    if (mode && e.mode != *mode) continue;
    total = add(total, e.tokens);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return Rational(total, count);
}

DispatchDecision dispatch_mode(const TaskSpec& task, const KbSnapshot& kb, const VectorIndex& index,
                               double threshold, Gateway& gateway) {
  DispatchDecision d;
  d.match = match_theorem(task, kb, index, threshold, gateway);
  d.mode = d.match.decision == MatchDecision::matched ? DispatchMode::rag_match : DispatchMode::de_novo;
  return d;
}

DualModeRun execute_dual_mode(const TaskSpec& task, ReasoningEngine& engine, const VectorIndex& index,
                              double threshold, Gateway& gateway, const Clock& clock) {
  validate_task(task);
  const auto start = std::chrono::steady_clock::now();
  DualModeRun run;
  run.decision = dispatch_mode(task, engine.kb(), index, threshold, gateway);
  if (run.decision.mode == DispatchMode::rag_match) {
    const Axiom* theorem = engine.kb().find_approved(run.decision.match.theorem_id);
    require(theorem != nullptr, "matched theorem vanished from the snapshot");
    run.log = rag_match_log(task, run.decision.match, *theorem, clock);
  } else {
    run.log = engine.execute_task(task);
    run.log.control_usage += run.decision.match.usage;
    run.log.total_tokens = recount_tokens(run.log);
  }
  if (!clock.frozen) {
    run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return run;
}

CostEntry ledger_entry(const DualModeRun& run) {
  CostEntry e;
  e.task_id = run.log.task.id;
  e.mode = run.decision.mode;
  e.tokens = run.log.total_tokens;
  e.wall_seconds = run.wall_seconds;
  e.scenario = run.log.task.scenario;
  if (run.decision.mode == DispatchMode::rag_match) e.theorem_id = run.decision.match.theorem_id;
  e.similarity = run.decision.match.similarity;
  return e;
}

}  // namespace mmia

#include "mmia/benchmark.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "mmia/error.hpp"
#include "mmia/prompts.hpp"
#include "mmia/reasoning.hpp"
#include "mmia/retrieval.hpp"

namespace mmia {

std::string_view to_string(GoldLabel label) {
  return label == GoldLabel::correct ? "correct" : "erroneous";
}

std::string_view to_string(EngineMode mode) { return mode == EngineMode::mmia ? "mmia" : "baseline"; }

EngineMode engine_mode_from_string(std::string_view text) {
  if (text == "mmia") return EngineMode::mmia;
  if (text == "baseline") return EngineMode::baseline;
  fail(ErrorCode::validation_error, "unknown engine mode '" + std::string(text) + "'");
}

namespace {

GoldLabel gold_from_string(std::string_view text) {
  if (text == "correct") return GoldLabel::correct;
  if (text == "erroneous") return GoldLabel::erroneous;
  fail(ErrorCode::validation_error, "unknown gold label '" + std::string(text) + "'");
}

std::string format_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string fact_lines(const FactSet& facts) {
  std::string out;
  for (const Fact& f : facts.facts()) out += f.path() + " = " + f.value.to_literal() + "\n";
  return out.empty() ? "(none)\n" : out;
}

std::pair<std::string, std::string> split_path(const std::string& path) {
  const auto dot = path.find('.');
  require(dot != std::string::npos, "fact path needs an entity: " + path);
  return {path.substr(0, dot), path.substr(dot + 1)};
}

std::vector<Value> values_at(const FactSet& facts, const std::string& path) {
  const auto [entity, attribute] = split_path(path);
  const auto* values = facts.find(entity, attribute);
  return values ? *values : std::vector<Value>{};
}

json literal_json(const std::vector<Value>& values) {
  if (values.empty()) return nullptr;
  if (values.size() == 1) return values.front().to_literal();
  json out = json::array();
  for (const auto& v : values) out.push_back(v.to_literal());
  return out;
}

// Replaces every value at `path` and records the change.
void change(BenchmarkCase& c, json& changes, const std::string& path, std::vector<Value> to) {
  const std::vector<Value> from = values_at(c.facts, path);
  if (from == to) return;
  const auto [entity, attribute] = split_path(path);
  c.facts.erase(entity, attribute);
  for (const auto& v : to) c.facts.add(entity, attribute, v);
  changes[path] = json{{"from", literal_json(from)}, {"to", literal_json(to)}};
}

std::string label_for(std::string_view scenario, GoldLabel gold) {
  if (scenario == "insurance") return gold == GoldLabel::correct ? "Approve" : "Deny";
  if (const ScenarioPack* pack = PackRegistry::builtin().find(scenario)) {
    return gold == GoldLabel::correct ? pack->correct_label : pack->erroneous_label;
  }
  return std::string(to_string(gold));
}

void regulatory_documents(BenchmarkCase& c) {
  auto one = [&](const char* path) {
    const auto v = values_at(c.facts, path);
    require(v.size() == 1, std::string("regulatory case needs ") + path);
    return v.front();
  };
  const Value lesion = one("ifu.max_lesion_claim");
  const Value claim = one("ifu.success_rate_claim");
  const Value p = one("cer.large_lesion_p");
  const Value rate = one("cer.success_rate");
  c.documents = {
      Document{"IFU", "Instructions for use. The device is indicated for lesions up to " +
                          format_num(lesion.magnitude()) + " mm in length. Procedural success rate: " +
                          format_num(claim.magnitude()) + "%."},
      Document{"CER", "Clinical evaluation report. Large-lesion subgroup analysis: p = " +
                          format_num(p.magnitude()) + ". Observed procedural success rate: " +
                          format_num(rate.magnitude()) + "%."}};
}

template <typename T>
const T& pick(const std::vector<T>& options, std::mt19937_64& rng) {
  return options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
}

int uniform(int lo, int hi, std::mt19937_64& rng) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

struct Secondary {
  const char* code;
  const char* condition;
};

void drg_case(BenchmarkCase& c, std::mt19937_64& rng) {
  FactSet& f = c.facts;
  f.declare_multi_valued("case.secondary_diagnosis");
  f.declare_multi_valued("case.documented_condition");
  std::vector<Secondary> secondaries;
  std::string principal, procedure, drg;
  if (c.template_id == "drg-ami-stent" || c.template_id == "drg-angina-stent") {
    const bool ami = c.template_id == "drg-ami-stent";
    principal = ami ? "I21.001" : "I20.000";
    procedure = ami ? "36.0601" : "36.0602";
    drg = "FZ19";
    std::vector<Secondary> pool{{"I10", "hypertension"},
                                {"E11.900", "type 2 diabetes"},
                                {"E78.500", "hyperlipidemia"}};
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(static_cast<std::size_t>(uniform(0, 2, rng)));
    secondaries = pool;
  } else if (c.template_id == "drg-ami-stent-ckd") {
    principal = "I21.001";
    procedure = "36.0601";
    drg = "FZ15";
    secondaries = {{"I10", "hypertension"}, {"N18.300", "chronic kidney disease"}};
  } else {
    principal = "J44.100";
    procedure = "33.2201";
    drg = "ED19";
    if (uniform(0, 1, rng) == 1) secondaries = {{"I10", "hypertension"}};
  }
  f.add("case", "principal_diagnosis", Value::code(principal));
  f.add("case", "procedure", Value::code(procedure));
  f.add("case", "secondary_count", Value::number(static_cast<double>(secondaries.size())));
  for (const auto& s : secondaries) {
    f.add("case", "secondary_diagnosis", Value::code(s.code));
    f.add("case", "documented_condition", Value::text(s.condition));
  }
  f.add("case", "claimed_drg", Value::text(drg));
}

void regulatory_case(BenchmarkCase& c, std::mt19937_64& rng) {
  FactSet& f = c.facts;
  if (c.template_id == "reg-stent-consistent") {
    f.add("ifu", "max_lesion_claim", Value::number(30, "mm"));
    f.add("cer", "large_lesion_p", Value::number(pick(std::vector<double>{0.01, 0.02, 0.03, 0.04}, rng)));
    f.add("ifu", "success_rate_claim", Value::number(90, "%"));
    f.add("cer", "success_rate", Value::number(uniform(91, 94, rng), "%"));
  } else {
    f.add("ifu", "max_lesion_claim", Value::number(20, "mm"));
    f.add("cer", "large_lesion_p", Value::number(pick(std::vector<double>{0.1, 0.2, 0.3}, rng)));
    f.add("ifu", "success_rate_claim", Value::number(95, "%"));
    f.add("cer", "success_rate", Value::number(uniform(95, 97, rng), "%"));
  }
  regulatory_documents(c);
}

void ehr_case(BenchmarkCase& c, std::mt19937_64& rng) {
  FactSet& f = c.facts;
  f.declare_multi_valued("patient.allergy");
  std::string allergy, diagnosis, drug;
  if (c.template_id == "ehr-strep-macrolide") {
    allergy = "penicillin";
    diagnosis = "J02.0";
    drug = "azithromycin";
  } else if (c.template_id == "ehr-strep-amoxicillin-no-allergy") {
    allergy = "none";
    diagnosis = "J02.0";
    drug = "amoxicillin";
  } else {
    allergy = pick(std::vector<std::string>{"none", "sulfa", "penicillin"}, rng);
    diagnosis = "J06.9";
    drug = "ibuprofen";
  }
  f.add("patient", "allergy", Value::text(allergy));
  f.add("encounter", "diagnosis", Value::code(diagnosis));
  f.add("encounter", "event", Value::text("admission"));
  f.add("note", "initial_progress_hours", Value::duration(pick(std::vector<double>{2, 4, 6, 8}, rng), "hours"));
  f.add("order", "drug", Value::text(drug));
}

int enrollment_threshold(std::string_view template_id) { return template_id == "ins-transplant" ? 12 : 3; }

void insurance_case(BenchmarkCase& c, std::mt19937_64& rng) {
  FactSet& f = c.facts;
  const bool transplant = c.template_id == "ins-transplant";
  f.add("claim", "procedure", Value::code(transplant ? "55.69" : "88.91"));
  f.add("claim", "medically_necessary", Value::boolean(true));
  f.add("claim", "preauthorized", Value::boolean(true));
  f.add("member", "enrollment",
        Value::duration(uniform(enrollment_threshold(c.template_id), 36, rng), "months"));
}

std::optional<std::string> generate_narrative(const BenchmarkCase& c, Gateway& gateway) {
  const json context{{"purpose", "generate"}, {"scenario", c.scenario}, {"facts", to_json(c.facts)}};
  ChatRequest request;
  request.role = Role::generator;
  request.system_prompt = system_prompt(Role::generator);
  request.user_prompt = render_prompt(
      "generate", {{"scenario", c.scenario}, {"facts", fact_lines(c.facts)}, {"context", context_block(context)}});
  request.response_schema = "generate_v1";
  const StructuredReply reply = gateway.complete_structured(request, [](const json& doc) {
    if (!doc.is_object() || !doc.contains("narrative") || !doc["narrative"].is_string() ||
        doc["narrative"].get<std::string>().empty()) {
      fail(ErrorCode::validation_error, "narrative must be a non-empty string");
    }
  });
  return reply.document["narrative"].get<std::string>();
}

}  // namespace

json to_json(const BenchmarkCase& c) {
  json documents = json::array();
  for (const auto& d : c.documents) documents.push_back(json{{"id", d.id}, {"text", d.text}});
  json injected = nullptr;
  if (c.injected) {
    injected = json{{"kind", c.injected->kind},
                    {"parameters", c.injected->parameters},
                    {"gold_rule", c.injected->gold_rule}};
  }
  return json{{"schema", "bench_v1"},
              {"id", c.id},
              {"scenario", c.scenario},
              {"template", c.template_id},
              {"seed", c.seed},
              {"facts", to_json(c.facts)},
              {"documents", documents},
              {"narrative", c.narrative},
              {"gold", to_string(c.gold)},
              {"ground_truth", c.ground_truth},
              {"injected", injected},
              {"provenance", c.provenance}};
}

BenchmarkCase case_from_json(const json& value) {
  if (value.value("schema", "") != "bench_v1") {
    fail(ErrorCode::validation_error, "expected a bench_v1 record");
  }
  BenchmarkCase c;
  c.id = value.at("id").get<std::string>();
  c.scenario = value.at("scenario").get<std::string>();
  c.template_id = value.value("template", "");
  c.seed = value.value("seed", std::uint64_t{0});
  c.facts = facts_from_json(value.at("facts"));
  for (const json& d : value.value("documents", json::array())) {
    c.documents.push_back(Document{d.at("id").get<std::string>(), d.at("text").get<std::string>()});
  }
  c.narrative = value.value("narrative", "");
  c.gold = gold_from_string(value.at("gold").get<std::string>());
  c.ground_truth = value.value("ground_truth", "");
  if (value.contains("injected") && !value["injected"].is_null()) {
    const json& i = value["injected"];
    c.injected = InjectedError{i.at("kind").get<std::string>(), i.value("parameters", json::object()),
                               i.value("gold_rule", "")};
  }
  c.provenance = value.value("provenance", "generated");
  if (c.gold == GoldLabel::erroneous && !c.injected) {
    fail(ErrorCode::validation_error, "erroneous case " + c.id + " lacks an error descriptor");
  }
  return c;
}

std::vector<BenchmarkCase> read_suite(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::io_error, "no suite file " + path.string());
  std::vector<BenchmarkCase> suite;
  for (const json& record : read_jsonl(path)) suite.push_back(case_from_json(record));
  return suite;
}

void write_suite(const std::filesystem::path& path, const std::vector<BenchmarkCase>& suite) {
  std::string out;
  for (const auto& c : suite) out += canonical_dump(to_json(c)) + "\n";
  write_text_file(path, out);
}

std::vector<std::string> template_ids(std::string_view scenario) {
  if (scenario == "drg") {
    return {"drg-ami-stent", "drg-angina-stent", "drg-ami-stent-ckd", "drg-copd-bronchoscopy"};
  }
  if (scenario == "regulatory") return {"reg-stent-consistent", "reg-balloon-consistent"};
  if (scenario == "ehr") {
    return {"ehr-strep-macrolide", "ehr-strep-amoxicillin-no-allergy", "ehr-uri-analgesic"};
  }
  if (scenario == "insurance") return {"ins-transplant", "ins-imaging"};
  fail(ErrorCode::configuration_error, "unknown scenario '" + std::string(scenario) + "'");
}

std::vector<std::string> injector_kinds(std::string_view scenario) {
  if (scenario == "drg") return {"diagnosis-procedure-mismatch", "missing-complication-code"};
  if (scenario == "regulatory") return {"ifu-success-rate-contradiction", "ifu-lesion-claim-unsupported"};
  if (scenario == "ehr") return {"allergy-drug-conflict", "diagnosis-medication-mismatch"};
  if (scenario == "insurance") return {"enrollment-exclusion"};
  fail(ErrorCode::configuration_error, "unknown scenario '" + std::string(scenario) + "'");
}

std::vector<std::string> applicable_injectors(std::string_view template_id) {
  if (template_id == "drg-ami-stent-ckd") {
    return {"diagnosis-procedure-mismatch", "missing-complication-code"};
  }
  if (template_id.substr(0, 4) == "drg-") return {"diagnosis-procedure-mismatch"};
  if (template_id.substr(0, 4) == "reg-") {
    return {"ifu-success-rate-contradiction", "ifu-lesion-claim-unsupported"};
  }
  if (template_id.substr(0, 4) == "ehr-") return {"allergy-drug-conflict", "diagnosis-medication-mismatch"};
  if (template_id.substr(0, 4) == "ins-") return {"enrollment-exclusion"};
  fail(ErrorCode::configuration_error, "unknown template '" + std::string(template_id) + "'");
}

BenchmarkCase generate_case(std::string_view scenario, std::string_view template_id, std::uint64_t seed,
                            const std::map<std::string, std::string>& params, Gateway* gateway) {
  const auto templates = template_ids(scenario);
  if (std::find(templates.begin(), templates.end(), template_id) == templates.end()) {
    fail(ErrorCode::configuration_error,
         "template '" + std::string(template_id) + "' does not belong to scenario " + std::string(scenario));
  }
  BenchmarkCase c;
  c.scenario = std::string(scenario);
  c.template_id = std::string(template_id);
  c.seed = seed;
  c.id = c.template_id + "-" + std::to_string(seed);
  std::mt19937_64 rng(seed);
  if (scenario == "drg") drg_case(c, rng);
  else if (scenario == "regulatory") regulatory_case(c, rng);
  else if (scenario == "ehr") ehr_case(c, rng);
  else insurance_case(c, rng);

  for (const auto& [name, text] : params) {
    if (scenario != "insurance" || name != "enrollment_months") {
      fail(ErrorCode::configuration_error, "unknown template parameter '" + name + "'");
    }
    int months = 0;
    try {
      std::size_t used = 0;
      months = std::stoi(text, &used);
      if (used != text.size() || months < 0) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      fail(ErrorCode::validation_error, "enrollment_months must be a non-negative integer");
    }
    json changes = json::object();
    change(c, changes, "member.enrollment", {Value::duration(months, "months")});
    if (months < enrollment_threshold(template_id)) {
      c.gold = GoldLabel::erroneous;
      c.injected = InjectedError{"enrollment-exclusion", json{{"changes", changes}},
                                 template_id == "ins-transplant" ? "INS-A1" : "INS-A2"};
    }
  }
  c.ground_truth = label_for(scenario, c.gold);
  if (gateway) c.narrative = generate_narrative(c, *gateway).value_or("");
  return c;
}

BenchmarkCase inject_error(const BenchmarkCase& original, std::string_view kind, std::uint64_t seed) {
  require(original.gold == GoldLabel::correct, "errors are injected into gold-correct cases only");
  const auto kinds = applicable_injectors(original.template_id);
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    fail(ErrorCode::configuration_error,
         "injector '" + std::string(kind) + "' does not apply to template " + original.template_id);
  }
  BenchmarkCase c = original;
  std::mt19937_64 rng(seed);
  json changes = json::object();
  std::string gold_rule;
  if (kind == "diagnosis-procedure-mismatch") {
    change(c, changes, "case.principal_diagnosis", {Value::code("J18.9")});
    change(c, changes, "case.procedure", {Value::code("36.0601")});
    gold_rule = "DRG-A5";
  } else if (kind == "missing-complication-code") {
    std::vector<Value> kept;
    for (const auto& v : values_at(c.facts, "case.secondary_diagnosis")) {
      if (!(v == Value::code("N18.300"))) kept.push_back(v);
    }
    change(c, changes, "case.secondary_diagnosis", kept);
    change(c, changes, "case.secondary_count", {Value::number(static_cast<double>(kept.size()))});
    gold_rule = "DRG-A17";
  } else if (kind == "ifu-success-rate-contradiction") {
    change(c, changes, "ifu.success_rate_claim", {Value::number(95, "%")});
    change(c, changes, "cer.success_rate", {Value::number(92, "%")});
    gold_rule = "REG-A2";
  } else if (kind == "ifu-lesion-claim-unsupported") {
    change(c, changes, "ifu.max_lesion_claim", {Value::number(30, "mm")});
    change(c, changes, "cer.large_lesion_p",
           {Value::number(pick(std::vector<double>{0.06, 0.08, 0.12}, rng))});
    gold_rule = "REG-A1";
  } else if (kind == "allergy-drug-conflict") {
    std::vector<Value> allergies;
    for (const auto& v : values_at(c.facts, "patient.allergy")) {
      if (!(v == Value::text("none"))) allergies.push_back(v);
    }
    if (std::find(allergies.begin(), allergies.end(), Value::text("penicillin")) == allergies.end()) {
      allergies.push_back(Value::text("penicillin"));
    }
    change(c, changes, "patient.allergy", allergies);
    change(c, changes, "order.drug", {Value::text("amoxicillin")});
    change(c, changes, "encounter.diagnosis", {Value::code("J02.9")});
    gold_rule = "EHR-A1";
  } else if (kind == "diagnosis-medication-mismatch") {
    change(c, changes, "encounter.diagnosis", {Value::code(pick(std::vector<std::string>{"J06.9", "J02.9"}, rng))});
    change(c, changes, "order.drug", {Value::text("cefuroxime")});
    gold_rule = "EHR-A7";
  } else {
    const bool transplant = c.template_id == "ins-transplant";
    const int limit = enrollment_threshold(c.template_id);
    change(c, changes, "member.enrollment", {Value::duration(uniform(1, limit - 1, rng), "months")});
    gold_rule = transplant ? "INS-A1" : "INS-A2";
  }
  if (c.scenario == "regulatory") regulatory_documents(c);
  c.gold = GoldLabel::erroneous;
  c.ground_truth = label_for(c.scenario, c.gold);
  c.injected = InjectedError{std::string(kind), json{{"changes", changes}}, gold_rule};
  c.narrative.clear();
  return c;
}

int suite_error_count(std::string_view scenario, int size) {
  require(size >= 0, "suite size must be non-negative");
  int percent = 20;
  if (scenario == "ehr") percent = 25;
  else if (scenario == "insurance") percent = 30;
  else if (scenario != "drg" && scenario != "regulatory") {
    fail(ErrorCode::configuration_error, "unknown scenario '" + std::string(scenario) + "'");
  }
  return (size * percent + 50) / 100;
}

std::vector<BenchmarkCase> generate_suite(std::string_view scenario, std::uint64_t seed, int size) {
  require(size >= 1, "suite size must be positive");
  const auto templates = template_ids(scenario);
  const int errors = suite_error_count(scenario, size);
  std::mt19937_64 rng(seed ^ fnv1a64(scenario));
  std::vector<int> order(static_cast<std::size_t>(size));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::set<int> erroneous(order.begin(), order.begin() + errors);

  std::vector<BenchmarkCase> suite;
  std::size_t rotation = 0;
  for (int i = 0; i < size; ++i) {
    const std::string& tpl = templates[static_cast<std::size_t>(i) % templates.size()];
    const std::uint64_t case_seed = rng();
    BenchmarkCase c = generate_case(scenario, tpl, case_seed);
    if (erroneous.count(i)) {
      const auto kinds = applicable_injectors(tpl);
      c = inject_error(c, kinds[rotation++ % kinds.size()], rng());
    }
    char id[16];
    std::snprintf(id, sizeof id, "%03d", i + 1);
    c.id = std::string(scenario) + "-" + id;
    suite.push_back(std::move(c));
  }
  return suite;
}

TaskSpec task_for_case(const BenchmarkCase& c, const ScenarioPack& pack) {
  require(pack.scenario == c.scenario, "pack does not match the case scenario");
  TaskSpec task;
  task.id = c.id;
  task.scenario = c.scenario;
  task.description = pack.task_description;
  const auto at = task.description.find("{case}");
  if (at != std::string::npos) task.description.replace(at, 6, c.id);
  task.facts = pack.empty_facts();
  for (const Fact& f : c.facts.facts()) task.facts.add(f);
  task.documents = c.documents;
  task.goals = pack.goals;
  return task;
}

BaselineVerdict baseline_oneshot(const BenchmarkCase& c, const KbSnapshot& kb, Gateway& gateway, int top_k) {
  require(top_k >= 1, "top_k must be positive");
  const std::string facts = fact_lines(c.facts);
  const Embedding query = embed(facts);
  struct Ranked {
    const Axiom* axiom;
    double similarity;
  };
  std::vector<Ranked> ranked;
  for (const Axiom* a : kb.approved(AxiomKind::axiom)) {
    if (a->scenario != c.scenario || !a->rule) continue;
    ranked.push_back(Ranked{a, cosine(query, embed(a->rule_text))});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& x, const Ranked& y) {
    if (x.similarity != y.similarity) return x.similarity > y.similarity;
    return axiom_id_less(x.axiom->id, y.axiom->id);
  });
  if (ranked.size() > static_cast<std::size_t>(top_k)) ranked.resize(static_cast<std::size_t>(top_k));

  std::string rule_lines;
  json rules = json::array();
  for (const auto& r : ranked) {
    rule_lines += r.axiom->id + ": " + r.axiom->rule_text + "\n";
    rules.push_back(json{{"id", r.axiom->id}, {"rule", r.axiom->rule_text}});
  }
  const json context{{"purpose", "baseline"}, {"facts", to_json(c.facts)}, {"rules", rules}};
  ChatRequest request;
  request.role = Role::executor;
  request.system_prompt = system_prompt(Role::executor);
  request.user_prompt = render_prompt("baseline", {{"task_id", c.id},
                                                   {"description", "review of " + c.scenario + " case " + c.id},
                                                   {"facts", facts},
                                                   {"rules", rule_lines.empty() ? "(none)\n" : rule_lines},
                                                   {"context", context_block(context)}});
  request.response_schema = "baseline_v1";
  const StructuredReply reply = gateway.complete_structured(request, [](const json& doc) {
    if (!doc.is_object()) fail(ErrorCode::validation_error, "reply must be an object");
    const std::string verdict = doc.value("verdict", "");
    if (verdict != "flag" && verdict != "pass") {
      fail(ErrorCode::validation_error, "verdict must be \"flag\" or \"pass\"");
    }
    if (!doc.contains("justification") || !doc["justification"].is_string()) {
      fail(ErrorCode::validation_error, "justification must be a string");
    }
    if (doc.contains("cited_rule") && !doc["cited_rule"].is_null() && !doc["cited_rule"].is_string()) {
      fail(ErrorCode::validation_error, "cited_rule must be a rule id or null");
    }
  });
  BaselineVerdict v;
  v.flag = reply.document["verdict"] == "flag";
  v.justification = reply.document["justification"].get<std::string>();
  if (reply.document.contains("cited_rule") && reply.document["cited_rule"].is_string()) {
    v.cited_rule = reply.document["cited_rule"].get<std::string>();
  }
  v.usage = reply.usage;
  return v;
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
  if (cm.tp < 0 || cm.fp < 0 || cm.tn < 0 || cm.fn < 0) {
    fail(ErrorCode::validation_error, "confusion matrix counts must be non-negative");
  }
  Metrics m;
  m.cm = cm;
  auto ratio = [](std::int64_t num, std::int64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.recall = ratio(cm.tp, cm.tp + cm.fn);
  m.false_positive_rate = ratio(cm.fp, cm.fp + cm.tn);
  m.accuracy = ratio(cm.tp + cm.tn, cm.tp + cm.fp + cm.tn + cm.fn);
  return m;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json("undefined"); }

std::string percent(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.1f%%", *v * 100.0);
  return buffer;
}

}  // namespace

json to_json(const Metrics& m) {
  return json{{"tp", m.cm.tp},
              {"fp", m.cm.fp},
              {"tn", m.cm.tn},
              {"fn", m.cm.fn},
              {"recall", optional_number(m.recall)},
              {"false_positive_rate", optional_number(m.false_positive_rate)},
              {"accuracy", optional_number(m.accuracy)}};
}

json to_json(const CaseRecord& r) {
  auto opt = [](const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); };
  return json{{"case_id", r.case_id},   {"scenario", r.scenario}, {"gold", to_string(r.gold)},
              {"flagged", r.flagged},   {"error", opt(r.error)},  {"cited_rule", opt(r.cited_rule)},
              {"gold_rule", opt(r.gold_rule)}, {"consensus", r.consensus}, {"tokens", r.tokens}};
}

CaseRecord record_from_json(const json& value) {
  auto opt = [&](const char* key) -> std::optional<std::string> {
    if (!value.contains(key) || value[key].is_null()) return std::nullopt;
    return value[key].get<std::string>();
  };
  CaseRecord r;
  r.case_id = value.at("case_id").get<std::string>();
  r.scenario = value.value("scenario", "");
  r.gold = gold_from_string(value.at("gold").get<std::string>());
  r.flagged = value.value("flagged", false);
  r.error = opt("error");
  r.cited_rule = opt("cited_rule");
  r.gold_rule = opt("gold_rule");
  r.consensus = value.value("consensus", "");
  r.tokens = value.value("tokens", std::int64_t{0});
  return r;
}

json to_json(const MetricsReport& report) {
  json per = json::object();
  for (const auto& [scenario, m] : report.per_scenario) per[scenario] = to_json(m);
  return json{{"schema", "metrics_v1"},
              {"mode", to_string(report.mode)},
              {"overall", to_json(report.overall)},
              {"per_scenario", per},
              {"justification_accuracy", optional_number(report.justification_accuracy)},
              {"errored", report.errored}};
}

std::string format_metrics_table(const MetricsReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %5s %5s %5s %5s %10s %10s %10s\n", "scenario", "TP", "FP", "TN",
                "FN", "recall", "FPR", "accuracy");
  out += line;
  auto row = [&](const std::string& name, const Metrics& m) {
    std::snprintf(line, sizeof line, "%-12s %5lld %5lld %5lld %5lld %10s %10s %10s\n", name.c_str(),
                  static_cast<long long>(m.cm.tp), static_cast<long long>(m.cm.fp),
                  static_cast<long long>(m.cm.tn), static_cast<long long>(m.cm.fn), percent(m.recall).c_str(),
                  percent(m.false_positive_rate).c_str(), percent(m.accuracy).c_str());
    out += line;
  };
  for (const auto& [scenario, m] : report.per_scenario) row(scenario, m);
  row("overall", report.overall);
  out += "mode: " + std::string(to_string(report.mode)) +
         "; justification accuracy: " + percent(report.justification_accuracy) +
         "; errored cases: " + std::to_string(report.errored) + "\n";
  return out;
}

MetricsReport summarize(const std::vector<CaseRecord>& records, EngineMode mode) {
  MetricsReport report;
  report.mode = mode;
  ConfusionMatrix overall;
  std::map<std::string, ConfusionMatrix> per;
  std::int64_t justified = 0;
  for (const auto& r : records) {
    if (r.error) {
      ++report.errored;
      continue;
    }
    ConfusionMatrix& cm = per[r.scenario];
    const bool positive = r.gold == GoldLabel::erroneous;
    if (positive && r.flagged) {
      ++overall.tp;
      ++cm.tp;
      if (r.cited_rule && r.gold_rule && *r.cited_rule == *r.gold_rule) ++justified;
    } else if (positive) {
      ++overall.fn;
      ++cm.fn;
    } else if (r.flagged) {
      ++overall.fp;
      ++cm.fp;
    } else {
      ++overall.tn;
      ++cm.tn;
    }
  }
  report.overall = compute_metrics(overall);
  for (const auto& [scenario, cm] : per) report.per_scenario[scenario] = compute_metrics(cm);
  if (overall.tp > 0) report.justification_accuracy = static_cast<double>(justified) / overall.tp;
  return report;
}

namespace {

std::optional<std::string> first_violated_rule(const ExecutionLog& log) {
  for (const ReasoningStep* step : flatten_steps(log)) {
    for (const Claim& c : step->atoms) {
      if (is_verdict_claim(c) && !c.negated && c.value.str() == "violated") return c.entity;
    }
  }
  return std::nullopt;
}

bool answer_is_erroneous(const ExecutionLog& log) {
  if (!log.final_answer) return false;
  for (const Claim& c : log.final_answer->atoms) {
    if (c.path() == "task.outcome" && !c.negated && c.value.str() == "erroneous") return true;
  }
  return false;
}

CaseRecord run_mmia_case(const BenchmarkCase& c, BenchmarkEnv& env, CaseRecord r) {
  const TaskSpec task = task_for_case(c, env.packs.get(c.scenario));
  ReasoningEngine engine(env.gateway, env.kb, EngineOptions{env.clock, 0.0, env.web_fixtures});
  const ExecutionLog log = engine.execute_task(task);
  r.log = to_json(log);
  r.tokens = log.total_tokens;
  if (log.status != RunStatus::complete) {
    r.error = log.error ? log.error->code + ": " + log.error->message
                        : "run " + std::string(to_string(log.status));
    return r;
  }
  const ConsensusResult result = consensus_audit(log, *env.kb, env.verifiers, env.policy);
  r.audit = to_json(result);
  r.consensus = std::string(to_string(result.outcome));
  for (const auto& report : result.reports) r.tokens += report.usage.total();
  const bool certified = result.outcome == ConsensusOutcome::certified;
  r.flagged = !certified || answer_is_erroneous(log);
  if (r.flagged) {
    r.cited_rule = first_violated_rule(log);
    if (!r.cited_rule) {
      for (const auto& report : result.reports) {
        for (const auto& issue : report.issues) {
          if (!r.cited_rule && issue.cited_rule) r.cited_rule = issue.cited_rule;
        }
      }
    }
  }
  return r;
}

}  // namespace

BenchmarkRun run_benchmark(const std::vector<BenchmarkCase>& suite, EngineMode mode, BenchmarkEnv& env,
                           std::string run_id) {
  require(!suite.empty(), "benchmark suite is empty");
  require(env.kb != nullptr, "benchmark needs a knowledge-base snapshot");
  if (mode == EngineMode::mmia) validate_policy(env.policy);
  if (mode == EngineMode::mmia && env.verifiers.empty()) {
    fail(ErrorCode::configuration_error, "benchmark in mmia mode needs at least one verifier");
  }
  BenchmarkRun run;
  run.run_id = std::move(run_id);
  for (const auto& c : suite) {
    CaseRecord r;
    r.case_id = c.id;
    r.scenario = c.scenario;
    r.gold = c.gold;
    if (c.injected) r.gold_rule = c.injected->gold_rule;
    try {
      if (mode == EngineMode::mmia) {
        r = run_mmia_case(c, env, std::move(r));
      } else {
        const BaselineVerdict v = baseline_oneshot(c, *env.kb, env.gateway);
        r.flagged = v.flag;
        if (v.flag) r.cited_rule = v.cited_rule;
        r.tokens = v.usage.total();
      }
    } catch (const Error& e) {
      r.error = std::string(to_string(e.code())) + ": " + e.what();
    }
    run.records.push_back(std::move(r));
  }
  run.metrics = summarize(run.records, mode);
  return run;
}

void write_benchmark_outputs(const BenchmarkRun& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string results, logs, audits;
  for (const auto& r : run.records) {
    json line = to_json(r);
    line["run_id"] = run.run_id;
    results += canonical_dump(line) + "\n";
    if (!r.log.is_null()) logs += canonical_dump(r.log) + "\n";
    if (!r.audit.is_null()) {
      audits += canonical_dump(json{{"case_id", r.case_id}, {"consensus", r.audit}}) + "\n";
    }
  }
  write_text_file(dir / "results.jsonl", results);
  write_text_file(dir / "logs.jsonl", logs);
  write_text_file(dir / "audits.jsonl", audits);
  json metrics = to_json(run.metrics);
  metrics["run_id"] = run.run_id;
  write_text_file(dir / "metrics.json", metrics.dump(2) + "\n");
}

}  // namespace mmia

#include "mmia/scenario_packs.hpp"

#include <algorithm>
#include <fstream>

#include "mmia/error.hpp"

namespace mmia {

const PackRule* ScenarioPack::find_rule(std::string_view id) const {
  for (const auto& r : rules) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

FactSet ScenarioPack::empty_facts() const {
  FactSet facts;
  for (const auto& path : multi_valued) facts.declare_multi_valued(path);
  return facts;
}

std::vector<std::pair<std::string, std::string>> read_rules_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open rules file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto colon = line.find(": ", first);
    if (colon == std::string::npos) {
      fail(ErrorCode::parse_error, path.string() + ":" + std::to_string(line_no) +
                                       ": expected 'ID: rule'");
    }
    std::string text = line.substr(colon + 2);
    while (!text.empty() && (text.back() == '\r' || text.back() == ' ')) text.pop_back();
    out.emplace_back(line.substr(first, colon - first), std::move(text));
  }
  return out;
}

ScenarioPack load_pack(const std::filesystem::path& pack_json) {
  json doc;
  try {
    doc = json::parse(read_text_file(pack_json));
  } catch (const json::exception& e) {
    fail(ErrorCode::configuration_error, pack_json.string() + ": " + e.what());
  }
  try {
    ScenarioPack pack;
    pack.scenario = doc.at("scenario").get<std::string>();
    const std::string prefix = scenario_prefix(pack.scenario);
    pack.task_description = doc.at("task_description").get<std::string>();
    pack.goals = doc.at("goals").get<std::vector<std::string>>();
    pack.multi_valued = doc.value("multi_valued", std::vector<std::string>{});
    const json& plan = doc.at("plan");
    pack.plan_rationale = plan.value("rationale", "");
    for (const json& s : plan.at("subtasks")) {
      pack.plan.push_back(SubtaskBlueprint{s.at("description").get<std::string>(),
                                           tool_from_string(s.at("tool").get<std::string>()),
                                           s.value("goals", std::vector<std::string>{}),
                                           s.value("needs", std::vector<std::string>{})});
    }
    for (const json& d : plan.value("dependencies", json::array())) {
      pack.dependencies.emplace_back(d.at(0).get<int>(), d.at(1).get<int>());
    }
    pack.goal_labels = doc.value("goal_labels", std::map<std::string, std::string>{});
    pack.correct_label = doc.at("labels").at("correct").get<std::string>();
    pack.erroneous_label = doc.at("labels").at("erroneous").get<std::string>();
    pack.abstraction_template = doc.at("abstraction").at("template").get<std::string>();
    pack.abstraction_bindings =
        doc.at("abstraction").at("bindings").get<std::map<std::string, std::string>>();
    for (const json& d : doc.value("reference_documents", json::array())) {
      pack.reference_documents.push_back(
          Document{d.at("id").get<std::string>(), d.at("text").get<std::string>()});
    }
    const auto excerpts = doc.value("excerpts", std::map<std::string, std::string>{});

    auto rules_path = pack_json;
    rules_path.replace_filename(pack_json.stem().stem().string() + ".rules");
    for (auto& [id, text] : read_rules_file(rules_path)) {
      if (!is_valid_axiom_id(id) || id.rfind(prefix + "-", 0) != 0) {
        fail(ErrorCode::configuration_error, rules_path.string() + ": bad rule id " + id);
      }
      RuleExpr rule = parse_rule(text);
      const auto ex = excerpts.find(id);
      pack.rules.push_back(PackRule{id, text, std::move(rule),
                                    ex == excerpts.end() ? std::string() : ex->second});
    }
    Plan blueprint;
    blueprint.task_id = "blueprint";
    for (const auto& s : pack.plan) {
      TaskSpec t;
      t.description = s.description;
      blueprint.subtasks.push_back(t);
    }
    blueprint.dependencies = pack.dependencies;
    validate_plan(blueprint);
    return pack;
  } catch (const json::exception& e) {
    fail(ErrorCode::configuration_error, pack_json.string() + ": " + e.what());
  }
}

void PackRegistry::add(ScenarioPack pack) {
  auto it = std::find_if(packs_.begin(), packs_.end(),
                         [&](const ScenarioPack& p) { return p.scenario == pack.scenario; });
  if (it != packs_.end()) {
    *it = std::move(pack);
  } else {
    packs_.push_back(std::move(pack));
  }
}

PackRegistry PackRegistry::load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    fail(ErrorCode::configuration_error, "pack directory " + dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 10 && name.substr(name.size() - 10) == ".pack.json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  PackRegistry registry;
  for (const auto& f : files) registry.add(load_pack(f));
  return registry;
}

const PackRegistry& PackRegistry::builtin() {
  static const PackRegistry registry = load_directory(default_data_dir() / "packs");
  return registry;
}

const ScenarioPack* PackRegistry::find(std::string_view scenario) const {
  for (const auto& p : packs_) {
    if (p.scenario == scenario) return &p;
  }
  return nullptr;
}

const ScenarioPack& PackRegistry::get(std::string_view scenario) const {
  const ScenarioPack* pack = find(scenario);
  if (!pack) {
    fail(ErrorCode::configuration_error, "no scenario pack for '" + std::string(scenario) + "'");
  }
  return *pack;
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("MMIA_SHARE_DIR")) {
    return env;
  }
#ifdef MMIA_DEFAULT_DATA_DIR
  return MMIA_DEFAULT_DATA_DIR;
#else
  return "data";
#endif
}

void seed_pack_axioms(KnowledgeBase& kb, const PackRegistry& packs, const Clock& clock) {
  const auto snap = kb.snapshot();
  for (const auto& pack : packs.packs()) {
    for (const auto& r : pack.rules) {
      if (snap->find(r.id)) continue;
      Axiom a;
      a.id = r.id;
      a.kind = r.id.find("-T") != std::string::npos ? AxiomKind::theorem : AxiomKind::axiom;
      a.scenario = pack.scenario;
      a.rule = r.rule;
      a.rule_text = r.text;
      a.status = AxiomStatus::approved;
      a.origin = Origin::expert_authored;
      a.statement = r.excerpt;
      a.review = ReviewRecord{"pack-seed", clock.now(), "approve"};
      kb.add(std::move(a));
    }
  }
}

}  // namespace mmia

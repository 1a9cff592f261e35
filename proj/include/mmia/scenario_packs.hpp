#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmia/knowledge_base.hpp"
#include "mmia/log.hpp"

namespace mmia {

struct SubtaskBlueprint {
  std::string description;
  Tool tool = Tool::direct_query;
  std::vector<std::string> goals;
  std::vector<std::string> needs;
};

struct PackRule {
  std::string id;
  std::string text;
  RuleExpr rule;
  std::string excerpt;  // source sentence in the pack's reference document, if any
};

// Domain content for one scenario: rules, the audit plan blueprint, output
// labels and the abstraction used for theorem matching.
struct ScenarioPack {
  std::string scenario;
  std::string task_description;  // "{case}" is replaced by the case id
  std::vector<std::string> goals;
  std::vector<std::string> multi_valued;
  std::string plan_rationale;
  std::vector<SubtaskBlueprint> plan;
  std::vector<std::pair<int, int>> dependencies;
  std::map<std::string, std::string> goal_labels;  // path -> label in answers
  std::string correct_label;
  std::string erroneous_label;
  std::string abstraction_template;
  std::map<std::string, std::string> abstraction_bindings;  // placeholder -> path
  std::vector<PackRule> rules;
  std::vector<Document> reference_documents;

  const PackRule* find_rule(std::string_view id) const;
  // Fact set with this pack's multi-valued declarations.
  FactSet empty_facts() const;
};

// Reads <name>.pack.json plus the sibling <name>.rules file.
ScenarioPack load_pack(const std::filesystem::path& pack_json);

// Rules file: one `ID: rule` per line, '#' comments, blank lines ignored.
std::vector<std::pair<std::string, std::string>> read_rules_file(const std::filesystem::path& path);

class PackRegistry {
 public:
  PackRegistry() = default;
  static PackRegistry load_directory(const std::filesystem::path& dir);
  // Packs shipped with the source tree.
  static const PackRegistry& builtin();

  void add(ScenarioPack pack);
  const ScenarioPack* find(std::string_view scenario) const;
  const ScenarioPack& get(std::string_view scenario) const;
  const std::vector<ScenarioPack>& packs() const { return packs_; }

 private:
  std::vector<ScenarioPack> packs_;
};

// Directory holding packs/ and fixtures/: $MMIA_SHARE_DIR, else the source tree.
std::filesystem::path default_data_dir();

// Approved expert-authored axioms for every pack rule not yet present.
void seed_pack_axioms(KnowledgeBase& kb, const PackRegistry& packs, const Clock& clock);

}  // namespace mmia

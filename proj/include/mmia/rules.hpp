#pragma once

// Rule language for the knowledge base.
//
//   rule    := body [UNLESS expr]
//   body    := IF expr THEN conseq | expr
//   conseq  := FORBID expr | REQUIRE expr | expr
//   expr    := and (OR and)*
//   and     := unary (AND unary)*
//   unary   := NOT unary | "(" expr ")" | atom
//   atom    := path cmp literal | path CONTAINS literal
//            | path IN "{" literal ("," literal)* "}"
//   path    := ident "." ident
//   cmp     := "=" | "!=" | "<" | "<=" | ">" | ">="   (also ≠ ≤ ≥)
//   literal := "text" | `code` | number [unit] | number duration-unit
//            | true | false
//
// FORBID p is NOT p; REQUIRE p is p. Durations are normalized to hours
// with 30-day months and 360-day years when compared.

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mmia {

enum class ValueKind { text, number, duration, code, boolean };

std::string_view to_string(ValueKind kind);

class Value {
 public:
  static Value text(std::string value);
  static Value number(double magnitude, std::string unit = {});
  static Value duration(double magnitude, std::string unit);
  static Value code(std::string value);
  static Value boolean(bool value);

  ValueKind kind() const { return kind_; }
  const std::string& str() const { return str_; }
  double magnitude() const { return magnitude_; }
  const std::string& unit() const { return str_; }
  bool flag() const { return magnitude_ != 0.0; }

  // Duration in hours; only valid for duration values.
  double hours() const;

  // Literal in rule-language syntax, e.g. "penicillin", `I21.001`, 12 months.
  std::string to_literal() const;

  // Structural equality: 12 months and 360 days are different literals.
  friend bool operator==(const Value&, const Value&) = default;
  friend auto operator<=>(const Value&, const Value&) = default;

 private:
  ValueKind kind_ = ValueKind::text;
  double magnitude_ = 0.0;
  std::string str_;
};

bool is_duration_unit(std::string_view unit);

// Semantic comparison used by the evaluator. Throws evaluation_error when
// the kinds (or number units) are incompatible.
bool values_equal(const Value& fact, const Value& literal);
int compare_values(const Value& fact, const Value& literal);

enum class Comparator { eq, ne, lt, le, gt, ge, in_set, contains };

std::string_view to_string(Comparator op);

struct Atom {
  std::string entity;
  std::string attribute;
  Comparator op = Comparator::eq;
  std::vector<Value> values;  // exactly one, except in_set

  std::string path() const { return entity + "." + attribute; }
  friend bool operator==(const Atom&, const Atom&) = default;
};

class RuleExpr {
 public:
  enum class Kind { atom, conjunction, disjunction, negation, implies, unless };

  static RuleExpr make_atom(Atom atom);
  static RuleExpr all_of(std::vector<RuleExpr> terms);
  static RuleExpr any_of(std::vector<RuleExpr> terms);
  static RuleExpr negate(RuleExpr term);
  static RuleExpr implies(RuleExpr condition, RuleExpr consequence);
  static RuleExpr unless(RuleExpr base, RuleExpr exception);

  Kind kind() const { return kind_; }
  const Atom& atom() const { return *atom_; }
  const std::vector<RuleExpr>& children() const { return children_; }

  // implies: condition/consequence; unless: base/exception.
  const RuleExpr& first() const { return children_.at(0); }
  const RuleExpr& second() const { return children_.at(1); }

  // Distinct entity.attribute paths mentioned anywhere in the rule.
  std::set<std::string> paths() const;
  std::vector<const Atom*> atoms() const;

  friend bool operator==(const RuleExpr&, const RuleExpr&) = default;

 private:
  Kind kind_ = Kind::atom;
  std::optional<Atom> atom_;
  std::vector<RuleExpr> children_;
};

// Checks structural invariants: n-ary nodes have >= 2 terms, IF/UNLESS only
// at the top level, comparator/literal kinds consistent.
void validate_rule(const RuleExpr& rule);

RuleExpr parse_rule(std::string_view text);
std::string print_rule(const RuleExpr& rule);

// Parses a single literal in rule syntax (used for typed fact values).
Value parse_literal(std::string_view text);

struct Fact {
  std::string entity;
  std::string attribute;
  Value value;

  std::string path() const { return entity + "." + attribute; }
  friend bool operator==(const Fact&, const Fact&) = default;
  friend auto operator<=>(const Fact&, const Fact&) = default;
};

enum class Outcome { satisfied, violated, inapplicable };

// A structured conclusion atom: entity.attribute = value, or its negation.
// Verdict claims use the rule id as entity and "verdict" as attribute.
struct Claim {
  std::string entity;
  std::string attribute;
  Value value;
  bool negated = false;

  std::string path() const { return entity + "." + attribute; }
  Fact fact() const { return Fact{entity, attribute, value}; }
  // e.g. case.mdc = "F" or NOT order.drug_class = "penicillin-class"
  std::string text() const;
  friend bool operator==(const Claim&, const Claim&) = default;
  friend auto operator<=>(const Claim&, const Claim&) = default;
};

Claim verdict_claim(const std::string& rule_id, Outcome outcome);
bool is_verdict_claim(const Claim& claim);

// Entity-attribute-value store. Attributes are single-valued unless
// declared multi-valued (e.g. an allergy list).
class FactSet {
 public:
  void declare_multi_valued(const std::string& path);
  bool is_multi_valued(const std::string& path) const;
  const std::set<std::string>& multi_valued() const { return multi_valued_; }

  // Throws validation_error when a single-valued attribute already holds a
  // different value.
  void add(const Fact& fact);
  void add(std::string entity, std::string attribute, Value value);
  // Same as add() but returns false instead of throwing on conflict.
  bool try_add(const Fact& fact);

  bool erase(const std::string& entity, const std::string& attribute);
  bool erase(const Fact& fact);

  const std::vector<Value>* find(const std::string& entity, const std::string& attribute) const;
  bool contains(const Fact& fact) const;
  bool has_path(const std::string& path) const;

  std::vector<Fact> facts() const;
  std::size_t size() const;
  bool empty() const { return values_.empty(); }

  friend bool operator==(const FactSet&, const FactSet&) = default;

 private:
  std::map<std::pair<std::string, std::string>, std::vector<Value>> values_;
  std::set<std::string> multi_valued_;
};

// Kleene truth values ordered false < unknown < true.
enum class Truth { no = 0, unknown = 1, yes = 2 };

std::string_view to_string(Truth truth);
std::string_view to_string(Outcome outcome);
Outcome outcome_from_string(std::string_view text);

struct AtomTrace {
  std::string atom;
  Truth value = Truth::unknown;
};

struct RuleVerdict {
  Outcome outcome = Outcome::inapplicable;
  std::vector<std::string> bindings;  // entities of atoms that held
  std::vector<AtomTrace> trace;
};

Truth eval_atom(const Atom& atom, const FactSet& facts);
Truth eval_expr(const RuleExpr& expr, const FactSet& facts);

// Structure of IF-THEN rules, for entailment and forward chaining.
// premise: the IF condition, conjoined with NOT exception for UNLESS rules;
// unknown for bare expressions, which entail nothing.
Truth rule_premise(const RuleExpr& rule, const FactSet& facts);
// Literals asserted by the THEN part: eq atoms -> positive claims, NOT eq ->
// negated claims, CONTAINS -> positive claims; conjunctions flattened.
// Other shapes contribute nothing.
std::vector<Claim> consequence_claims(const RuleExpr& rule);
// Paths assigned by positive eq consequences (what the rule can derive).
std::set<std::string> derived_paths(const RuleExpr& rule);

// Three-valued verdict:
//  * IF c THEN q: inapplicable unless c is established; then q decides,
//    with an undecidable q also inapplicable.
//  * base UNLESS e: inapplicable when base is; e true -> violated;
//    e false -> base verdict; e unknown -> violated only if base is.
//  * bare expression: true/false/unknown -> satisfied/violated/inapplicable.
// Never mutates its inputs. Throws evaluation_error on kind mismatch.
RuleVerdict eval_rule(const RuleExpr& rule, const FactSet& facts);

}  // namespace mmia

#pragma once

// Random rule generators shared by the unit and acceptance tests.

#include <random>
#include <string>
#include <vector>

#include "mmia/rules.hpp"

namespace mmia::gen {

// An atom over its own path, with facts that make it true or false.
// Leaving the path out of the fact set makes it unknown.
struct DecidableAtom {
  Atom atom;
  std::vector<Value> yes;  // values stored to make the atom true
  std::vector<Value> no;   // values stored to make it false
  bool multi_valued = false;
};

inline DecidableAtom random_decidable_atom(std::mt19937_64& rng, int slot) {
  DecidableAtom d;
  d.atom.entity = "x";
  d.atom.attribute = "a" + std::to_string(slot);
  const int n = std::uniform_int_distribution<int>(0, 999)(rng);
  switch (std::uniform_int_distribution<int>(0, 8)(rng)) {
    case 0:
      d.atom.op = Comparator::eq;
      d.atom.values = {Value::number(n)};
      d.yes = {Value::number(n)};
      d.no = {Value::number(n + 1)};
      break;
    case 1:
      d.atom.op = Comparator::ne;
      d.atom.values = {Value::text("t" + std::to_string(n))};
      d.yes = {Value::text("u" + std::to_string(n))};
      d.no = {Value::text("t" + std::to_string(n))};
      break;
    case 2:
      d.atom.op = Comparator::lt;
      d.atom.values = {Value::number(n, "mm")};
      d.yes = {Value::number(n - 1, "mm")};
      d.no = {Value::number(n, "mm")};
      break;
    case 3:
      d.atom.op = Comparator::le;
      d.atom.values = {Value::number(n)};
      d.yes = {Value::number(n)};
      d.no = {Value::number(n + 0.5)};
      break;
    case 4:
      d.atom.op = Comparator::gt;
      d.atom.values = {Value::duration(n, "days")};
      d.yes = {Value::duration(n + 1, "days")};
      d.no = {Value::duration(n, "days")};
      break;
    case 5:
      d.atom.op = Comparator::ge;
      d.atom.values = {Value::duration(12, "months")};
      d.yes = {Value::duration(360, "days")};
      d.no = {Value::duration(11, "months")};
      break;
    case 6:
      d.atom.op = Comparator::in_set;
      d.atom.values = {Value::code("C" + std::to_string(n)), Value::code("D" + std::to_string(n))};
      d.yes = {Value::code("D" + std::to_string(n))};
      d.no = {Value::code("E" + std::to_string(n))};
      break;
    case 7:
      d.atom.op = Comparator::contains;
      d.atom.values = {Value::text("p" + std::to_string(n))};
      d.yes = {Value::text("q"), Value::text("p" + std::to_string(n))};
      d.no = {Value::text("q"), Value::text("r")};
      d.multi_valued = true;
      break;
    default:
      d.atom.op = Comparator::eq;
      d.atom.values = {Value::boolean(n % 2 == 0)};
      d.yes = {Value::boolean(n % 2 == 0)};
      d.no = {Value::boolean(n % 2 != 0)};
      break;
  }
  return d;
}

// Expression tree over atom slots [first, first + count), count >= 1.
// Leaves reference slots; the caller materializes them.
inline RuleExpr random_expr(std::mt19937_64& rng, const std::vector<DecidableAtom>& atoms, int first,
                            int count, int negation_depth = 0) {
  auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  if (count == 1) {
    RuleExpr leaf = RuleExpr::make_atom(atoms[first].atom);
    return negation_depth < 2 && coin(0.25) ? RuleExpr::negate(leaf) : leaf;
  }
  // Split the slots into 2..count groups.
  const int parts = std::uniform_int_distribution<int>(2, std::min(count, 3))(rng);
  std::vector<int> sizes(parts, 1);
  for (int rest = count - parts; rest > 0; --rest) sizes[std::uniform_int_distribution<int>(0, parts - 1)(rng)]++;
  std::vector<RuleExpr> terms;
  int at = first;
  for (int s : sizes) {
    terms.push_back(random_expr(rng, atoms, at, s, negation_depth));
    at += s;
  }
  RuleExpr node = coin(0.5) ? RuleExpr::all_of(std::move(terms)) : RuleExpr::any_of(std::move(terms));
  return negation_depth < 2 && coin(0.2) ? RuleExpr::negate(std::move(node)) : node;
}

// Whole rule over `atoms`: bare, IF-THEN, or either with UNLESS.
inline RuleExpr random_rule_shape(std::mt19937_64& rng, const std::vector<DecidableAtom>& atoms) {
  const int n = static_cast<int>(atoms.size());
  const int shape = std::uniform_int_distribution<int>(0, 3)(rng);
  const bool with_unless = shape >= 2 && n >= 2;
  const int body_atoms = with_unless ? std::uniform_int_distribution<int>(1, n - 1)(rng) : n;
  RuleExpr body;
  if ((shape == 1 || shape == 3) && body_atoms >= 2) {
    const int cond = std::uniform_int_distribution<int>(1, body_atoms - 1)(rng);
    body = RuleExpr::implies(random_expr(rng, atoms, 0, cond), random_expr(rng, atoms, cond, body_atoms - cond));
  } else {
    body = random_expr(rng, atoms, 0, body_atoms);
  }
  if (!with_unless) return body;
  return RuleExpr::unless(std::move(body), random_expr(rng, atoms, body_atoms, n - body_atoms));
}

// ---- full-grammar ASTs for printer/parser round trips ------------------------------------

inline std::string random_word(std::mt19937_64& rng, int min_len = 1) {
  static const std::string letters = "abcdefghijklmnopqrstuvwxyz";
  const int len = std::uniform_int_distribution<int>(min_len, 8)(rng);
  std::string out;
  for (int i = 0; i < len; ++i) out += letters[std::uniform_int_distribution<std::size_t>(0, 25)(rng)];
  return out;
}

inline Value random_literal(std::mt19937_64& rng, int kind) {
  static const char* units[] = {"mm", "mg", "percent", "kg"};
  static const char* durations[] = {"hours", "days", "weeks", "months", "years", "minute", "day"};
  std::uniform_int_distribution<int> pick(0, 1 << 20);
  switch (kind) {
    case 0: {
      static const std::string alphabet = "abc XYZ-_.,:;'/()0123456789\"\\";
      std::string s;
      const int len = std::uniform_int_distribution<int>(0, 12)(rng);
      for (int i = 0; i < len; ++i) s += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
      return Value::text(s);
    }
    case 1: {
      const double v = std::uniform_real_distribution<double>(-5000.0, 5000.0)(rng);
      const double rounded = std::bernoulli_distribution(0.5)(rng) ? std::round(v) : v;
      return std::bernoulli_distribution(0.4)(rng)
                 ? Value::number(rounded, units[std::uniform_int_distribution<int>(0, 3)(rng)])
                 : Value::number(rounded);
    }
    case 2:
      return Value::duration(pick(rng) % 400, durations[std::uniform_int_distribution<int>(0, 6)(rng)]);
    case 3:
      return Value::code(std::string(1, static_cast<char>('A' + pick(rng) % 26)) + std::to_string(pick(rng) % 100) +
                         "." + std::to_string(pick(rng) % 1000));
    default:
      return Value::boolean(pick(rng) % 2 == 0);
  }
}

inline Atom random_atom(std::mt19937_64& rng) {
  Atom a;
  a.entity = random_word(rng);
  a.attribute = random_word(rng) + (std::bernoulli_distribution(0.3)(rng) ? "_2" : "");
  const int op = std::uniform_int_distribution<int>(0, 7)(rng);
  switch (op) {
    case 0:
    case 1:
      a.op = op == 0 ? Comparator::eq : Comparator::ne;
      a.values = {random_literal(rng, std::uniform_int_distribution<int>(0, 4)(rng))};
      break;
    case 2: case 3: case 4: case 5: {
      static const Comparator ord[] = {Comparator::lt, Comparator::le, Comparator::gt, Comparator::ge};
      a.op = ord[op - 2];
      a.values = {random_literal(rng, std::uniform_int_distribution<int>(1, 2)(rng))};
      break;
    }
    case 6: {
      a.op = Comparator::in_set;
      const int kind = std::uniform_int_distribution<int>(0, 3)(rng);
      const int n = std::uniform_int_distribution<int>(1, 4)(rng);
      for (int i = 0; i < n; ++i) {
        Value v = random_literal(rng, kind);
        // Set members share one number unit.
        if (kind == 1 && i > 0) v = Value::number(v.magnitude(), a.values.front().unit());
        a.values.push_back(std::move(v));
      }
      break;
    }
    default:
      a.op = Comparator::contains;
      a.values = {random_literal(rng, std::bernoulli_distribution(0.5)(rng) ? 0 : 3)};
      break;
  }
  return a;
}

inline RuleExpr random_ast_expr(std::mt19937_64& rng, int budget) {
  if (budget <= 1 || std::bernoulli_distribution(0.3)(rng)) {
    RuleExpr leaf = RuleExpr::make_atom(random_atom(rng));
    return std::bernoulli_distribution(0.15)(rng) ? RuleExpr::negate(leaf) : leaf;
  }
  const int n = std::uniform_int_distribution<int>(2, 3)(rng);
  std::vector<RuleExpr> terms;
  for (int i = 0; i < n; ++i) terms.push_back(random_ast_expr(rng, budget / n));
  RuleExpr node = std::bernoulli_distribution(0.5)(rng) ? RuleExpr::all_of(std::move(terms))
                                                        : RuleExpr::any_of(std::move(terms));
  return std::bernoulli_distribution(0.2)(rng) ? RuleExpr::negate(std::move(node)) : node;
}

inline RuleExpr random_ast(std::mt19937_64& rng) {
  const int shape = std::uniform_int_distribution<int>(0, 3)(rng);
  RuleExpr body = shape % 2 == 1
                      ? RuleExpr::implies(random_ast_expr(rng, 4), random_ast_expr(rng, 4))
                      : random_ast_expr(rng, 6);
  if (shape < 2) return body;
  return RuleExpr::unless(std::move(body), random_ast_expr(rng, 3));
}

}  // namespace mmia::gen

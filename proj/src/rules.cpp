#include "mmia/rules.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "mmia/error.hpp"

namespace mmia {

// ---------------------------------------------------------------------------
// Values

namespace {

struct DurationUnit {
  std::string_view name;
  double hours;
};

constexpr DurationUnit kDurationUnits[] = {
    {"minute", 1.0 / 60.0}, {"minutes", 1.0 / 60.0}, {"hour", 1.0},   {"hours", 1.0},
    {"day", 24.0},          {"days", 24.0},          {"week", 168.0}, {"weeks", 168.0},
    {"month", 720.0},       {"months", 720.0},       {"year", 8640.0}, {"years", 8640.0},
};

std::string format_number(double value) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  if (ec != std::errc{}) {
    fail(ErrorCode::validation_error, "cannot format number");
  }
  return std::string(buffer, end);
}

std::string quote_text(const std::string& text) {
  std::string out = "\"";
  for (char c : text) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

}  // namespace

std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::text: return "text";
    case ValueKind::number: return "number";
    case ValueKind::duration: return "duration";
    case ValueKind::code: return "code";
    case ValueKind::boolean: return "boolean";
  }
  return "text";
}

bool is_duration_unit(std::string_view unit) {
  return std::any_of(std::begin(kDurationUnits), std::end(kDurationUnits),
                     [&](const DurationUnit& u) { return u.name == unit; });
}

Value Value::text(std::string value) {
  Value v;
  v.kind_ = ValueKind::text;
  v.str_ = std::move(value);
  return v;
}

Value Value::number(double magnitude, std::string unit) {
  if (!std::isfinite(magnitude)) {
    fail(ErrorCode::validation_error, "number literal must be finite");
  }
  if (is_duration_unit(unit)) {
    return duration(magnitude, std::move(unit));
  }
  Value v;
  v.kind_ = ValueKind::number;
  v.magnitude_ = magnitude;
  v.str_ = std::move(unit);
  return v;
}

Value Value::duration(double magnitude, std::string unit) {
  if (!is_duration_unit(unit)) {
    fail(ErrorCode::validation_error, "unknown duration unit '" + unit + "'");
  }
  if (!std::isfinite(magnitude)) {
    fail(ErrorCode::validation_error, "duration must be finite");
  }
  Value v;
  v.kind_ = ValueKind::duration;
  v.magnitude_ = magnitude;
  v.str_ = std::move(unit);
  return v;
}

Value Value::code(std::string value) {
  if (value.empty() || value.find('`') != std::string::npos) {
    fail(ErrorCode::validation_error, "code literal must be non-empty and backtick-free");
  }
  Value v;
  v.kind_ = ValueKind::code;
  v.str_ = std::move(value);
  return v;
}

Value Value::boolean(bool value) {
  Value v;
  v.kind_ = ValueKind::boolean;
  v.magnitude_ = value ? 1.0 : 0.0;
  return v;
}

double Value::hours() const {
  for (const auto& u : kDurationUnits) {
    if (u.name == str_) {
      return magnitude_ * u.hours;
    }
  }
  fail(ErrorCode::evaluation_error, "not a duration");
}

std::string Value::to_literal() const {
  switch (kind_) {
    case ValueKind::text: return quote_text(str_);
    case ValueKind::code: return "`" + str_ + "`";
    case ValueKind::boolean: return flag() ? "true" : "false";
    case ValueKind::number:
      return str_.empty() ? format_number(magnitude_) : format_number(magnitude_) + " " + str_;
    case ValueKind::duration: return format_number(magnitude_) + " " + str_;
  }
  return {};
}

namespace {

[[noreturn]] void kind_mismatch(const Value& fact, const Value& literal) {
  fail(ErrorCode::evaluation_error, "type mismatch: cannot compare " +
                                        std::string(to_string(fact.kind())) + " " +
                                        fact.to_literal() + " with " +
                                        std::string(to_string(literal.kind())) + " " +
                                        literal.to_literal());
}

void check_comparable(const Value& fact, const Value& literal) {
  if (fact.kind() != literal.kind()) {
    kind_mismatch(fact, literal);
  }
  if (fact.kind() == ValueKind::number && fact.unit() != literal.unit()) {
    kind_mismatch(fact, literal);
  }
}

}  // namespace

bool values_equal(const Value& fact, const Value& literal) {
  check_comparable(fact, literal);
  switch (fact.kind()) {
    case ValueKind::duration: return fact.hours() == literal.hours();
    case ValueKind::number: return fact.magnitude() == literal.magnitude();
    case ValueKind::boolean: return fact.flag() == literal.flag();
    case ValueKind::text:
    case ValueKind::code: return fact.str() == literal.str();
  }
  return false;
}

int compare_values(const Value& fact, const Value& literal) {
  check_comparable(fact, literal);
  double a = 0;
  double b = 0;
  switch (fact.kind()) {
    case ValueKind::duration:
      a = fact.hours();
      b = literal.hours();
      break;
    case ValueKind::number:
      a = fact.magnitude();
      b = literal.magnitude();
      break;
    default: kind_mismatch(fact, literal);
  }
  return a < b ? -1 : (a > b ? 1 : 0);
}

// ---------------------------------------------------------------------------
// AST

std::string_view to_string(Comparator op) {
  switch (op) {
    case Comparator::eq: return "=";
    case Comparator::ne: return "!=";
    case Comparator::lt: return "<";
    case Comparator::le: return "<=";
    case Comparator::gt: return ">";
    case Comparator::ge: return ">=";
    case Comparator::in_set: return "IN";
    case Comparator::contains: return "CONTAINS";
  }
  return "=";
}

RuleExpr RuleExpr::make_atom(Atom atom) {
  RuleExpr e;
  e.kind_ = Kind::atom;
  e.atom_ = std::move(atom);
  return e;
}

RuleExpr RuleExpr::all_of(std::vector<RuleExpr> terms) {
  RuleExpr e;
  e.kind_ = Kind::conjunction;
  e.children_ = std::move(terms);
  return e;
}

RuleExpr RuleExpr::any_of(std::vector<RuleExpr> terms) {
  RuleExpr e;
  e.kind_ = Kind::disjunction;
  e.children_ = std::move(terms);
  return e;
}

RuleExpr RuleExpr::negate(RuleExpr term) {
  RuleExpr e;
  e.kind_ = Kind::negation;
  e.children_.push_back(std::move(term));
  return e;
}

RuleExpr RuleExpr::implies(RuleExpr condition, RuleExpr consequence) {
  RuleExpr e;
  e.kind_ = Kind::implies;
  e.children_.push_back(std::move(condition));
  e.children_.push_back(std::move(consequence));
  return e;
}

RuleExpr RuleExpr::unless(RuleExpr base, RuleExpr exception) {
  RuleExpr e;
  e.kind_ = Kind::unless;
  e.children_.push_back(std::move(base));
  e.children_.push_back(std::move(exception));
  return e;
}

std::vector<const Atom*> RuleExpr::atoms() const {
  std::vector<const Atom*> out;
  std::vector<const RuleExpr*> stack{this};
  while (!stack.empty()) {
    const RuleExpr* node = stack.back();
    stack.pop_back();
    if (node->kind_ == Kind::atom) {
      out.push_back(&*node->atom_);
      continue;
    }
    for (auto it = node->children_.rbegin(); it != node->children_.rend(); ++it) {
      stack.push_back(&*it);
    }
  }
  return out;
}

std::set<std::string> RuleExpr::paths() const {
  std::set<std::string> out;
  for (const Atom* a : atoms()) {
    out.insert(a->path());
  }
  return out;
}

namespace {

bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) {
    return false;
  }
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

void validate_atom(const Atom& atom) {
  if (!is_identifier(atom.entity) || !is_identifier(atom.attribute)) {
    fail(ErrorCode::validation_error, "invalid path '" + atom.path() + "'");
  }
  if (atom.op == Comparator::in_set) {
    if (atom.values.empty()) {
      fail(ErrorCode::validation_error, "IN set must be non-empty");
    }
    for (const Value& v : atom.values) {
      if (v.kind() != atom.values.front().kind() ||
          (v.kind() == ValueKind::number && v.unit() != atom.values.front().unit())) {
        fail(ErrorCode::validation_error, "IN set mixes literal kinds in " + atom.path());
      }
    }
    return;
  }
  if (atom.values.size() != 1) {
    fail(ErrorCode::validation_error, "comparison needs exactly one literal");
  }
  const ValueKind kind = atom.values.front().kind();
  const bool ordered = atom.op == Comparator::lt || atom.op == Comparator::le ||
                       atom.op == Comparator::gt || atom.op == Comparator::ge;
  if (ordered && kind != ValueKind::number && kind != ValueKind::duration) {
    fail(ErrorCode::validation_error, "ordering comparator on " + std::string(to_string(kind)) +
                                          " literal in " + atom.path());
  }
}

void validate_expr(const RuleExpr& e) {
  switch (e.kind()) {
    case RuleExpr::Kind::atom: validate_atom(e.atom()); return;
    case RuleExpr::Kind::conjunction:
    case RuleExpr::Kind::disjunction:
      if (e.children().size() < 2) {
        fail(ErrorCode::validation_error, "AND/OR need at least two terms");
      }
      for (const auto& c : e.children()) validate_expr(c);
      return;
    case RuleExpr::Kind::negation: validate_expr(e.first()); return;
    case RuleExpr::Kind::implies:
    case RuleExpr::Kind::unless:
      fail(ErrorCode::validation_error, "IF/UNLESS may only appear at the top level");
  }
}

void validate_body(const RuleExpr& e) {
  if (e.kind() == RuleExpr::Kind::implies) {
    validate_expr(e.first());
    validate_expr(e.second());
  } else {
    validate_expr(e);
  }
}

}  // namespace

void validate_rule(const RuleExpr& rule) {
  if (rule.kind() == RuleExpr::Kind::unless) {
    validate_body(rule.first());
    validate_expr(rule.second());
  } else {
    validate_body(rule);
  }
}

// ---------------------------------------------------------------------------
// Lexer / parser

namespace {

enum class Tok {
  end, ident, keyword, string, code, number, boolean,
  lparen, rparen, lbrace, rbrace, comma, dot, cmp,
};

struct Token {
  Tok type = Tok::end;
  std::string text;  // identifier/keyword name, decoded string, number text
  Comparator op = Comparator::eq;
  int line = 1;
  int column = 1;
};

constexpr std::string_view kKeywords[] = {"IF",  "THEN",   "UNLESS",  "AND",      "OR",
                                          "NOT", "FORBID", "REQUIRE", "CONTAINS", "IN"};

bool is_keyword(std::string_view word) {
  return std::find(std::begin(kKeywords), std::end(kKeywords), word) != std::end(kKeywords);
}

std::string describe(const Token& t) {
  switch (t.type) {
    case Tok::end: return "end of input";
    case Tok::keyword: return t.text;
    case Tok::ident: return "identifier '" + t.text + "'";
    case Tok::string: return "string literal";
    case Tok::code: return "code literal";
    case Tok::number: return "number '" + t.text + "'";
    case Tok::boolean: return t.text;
    case Tok::cmp: return "'" + std::string(to_string(t.op)) + "'";
    case Tok::lparen: return "'('";
    case Tok::rparen: return "')'";
    case Tok::lbrace: return "'{'";
    case Tok::rbrace: return "'}'";
    case Tok::comma: return "','";
    case Tok::dot: return "'.'";
  }
  return "token";
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.line = line_;
      t.column = column_;
      if (pos_ >= src_.size()) {
        t.type = Tok::end;
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::string word;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                      src_[pos_] == '_')) {
          word += advance();
        }
        if (is_keyword(word)) {
          t.type = Tok::keyword;
        } else if (word == "true" || word == "false") {
          t.type = Tok::boolean;
        } else {
          t.type = Tok::ident;
        }
        t.text = std::move(word);
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '-' && pos_ + 1 < src_.size() &&
                  std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        t.type = Tok::number;
        t.text += advance();
        while (pos_ < src_.size()) {
          const char d = src_[pos_];
          if (std::isdigit(static_cast<unsigned char>(d)) || d == '.') {
            t.text += advance();
          } else if ((d == 'e' || d == 'E') && pos_ + 1 < src_.size() &&
                     (std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])) ||
                      src_[pos_ + 1] == '-' || src_[pos_ + 1] == '+')) {
            t.text += advance();
            t.text += advance();
          } else {
            break;
          }
        }
      } else if (c == '"') {
        t.type = Tok::string;
        advance();
        bool closed = false;
        while (pos_ < src_.size()) {
          char d = advance();
          if (d == '"') {
            closed = true;
            break;
          }
          if (d == '\\') {
            if (pos_ >= src_.size()) break;
            const char esc = advance();
            switch (esc) {
              case 'n': d = '\n'; break;
              case 't': d = '\t'; break;
              case '"': d = '"'; break;
              case '\\': d = '\\'; break;
              default:
                throw ParseError(t.line, t.column, "valid escape", "invalid escape in string");
            }
          }
          t.text += d;
        }
        if (!closed) {
          throw ParseError(t.line, t.column, "closing '\"'", error_at(t, "unterminated string"));
        }
      } else if (c == '`') {
        t.type = Tok::code;
        advance();
        bool closed = false;
        while (pos_ < src_.size()) {
          const char d = advance();
          if (d == '`') {
            closed = true;
            break;
          }
          t.text += d;
        }
        if (!closed || t.text.empty()) {
          throw ParseError(t.line, t.column, "closing '`'", error_at(t, "bad code literal"));
        }
      } else if (match("≠")) {
        t.type = Tok::cmp;
        t.op = Comparator::ne;
      } else if (match("≤")) {
        t.type = Tok::cmp;
        t.op = Comparator::le;
      } else if (match("≥")) {
        t.type = Tok::cmp;
        t.op = Comparator::ge;
      } else if (match("!=")) {
        t.type = Tok::cmp;
        t.op = Comparator::ne;
      } else if (match("<=")) {
        t.type = Tok::cmp;
        t.op = Comparator::le;
      } else if (match(">=")) {
        t.type = Tok::cmp;
        t.op = Comparator::ge;
      } else if (match("<")) {
        t.type = Tok::cmp;
        t.op = Comparator::lt;
      } else if (match(">")) {
        t.type = Tok::cmp;
        t.op = Comparator::gt;
      } else if (match("=")) {
        t.type = Tok::cmp;
        t.op = Comparator::eq;
      } else if (c == '%') {
        advance();
        t.type = Tok::ident;
        t.text = "%";
      } else {
        advance();
        switch (c) {
          case '(': t.type = Tok::lparen; break;
          case ')': t.type = Tok::rparen; break;
          case '{': t.type = Tok::lbrace; break;
          case '}': t.type = Tok::rbrace; break;
          case ',': t.type = Tok::comma; break;
          case '.': t.type = Tok::dot; break;
          default:
            throw ParseError(t.line, t.column, "token",
                             error_at(t, std::string("unexpected character '") + c + "'"));
        }
      }
      out.push_back(std::move(t));
    }
  }

  static std::string error_at(const Token& t, const std::string& what) {
    return std::to_string(t.line) + ":" + std::to_string(t.column) + ": " + what;
  }

 private:
  char advance() {
    const char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      column_ = 1;
    } else if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) {
      ++column_;  // count code points, not bytes
    }
    return c;
  }

  bool match(std::string_view s) {
    if (src_.substr(pos_, s.size()) != s) return false;
    for (std::size_t i = 0; i < s.size(); ++i) advance();
    return true;
  }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) {
      advance();
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  RuleExpr rule() {
    RuleExpr body = [&] {
      if (accept_keyword("IF")) {
        RuleExpr condition = expr("a condition after IF");
        expect_keyword("THEN");
        RuleExpr consequence = consequent();
        return RuleExpr::implies(std::move(condition), std::move(consequence));
      }
      return expr("IF or an expression");
    }();
    if (accept_keyword("UNLESS")) {
      body = RuleExpr::unless(std::move(body), expr("an exception after UNLESS"));
    }
    if (peek().type != Tok::end) {
      error(peek(), "end of rule");
    }
    return body;
  }

  Value single_literal() {
    Value v = literal();
    if (peek().type != Tok::end) {
      error(peek(), "end of literal");
    }
    return v;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }

  [[noreturn]] void error(const Token& t, const std::string& expected) {
    throw ParseError(t.line, t.column, expected,
                     Lexer::error_at(t, "expected " + expected + ", found " + describe(t)));
  }

  bool accept_keyword(std::string_view kw) {
    if (peek().type == Tok::keyword && peek().text == kw) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect_keyword(std::string_view kw) {
    if (!accept_keyword(kw)) error(peek(), std::string(kw));
  }

  RuleExpr consequent() {
    if (accept_keyword("FORBID")) {
      return RuleExpr::negate(expr("an expression after FORBID"));
    }
    if (accept_keyword("REQUIRE")) {
      return expr("an expression after REQUIRE");
    }
    return expr("a consequence after THEN");
  }

  RuleExpr expr(const std::string& what) {
    std::vector<RuleExpr> terms;
    terms.push_back(conjunction(what));
    while (accept_keyword("OR")) {
      terms.push_back(conjunction("an expression after OR"));
    }
    return terms.size() == 1 ? std::move(terms.front()) : RuleExpr::any_of(std::move(terms));
  }

  RuleExpr conjunction(const std::string& what) {
    std::vector<RuleExpr> terms;
    terms.push_back(unary(what));
    while (accept_keyword("AND")) {
      terms.push_back(unary("an expression after AND"));
    }
    return terms.size() == 1 ? std::move(terms.front()) : RuleExpr::all_of(std::move(terms));
  }

  RuleExpr unary(const std::string& what) {
    if (accept_keyword("NOT")) {
      return RuleExpr::negate(unary("an expression after NOT"));
    }
    if (peek().type == Tok::lparen) {
      ++pos_;
      RuleExpr inner = expr("an expression after '('");
      if (peek().type != Tok::rparen) error(peek(), "')'");
      ++pos_;
      return inner;
    }
    if (peek().type != Tok::ident) {
      error(peek(), what);
    }
    return atom();
  }

  RuleExpr atom() {
    Atom a;
    a.entity = next().text;
    if (peek().type != Tok::dot) error(peek(), "'.' in entity.attribute");
    ++pos_;
    if (peek().type != Tok::ident) error(peek(), "attribute name");
    a.attribute = next().text;
    if (peek().type == Tok::cmp) {
      a.op = next().op;
      a.values.push_back(literal());
    } else if (accept_keyword("CONTAINS")) {
      a.op = Comparator::contains;
      a.values.push_back(literal());
    } else if (accept_keyword("IN")) {
      a.op = Comparator::in_set;
      if (peek().type != Tok::lbrace) error(peek(), "'{'");
      ++pos_;
      a.values.push_back(literal());
      while (peek().type == Tok::comma) {
        ++pos_;
        a.values.push_back(literal());
      }
      if (peek().type != Tok::rbrace) error(peek(), "',' or '}'");
      ++pos_;
    } else {
      error(peek(), "comparator, CONTAINS or IN");
    }
    const Token& where = tokens_[pos_ - 1];
    try {
      validate_atom(a);
    } catch (const Error& e) {
      throw ParseError(where.line, where.column, "consistent literal", e.what());
    }
    return RuleExpr::make_atom(std::move(a));
  }

  Value literal() {
    const Token& t = peek();
    switch (t.type) {
      case Tok::string: ++pos_; return Value::text(t.text);
      case Tok::code: ++pos_; return Value::code(t.text);
      case Tok::boolean: ++pos_; return Value::boolean(t.text == "true");
      case Tok::number: {
        ++pos_;
        double magnitude = 0;
        const char* first = t.text.data();
        const char* last = first + t.text.size();
        auto [ptr, ec] = std::from_chars(first, last, magnitude);
        if (ec != std::errc{} || ptr != last || !std::isfinite(magnitude)) {
          error(t, "a valid number");
        }
        std::string unit;
        if (peek().type == Tok::ident) {
          unit = next().text;
        }
        return Value::number(magnitude, std::move(unit));
      }
      default: error(t, "a literal");
    }
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace

RuleExpr parse_rule(std::string_view text) {
  Parser parser(Lexer(text).run());
  RuleExpr rule = parser.rule();
  try {
    validate_rule(rule);
  } catch (const Error& e) {
    throw ParseError(1, 1, "well-formed rule", e.what());
  }
  return rule;
}

Value parse_literal(std::string_view text) {
  Parser parser(Lexer(text).run());
  return parser.single_literal();
}

// ---------------------------------------------------------------------------
// Printer

namespace {

std::string print_atom(const Atom& a) {
  std::string out = a.path();
  switch (a.op) {
    case Comparator::in_set: {
      out += " IN {";
      for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (i) out += ", ";
        out += a.values[i].to_literal();
      }
      out += "}";
      return out;
    }
    case Comparator::contains: return out + " CONTAINS " + a.values.front().to_literal();
    default:
      return out + " " + std::string(to_string(a.op)) + " " + a.values.front().to_literal();
  }
}

std::string print_expr(const RuleExpr& e);

std::string print_term(const RuleExpr& child, bool parenthesize) {
  const std::string text = print_expr(child);
  return parenthesize ? "(" + text + ")" : text;
}

std::string print_expr(const RuleExpr& e) {
  using K = RuleExpr::Kind;
  switch (e.kind()) {
    case K::atom: return print_atom(e.atom());
    case K::negation: {
      const K inner = e.first().kind();
      return "NOT " + print_term(e.first(), inner == K::conjunction || inner == K::disjunction);
    }
    case K::conjunction:
    case K::disjunction: {
      const bool is_and = e.kind() == K::conjunction;
      std::string out;
      for (std::size_t i = 0; i < e.children().size(); ++i) {
        const auto& c = e.children()[i];
        if (i) out += is_and ? " AND " : " OR ";
        // Nested n-ary nodes keep their parentheses so the tree shape
        // round-trips; AND under OR needs none because of precedence.
        const bool paren = c.kind() == K::disjunction || (is_and && c.kind() == K::conjunction);
        out += print_term(c, paren);
      }
      return out;
    }
    case K::implies:
    case K::unless: break;
  }
  fail(ErrorCode::validation_error, "IF/UNLESS below the top level");
}

std::string print_body(const RuleExpr& e) {
  if (e.kind() != RuleExpr::Kind::implies) {
    return print_expr(e);
  }
  const RuleExpr& q = e.second();
  std::string consequence = q.kind() == RuleExpr::Kind::negation
                                ? "FORBID " + print_expr(q.first())
                                : print_expr(q);
  return "IF " + print_expr(e.first()) + " THEN " + consequence;
}

}  // namespace

std::string print_rule(const RuleExpr& rule) {
  if (rule.kind() == RuleExpr::Kind::unless) {
    return print_body(rule.first()) + " UNLESS " + print_expr(rule.second());
  }
  return print_body(rule);
}

// ---------------------------------------------------------------------------
// Facts

std::string Claim::text() const {
  const std::string body = path() + " = " + value.to_literal();
  return negated ? "NOT " + body : body;
}

Claim verdict_claim(const std::string& rule_id, Outcome outcome) {
  return Claim{rule_id, "verdict", Value::text(std::string(to_string(outcome))), false};
}

bool is_verdict_claim(const Claim& claim) {
  return claim.attribute == "verdict" && claim.value.kind() == ValueKind::text && !claim.negated;
}

void FactSet::declare_multi_valued(const std::string& path) { multi_valued_.insert(path); }

bool FactSet::is_multi_valued(const std::string& path) const {
  return multi_valued_.count(path) != 0;
}

bool FactSet::try_add(const Fact& fact) {
  auto& slot = values_[{fact.entity, fact.attribute}];
  if (std::find(slot.begin(), slot.end(), fact.value) != slot.end()) {
    return true;
  }
  if (!slot.empty() && !is_multi_valued(fact.path())) {
    return false;
  }
  slot.push_back(fact.value);
  std::sort(slot.begin(), slot.end());
  return true;
}

void FactSet::add(const Fact& fact) {
  if (!try_add(fact)) {
    fail(ErrorCode::validation_error, "conflicting values for single-valued attribute " +
                                          fact.path());
  }
}

void FactSet::add(std::string entity, std::string attribute, Value value) {
  add(Fact{std::move(entity), std::move(attribute), std::move(value)});
}

bool FactSet::erase(const std::string& entity, const std::string& attribute) {
  return values_.erase({entity, attribute}) != 0;
}

bool FactSet::erase(const Fact& fact) {
  auto it = values_.find({fact.entity, fact.attribute});
  if (it == values_.end()) return false;
  auto& slot = it->second;
  auto pos = std::find(slot.begin(), slot.end(), fact.value);
  if (pos == slot.end()) return false;
  slot.erase(pos);
  if (slot.empty()) values_.erase(it);
  return true;
}

const std::vector<Value>* FactSet::find(const std::string& entity,
                                        const std::string& attribute) const {
  auto it = values_.find({entity, attribute});
  if (it == values_.end() || it->second.empty()) return nullptr;
  return &it->second;
}

bool FactSet::contains(const Fact& fact) const {
  const auto* values = find(fact.entity, fact.attribute);
  return values && std::find(values->begin(), values->end(), fact.value) != values->end();
}

bool FactSet::has_path(const std::string& path) const {
  const auto dot = path.find('.');
  if (dot == std::string::npos) return false;
  return find(path.substr(0, dot), path.substr(dot + 1)) != nullptr;
}

std::vector<Fact> FactSet::facts() const {
  std::vector<Fact> out;
  for (const auto& [key, values] : values_) {
    for (const auto& v : values) {
      out.push_back(Fact{key.first, key.second, v});
    }
  }
  return out;
}

std::size_t FactSet::size() const {
  std::size_t n = 0;
  for (const auto& [key, values] : values_) n += values.size();
  return n;
}

// ---------------------------------------------------------------------------
// Evaluation

std::string_view to_string(Truth truth) {
  switch (truth) {
    case Truth::no: return "false";
    case Truth::unknown: return "unknown";
    case Truth::yes: return "true";
  }
  return "unknown";
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::satisfied: return "satisfied";
    case Outcome::violated: return "violated";
    case Outcome::inapplicable: return "inapplicable";
  }
  return "inapplicable";
}

Outcome outcome_from_string(std::string_view text) {
  if (text == "satisfied") return Outcome::satisfied;
  if (text == "violated") return Outcome::violated;
  if (text == "inapplicable") return Outcome::inapplicable;
  fail(ErrorCode::validation_error, "unknown outcome '" + std::string(text) + "'");
}

Truth eval_atom(const Atom& atom, const FactSet& facts) {
  const auto* values = facts.find(atom.entity, atom.attribute);
  if (!values) {
    return Truth::unknown;
  }
  const Value& literal = atom.values.front();
  auto any = [&](auto&& predicate) {
    bool hit = false;
    for (const Value& v : *values) {
      // Evaluate every value so kind mismatches always surface.
      hit = predicate(v) || hit;
    }
    return hit ? Truth::yes : Truth::no;
  };
  switch (atom.op) {
    case Comparator::eq:
    case Comparator::contains:
      return any([&](const Value& v) { return values_equal(v, literal); });
    case Comparator::ne:
      return any([&](const Value& v) { return values_equal(v, literal); }) == Truth::yes
                 ? Truth::no
                 : Truth::yes;
    case Comparator::lt: return any([&](const Value& v) { return compare_values(v, literal) < 0; });
    case Comparator::le: return any([&](const Value& v) { return compare_values(v, literal) <= 0; });
    case Comparator::gt: return any([&](const Value& v) { return compare_values(v, literal) > 0; });
    case Comparator::ge: return any([&](const Value& v) { return compare_values(v, literal) >= 0; });
    case Comparator::in_set:
      return any([&](const Value& v) {
        bool member = false;
        for (const Value& option : atom.values) {
          member = values_equal(v, option) || member;
        }
        return member;
      });
  }
  return Truth::unknown;
}

namespace {

Truth eval_traced(const RuleExpr& e, const FactSet& facts, RuleVerdict* verdict) {
  using K = RuleExpr::Kind;
  switch (e.kind()) {
    case K::atom: {
      const Truth t = eval_atom(e.atom(), facts);
      if (verdict) {
        verdict->trace.push_back({print_atom(e.atom()), t});
        if (t == Truth::yes) verdict->bindings.push_back(e.atom().entity);
      }
      return t;
    }
    case K::negation: {
      const Truth t = eval_traced(e.first(), facts, verdict);
      return static_cast<Truth>(2 - static_cast<int>(t));
    }
    case K::conjunction: {
      Truth acc = Truth::yes;
      for (const auto& c : e.children()) acc = std::min(acc, eval_traced(c, facts, verdict));
      return acc;
    }
    case K::disjunction: {
      Truth acc = Truth::no;
      for (const auto& c : e.children()) acc = std::max(acc, eval_traced(c, facts, verdict));
      return acc;
    }
    case K::implies:
    case K::unless: break;
  }
  fail(ErrorCode::evaluation_error, "IF/UNLESS inside an expression");
}

Outcome from_truth(Truth t) {
  switch (t) {
    case Truth::yes: return Outcome::satisfied;
    case Truth::no: return Outcome::violated;
    case Truth::unknown: return Outcome::inapplicable;
  }
  return Outcome::inapplicable;
}

Outcome body_outcome(const RuleExpr& e, const FactSet& facts, RuleVerdict* verdict) {
  if (e.kind() != RuleExpr::Kind::implies) {
    return from_truth(eval_traced(e, facts, verdict));
  }
  if (eval_traced(e.first(), facts, verdict) != Truth::yes) {
    return Outcome::inapplicable;
  }
  return from_truth(eval_traced(e.second(), facts, verdict));
}

}  // namespace

Truth eval_expr(const RuleExpr& expr, const FactSet& facts) {
  return eval_traced(expr, facts, nullptr);
}

RuleVerdict eval_rule(const RuleExpr& rule, const FactSet& facts) {
  RuleVerdict verdict;
  if (rule.kind() == RuleExpr::Kind::unless) {
    const Outcome base = body_outcome(rule.first(), facts, &verdict);
    if (base == Outcome::inapplicable) {
      verdict.outcome = Outcome::inapplicable;
    } else {
      switch (eval_traced(rule.second(), facts, &verdict)) {
        case Truth::yes: verdict.outcome = Outcome::violated; break;
        case Truth::no: verdict.outcome = base; break;
        case Truth::unknown:
          verdict.outcome = base == Outcome::violated ? Outcome::violated : Outcome::inapplicable;
          break;
      }
    }
  } else {
    verdict.outcome = body_outcome(rule, facts, &verdict);
  }
  std::sort(verdict.bindings.begin(), verdict.bindings.end());
  verdict.bindings.erase(std::unique(verdict.bindings.begin(), verdict.bindings.end()),
                         verdict.bindings.end());
  return verdict;
}

namespace {

const RuleExpr* implication_of(const RuleExpr& rule) {
  const RuleExpr* body = rule.kind() == RuleExpr::Kind::unless ? &rule.first() : &rule;
  return body->kind() == RuleExpr::Kind::implies ? body : nullptr;
}

void collect_literals(const RuleExpr& e, std::vector<Claim>& out) {
  using K = RuleExpr::Kind;
  switch (e.kind()) {
    case K::conjunction:
      for (const auto& c : e.children()) collect_literals(c, out);
      return;
    case K::atom: {
      const Atom& a = e.atom();
      if (a.op == Comparator::eq || a.op == Comparator::contains) {
        out.push_back(Claim{a.entity, a.attribute, a.values.front(), false});
      }
      return;
    }
    case K::negation:
      if (e.first().kind() == K::atom) {
        const Atom& a = e.first().atom();
        if (a.op == Comparator::eq) {
          out.push_back(Claim{a.entity, a.attribute, a.values.front(), true});
        } else if (a.op == Comparator::in_set) {
          for (const Value& v : a.values) out.push_back(Claim{a.entity, a.attribute, v, true});
        }
      }
      return;
    default: return;
  }
}

}  // namespace

Truth rule_premise(const RuleExpr& rule, const FactSet& facts) {
  const RuleExpr* implication = implication_of(rule);
  if (!implication) return Truth::unknown;
  Truth premise = eval_expr(implication->first(), facts);
  if (rule.kind() == RuleExpr::Kind::unless) {
    const Truth exception = eval_expr(rule.second(), facts);
    premise = std::min(premise, static_cast<Truth>(2 - static_cast<int>(exception)));
  }
  return premise;
}

std::vector<Claim> consequence_claims(const RuleExpr& rule) {
  std::vector<Claim> out;
  if (const RuleExpr* implication = implication_of(rule)) {
    collect_literals(implication->second(), out);
  }
  return out;
}

std::set<std::string> derived_paths(const RuleExpr& rule) {
  std::set<std::string> out;
  const RuleExpr* implication = implication_of(rule);
  if (!implication) return out;
  const RuleExpr& q = implication->second();
  auto visit = [&](const RuleExpr& e) {
    if (e.kind() == RuleExpr::Kind::atom && e.atom().op == Comparator::eq) {
      out.insert(e.atom().path());
    }
  };
  if (q.kind() == RuleExpr::Kind::conjunction) {
    for (const auto& c : q.children()) visit(c);
  } else {
    visit(q);
  }
  return out;
}

}  // namespace mmia

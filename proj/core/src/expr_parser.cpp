#include <cctype>
#include <cmath>
#include <charconv>
#include <string>
#include <vector>

#include "bisim/expr.hpp"

namespace bisim {

namespace {

// Recursive descent over the grammar in docs/grammar.md:
//
//   expr     := term (('+' | '-') term)*
//   term     := unary (('*' | '/') unary)*
//   unary    := ('-' | '+') unary | power
//   power    := primary ('^' exponent)*
//   exponent := ('-' | '+') exponent | primary
//   primary  := number | variable | call | '(' expr ')'
class Parser {
 public:
  Parser(std::string_view src, std::span<const FamilySpec> families)
      : src_(src), families_(families) {}

  Expr run() {
    Expr e = expr();
    skip_space();
    if (pos_ != src_.size()) fail("unexpected character '" + std::string(1, src_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }
  [[noreturn]] void fail_at(const std::string& msg, std::size_t at) const {
    throw ParseError(msg, at);
  }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= src_.size()) fail(std::string("expected '") + c + "' but input ended");
      fail(std::string("expected '") + c + "'");
    }
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = lhs + term();
      } else if (accept('-')) {
        lhs = lhs - term();
      } else {
        return lhs;
      }
    }
  }

  Expr term() {
    Expr lhs = unary_expr();
    for (;;) {
      if (accept('*')) {
        lhs = lhs * unary_expr();
      } else if (accept('/')) {
        lhs = lhs / unary_expr();
      } else {
        return lhs;
      }
    }
  }

  Expr unary_expr() {
    if (accept('-')) return -unary_expr();
    if (accept('+')) return unary_expr();
    return power();
  }

  Expr power() {
    Expr base = primary();
    while (accept('^')) base = binary(Op::Pow, base, exponent());
    return base;
  }

  Expr exponent() {
    if (accept('-')) return -exponent();
    if (accept('+')) return exponent();
    return primary();
  }

  Expr primary() {
    skip_space();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  Expr number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        digits();
      } else {
        pos_ = save;
      }
    }
    double value = 0.0;
    auto [end, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (ec != std::errc() || end != src_.data() + pos_) fail_at("malformed number", start);
    if (!std::isfinite(value)) fail_at("number out of range", start);
    return constant(value);
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
      ++pos_;
    }
    const std::string name(src_.substr(start, pos_ - start));
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == '(') return call(name, start);

    const FamilySpec* family = nullptr;
    for (const auto& f : families_) {
      if (f.name == name) family = &f;
    }
    if (!family) fail_at("reference to undeclared family \"" + name + "\"", start);

    if (accept('[')) {
      skip_space();
      const std::size_t index_pos = pos_;
      std::size_t index = 0;
      auto [end, ec] = std::from_chars(src_.data() + pos_, src_.data() + src_.size(), index);
      if (ec != std::errc()) fail("expected a non-negative integer index");
      pos_ = static_cast<std::size_t>(end - src_.data());
      expect(']');
      if (index >= family->length) {
        fail_at("index " + name + "[" + std::to_string(index) + "] out of range (length " +
                    std::to_string(family->length) + ")",
                index_pos);
      }
      return variable(name, index);
    }
    if (family->length != 1) {
      fail_at("family \"" + name + "\" has length " + std::to_string(family->length) +
                  " and needs an index",
              start);
    }
    return variable(name, 0);
  }

  Expr call(const std::string& name, std::size_t start) {
    static constexpr Op kFunctions[] = {Op::Sin, Op::Cos, Op::Exp, Op::Tanh,
                                        Op::Sqrt, Op::Abs, Op::Min, Op::Max};
    Op op = Op::Constant;
    for (Op f : kFunctions) {
      if (function_name(f) == name) op = f;
    }
    if (op == Op::Constant) fail_at("unknown function \"" + name + "\"", start);
    expect('(');
    std::vector<Expr> args{expr()};
    while (accept(',')) args.push_back(expr());
    expect(')');
    if (op == Op::Min || op == Op::Max) {
      if (args.size() < 2) fail_at(name + " needs at least two arguments", start);
      return nary(op, args);
    }
    if (args.size() != 1) fail_at(name + " takes exactly one argument", start);
    return unary(op, args[0]);
  }

  std::string_view src_;
  std::span<const FamilySpec> families_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse(std::string_view source, std::span<const FamilySpec> families) {
  for (std::size_t i = 0; i < families.size(); ++i) {
    for (std::size_t j = i + 1; j < families.size(); ++j) {
      if (families[i].name == families[j].name) {
        throw Error("family \"" + families[i].name + "\" declared twice");
      }
    }
  }
  return Parser(source, families).run();
}

Expr parse(std::string_view source, std::initializer_list<FamilySpec> families) {
  return parse(source, std::span<const FamilySpec>(families.begin(), families.size()));
}

}  // namespace bisim

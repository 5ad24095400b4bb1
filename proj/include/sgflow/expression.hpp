#pragma once

// Small arithmetic expression compiler for user-supplied coefficients and
// potentials. Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := ('+'|'-') unary | power
//   power  := atom ('^' unary)?
//   atom   := number | name | name '(' expr ')' | '(' expr ')'
// Variables are looked up by name in a fixed slot table.

#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sgflow/error.hpp"

namespace sgflow {

class Expression {
 public:
  using Eval = std::function<double(std::span<const double>)>;

  Expression() = default;

  /// Compile `text`; `variables[i]` binds to slot i of the argument span.
  static Expression compile(const std::string& text, std::vector<std::string> variables) {
    Parser p{text, 0, variables};
    Eval e = p.expr();
    p.skip_ws();
    if (p.pos != text.size())
      throw ConfigError("unexpected '" + text.substr(p.pos) + "' in expression '" + text + "'");
    Expression out;
    out.text_ = text;
    out.eval_ = std::move(e);
    out.arity_ = variables.size();
    out.constant_ = !p.uses_variables;
    return out;
  }

  double operator()(std::span<const double> args) const {
    if (args.size() < arity_) throw Error("expression '" + text_ + "' called with too few arguments");
    return eval_(args);
  }
  const std::string& text() const noexcept { return text_; }
  /// True when the expression references none of its variables.
  bool is_constant() const noexcept { return constant_; }

 private:
  struct Parser {
    const std::string& s;
    std::size_t pos;
    const std::vector<std::string>& vars;
    bool uses_variables = false;

    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) { ++pos; return true; }
      return false;
    }
    [[noreturn]] void fail(const std::string& msg) const {
      throw ConfigError(msg + " at position " + std::to_string(pos) + " in '" + s + "'");
    }

    Eval expr() {
      Eval lhs = term();
      for (;;) {
        if (eat('+')) {
          Eval r = term();
          lhs = [l = std::move(lhs), r = std::move(r)](auto a) { return l(a) + r(a); };
        } else if (eat('-')) {
          Eval r = term();
          lhs = [l = std::move(lhs), r = std::move(r)](auto a) { return l(a) - r(a); };
        } else {
          return lhs;
        }
      }
    }
    Eval term() {
      Eval lhs = unary();
      for (;;) {
        if (eat('*')) {
          Eval r = unary();
          lhs = [l = std::move(lhs), r = std::move(r)](auto a) { return l(a) * r(a); };
        } else if (eat('/')) {
          Eval r = unary();
          lhs = [l = std::move(lhs), r = std::move(r)](auto a) { return l(a) / r(a); };
        } else {
          return lhs;
        }
      }
    }
    Eval unary() {
      if (eat('-')) {
        Eval e = unary();
        return [e = std::move(e)](auto a) { return -e(a); };
      }
      if (eat('+')) return unary();
      return power();
    }
    Eval power() {
      Eval base = atom();
      if (eat('^')) {
        Eval ex = unary();
        return [b = std::move(base), e = std::move(ex)](auto a) { return std::pow(b(a), e(a)); };
      }
      return base;
    }
    Eval atom() {
      skip_ws();
      if (pos >= s.size()) fail("unexpected end of expression");
      if (eat('(')) {
        Eval e = expr();
        if (!eat(')')) fail("missing ')'");
        return e;
      }
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        const char* begin = s.c_str() + pos;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        pos += static_cast<std::size_t>(end - begin);
        return [v](auto) { return v; };
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = pos;
        while (pos < s.size() &&
               (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
          ++pos;
        const std::string name = s.substr(start, pos - start);
        if (eat('(')) {
          Eval arg = expr();
          if (!eat(')')) fail("missing ')' after argument of " + name);
          return function(name, std::move(arg));
        }
        if (name == "pi") return [](auto) { return std::numbers::pi; };
        if (name == "e") return [](auto) { return std::numbers::e; };
        for (std::size_t i = 0; i < vars.size(); ++i)
          if (vars[i] == name) {
            uses_variables = true;
            return [i](std::span<const double> a) { return a[i]; };
          }
        fail("unknown identifier '" + name + "'");
      }
      fail(std::string("unexpected character '") + c + "'");
    }
    Eval function(const std::string& name, Eval arg) {
      double (*fn)(double) = nullptr;
      if (name == "sin") fn = [](double x) { return std::sin(x); };
      else if (name == "cos") fn = [](double x) { return std::cos(x); };
      else if (name == "tan") fn = [](double x) { return std::tan(x); };
      else if (name == "exp") fn = [](double x) { return std::exp(x); };
      else if (name == "log") fn = [](double x) { return std::log(x); };
      else if (name == "sqrt") fn = [](double x) { return std::sqrt(x); };
      else if (name == "abs") fn = [](double x) { return std::abs(x); };
      else if (name == "tanh") fn = [](double x) { return std::tanh(x); };
      else fail("unknown function '" + name + "'");
      return [fn, a = std::move(arg)](auto v) { return fn(a(v)); };
    }
  };

  std::string text_;
  Eval eval_;
  std::size_t arity_ = 0;
  bool constant_ = false;
};

/// Split on a delimiter, trimming whitespace from each piece.
inline std::vector<std::string> split_trimmed(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t end = s.find(delim, start);
    std::string piece = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
    const auto b = piece.find_first_not_of(" \t");
    const auto e = piece.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string{} : piece.substr(b, e - b + 1));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace sgflow

#include "simshoot/expr.hpp"

#include <cctype>
#include <cstdlib>

namespace simshoot::expr {

namespace {

struct Parser {
  const std::string& text;
  const std::map<std::string, int>& vars;
  const std::map<std::string, double>& consts;
  size_t pos{0};

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("expression error at position " + std::to_string(pos) + " in \"" + text +
                      "\": " + msg);
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool eat(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  std::unique_ptr<Node> make(Node::Kind k, std::unique_ptr<Node> a = nullptr,
                             std::unique_ptr<Node> b = nullptr) {
    auto n = std::make_unique<Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }

  std::unique_ptr<Node> constant(double v) {
    auto n = std::make_unique<Node>();
    n->kind = Node::Kind::Const;
    n->cval = v;
    return n;
  }

  std::unique_ptr<Node> sum() {
    auto lhs = term();
    while (true) {
      if (eat('+'))
        lhs = make(Node::Kind::Add, std::move(lhs), term());
      else if (eat('-'))
        lhs = make(Node::Kind::Sub, std::move(lhs), term());
      else
        return lhs;
    }
  }

  std::unique_ptr<Node> term() {
    auto lhs = unary();
    while (true) {
      if (eat('*'))
        lhs = make(Node::Kind::Mul, std::move(lhs), unary());
      else if (eat('/'))
        lhs = make(Node::Kind::Div, std::move(lhs), unary());
      else
        return lhs;
    }
  }

  std::unique_ptr<Node> unary() {
    if (eat('-')) return make(Node::Kind::Neg, unary());
    return power();
  }

  std::unique_ptr<Node> power() {
    auto base = primary();
    if (!eat('^')) return base;
    skip_ws();
    bool neg = eat('-');
    skip_ws();
    size_t start = pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos == start) fail("exponent must be an integer literal");
    int e = std::atoi(text.substr(start, pos - start).c_str());
    auto n = make(Node::Kind::Pow, std::move(base));
    n->ipow = neg ? -e : e;
    return n;
  }

  std::unique_ptr<Node> primary() {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end of expression");
    char c = text[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      char* end = nullptr;
      double v = std::strtod(text.c_str() + pos, &end);
      if (end == text.c_str() + pos) fail("malformed number");
      pos = end - text.c_str();
      return constant(v);
    }
    if (c == '(') {
      ++pos;
      auto inner = sum();
      if (!eat(')')) fail("missing closing parenthesis");
      return inner;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos;
      while (pos < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
        ++pos;
      std::string name = text.substr(start, pos - start);
      if (peek() == '(') {
        ++pos;
        auto arg = sum();
        if (!eat(')')) fail("missing closing parenthesis after " + name);
        if (name == "sqrt") return make(Node::Kind::Sqrt, std::move(arg));
        if (name == "exp") return make(Node::Kind::Exp, std::move(arg));
        if (name == "log") return make(Node::Kind::Log, std::move(arg));
        if (name == "sin") return make(Node::Kind::Sin, std::move(arg));
        if (name == "cos") return make(Node::Kind::Cos, std::move(arg));
        fail("unknown function " + name);
      }
      if (auto it = vars.find(name); it != vars.end()) {
        auto n = std::make_unique<Node>();
        n->kind = Node::Kind::Var;
        n->var = it->second;
        return n;
      }
      if (auto it = consts.find(name); it != consts.end()) return constant(it->second);
      fail("unknown symbol " + name);
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

}  // namespace

std::unique_ptr<Node> parse(const std::string& text, const std::map<std::string, int>& variables,
                            const std::map<std::string, double>& constants) {
  Parser p{text, variables, constants};
  auto root = p.sum();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing input");
  return root;
}

}  // namespace simshoot::expr

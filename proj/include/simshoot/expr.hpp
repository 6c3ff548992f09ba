#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>

#include "simshoot/common.hpp"
#include "simshoot/dual.hpp"

// Tiny arithmetic expression trees for models defined in configuration
// files. Supports + - * / unary minus, ^ with integer literal exponents,
// parentheses, and the 1-argument calls sqrt/exp/log/sin/cos. Named
// constants are folded at parse time; named variables index into the
// stacked [z_s; z_f; u] argument. Evaluation is generic over the AD scalar.

namespace simshoot::expr {

struct Node {
  enum class Kind { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Sqrt, Exp, Log, Sin, Cos };

  Kind kind{Kind::Const};
  double cval{0.0};
  int var{-1};
  int ipow{0};
  std::unique_ptr<Node> a, b;

  template <class T>
  T eval(std::span<const T> vars) const {
    switch (kind) {
      case Kind::Const:
        return T(cval);
      case Kind::Var:
        return vars[var];
      case Kind::Add:
        return a->eval(vars) + b->eval(vars);
      case Kind::Sub:
        return a->eval(vars) - b->eval(vars);
      case Kind::Mul:
        return a->eval(vars) * b->eval(vars);
      case Kind::Div:
        return a->eval(vars) / b->eval(vars);
      case Kind::Neg:
        return -a->eval(vars);
      case Kind::Pow:
        return ad::pow_int(a->eval(vars), ipow);
      case Kind::Sqrt:
        return ad::sqrt(a->eval(vars));
      case Kind::Exp:
        return ad::exp(a->eval(vars));
      case Kind::Log:
        return ad::log(a->eval(vars));
      case Kind::Sin:
        return ad::sin(a->eval(vars));
      case Kind::Cos:
        return ad::cos(a->eval(vars));
    }
    throw InputError("corrupt expression node");
  }
};

/// Parse `text` over the given variable name -> index map and named
/// constants. Throws ConfigError on syntax errors or unknown symbols.
std::unique_ptr<Node> parse(const std::string& text, const std::map<std::string, int>& variables,
                            const std::map<std::string, double>& constants);

}  // namespace simshoot::expr

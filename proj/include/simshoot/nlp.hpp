#pragma once

#include "simshoot/common.hpp"

// Problem-side interface between transcription and the NLP solver:
//   min f(x)   s.t.   c(x) = 0,   lo <= x <= up
// with equality constraints only; inequalities enter through the variable
// box. Derivative calls are grouped the way the solver consumes them: one
// value pass per trial point, one first-order pass per accepted iterate.

namespace simshoot::nlpsolve {

struct ProblemValues {
  double objective{0.0};
  Vec constraints;
};

struct FirstOrder {
  Vec gradient;   // objective gradient, size n_vars
  SpMat jacobian;  // constraint Jacobian, n_eq x n_vars
};

class Problem {
 public:
  virtual ~Problem() = default;

  virtual int n_vars() const = 0;
  virtual int n_eq() const = 0;
  virtual const Vec& lower() const = 0;
  virtual const Vec& upper() const = 0;
  virtual Vec initial_guess() const = 0;

  /// Objective and constraint values. Throws EvalError when the point is not
  /// evaluable (integration overflow, inner solve divergence); a returned
  /// result is guaranteed finite. The solver treats EvalError from a trial
  /// point as a step rejection, not a fatal failure.
  virtual ProblemValues values(const Vec& x) const = 0;

  virtual FirstOrder first_order(const Vec& x) const = 0;

  /// Full symmetric Hessian of sigma * f(x) + lambda . c(x).
  virtual SpMat hessian_lagrangian(const Vec& x, double sigma, const Vec& lambda) const = 0;
};

}  // namespace simshoot::nlpsolve

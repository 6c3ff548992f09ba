#pragma once

// Primal-dual interior-point solver for equality-constrained NLPs with box
// bounds,
//
//   min f(x)  s.t.  c(x) = 0,  l <= x <= u.
//
// Bounds are handled without slacks through a monotone (Fiacco-McCormick)
// log-barrier with dual variables z_l, z_u >= 0.  Each barrier subproblem is
// solved by Newton steps on the primal-dual system; the symmetric KKT matrix
//
//   [ W + Sigma + delta_x I   J^T        ]
//   [ J                      -delta_c I  ]
//
// is factorized sparsely (LDL^T) and delta_x is escalated until the inertia
// is (n, m).  Steps are cut back by the fraction-to-boundary rule and an
// Armijo search on the l1 merit function.  When no acceptable step exists the
// solver falls into a violation-minimization phase (damped Gauss-Newton on
// 1/2 ||c||^2 under the bound barrier); if that phase stalls at a nonzero
// violation the problem is declared locally infeasible.
//
// The iteration runs on a gradient-equilibrated copy of the problem: scale
// factors fixed at the start point cap the objective gradient and each
// constraint row gradient at sup norm 100.  Results are reported for the
// original problem (multipliers are divided back out), and the convergence
// test requires the raw constraint violation, not the scaled one, to meet
// kkt_tol.
//
// Evaluation failures (EvalError) at trial points reject the step; at the
// current iterate they propagate to the caller.

#include <iosfwd>
#include <optional>

#include "simshoot/common.hpp"
#include "simshoot/nlp.hpp"

namespace simshoot::nlpsolve {

enum class Status { Converged, MaxIter, LocallyInfeasible, LineSearchFailure };

const char* to_string(Status s);

struct SolverOptions {
  double kkt_tol = 1e-8;
  int max_iter = 300;
  double mu0 = 0.1;         // initial barrier parameter
  double mu_reduce = 0.2;   // multiplicative barrier reduction
  double tau = 0.995;       // fraction-to-boundary
  double reg0 = 1e-4;       // first inertia-correction increment
  double reg_scale = 10.0;  // escalation factor for the increment
  std::ostream* log = nullptr;  // per-iteration lines when set

  void validate() const;  // throws InputError on out-of-range values
};

struct SolverResult {
  Vec variables;
  Vec multipliers;  // equality duals
  Vec z_lower;      // duals of x >= l (zero where l is infinite)
  Vec z_upper;      // duals of x <= u (zero where u is infinite)
  double objective = 0.0;
  double kkt_residual = kInf;  // barrier-free KKT error at the final point
  Status status = Status::MaxIter;
  int iterations = 0;
  double wall_time = 0.0;  // seconds
};

// Solves the problem from `warm_start` when given, otherwise from the
// problem's own initial guess.  The start point is pushed strictly inside the
// bounds before iterating.
SolverResult solve(const Problem& nlp, const SolverOptions& opts = {},
                   const std::optional<Vec>& warm_start = std::nullopt);

}  // namespace simshoot::nlpsolve

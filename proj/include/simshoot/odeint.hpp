#pragma once

#include <Eigen/LU>

#include <span>
#include <vector>

#include "simshoot/butcher.hpp"
#include "simshoot/common.hpp"
#include "simshoot/fn.hpp"

// One-step integrators over a control interval. The dynamics and the
// running cost are evaluated together through one callable
//   fc : [x; u] -> [f(x,u); L(x,u)]   (n+1 outputs)
// so the cost rides along as a quadrature state integrated by the same
// tableau, and callers whose dynamics hide an inner solve (reduced slow
// dynamics) pay exactly one solve per stage point. The control is held
// constant across the step.
//
// Both steps are generic over the AD scalar, which makes them
// differentiable through: seeding x or u with duals propagates exact
// derivatives of the step map. For the implicit step this works because the
// stage iteration also contracts the seeded derivative components (the
// iteration matrix built from value parts is the exact value-space stage
// Jacobian, so once values converge each derivative order converges in one
// further sweep); the residual test below spans all components.

namespace simshoot::odeint {

template <class T>
struct Step {
  std::vector<T> state_next;
  T quadrature_increment{};
  int newton_iters{0};
  std::vector<std::vector<T>> stages;  // stage state values, innermost size n
};

/// Step result at plain doubles, for callers outside the AD machinery.
struct StepResult {
  Vec state_next;
  double quadrature_increment{0.0};
  int newton_iters{0};
};

struct ImplicitOptions {
  double newton_tol{1e-10};
  int max_newton_iters{50};
};

namespace detail {

template <class T>
void check_finite(std::span<const T> v, const char* what) {
  for (const auto& x : v)
    if (!ad::all_finite(x)) throw EvalError(std::string("integration overflow: ") + what);
}

/// Triangular substitution with real LU factors applied to a dual-valued
/// right-hand side (real matrix, dual vector).
template <class T>
void lu_solve_in_place(const Eigen::PartialPivLU<Mat>& lu, std::vector<T>& rhs) {
  const int n = static_cast<int>(rhs.size());
  const Mat& LU = lu.matrixLU();
  const auto& perm = lu.permutationP().indices();
  std::vector<T> y(n);
  // Eigen permutation convention: (P v)[perm[i]] = v[i]
  for (int i = 0; i < n; ++i) y[perm[i]] = std::move(rhs[i]);
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < i; ++j) y[i] -= LU(i, j) * y[j];
  for (int i = n - 1; i >= 0; --i) {
    for (int j = i + 1; j < n; ++j) y[i] -= LU(i, j) * y[j];
    y[i] = y[i] / LU(i, i);
  }
  rhs = std::move(y);
}

}  // namespace detail

/// Classic RK4 step on fc : [x; u] -> [f; L].
template <class T, class FC>
Step<T> rk4_step(const FC& fc, std::span<const T> x, std::span<const T> u, double h) {
  const int n = static_cast<int>(x.size());
  const int nu = static_cast<int>(u.size());
  std::vector<T> xu(n + nu);
  for (int i = 0; i < nu; ++i) xu[n + i] = u[i];
  std::vector<T> fL(n + 1);
  auto eval = [&](const std::vector<T>& xs) {
    for (int i = 0; i < n; ++i) xu[i] = xs[i];
    fc(std::span<const T>(xu), std::span<T>(fL));
    detail::check_finite(std::span<const T>(fL), "non-finite stage derivative");
  };

  std::vector<T> x0(x.begin(), x.end());
  std::vector<T> k1(n), k2(n), k3(n), k4(n), xs(n);
  T q1, q2, q3, q4;

  eval(x0);
  for (int i = 0; i < n; ++i) k1[i] = fL[i];
  q1 = fL[n];
  for (int i = 0; i < n; ++i) xs[i] = x0[i] + (0.5 * h) * k1[i];
  std::vector<T> s2 = xs;
  eval(xs);
  for (int i = 0; i < n; ++i) k2[i] = fL[i];
  q2 = fL[n];
  for (int i = 0; i < n; ++i) xs[i] = x0[i] + (0.5 * h) * k2[i];
  std::vector<T> s3 = xs;
  eval(xs);
  for (int i = 0; i < n; ++i) k3[i] = fL[i];
  q3 = fL[n];
  for (int i = 0; i < n; ++i) xs[i] = x0[i] + h * k3[i];
  std::vector<T> s4 = xs;
  eval(xs);
  for (int i = 0; i < n; ++i) k4[i] = fL[i];
  q4 = fL[n];

  Step<T> r;
  r.state_next.resize(n);
  for (int i = 0; i < n; ++i)
    r.state_next[i] = x0[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  r.quadrature_increment = (h / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4);
  detail::check_finite(std::span<const T>(r.state_next), "non-finite state after rk4 step");
  r.stages = {std::move(x0), std::move(s2), std::move(s3), std::move(s4)};
  return r;
}

/// Radau IIA step on fc : [x; u] -> [f; L]. Full Newton on the stage states
/// with the exact stage Jacobian rebuilt every iteration; convergence is the
/// sup norm over all residual components (including seeded derivative
/// components) falling below newton_tol, each component measured relative
/// to 1 + the magnitude of the matching stage component.
template <class T, class FC>
Step<T> radau_step(const FC& fc, std::span<const T> x, std::span<const T> u, double h,
                   const ButcherTableau& tab, const ImplicitOptions& opt = {}) {
  const int n = static_cast<int>(x.size());
  const int nu = static_cast<int>(u.size());
  const int s = static_cast<int>(tab.b.size());

  // stage states, initialized at the interval start (constant predictor)
  std::vector<std::vector<T>> X(s, std::vector<T>(x.begin(), x.end()));
  std::vector<std::vector<T>> F_(s, std::vector<T>(n + 1));
  std::vector<T> xu(n + nu);
  for (int i = 0; i < nu; ++i) xu[n + i] = u[i];
  auto eval = [&](const std::vector<T>& xs, std::vector<T>& out) {
    for (int i = 0; i < n; ++i) xu[i] = xs[i];
    fc(std::span<const T>(xu), std::span<T>(out));
    detail::check_finite(std::span<const T>(out), "non-finite radau stage derivative");
  };

  Vec uv(nu);
  for (int i = 0; i < nu; ++i) uv[i] = ad::value_of(u[i]);

  // value-space Jacobian of f w.r.t. the state at a stage value
  auto stage_jacobian = [&](const std::vector<T>& xs) {
    std::vector<ad::Dual1> in(n + nu);
    for (int i = 0; i < n; ++i) in[i] = ad::Dual1::seed(ad::value_of(xs[i]), i, n);
    for (int i = 0; i < nu; ++i) in[n + i] = ad::Dual1(uv[i]);
    std::vector<ad::Dual1> out(n + 1);
    fc(std::span<const ad::Dual1>(in), std::span<ad::Dual1>(out));
    Mat J = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
      if (out[i].partials.size()) J.row(i) = out[i].partials.transpose();
    return J;
  };

  std::vector<T> R(s * n);
  int iters = 0;
  double res = kInf;
  bool converged = false;
  for (; iters <= opt.max_newton_iters; ++iters) {
    for (int si = 0; si < s; ++si) eval(X[si], F_[si]);
    res = 0.0;
    for (int si = 0; si < s; ++si)
      for (int i = 0; i < n; ++i) {
        T r = X[si][i] - x[i];
        for (int sj = 0; sj < s; ++sj) r -= (h * tab.A(si, sj)) * F_[sj][i];
        res = std::max(res, ad::scaled_abs_max(r, X[si][i]));
        R[si * n + i] = std::move(r);
      }
    if (!std::isfinite(res)) throw EvalError("integration overflow: radau residual non-finite");
    if (res <= opt.newton_tol) {
      converged = true;
      break;
    }
    if (iters == opt.max_newton_iters) break;

    Mat M = Mat::Identity(s * n, s * n);
    for (int sj = 0; sj < s; ++sj) {
      Mat J = stage_jacobian(X[sj]);
      for (int si = 0; si < s; ++si)
        M.block(si * n, sj * n, n, n) -= (h * tab.A(si, sj)) * J;
    }
    Eigen::PartialPivLU<Mat> lu(M);
    detail::lu_solve_in_place(lu, R);
    for (int si = 0; si < s; ++si)
      for (int i = 0; i < n; ++i) X[si][i] -= R[si * n + i];
  }
  if (!converged)
    throw EvalError("implicit step failed to converge: residual " + std::to_string(res) +
                    " after " + std::to_string(iters) + " iterations");

  Step<T> r;
  // stiffly accurate: the step lands exactly on the final stage value
  r.state_next = X[s - 1];
  r.newton_iters = iters;
  T quad(0.0);
  for (int si = 0; si < s; ++si) quad += (h * tab.b[si]) * F_[si][n];
  r.quadrature_increment = std::move(quad);
  r.stages = std::move(X);
  return r;
}

/// Integrator selection shared by transcription and forward checks.
enum class Scheme { RK4, Radau };

struct Integrator {
  Scheme scheme{Scheme::Radau};
  double newton_tol{1e-10};
  int max_newton_iters{50};
  int steps_per_interval{1};
};

/// Advance one control interval (steps_per_interval sub-steps, control held
/// constant), accumulating the quadrature increment.
template <class T, class FC>
Step<T> interval_step(const FC& fc, std::span<const T> x, std::span<const T> u, double h_interval,
                      const Integrator& integ, const ButcherTableau& tab) {
  const int steps = std::max(1, integ.steps_per_interval);
  const double h = h_interval / steps;
  ImplicitOptions opt{integ.newton_tol, integ.max_newton_iters};
  Step<T> acc;
  acc.state_next.assign(x.begin(), x.end());
  acc.quadrature_increment = T(0.0);
  for (int k = 0; k < steps; ++k) {
    Step<T> st;
    if (integ.scheme == Scheme::RK4)
      st = rk4_step<T>(fc, std::span<const T>(acc.state_next), u, h);
    else
      st = radau_step<T>(fc, std::span<const T>(acc.state_next), u, h, tab, opt);
    acc.state_next = std::move(st.state_next);
    acc.quadrature_increment = acc.quadrature_increment + st.quadrature_increment;
    acc.newton_iters += st.newton_iters;
  }
  return acc;
}

namespace detail {

/// Stack separate dynamics and cost callables into the combined fc form.
template <class F, class G>
auto combine(const F& f, const G& L, int n) {
  return [&f, &L, n](auto in, auto out) {
    using S = std::decay_t<decltype(out[0])>;
    f(in, out.first(n));
    std::vector<S> cost(1);
    L(in, std::span<S>(cost));
    out[n] = std::move(cost[0]);
  };
}

}  // namespace detail

// Double-precision convenience wrappers taking dynamics and cost separately.

inline StepResult rk4_step(const ad::VecFn& f, const ad::VecFn& L, const Vec& x, const Vec& u,
                           double h) {
  const int n = static_cast<int>(x.size());
  std::vector<double> xs(x.data(), x.data() + n);
  std::vector<double> us(u.data(), u.data() + u.size());
  auto fc = detail::combine(f, L, n);
  Step<double> st = rk4_step<double>(fc, std::span<const double>(xs), std::span<const double>(us), h);
  StepResult r;
  r.state_next = Eigen::Map<const Vec>(st.state_next.data(), n);
  r.quadrature_increment = st.quadrature_increment;
  return r;
}

inline StepResult radau_step(const ad::VecFn& f, const ad::VecFn& L, const Vec& x, const Vec& u,
                             double h, const ImplicitOptions& opt = {}) {
  const int n = static_cast<int>(x.size());
  std::vector<double> xs(x.data(), x.data() + n);
  std::vector<double> us(u.data(), u.data() + u.size());
  ButcherTableau tab = radau_iia_tableau();
  auto fc = detail::combine(f, L, n);
  Step<double> st =
      radau_step<double>(fc, std::span<const double>(xs), std::span<const double>(us), h, tab, opt);
  StepResult r;
  r.state_next = Eigen::Map<const Vec>(st.state_next.data(), n);
  r.quadrature_increment = st.quadrature_increment;
  r.newton_iters = st.newton_iters;
  return r;
}

}  // namespace simshoot::odeint

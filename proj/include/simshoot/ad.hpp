#pragma once

#include <span>
#include <vector>

#include "simshoot/common.hpp"
#include "simshoot/fn.hpp"

// Forward-mode derivative drivers. All of them seed dense duals and read the
// propagated derivatives back out; there is no taping. Derivative storage is
// dense per call, sized by the (small) argument dimension.

namespace simshoot::ad {

namespace detail_lie {

// K-th time derivative of the state along x' = f(x), by recursive Lie
// differentiation: the (K)-th derivative is the directional derivative of
// the (K-1)-th along f, evaluated with one extra level of Dual nesting.
template <int K, class T, class F>
std::vector<T> kth(const F& f, std::span<const T> x) {
  const int n = static_cast<int>(x.size());
  if constexpr (K == 1) {
    std::vector<T> out(n);
    f(x, std::span<T>(out));
    return out;
  } else {
    std::vector<T> fx(n);
    f(x, std::span<T>(fx));
    std::vector<Dual<T>> xd(n);
    for (int i = 0; i < n; ++i) xd[i] = Dual<T>(x[i], fx[i]);
    std::vector<Dual<T>> r = kth<K - 1, Dual<T>>(f, std::span<const Dual<T>>(xd));
    std::vector<T> out(n);
    for (int i = 0; i < n; ++i) out[i] = std::move(r[i].deriv);
    return out;
  }
}

}  // namespace detail_lie

/// m-th time derivative of the state along x' = f(x), generic over the base
/// scalar (so the result stays differentiable w.r.t. outer seeds). m in 1..4.
template <class T, class F>
std::vector<T> lie_derivative(const F& f, std::span<const T> x, int m) {
  switch (m) {
    case 1:
      return detail_lie::kth<1, T>(f, x);
    case 2:
      return detail_lie::kth<2, T>(f, x);
    case 3:
      return detail_lie::kth<3, T>(f, x);
    case 4:
      return detail_lie::kth<4, T>(f, x);
    default:
      throw InputError("time derivative order must be in 1..4, got " + std::to_string(m));
  }
}

/// Second time derivative only. Unlike lie_derivative this instantiates a
/// single fixed nesting depth, so it stays safe to call at scalars that are
/// already nested duals.
template <class T, class F>
std::vector<T> second_time_derivative(const F& f, std::span<const T> x) {
  return detail_lie::kth<2, T>(f, x);
}

/// Jacobian of a callable f : R^n -> R^m at x. n_out rows, x.size() columns.
template <class F>
Mat jacobian(const F& f, const Vec& x, int n_out) {
  const int n = static_cast<int>(x.size());
  std::vector<Dual1> in(n);
  for (int i = 0; i < n; ++i) in[i] = Dual1::seed(x[i], i, n);
  std::vector<Dual1> out(n_out);
  f(std::span<const Dual1>(in), std::span<Dual1>(out));
  Mat J = Mat::Zero(n_out, n);
  for (int i = 0; i < n_out; ++i)
    if (out[i].partials.size()) J.row(i) = out[i].partials.transpose();
  return J;
}

inline Mat jacobian(const VecFn& f, const Vec& x) {
  if (static_cast<int>(x.size()) != f.n_in())
    throw InputError("jacobian: argument size does not match function arity");
  return jacobian(f, x, f.n_out());
}

/// Gradient of a scalar-valued callable at x.
template <class F>
Vec gradient(const F& f, const Vec& x) {
  Mat J = jacobian(f, x, 1);
  return J.row(0).transpose();
}

/// Time derivatives 1..m of the state along x' = f(x), evaluated at doubles.
/// Entry [k-1] holds the k-th derivative.
template <class F>
std::vector<Vec> time_derivatives(const F& f, const Vec& x, int m) {
  if (m < 1 || m > 4)
    throw InputError("time derivative order must be in 1..4, got " + std::to_string(m));
  const int n = static_cast<int>(x.size());
  std::vector<double> xs(x.data(), x.data() + n);
  std::vector<Vec> result;
  result.reserve(m);
  for (int k = 1; k <= m; ++k) {
    std::vector<double> dk = lie_derivative<double>(f, std::span<const double>(xs), k);
    result.push_back(Eigen::Map<const Vec>(dk.data(), n));
  }
  return result;
}

/// Value, gradient, and Hessian of a scalar-valued callable in one sweep.
template <class F>
Dual2 second_order(const F& f, const Vec& x) {
  const int n = static_cast<int>(x.size());
  std::vector<Dual2> in(n);
  for (int i = 0; i < n; ++i) in[i] = Dual2::seed(x[i], i, n);
  std::vector<Dual2> out(1);
  f(std::span<const Dual2>(in), std::span<Dual2>(out));
  if (out[0].grad.size() == 0) out[0].grad = Vec::Zero(n);
  if (out[0].hess.size() == 0) out[0].hess = Mat::Zero(n, n);
  return std::move(out[0]);
}

/// Hessian of a scalar-valued callable at x.
template <class F>
Mat hessian(const F& f, const Vec& x) {
  return second_order(f, x).hess;
}

/// Hessian of sigma * objective(x) + lambda . constraints(x). The objective
/// must be scalar-valued; multipliers must match the constraint count.
inline Mat hessian_lagrangian(const VecFn& objective, const VecFn& constraints, const Vec& x,
                              const Vec& lambda, double sigma = 1.0) {
  if (objective.n_out() != 1) throw InputError("hessian_lagrangian: objective must be scalar");
  if (static_cast<int>(lambda.size()) != constraints.n_out())
    throw InputError("hessian_lagrangian: multiplier count does not match constraints");
  if (static_cast<int>(x.size()) != objective.n_in() ||
      static_cast<int>(x.size()) != constraints.n_in())
    throw InputError("hessian_lagrangian: argument size does not match function arity");
  const int n = static_cast<int>(x.size());
  std::vector<Dual2> in(n);
  for (int i = 0; i < n; ++i) in[i] = Dual2::seed(x[i], i, n);
  std::vector<Dual2> obj(1);
  objective.eval(std::span<const Dual2>(in), std::span<Dual2>(obj));
  std::vector<Dual2> con(constraints.n_out());
  constraints.eval(std::span<const Dual2>(in), std::span<Dual2>(con));
  Dual2 lag = sigma * obj[0];
  for (int i = 0; i < constraints.n_out(); ++i) lag += lambda[i] * con[i];
  if (lag.hess.size() == 0) return Mat::Zero(n, n);
  return lag.hess;
}

}  // namespace simshoot::ad

#pragma once

#include <Eigen/Core>

#include <cmath>

// Forward-mode AD scalar types.
//
// Three shapes cover every derivative this project needs:
//   Dual<T>  one directional derivative; nests recursively, so
//            Dual<Dual<double>> carries two independent directions.
//            Used for Lie/time derivatives where each differentiation
//            level is a single direction (along the vector field).
//   Dual1    value plus a dense partials vector (seed dimension set by
//            the caller). Used for Jacobians and gradients of the small
//            per-interval blocks.
//   Dual2    value, gradient, and symmetric Hessian, all propagated in
//            one forward sweep. Used for exact Lagrangian Hessians.
//
// A size-0 partials vector (or gradient/Hessian) means "zero of whatever
// seed dimension is in play"; constants never allocate. All binary ops
// honor that convention.

namespace simshoot::ad {

namespace detail {

/// dst += c * src, treating size-0 operands as zeros.
inline void acc(Eigen::VectorXd& dst, double c, const Eigen::VectorXd& src) {
  if (src.size() == 0 || c == 0.0) return;
  if (dst.size() == 0)
    dst = c * src;
  else
    dst.noalias() += c * src;
}

inline void acc(Eigen::MatrixXd& dst, double c, const Eigen::MatrixXd& src) {
  if (src.size() == 0 || c == 0.0) return;
  if (dst.size() == 0)
    dst = c * src;
  else
    dst.noalias() += c * src;
}

/// dst += c * (a b^T + b a^T); keeps symmetric accumulation in one place.
inline void acc_outer(Eigen::MatrixXd& dst, double c, const Eigen::VectorXd& a,
                      const Eigen::VectorXd& b) {
  if (a.size() == 0 || b.size() == 0 || c == 0.0) return;
  if (dst.size() == 0) dst = Eigen::MatrixXd::Zero(a.size(), b.size());
  dst.noalias() += c * a * b.transpose();
  dst.noalias() += c * b * a.transpose();
}

/// max_i |r_i| / (1 + |x_i|), with x entries past its length read as zero.
inline double scaled_sup(const Eigen::VectorXd& r, const Eigen::VectorXd& x) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    m = std::max(m, std::abs(r[i]) / (1.0 + (i < x.size() ? std::abs(x[i]) : 0.0)));
  return m;
}

inline double scaled_sup(const Eigen::MatrixXd& r, const Eigen::MatrixXd& x) {
  double m = 0.0;
  for (Eigen::Index j = 0; j < r.cols(); ++j)
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      double d = (i < x.rows() && j < x.cols()) ? std::abs(x(i, j)) : 0.0;
      m = std::max(m, std::abs(r(i, j)) / (1.0 + d));
    }
  return m;
}

}  // namespace detail

template <class T>
struct Dual {
  using inner_type = T;

  T value{};
  T deriv{};

  Dual() = default;
  Dual(double v) : value(v), deriv() {}  // NOLINT: implicit by design
  Dual(T v, T d) : value(std::move(v)), deriv(std::move(d)) {}
};

// ---- Dual<T> arithmetic (recursive over T) ----

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.value + b.value, a.deriv + b.deriv};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.value - b.value, a.deriv - b.deriv};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.value, -a.deriv};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.value * b.value, a.value * b.deriv + a.deriv * b.value};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = a.value / b.value;
  return {q, (a.deriv - q * b.deriv) / b.value};
}

template <class T>
Dual<T> operator+(const Dual<T>& a, double b) {
  return {a.value + b, a.deriv};
}
template <class T>
Dual<T> operator+(double a, const Dual<T>& b) {
  return b + a;
}
template <class T>
Dual<T> operator-(const Dual<T>& a, double b) {
  return {a.value - b, a.deriv};
}
template <class T>
Dual<T> operator-(double a, const Dual<T>& b) {
  return {a - b.value, -b.deriv};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, double b) {
  return {a.value * b, a.deriv * b};
}
template <class T>
Dual<T> operator*(double a, const Dual<T>& b) {
  return b * a;
}
template <class T>
Dual<T> operator/(const Dual<T>& a, double b) {
  return {a.value / b, a.deriv / b};
}
template <class T>
Dual<T> operator/(double a, const Dual<T>& b) {
  T q = a / b.value;
  return {q, -q * b.deriv / b.value};
}

template <class T>
Dual<T>& operator+=(Dual<T>& a, const Dual<T>& b) {
  a = a + b;
  return a;
}
template <class T>
Dual<T>& operator-=(Dual<T>& a, const Dual<T>& b) {
  a = a - b;
  return a;
}
template <class T>
Dual<T>& operator*=(Dual<T>& a, const Dual<T>& b) {
  a = a * b;
  return a;
}

// ---- Dual1: dense first-order partials ----

struct Dual1 {
  double value{0.0};
  Eigen::VectorXd partials;  // size 0 == zero

  Dual1() = default;
  Dual1(double v) : value(v) {}  // NOLINT: implicit by design
  Dual1(double v, Eigen::VectorXd p) : value(v), partials(std::move(p)) {}

  /// Unit seed in direction i of an n-dimensional space.
  static Dual1 seed(double v, int i, int n) {
    Dual1 r(v, Eigen::VectorXd::Zero(n));
    r.partials[i] = 1.0;
    return r;
  }
};

inline Dual1 operator+(const Dual1& a, const Dual1& b) {
  Dual1 r(a.value + b.value, a.partials);
  detail::acc(r.partials, 1.0, b.partials);
  return r;
}
inline Dual1 operator-(const Dual1& a, const Dual1& b) {
  Dual1 r(a.value - b.value, a.partials);
  detail::acc(r.partials, -1.0, b.partials);
  return r;
}
inline Dual1 operator-(const Dual1& a) { return {-a.value, -a.partials}; }
inline Dual1 operator*(const Dual1& a, const Dual1& b) {
  Dual1 r(a.value * b.value);
  detail::acc(r.partials, b.value, a.partials);
  detail::acc(r.partials, a.value, b.partials);
  return r;
}
inline Dual1 operator/(const Dual1& a, const Dual1& b) {
  double q = a.value / b.value;
  Dual1 r(q);
  detail::acc(r.partials, 1.0 / b.value, a.partials);
  detail::acc(r.partials, -q / b.value, b.partials);
  return r;
}

inline Dual1 operator+(const Dual1& a, double b) { return {a.value + b, a.partials}; }
inline Dual1 operator+(double a, const Dual1& b) { return b + a; }
inline Dual1 operator-(const Dual1& a, double b) { return {a.value - b, a.partials}; }
inline Dual1 operator-(double a, const Dual1& b) { return {a - b.value, -b.partials}; }
inline Dual1 operator*(const Dual1& a, double b) { return {a.value * b, b * a.partials}; }
inline Dual1 operator*(double a, const Dual1& b) { return b * a; }
inline Dual1 operator/(const Dual1& a, double b) { return {a.value / b, a.partials / b}; }
inline Dual1 operator/(double a, const Dual1& b) {
  double q = a / b.value;
  Dual1 r(q);
  detail::acc(r.partials, -q / b.value, b.partials);
  return r;
}

inline Dual1& operator+=(Dual1& a, const Dual1& b) {
  a.value += b.value;
  detail::acc(a.partials, 1.0, b.partials);
  return a;
}
inline Dual1& operator-=(Dual1& a, const Dual1& b) {
  a.value -= b.value;
  detail::acc(a.partials, -1.0, b.partials);
  return a;
}
inline Dual1& operator*=(Dual1& a, const Dual1& b) {
  a = a * b;
  return a;
}

// ---- Dual2: dense second-order propagation ----

struct Dual2 {
  double value{0.0};
  Eigen::VectorXd grad;  // size 0 == zero
  Eigen::MatrixXd hess;  // size 0 == zero; symmetric by construction

  Dual2() = default;
  Dual2(double v) : value(v) {}  // NOLINT: implicit by design
  Dual2(double v, Eigen::VectorXd g, Eigen::MatrixXd h)
      : value(v), grad(std::move(g)), hess(std::move(h)) {}

  static Dual2 seed(double v, int i, int n) {
    Dual2 r;
    r.value = v;
    r.grad = Eigen::VectorXd::Zero(n);
    r.grad[i] = 1.0;
    return r;
  }
};

inline Dual2 operator+(const Dual2& a, const Dual2& b) {
  Dual2 r(a.value + b.value, a.grad, a.hess);
  detail::acc(r.grad, 1.0, b.grad);
  detail::acc(r.hess, 1.0, b.hess);
  return r;
}
inline Dual2 operator-(const Dual2& a, const Dual2& b) {
  Dual2 r(a.value - b.value, a.grad, a.hess);
  detail::acc(r.grad, -1.0, b.grad);
  detail::acc(r.hess, -1.0, b.hess);
  return r;
}
inline Dual2 operator-(const Dual2& a) { return {-a.value, -a.grad, -a.hess}; }
inline Dual2 operator*(const Dual2& a, const Dual2& b) {
  Dual2 r(a.value * b.value);
  detail::acc(r.grad, b.value, a.grad);
  detail::acc(r.grad, a.value, b.grad);
  detail::acc(r.hess, b.value, a.hess);
  detail::acc(r.hess, a.value, b.hess);
  detail::acc_outer(r.hess, 1.0, a.grad, b.grad);
  return r;
}

/// Unary chain rule: f(x) with first and second derivative values at x.value.
inline Dual2 chain(const Dual2& x, double f, double df, double ddf) {
  Dual2 r(f);
  detail::acc(r.grad, df, x.grad);
  detail::acc(r.hess, df, x.hess);
  detail::acc_outer(r.hess, 0.5 * ddf, x.grad, x.grad);
  return r;
}

inline Dual2 operator/(const Dual2& a, const Dual2& b) {
  double v = b.value;
  return a * chain(b, 1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v));
}

inline Dual2 operator+(const Dual2& a, double b) { return {a.value + b, a.grad, a.hess}; }
inline Dual2 operator+(double a, const Dual2& b) { return b + a; }
inline Dual2 operator-(const Dual2& a, double b) { return {a.value - b, a.grad, a.hess}; }
inline Dual2 operator-(double a, const Dual2& b) { return {a - b.value, -b.grad, -b.hess}; }
inline Dual2 operator*(const Dual2& a, double b) { return {a.value * b, b * a.grad, b * a.hess}; }
inline Dual2 operator*(double a, const Dual2& b) { return b * a; }
inline Dual2 operator/(const Dual2& a, double b) { return {a.value / b, a.grad / b, a.hess / b}; }
inline Dual2 operator/(double a, const Dual2& b) {
  double v = b.value;
  return chain(b, a / v, -a / (v * v), 2.0 * a / (v * v * v));
}

inline Dual2& operator+=(Dual2& a, const Dual2& b) {
  a.value += b.value;
  detail::acc(a.grad, 1.0, b.grad);
  detail::acc(a.hess, 1.0, b.hess);
  return a;
}
inline Dual2& operator-=(Dual2& a, const Dual2& b) {
  a.value -= b.value;
  detail::acc(a.grad, -1.0, b.grad);
  detail::acc(a.hess, -1.0, b.hess);
  return a;
}
inline Dual2& operator*=(Dual2& a, const Dual2& b) {
  a = a * b;
  return a;
}

// ---- value extraction and magnitude over all stored numbers ----

inline double value_of(double x) { return x; }
inline double value_of(const Dual1& x) { return x.value; }
inline double value_of(const Dual2& x) { return x.value; }
template <class T>
double value_of(const Dual<T>& x) {
  return value_of(x.value);
}

inline double abs_max(double x) { return std::abs(x); }
inline double abs_max(const Dual1& x) {
  double m = std::abs(x.value);
  if (x.partials.size()) m = std::max(m, x.partials.cwiseAbs().maxCoeff());
  return m;
}
inline double abs_max(const Dual2& x) {
  double m = std::abs(x.value);
  if (x.grad.size()) m = std::max(m, x.grad.cwiseAbs().maxCoeff());
  if (x.hess.size()) m = std::max(m, x.hess.cwiseAbs().maxCoeff());
  return m;
}
template <class T>
double abs_max(const Dual<T>& x) {
  return std::max(abs_max(x.value), abs_max(x.deriv));
}

// Sup over paired components of |r_c| / (1 + |x_c|). Newton residual tests
// use this form: derivative components carry magnitudes far from the value
// scale, so an absolute sup norm over all components has a floating point
// floor set by the largest component while the tolerance is sized for the
// values. Pairing each residual component with the matching iterate
// component keeps every ratio near unit scale.
inline double scaled_abs_max(double r, double x) {
  return std::abs(r) / (1.0 + std::abs(x));
}
inline double scaled_abs_max(const Dual1& r, const Dual1& x) {
  double m = std::abs(r.value) / (1.0 + std::abs(x.value));
  if (r.partials.size()) m = std::max(m, detail::scaled_sup(r.partials, x.partials));
  return m;
}
inline double scaled_abs_max(const Dual2& r, const Dual2& x) {
  double m = std::abs(r.value) / (1.0 + std::abs(x.value));
  if (r.grad.size()) m = std::max(m, detail::scaled_sup(r.grad, x.grad));
  if (r.hess.size()) m = std::max(m, detail::scaled_sup(r.hess, x.hess));
  return m;
}
template <class T>
double scaled_abs_max(const Dual<T>& r, const Dual<T>& x) {
  return std::max(scaled_abs_max(r.value, x.value), scaled_abs_max(r.deriv, x.deriv));
}

inline bool all_finite(double x) { return std::isfinite(x); }
inline bool all_finite(const Dual1& x) {
  return std::isfinite(x.value) && x.partials.allFinite();
}
inline bool all_finite(const Dual2& x) {
  return std::isfinite(x.value) && x.grad.allFinite() && x.hess.allFinite();
}
template <class T>
bool all_finite(const Dual<T>& x) {
  return all_finite(x.value) && all_finite(x.deriv);
}

// ---- elementary functions ----

inline double sq(double x) { return x * x; }
template <class T>
Dual<T> sq(const Dual<T>& x) {
  return x * x;
}
inline Dual1 sq(const Dual1& x) { return x * x; }
inline Dual2 sq(const Dual2& x) { return x * x; }

using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;

template <class T>
Dual<T> exp(const Dual<T>& x) {
  T e = exp(x.value);
  return {e, x.deriv * e};
}
inline Dual1 exp(const Dual1& x) {
  double e = std::exp(x.value);
  Dual1 r(e);
  detail::acc(r.partials, e, x.partials);
  return r;
}
inline Dual2 exp(const Dual2& x) {
  double e = std::exp(x.value);
  return chain(x, e, e, e);
}

template <class T>
Dual<T> log(const Dual<T>& x) {
  return {log(x.value), x.deriv / x.value};
}
inline Dual1 log(const Dual1& x) {
  Dual1 r(std::log(x.value));
  detail::acc(r.partials, 1.0 / x.value, x.partials);
  return r;
}
inline Dual2 log(const Dual2& x) {
  double v = x.value;
  return chain(x, std::log(v), 1.0 / v, -1.0 / (v * v));
}

template <class T>
Dual<T> sqrt(const Dual<T>& x) {
  T s = sqrt(x.value);
  return {s, x.deriv / (2.0 * s)};
}
inline Dual1 sqrt(const Dual1& x) {
  double s = std::sqrt(x.value);
  Dual1 r(s);
  detail::acc(r.partials, 0.5 / s, x.partials);
  return r;
}
inline Dual2 sqrt(const Dual2& x) {
  double s = std::sqrt(x.value);
  return chain(x, s, 0.5 / s, -0.25 / (s * x.value));
}

template <class T>
Dual<T> sin(const Dual<T>& x) {
  return {sin(x.value), x.deriv * cos(x.value)};
}
template <class T>
Dual<T> cos(const Dual<T>& x) {
  return {cos(x.value), -x.deriv * sin(x.value)};
}
inline Dual1 sin(const Dual1& x) {
  Dual1 r(std::sin(x.value));
  detail::acc(r.partials, std::cos(x.value), x.partials);
  return r;
}
inline Dual1 cos(const Dual1& x) {
  Dual1 r(std::cos(x.value));
  detail::acc(r.partials, -std::sin(x.value), x.partials);
  return r;
}
inline Dual2 sin(const Dual2& x) {
  double s = std::sin(x.value), c = std::cos(x.value);
  return chain(x, s, c, -s);
}
inline Dual2 cos(const Dual2& x) {
  double s = std::sin(x.value), c = std::cos(x.value);
  return chain(x, c, -s, -c);
}

/// Integer power by repeated multiplication; exact on every scalar type and
/// the only power form the polynomial/rational model expressions need.
template <class S>
S pow_int(const S& x, int n) {
  if (n < 0) return 1.0 / pow_int(x, -n);
  S r(1.0);
  S base = x;
  while (n > 0) {
    if (n & 1) r = r * base;
    base = base * base;
    n >>= 1;
  }
  return r;
}

}  // namespace simshoot::ad

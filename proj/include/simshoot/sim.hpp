#pragma once

#include <Eigen/LU>

#include <atomic>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "simshoot/ad.hpp"
#include "simshoot/common.hpp"
#include "simshoot/model.hpp"
#include "simshoot/odeint.hpp"

// Point-wise closures of the fast variables onto the slow invariant
// manifold. Each criterion turns "z_f sits on the manifold over (z_s, u)"
// into a square residual psi(z_s, z_f, u) = 0 in the n_f fast unknowns,
// solved by a damped Newton iteration. The criteria are local: they need a
// guess inside the basin where the criterion Jacobian is nonsingular.

namespace simshoot::sim {

enum class SimKind {
  Zdp,        // zero the m-th time derivative of the fast components
  Gzdp,       // zero the m-th time derivative of selected slow components
  Curvature,  // make the squared state acceleration stationary in z_f
};

SimKind sim_kind_from_string(const std::string& s);
std::string to_string(SimKind kind);

struct SimMethod {
  SimKind kind{SimKind::Zdp};
  // Time-derivative order for Zdp/Gzdp, 1..4. Curvature ignores it (the
  // criterion is built from the second derivative by definition).
  int m{2};
  double newton_tol{1e-10};
  int max_iters{50};
  // Zdp only. Off: differentiate along the fast subsystem with z_s and u
  // frozen (the default convention). On: differentiate along the full flow,
  // so slow motion enters the higher derivatives.
  bool full_chain{false};
  // Gzdp: indices of the slow components whose derivative is zeroed. Must
  // select exactly n_f rows; empty selects all rows, which requires
  // n_s == n_f.
  std::vector<int> gzdp_components{};
};

struct SimPoint {
  Vec z_f;
  double residual_norm{0.0};
  int iters{0};
};

namespace detail {

inline std::vector<int> gzdp_rows(const model::OcpModel& mdl, const SimMethod& method) {
  if (!method.gzdp_components.empty()) {
    if (static_cast<int>(method.gzdp_components.size()) != mdl.n_f)
      throw InputError("slow-derivative criterion needs exactly n_f component choices");
    for (int c : method.gzdp_components)
      if (c < 0 || c >= mdl.n_s)
        throw InputError("slow-derivative component index out of range");
    return method.gzdp_components;
  }
  if (mdl.n_s != mdl.n_f)
    throw InputError(
        "slow-derivative criterion needs explicit component choices when n_s != n_f");
  std::vector<int> rows(mdl.n_s);
  for (int i = 0; i < mdl.n_s; ++i) rows[i] = i;
  return rows;
}

}  // namespace detail

/// Criterion residual psi(z_s, z_f, u), length n_f. Generic over the base
/// scalar so implicit sweeps can push seeded derivatives of all three
/// arguments through the evaluation. Magnitude conventions on explicit
/// singular perturbation models: the frozen fast-subsystem derivative is
/// taken along the eps-free fast field (same root set, eps only rescales
/// the residual per derivative order), while full-flow derivatives are
/// rescaled by the eps power of their leading term so tolerances stay
/// comparable across eps.
template <class T>
void criterion_residual(const model::OcpModel& mdl, const SimMethod& method,
                        std::span<const T> z_s, std::span<const T> z_f, std::span<const T> u,
                        std::span<T> out) {
  const int ns = mdl.n_s, nf = mdl.n_f, nu = mdl.n_u;
  if (static_cast<int>(z_s.size()) != ns || static_cast<int>(z_f.size()) != nf ||
      static_cast<int>(u.size()) != nu || static_cast<int>(out.size()) != nf)
    throw InputError("criterion residual: argument sizes do not match model");
  if (nf == 0) return;

  // full flow over the stacked state, controls held fixed
  auto flow = [&]<class S>(std::span<const S> x, std::span<S> fx) {
    std::vector<S> in(ns + nf + nu);
    for (int i = 0; i < ns + nf; ++i) in[i] = x[i];
    for (int k = 0; k < nu; ++k) in[ns + nf + k] = ad::promote<S>(u[k]);
    mdl.full_field->eval(std::span<const S>(in), fx);
  };
  auto stacked_state = [&]() {
    std::vector<T> x(ns + nf);
    for (int i = 0; i < ns; ++i) x[i] = z_s[i];
    for (int j = 0; j < nf; ++j) x[ns + j] = z_f[j];
    return x;
  };

  switch (method.kind) {
    case SimKind::Zdp: {
      if (!method.full_chain) {
        // fast subsystem with (z_s, u) frozen, differentiated along the
        // eps-free fast field
        auto fast_field = [&]<class S>(std::span<const S> y, std::span<S> fy) {
          std::vector<S> in(ns + nf + nu);
          for (int i = 0; i < ns; ++i) in[i] = ad::promote<S>(z_s[i]);
          for (int j = 0; j < nf; ++j) in[ns + j] = y[j];
          for (int k = 0; k < nu; ++k) in[ns + nf + k] = ad::promote<S>(u[k]);
          mdl.f_f->eval(std::span<const S>(in), fy);
        };
        std::vector<T> d = ad::lie_derivative<T>(fast_field, z_f, method.m);
        for (int j = 0; j < nf; ++j) out[j] = std::move(d[j]);
      } else {
        std::vector<T> x = stacked_state();
        std::vector<T> d = ad::lie_derivative<T>(flow, std::span<const T>(x), method.m);
        const double scale = mdl.sp_form ? ad::pow_int(mdl.epsilon, method.m) : 1.0;
        for (int j = 0; j < nf; ++j) out[j] = scale * d[ns + j];
      }
      break;
    }
    case SimKind::Gzdp: {
      std::vector<int> rows = detail::gzdp_rows(mdl, method);
      std::vector<T> x = stacked_state();
      std::vector<T> d = ad::lie_derivative<T>(flow, std::span<const T>(x), method.m);
      const double scale = mdl.sp_form ? ad::pow_int(mdl.epsilon, method.m - 1) : 1.0;
      for (int j = 0; j < nf; ++j) out[j] = scale * d[rows[j]];
      break;
    }
    case SimKind::Curvature: {
      // stationarity of |scale * xddot|^2 in each fast direction; the
      // uniform scale leaves the minimizer unchanged and keeps the
      // quadratic form representable for small eps
      const double scale = mdl.sp_form ? ad::pow_int(mdl.epsilon, 2) : 1.0;
      using DT = ad::Dual<T>;
      for (int j = 0; j < nf; ++j) {
        std::vector<DT> x(ns + nf);
        for (int i = 0; i < ns; ++i) x[i] = ad::promote<DT>(z_s[i]);
        for (int jj = 0; jj < nf; ++jj) x[ns + jj] = ad::promote<DT>(z_f[jj]);
        x[ns + j].deriv = T(1.0);
        auto flow_d = [&]<class S>(std::span<const S> xs, std::span<S> fx) {
          std::vector<S> in(ns + nf + nu);
          for (int i = 0; i < ns + nf; ++i) in[i] = xs[i];
          for (int k = 0; k < nu; ++k) in[ns + nf + k] = ad::promote<S>(u[k]);
          mdl.full_field->eval(std::span<const S>(in), fx);
        };
        std::vector<DT> dd = ad::second_time_derivative<DT>(flow_d, std::span<const DT>(x));
        DT phi(0.0);
        for (int i = 0; i < ns + nf; ++i) phi += ad::sq(scale * dd[i]);
        out[j] = std::move(phi.deriv);
      }
      break;
    }
  }
}

/// Criterion residual at plain doubles.
Vec criterion_residual(const model::OcpModel& mdl, const SimMethod& method, const Vec& z_s,
                       const Vec& z_f, const Vec& u);

/// Jacobian of the criterion residual w.r.t. z_f.
Mat criterion_jacobian(const model::OcpModel& mdl, const SimMethod& method, const Vec& z_s,
                       const Vec& z_f, const Vec& u);

/// Damped Newton root of the criterion residual in z_f at fixed (z_s, u).
/// Backtracks on the residual sup norm; throws EvalError when the iteration
/// stalls, diverges, or exhausts max_iters.
SimPoint manifold_point(const model::OcpModel& mdl, const SimMethod& method, const Vec& z_s,
                        const Vec& u, const Vec& z_f_guess);

/// Same, starting from the model's fast initial value (zeros when absent).
SimPoint manifold_point(const model::OcpModel& mdl, const SimMethod& method, const Vec& z_s,
                        const Vec& u);

// Criterion-specific sugar over manifold_point / criterion_residual.

Vec zdp_residual(const model::OcpModel& mdl, const Vec& z_s, const Vec& z_f, const Vec& u, int m,
                 bool full_chain = false);
double gzdp_residual(const model::OcpModel& mdl, const Vec& z_s, const Vec& z_f, const Vec& u,
                     int m, int component);
Vec curvature_residual(const model::OcpModel& mdl, const Vec& z_s, const Vec& z_f, const Vec& u);
SimPoint zdp_point(const model::OcpModel& mdl, const Vec& z_s, const Vec& u, int m = 2);
SimPoint zdp_point(const model::OcpModel& mdl, const Vec& z_s, const Vec& u, int m,
                   const Vec& z_f_guess);
SimPoint curvature_point(const model::OcpModel& mdl, const Vec& z_s, const Vec& u);

/// Criterion solve carrying seeded derivatives: values converge by the
/// plain Newton above, then derivative components are filled in by sweeps
/// of y <- y - J^{-1} psi(y) with the real Jacobian J fixed at the value
/// solution. J is exact for the value system, so the same-order error
/// contraction vanishes and each derivative order lands one sweep after the
/// order below it. Returns the Newton iteration count of the value phase.
template <class T>
int manifold_solve(const model::OcpModel& mdl, const SimMethod& method, std::span<const T> z_s,
                   std::span<const T> u, const Vec& warm_start, std::vector<T>& z_f_out) {
  const int nf = mdl.n_f;
  z_f_out.resize(nf);
  if (nf == 0) return 0;

  Vec zsv(mdl.n_s), uv(mdl.n_u);
  for (int i = 0; i < mdl.n_s; ++i) zsv[i] = ad::value_of(z_s[i]);
  for (int k = 0; k < mdl.n_u; ++k) uv[k] = ad::value_of(u[k]);
  SimPoint p = manifold_point(mdl, method, zsv, uv, warm_start);

  if constexpr (std::is_same_v<T, double>) {
    for (int j = 0; j < nf; ++j) z_f_out[j] = p.z_f[j];
    return p.iters;
  } else {
    Eigen::PartialPivLU<Mat> lu(criterion_jacobian(mdl, method, zsv, p.z_f, uv));
    for (int j = 0; j < nf; ++j) z_f_out[j] = ad::promote<T>(p.z_f[j]);
    std::vector<T> r(nf);
    double res = kInf, best = kInf;
    for (int sweep = 0; sweep < 10; ++sweep) {
      criterion_residual<T>(mdl, method, z_s, std::span<const T>(z_f_out), u,
                            std::span<T>(r));
      res = 0.0;
      for (int j = 0; j < nf; ++j) res = std::max(res, ad::scaled_abs_max(r[j], z_f_out[j]));
      if (!std::isfinite(res)) throw EvalError("manifold solve: derivative sweep overflow");
      if (res <= method.newton_tol) break;
      if (res >= 0.9 * best && sweep >= 3) break;  // floating point floor
      best = std::min(best, res);
      odeint::detail::lu_solve_in_place(lu, r);
      for (int j = 0; j < nf; ++j) z_f_out[j] -= r[j];
    }
    if (res > 1e3 * method.newton_tol)
      throw EvalError("manifold solve: derivative sweep stalled at residual " +
                      std::to_string(res));
    return p.iters;
  }
}

/// Slow dynamics closed over the manifold: maps [z_s; u] to [f_s; L] with
/// z_f supplied by one inner criterion solve per evaluation (so one solve
/// per integrator stage). The warm start is per instance; the solve counter
/// is shared across copies so integrator-internal copies still count.
class ReducedRhs {
 public:
  ReducedRhs(model::OcpModel mdl, SimMethod method)
      : mdl_(std::move(mdl)),
        method_(method),
        warm_(mdl_.z_f0.size() ? mdl_.z_f0 : Vec::Zero(mdl_.n_f)),
        solves_(std::make_shared<std::atomic<long>>(0)) {}

  template <class T>
  void operator()(std::span<const T> in, std::span<T> out) const {
    const int ns = mdl_.n_s, nf = mdl_.n_f, nu = mdl_.n_u;
    if (static_cast<int>(in.size()) != ns + nu || static_cast<int>(out.size()) != ns + 1)
      throw InputError("reduced dynamics take [z_s; u] and produce [f_s; L]");
    std::span<const T> z_s = in.first(ns);
    std::span<const T> u = in.subspan(ns);
    solves_->fetch_add(1, std::memory_order_relaxed);
    std::vector<T> y;
    manifold_solve<T>(mdl_, method_, z_s, u, warm_, y);
    for (int j = 0; j < nf; ++j) warm_[j] = ad::value_of(y[j]);
    std::vector<T> full(ns + nf + nu);
    for (int i = 0; i < ns; ++i) full[i] = z_s[i];
    for (int j = 0; j < nf; ++j) full[ns + j] = std::move(y[j]);
    for (int k = 0; k < nu; ++k) full[ns + nf + k] = u[k];
    mdl_.f_s->eval(std::span<const T>(full), out.first(ns));
    std::vector<T> l(1);
    mdl_.L->eval(std::span<const T>(full), std::span<T>(l));
    out[ns] = std::move(l[0]);
  }

  long solves() const { return solves_->load(std::memory_order_relaxed); }
  void reset_solves() { solves_->store(0, std::memory_order_relaxed); }
  Vec warm_start() const { return warm_; }
  void set_warm_start(const Vec& z_f) {
    if (z_f.size() != warm_.size()) throw InputError("warm start size must be n_f");
    warm_ = z_f;
  }
  const model::OcpModel& ocp() const { return mdl_; }
  const SimMethod& method() const { return method_; }

 private:
  model::OcpModel mdl_;
  SimMethod method_;
  mutable Vec warm_;
  std::shared_ptr<std::atomic<long>> solves_;
};

}  // namespace simshoot::sim

#include "simshoot/transcribe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <thread>
#include <utility>
#include <vector>

namespace simshoot::transcribe {

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "reduced") return Variant::Reduced;
  if (s == "lifted") return Variant::Lifted;
  throw InputError("unknown transcription variant '" + s + "' (full, reduced, lifted)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full:
      return "full";
    case Variant::Reduced:
      return "reduced";
    case Variant::Lifted:
      return "lifted";
  }
  return {};
}

ShootingNlp::ShootingNlp(model::OcpModel mdl, Variant variant, Grid grid, Options opt)
    : mdl_(std::move(mdl)),
      variant_(variant),
      grid_(grid),
      method_(opt.method),
      tab_(odeint::radau_iia_tableau()),
      threads_(opt.threads) {
  if (grid_.N < 1) throw InputError("transcription needs at least one control interval");
  if (grid_.horizon <= 0.0) grid_.horizon = mdl_.horizon;
  if (!(grid_.horizon > 0.0)) throw InputError("transcription horizon must be positive");
  if (threads_ < 1) throw InputError("thread count must be at least 1");

  if (opt.integrator) {
    integ_ = *opt.integrator;
    if (integ_.steps_per_interval < 1) throw InputError("steps per interval must be at least 1");
  } else {
    integ_.scheme = variant_ == Variant::Full ? odeint::Scheme::Radau : odeint::Scheme::RK4;
  }

  const int ns = mdl_.n_s, nf = mdl_.n_f, nu = mdl_.n_u, N = grid_.N;
  lay_.N = N;
  lay_.ns = ns;
  lay_.nf = variant_ == Variant::Reduced ? 0 : nf;
  lay_.nu = nu;
  lay_.stride = ns + lay_.nf + nu;
  lay_.n_vars = N * lay_.stride;

  rows_.nd = variant_ == Variant::Full ? ns + nf : ns;
  rows_.nf = variant_ == Variant::Lifted ? nf : 0;

  for (int i = 0; i < ns; ++i) init_pins_.push_back({lay_.slow(0) + i, mdl_.z_s0[i]});
  if (variant_ == Variant::Full && mdl_.z_f0.size())
    for (int j = 0; j < nf; ++j) init_pins_.push_back({lay_.fast(0) + j, mdl_.z_f0[j]});
  if (!opt.fast_initial_pins.empty()) {
    if (variant_ != Variant::Lifted)
      throw InputError("extra fast initial pins apply to the lifted variant only");
    for (auto [j, v] : opt.fast_initial_pins) {
      if (j < 0 || j >= nf) throw InputError("fast initial pin index out of range");
      init_pins_.push_back({lay_.fast(0) + j, v});
    }
  }

  // terminal pins act on the simulated endpoint, whose dimension is nd
  for (auto [idx, v] : mdl_.terminal_pins) {
    if (idx < 0 || idx >= rows_.nd)
      throw InputError(variant_ == Variant::Full
                           ? "terminal pin index out of range"
                           : "terminal pins must select slow components when the fast state "
                             "is not integrated");
    terminal_.push_back({idx, v});
  }

  rows_.n_init = static_cast<int>(init_pins_.size());
  rows_.continuity0 = rows_.n_init;
  rows_.psi0 = rows_.continuity0 + (N - 1) * rows_.nd;
  rows_.terminal0 = rows_.psi0 + N * rows_.nf;
  rows_.n_terminal = static_cast<int>(terminal_.size());
  rows_.n_eq = rows_.terminal0 + rows_.n_terminal;

  lo_.resize(lay_.n_vars);
  up_.resize(lay_.n_vars);
  for (int k = 0; k < N; ++k) {
    for (int i = 0; i < ns + lay_.nf; ++i) {
      lo_[lay_.node(k) + i] = mdl_.x_lower[i];
      up_[lay_.node(k) + i] = mdl_.x_upper[i];
    }
    for (int c = 0; c < nu; ++c) {
      lo_[lay_.control(k) + c] = mdl_.u_lower[c];
      up_[lay_.control(k) + c] = mdl_.u_upper[c];
    }
  }

  if (variant_ == Variant::Reduced) reduced_.emplace(mdl_, method_);
}

template <class T>
odeint::Step<T> ShootingNlp::interval_map(std::span<const T> block,
                                          const sim::ReducedRhs* rr) const {
  std::span<const T> x = block.first(rows_.nd);
  std::span<const T> held = block.subspan(rows_.nd);
  switch (variant_) {
    case Variant::Full:
      return odeint::interval_step<T>(*mdl_.field_and_cost, x, held, grid_.h(), integ_, tab_);
    case Variant::Reduced: {
      const sim::ReducedRhs& fc = rr ? *rr : *reduced_;
      return odeint::interval_step<T>(fc, x, held, grid_.h(), integ_, tab_);
    }
    case Variant::Lifted: {
      // half-explicit step on the manifold DAE: each stage solves the
      // criterion for the fast state at the stage's slow state, so the slow
      // field is evaluated on the manifold and stays non-stiff. The node's
      // fast variable only seeds the first stage solve (values, not
      // derivatives), leaving the continuity rows free of fast columns; the
      // psi rows alone tie the node variable to the manifold.
      const int ns = mdl_.n_s, nf = mdl_.n_f, nu = mdl_.n_u;
      Vec warm(nf);
      for (int j = 0; j < nf; ++j) warm[j] = ad::value_of(held[j]);
      auto fc = [this, ns, nf, nu, &warm](auto in, auto out) {
        using S = std::decay_t<decltype(out[0])>;
        std::span<const S> z_s = in.first(ns);
        std::span<const S> u = in.subspan(ns + nf);
        std::vector<S> y;
        sim::manifold_solve<S>(mdl_, method_, z_s, u, warm, y);
        for (int j = 0; j < nf; ++j) warm[j] = ad::value_of(y[j]);
        std::vector<S> full(ns + nf + nu);
        for (int i = 0; i < ns; ++i) full[i] = z_s[i];
        for (int j = 0; j < nf; ++j) full[ns + j] = std::move(y[j]);
        for (int k = 0; k < nu; ++k) full[ns + nf + k] = u[k];
        mdl_.f_s->eval(std::span<const S>(full), out.first(ns));
        std::vector<S> l(1);
        mdl_.L->eval(std::span<const S>(full), std::span<S>(l));
        out[ns] = std::move(l[0]);
      };
      return odeint::interval_step<T>(fc, x, held, grid_.h(), integ_, tab_);
    }
  }
  throw InputError("unknown transcription variant");
}

template <class T>
void ShootingNlp::psi_block(std::span<const T> block, std::span<T> out) const {
  const int ns = mdl_.n_s, nf = mdl_.n_f, nu = mdl_.n_u;
  sim::criterion_residual<T>(mdl_, method_, block.first(ns), block.subspan(ns, nf),
                             block.subspan(ns + nf, nu), out);
}

/// Runs body(k, reduced_rhs) for k = 0..N-1. With threads > 1 the interval
/// range is split into contiguous chunks, each chunk working on its own copy
/// of the reduced dynamics (the solve counter is shared across copies).
/// Bodies write only interval-owned slots, so results are identical to the
/// serial order; the lowest-interval exception wins when several chunks
/// throw.
template <class Body>
void ShootingNlp::for_intervals(const Body& body) const {
  const int n = grid_.N;
  const int nt = std::min(threads_, n);
  if (nt <= 1) {
    const sim::ReducedRhs* rr = reduced_ ? &*reduced_ : nullptr;
    for (int k = 0; k < n; ++k) body(k, rr);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(nt);
  std::vector<int> err_at(nt, std::numeric_limits<int>::max());
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&, t]() {
      std::optional<sim::ReducedRhs> clone;
      const sim::ReducedRhs* rr = nullptr;
      if (reduced_) {
        clone.emplace(*reduced_);
        rr = &*clone;
      }
      const int lo = static_cast<int>(static_cast<long>(n) * t / nt);
      const int hi = static_cast<int>(static_cast<long>(n) * (t + 1) / nt);
      for (int k = lo; k < hi; ++k) {
        try {
          body(k, rr);
        } catch (...) {
          errs[t] = std::current_exception();
          err_at[t] = k;
          break;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  int first = -1;
  for (int t = 0; t < nt; ++t)
    if (errs[t] && (first < 0 || err_at[t] < err_at[first])) first = t;
  if (first >= 0) std::rethrow_exception(errs[first]);
}

Vec ShootingNlp::initial_guess() const {
  const int ns = mdl_.n_s, nf = mdl_.n_f, nu = mdl_.n_u;
  Vec u_mid(nu);
  for (int c = 0; c < nu; ++c) {
    const double lo = mdl_.u_lower[c], up = mdl_.u_upper[c];
    if (std::isfinite(lo) && std::isfinite(up))
      u_mid[c] = 0.5 * (lo + up);
    else if (std::isfinite(lo))
      u_mid[c] = lo;
    else if (std::isfinite(up))
      u_mid[c] = up;
    else
      u_mid[c] = 0.0;
  }

  Vec z_f = mdl_.z_f0.size() ? mdl_.z_f0 : Vec::Zero(nf);
  if (nf > 0 && lay_.nf > 0) {
    try {
      z_f = sim::manifold_point(mdl_, method_, mdl_.z_s0, u_mid, z_f).z_f;
    } catch (const EvalError&) {
      // keep the model's fast initial value; the guess is only a hint
    }
  }

  Vec x(lay_.n_vars);
  for (int k = 0; k < grid_.N; ++k) {
    x.segment(lay_.slow(k), ns) = mdl_.z_s0;
    if (lay_.nf) x.segment(lay_.fast(k), nf) = z_f;
    x.segment(lay_.control(k), nu) = u_mid;
  }
  return x;
}

nlpsolve::ProblemValues ShootingNlp::values(const Vec& x) const {
  if (static_cast<int>(x.size()) != lay_.n_vars)
    throw InputError("values: variable vector size does not match the transcription");
  const int N = grid_.N, nd = rows_.nd;
  Vec c(rows_.n_eq);
  Vec q(N);
  for (int r = 0; r < rows_.n_init; ++r) c[r] = x[init_pins_[r].first] - init_pins_[r].second;

  for_intervals([&](int k, const sim::ReducedRhs* rr) {
    std::span<const double> block(x.data() + lay_.node(k), lay_.stride);
    odeint::Step<double> st = interval_map<double>(block, rr);
    q[k] = st.quadrature_increment;
    if (k < N - 1) {
      for (int i = 0; i < nd; ++i)
        c[rows_.continuity(k) + i] = st.state_next[i] - x[lay_.node(k + 1) + i];
    } else {
      for (int t = 0; t < rows_.n_terminal; ++t)
        c[rows_.terminal0 + t] = st.state_next[terminal_[t].first] - terminal_[t].second;
    }
    if (rows_.nf) {
      std::vector<double> psi(rows_.nf);
      psi_block<double>(block, std::span<double>(psi));
      for (int i = 0; i < rows_.nf; ++i) c[rows_.psi(k) + i] = psi[i];
    }
  });

  nlpsolve::ProblemValues out;
  out.objective = q.sum();
  out.constraints = std::move(c);
  if (!std::isfinite(out.objective) || !out.constraints.allFinite())
    throw EvalError("transcription produced non-finite values");
  return out;
}

nlpsolve::FirstOrder ShootingNlp::first_order(const Vec& x) const {
  if (static_cast<int>(x.size()) != lay_.n_vars)
    throw InputError("first_order: variable vector size does not match the transcription");
  const int N = grid_.N, nd = rows_.nd, stride = lay_.stride;

  nlpsolve::FirstOrder fo;
  fo.gradient = Vec::Zero(lay_.n_vars);
  std::vector<std::vector<Triplet>> trip(N + 1);
  for (int r = 0; r < rows_.n_init; ++r) trip[N].push_back({r, init_pins_[r].first, 1.0});

  for_intervals([&](int k, const sim::ReducedRhs* rr) {
    std::vector<ad::Dual1> b(stride);
    for (int j = 0; j < stride; ++j) b[j] = ad::Dual1::seed(x[lay_.node(k) + j], j, stride);
    odeint::Step<ad::Dual1> st = interval_map<ad::Dual1>(std::span<const ad::Dual1>(b), rr);

    auto& tk = trip[k];
    auto add_row = [&](int row, const ad::Dual1& v) {
      if (!v.partials.size()) return;
      for (int j = 0; j < stride; ++j)
        if (v.partials[j] != 0.0) tk.push_back({row, lay_.node(k) + j, v.partials[j]});
    };
    if (st.quadrature_increment.partials.size())
      fo.gradient.segment(lay_.node(k), stride) += st.quadrature_increment.partials;
    if (k < N - 1) {
      for (int i = 0; i < nd; ++i) {
        add_row(rows_.continuity(k) + i, st.state_next[i]);
        tk.push_back({rows_.continuity(k) + i, lay_.node(k + 1) + i, -1.0});
      }
    } else {
      for (int t = 0; t < rows_.n_terminal; ++t)
        add_row(rows_.terminal0 + t, st.state_next[terminal_[t].first]);
    }
    if (rows_.nf) {
      std::vector<ad::Dual1> psi(rows_.nf);
      psi_block<ad::Dual1>(std::span<const ad::Dual1>(b), std::span<ad::Dual1>(psi));
      for (int i = 0; i < rows_.nf; ++i) add_row(rows_.psi(k) + i, psi[i]);
    }
  });

  size_t total = 0;
  for (const auto& tk : trip) total += tk.size();
  std::vector<Triplet> all;
  all.reserve(total);
  for (const auto& tk : trip) all.insert(all.end(), tk.begin(), tk.end());
  fo.jacobian.resize(rows_.n_eq, lay_.n_vars);
  fo.jacobian.setFromTriplets(all.begin(), all.end());

  const bool jac_finite =
      Eigen::Map<const Vec>(fo.jacobian.valuePtr(), fo.jacobian.nonZeros()).allFinite();
  if (!fo.gradient.allFinite() || !jac_finite)
    throw EvalError("transcription produced non-finite first-order derivatives");
  return fo;
}

SpMat ShootingNlp::hessian_lagrangian(const Vec& x, double sigma, const Vec& lambda) const {
  if (static_cast<int>(x.size()) != lay_.n_vars)
    throw InputError("hessian: variable vector size does not match the transcription");
  if (static_cast<int>(lambda.size()) != rows_.n_eq)
    throw InputError("hessian: multiplier vector size does not match the constraint count");
  const int N = grid_.N, nd = rows_.nd, stride = lay_.stride;

  std::vector<std::vector<Triplet>> trip(N);
  for_intervals([&](int k, const sim::ReducedRhs* rr) {
    std::vector<ad::Dual2> b(stride);
    for (int j = 0; j < stride; ++j) b[j] = ad::Dual2::seed(x[lay_.node(k) + j], j, stride);
    odeint::Step<ad::Dual2> st = interval_map<ad::Dual2>(std::span<const ad::Dual2>(b), rr);

    ad::Dual2 g = sigma * st.quadrature_increment;
    if (k < N - 1) {
      for (int i = 0; i < nd; ++i) {
        const double w = lambda[rows_.continuity(k) + i];
        if (w != 0.0) g += w * st.state_next[i];
      }
    } else {
      for (int t = 0; t < rows_.n_terminal; ++t) {
        const double w = lambda[rows_.terminal0 + t];
        if (w != 0.0) g += w * st.state_next[terminal_[t].first];
      }
    }
    if (rows_.nf) {
      std::vector<ad::Dual2> psi(rows_.nf);
      psi_block<ad::Dual2>(std::span<const ad::Dual2>(b), std::span<ad::Dual2>(psi));
      for (int i = 0; i < rows_.nf; ++i) {
        const double w = lambda[rows_.psi(k) + i];
        if (w != 0.0) g += w * psi[i];
      }
    }
    if (g.hess.size()) {
      auto& tk = trip[k];
      for (int i = 0; i < stride; ++i)
        for (int j = 0; j < stride; ++j)
          if (g.hess(i, j) != 0.0) tk.push_back({lay_.node(k) + i, lay_.node(k) + j, g.hess(i, j)});
    }
  });

  size_t total = 0;
  for (const auto& tk : trip) total += tk.size();
  std::vector<Triplet> all;
  all.reserve(total);
  for (const auto& tk : trip) all.insert(all.end(), tk.begin(), tk.end());
  SpMat H(lay_.n_vars, lay_.n_vars);
  H.setFromTriplets(all.begin(), all.end());
  if (!Eigen::Map<const Vec>(H.valuePtr(), H.nonZeros()).allFinite())
    throw EvalError("transcription produced a non-finite Lagrangian Hessian");
  return H;
}

long ShootingNlp::inner_solves() const { return reduced_ ? reduced_->solves() : 0; }

void ShootingNlp::reset_inner_solves() {
  if (reduced_) reduced_->reset_solves();
}

Trajectory ShootingNlp::extract(const Vec& x) const {
  if (static_cast<int>(x.size()) != lay_.n_vars)
    throw InputError("extract: variable vector size does not match the transcription");
  const int N = grid_.N, ns = mdl_.n_s, nf = mdl_.n_f, nu = mdl_.n_u;

  Trajectory tr;
  tr.times.resize(N + 1);
  for (int k = 0; k <= N; ++k) tr.times[k] = grid_.h() * k;
  tr.states.resize(N + 1, ns + nf);
  tr.controls.resize(N, nu);

  Vec q(N);
  const sim::ReducedRhs* rr = reduced_ ? &*reduced_ : nullptr;
  Vec warm = mdl_.z_f0.size() ? mdl_.z_f0 : Vec::Zero(nf);
  std::vector<double> endpoint;

  for (int k = 0; k < N; ++k) {
    std::span<const double> block(x.data() + lay_.node(k), lay_.stride);
    for (int c = 0; c < nu; ++c) tr.controls(k, c) = x[lay_.control(k) + c];
    for (int i = 0; i < ns; ++i) tr.states(k, i) = x[lay_.slow(k) + i];
    if (variant_ == Variant::Reduced) {
      if (nf) {
        const Vec zs = x.segment(lay_.slow(k), ns);
        const Vec u = x.segment(lay_.control(k), nu);
        sim::SimPoint p = sim::manifold_point(mdl_, method_, zs, u, warm);
        warm = p.z_f;
        for (int j = 0; j < nf; ++j) tr.states(k, ns + j) = p.z_f[j];
      }
    } else {
      for (int j = 0; j < nf; ++j) tr.states(k, ns + j) = x[lay_.fast(k) + j];
    }
    odeint::Step<double> st = interval_map<double>(block, rr);
    q[k] = st.quadrature_increment;
    if (k == N - 1) endpoint = std::move(st.state_next);
  }

  for (int i = 0; i < rows_.nd; ++i) tr.states(N, i) = endpoint[i];
  if (variant_ != Variant::Full && nf) {
    Vec zsN(ns);
    for (int i = 0; i < ns; ++i) zsN[i] = endpoint[i];
    const Vec uN = x.segment(lay_.control(N - 1), nu);
    const Vec w =
        variant_ == Variant::Lifted ? Vec(x.segment(lay_.fast(N - 1), nf)) : warm;
    sim::SimPoint p = sim::manifold_point(mdl_, method_, zsN, uN, w);
    for (int j = 0; j < nf; ++j) tr.states(N, ns + j) = p.z_f[j];
  }
  tr.objective = q.sum();
  return tr;
}

}  // namespace simshoot::transcribe

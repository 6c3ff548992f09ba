#include "simshoot/sim.hpp"

#include <algorithm>

namespace simshoot::sim {

SimKind sim_kind_from_string(const std::string& s) {
  if (s == "zdp") return SimKind::Zdp;
  if (s == "gzdp") return SimKind::Gzdp;
  if (s == "curvature") return SimKind::Curvature;
  throw InputError("unknown manifold criterion '" + s + "' (expected zdp, gzdp, or curvature)");
}

std::string to_string(SimKind kind) {
  switch (kind) {
    case SimKind::Zdp: return "zdp";
    case SimKind::Gzdp: return "gzdp";
    case SimKind::Curvature: return "curvature";
  }
  return "?";
}

namespace {

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

Vec criterion_residual(const model::OcpModel& mdl, const SimMethod& method, const Vec& z_s,
                       const Vec& z_f, const Vec& u) {
  std::vector<double> zs = to_std(z_s), zf = to_std(z_f), us = to_std(u);
  std::vector<double> out(mdl.n_f);
  criterion_residual<double>(mdl, method, std::span<const double>(zs),
                             std::span<const double>(zf), std::span<const double>(us),
                             std::span<double>(out));
  return Eigen::Map<const Vec>(out.data(), mdl.n_f);
}

Mat criterion_jacobian(const model::OcpModel& mdl, const SimMethod& method, const Vec& z_s,
                       const Vec& z_f, const Vec& u) {
  const int nf = mdl.n_f;
  std::vector<ad::Dual1> zs(mdl.n_s), zf(nf), us(mdl.n_u);
  for (int i = 0; i < mdl.n_s; ++i) zs[i] = ad::Dual1(z_s[i]);
  for (int j = 0; j < nf; ++j) zf[j] = ad::Dual1::seed(z_f[j], j, nf);
  for (int k = 0; k < mdl.n_u; ++k) us[k] = ad::Dual1(u[k]);
  std::vector<ad::Dual1> out(nf);
  criterion_residual<ad::Dual1>(mdl, method, std::span<const ad::Dual1>(zs),
                                std::span<const ad::Dual1>(zf), std::span<const ad::Dual1>(us),
                                std::span<ad::Dual1>(out));
  Mat J = Mat::Zero(nf, nf);
  for (int j = 0; j < nf; ++j)
    if (out[j].partials.size()) J.row(j) = out[j].partials.transpose();
  return J;
}

SimPoint manifold_point(const model::OcpModel& mdl, const SimMethod& method, const Vec& z_s,
                        const Vec& u, const Vec& z_f_guess) {
  if (static_cast<int>(z_s.size()) != mdl.n_s || static_cast<int>(u.size()) != mdl.n_u ||
      static_cast<int>(z_f_guess.size()) != mdl.n_f)
    throw InputError("manifold point: argument sizes do not match model");

  SimPoint p;
  p.z_f = z_f_guess;
  if (mdl.n_f == 0) return p;

  Vec r = criterion_residual(mdl, method, z_s, p.z_f, u);
  if (!r.allFinite()) throw EvalError("manifold solve failed: residual non-finite at guess");
  double res = r.cwiseAbs().maxCoeff();
  for (int iter = 0; iter < method.max_iters; ++iter) {
    if (res <= method.newton_tol) {
      p.residual_norm = res;
      p.iters = iter;
      return p;
    }
    Mat J = criterion_jacobian(mdl, method, z_s, p.z_f, u);
    Vec d = J.partialPivLu().solve(-r);
    if (!d.allFinite())
      throw EvalError("manifold solve failed: singular criterion Jacobian");

    // backtracking on the residual sup norm
    double alpha = 1.0;
    bool accepted = false;
    for (int back = 0; back < 20; ++back, alpha *= 0.5) {
      Vec y_try = p.z_f + alpha * d;
      Vec r_try = criterion_residual(mdl, method, z_s, y_try, u);
      if (!r_try.allFinite()) continue;
      double res_try = r_try.cwiseAbs().maxCoeff();
      if (res_try <= (1.0 - 1e-4 * alpha) * res) {
        p.z_f = std::move(y_try);
        r = std::move(r_try);
        res = res_try;
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw EvalError("manifold solve failed: no residual decrease (residual " +
                      std::to_string(res) + ")");
  }
  if (res <= method.newton_tol) {
    p.residual_norm = res;
    p.iters = method.max_iters;
    return p;
  }
  throw EvalError("manifold solve failed: residual " + std::to_string(res) + " after " +
                  std::to_string(method.max_iters) + " iterations");
}

SimPoint manifold_point(const model::OcpModel& mdl, const SimMethod& method, const Vec& z_s,
                        const Vec& u) {
  Vec guess = mdl.z_f0.size() ? mdl.z_f0 : Vec::Zero(mdl.n_f);
  return manifold_point(mdl, method, z_s, u, guess);
}

Vec zdp_residual(const model::OcpModel& mdl, const Vec& z_s, const Vec& z_f, const Vec& u, int m,
                 bool full_chain) {
  SimMethod method;
  method.kind = SimKind::Zdp;
  method.m = m;
  method.full_chain = full_chain;
  return criterion_residual(mdl, method, z_s, z_f, u);
}

double gzdp_residual(const model::OcpModel& mdl, const Vec& z_s, const Vec& z_f, const Vec& u,
                     int m, int component) {
  if (component < 0 || component >= mdl.n_s)
    throw InputError("slow-derivative component index out of range");
  SimMethod method;
  method.kind = SimKind::Gzdp;
  method.m = m;
  // criterion row selection requires n_f rows; evaluate one chosen row by
  // repeating it, then read any entry
  method.gzdp_components.assign(mdl.n_f, component);
  Vec r = criterion_residual(mdl, method, z_s, z_f, u);
  return r[0];
}

Vec curvature_residual(const model::OcpModel& mdl, const Vec& z_s, const Vec& z_f, const Vec& u) {
  SimMethod method;
  method.kind = SimKind::Curvature;
  return criterion_residual(mdl, method, z_s, z_f, u);
}

SimPoint zdp_point(const model::OcpModel& mdl, const Vec& z_s, const Vec& u, int m) {
  SimMethod method;
  method.kind = SimKind::Zdp;
  method.m = m;
  return manifold_point(mdl, method, z_s, u);
}

SimPoint zdp_point(const model::OcpModel& mdl, const Vec& z_s, const Vec& u, int m,
                   const Vec& z_f_guess) {
  SimMethod method;
  method.kind = SimKind::Zdp;
  method.m = m;
  return manifold_point(mdl, method, z_s, u, z_f_guess);
}

SimPoint curvature_point(const model::OcpModel& mdl, const Vec& z_s, const Vec& u) {
  SimMethod method;
  method.kind = SimKind::Curvature;
  return manifold_point(mdl, method, z_s, u);
}

}  // namespace simshoot::sim

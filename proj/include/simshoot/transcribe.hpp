#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "simshoot/model.hpp"
#include "simshoot/nlp.hpp"
#include "simshoot/odeint.hpp"
#include "simshoot/sim.hpp"

// Direct multiple shooting transcriptions of an OcpModel into equality
// constrained NLPs. Three variants share one variable convention: every
// shooting node k = 0..N-1 owns one contiguous block of variables, and each
// control interval is integrated from exactly the variables of its left
// node, with everything past the integrated state held constant over the
// interval.
//
//   full      node block [z_s; z_f; u], the full state is integrated
//             (Radau default; the fast rows are stiff at small eps).
//   reduced   node block [z_s; u]; the fast state is eliminated by an inner
//             manifold solve at every integrator stage (RK4 default: four
//             solves per step).
//   lifted    node block [z_s; z_f; u]; only the slow state is integrated,
//             half-explicitly on the manifold DAE: each stage solves the
//             criterion for the fast value at the stage's slow state, seeded
//             by the node's fast variable, so the step sees the non-stiff
//             on-manifold field. The criterion residual is imposed as
//             algebraic rows at every node, which is the only place the
//             node's fast variable enters the constraint Jacobian.
//
// There is no node-N state block. The last interval's simulated endpoint
// carries the terminal pins, and extract() reports it as the final
// trajectory row. The fast value at node 0 is a variable pinned to the
// model initial value in the full variant; in the lifted variant it is
// determined by the node-0 criterion rows and left unpinned (extra pins can
// be requested, which generically over-determines the node).

namespace simshoot::transcribe {

enum class Variant { Full, Reduced, Lifted };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct Grid {
  int N{40};            // control intervals
  double horizon{0.0};  // <= 0: take the model horizon
  double h() const { return horizon / N; }
};

/// Variable bookkeeping. All offsets are into the flat NLP vector.
struct VarLayout {
  int N{0};
  int ns{0}, nf{0}, nu{0};  // nf == 0 for the reduced variant
  int stride{0};            // per-node block size
  int n_vars{0};
  int node(int k) const { return k * stride; }
  int slow(int k) const { return node(k); }
  int fast(int k) const { return node(k) + ns; }
  int control(int k) const { return node(k) + ns + nf; }
};

/// Equality row bookkeeping. Rows are grouped: initial pins, then interval
/// continuity blocks, then (lifted) per-node criterion rows, then terminal
/// pins.
struct RowLayout {
  int n_eq{0};
  int n_init{0};       // initial pin rows, starting at row 0
  int continuity0{0};  // nd rows per interval, N-1 intervals
  int psi0{0};         // nf rows per node, N nodes (lifted only)
  int terminal0{0};
  int n_terminal{0};
  int nd{0};  // integrated state dimension
  int nf{0};  // criterion rows per node
  int continuity(int k) const { return continuity0 + k * nd; }
  int psi(int k) const { return psi0 + k * nf; }
};

struct Options {
  /// Manifold criterion: inner solves (reduced), algebraic rows (lifted),
  /// and the fast part of every variant's initial guess.
  sim::SimMethod method{};
  /// Unset: Radau for the full variant, RK4 for reduced and lifted, one
  /// step per interval either way.
  std::optional<odeint::Integrator> integrator{};
  int threads{1};
  /// Lifted only: extra node-0 fast pins (fast index, value).
  std::vector<std::pair<int, double>> fast_initial_pins{};
};

/// Node-sampled solution. states rows are nodes 0..N (row N is the
/// simulated endpoint of the last interval), columns stacked [z_s; z_f].
/// controls rows are nodes 0..N-1.
struct Trajectory {
  Vec times;
  Mat states;
  Mat controls;
  double objective{0.0};
};

class ShootingNlp final : public nlpsolve::Problem {
 public:
  ShootingNlp(model::OcpModel mdl, Variant variant, Grid grid, Options opt = {});

  int n_vars() const override { return lay_.n_vars; }
  int n_eq() const override { return rows_.n_eq; }
  const Vec& lower() const override { return lo_; }
  const Vec& upper() const override { return up_; }
  Vec initial_guess() const override;
  nlpsolve::ProblemValues values(const Vec& x) const override;
  nlpsolve::FirstOrder first_order(const Vec& x) const override;
  SpMat hessian_lagrangian(const Vec& x, double sigma, const Vec& lambda) const override;

  const model::OcpModel& ocp() const { return mdl_; }
  Variant variant() const { return variant_; }
  const Grid& grid() const { return grid_; }
  const odeint::Integrator& integrator() const { return integ_; }
  const sim::SimMethod& method() const { return method_; }
  const VarLayout& layout() const { return lay_; }
  const RowLayout& rows() const { return rows_; }

  /// Manifold solves performed so far (reduced variant; 0 otherwise).
  long inner_solves() const;
  void reset_inner_solves();

  /// Sample the trajectory at the shooting nodes, re-simulating the last
  /// interval for row N and reconstructing fast components where they are
  /// not decision variables.
  Trajectory extract(const Vec& x) const;

 private:
  template <class T>
  odeint::Step<T> interval_map(std::span<const T> block, const sim::ReducedRhs* rr) const;
  template <class T>
  void psi_block(std::span<const T> block, std::span<T> out) const;
  template <class Body>
  void for_intervals(const Body& body) const;

  model::OcpModel mdl_;
  Variant variant_;
  Grid grid_;
  sim::SimMethod method_;
  odeint::Integrator integ_;
  odeint::ButcherTableau tab_;
  int threads_{1};
  VarLayout lay_;
  RowLayout rows_;
  Vec lo_, up_;
  std::vector<std::pair<int, double>> init_pins_;  // (variable column, value), row order
  std::vector<std::pair<int, double>> terminal_;   // (endpoint index, value)
  std::optional<sim::ReducedRhs> reduced_;
};

}  // namespace simshoot::transcribe

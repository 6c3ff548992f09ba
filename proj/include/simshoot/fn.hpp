#pragma once

#include <memory>
#include <span>
#include <utility>

#include "simshoot/dual.hpp"

// Type-erased vector functions evaluable on every AD scalar this project
// uses. Models (including ones parsed from JSON at runtime) are stored
// behind VecFn, while the numerics underneath stay fully templated.
//
// The closed scalar set is {double, Dual1, Dual2} nested 0..3 levels deep
// inside Dual<>. Three nesting levels on top of a base scalar support time
// derivatives up to order 4 (each Lie differentiation adds one level) and
// gradients of squared-curvature criteria (two levels) evaluated at
// first- or second-order NLP seeds.

namespace simshoot::ad {

using DD1 = Dual<double>;
using DD2 = Dual<DD1>;
using DD3 = Dual<DD2>;
using DV1 = Dual<Dual1>;
using DV2 = Dual<DV1>;
using DV3 = Dual<DV2>;
using DH1 = Dual<Dual2>;
using DH2 = Dual<DH1>;
using DH3 = Dual<DH2>;

#define SIMSHOOT_AD_SCALARS(X)                                            \
  X(double)                                                               \
  X(simshoot::ad::DD1)                                                    \
  X(simshoot::ad::DD2)                                                    \
  X(simshoot::ad::DD3)                                                    \
  X(simshoot::ad::Dual1)                                                  \
  X(simshoot::ad::DV1)                                                    \
  X(simshoot::ad::DV2)                                                    \
  X(simshoot::ad::DV3)                                                    \
  X(simshoot::ad::Dual2)                                                  \
  X(simshoot::ad::DH1)                                                    \
  X(simshoot::ad::DH2)                                                    \
  X(simshoot::ad::DH3)

/// Lift a value into a (possibly deeper) dual type with zero derivative in
/// the added directions. promote<S>(x) with S == T is the identity.
template <class S, class T>
S promote(const T& x) {
  if constexpr (std::is_same_v<S, T>) {
    return x;
  } else if constexpr (requires { typename S::inner_type; }) {
    using Inner = typename S::inner_type;
    return S(promote<Inner>(x), Inner(0.0));
  } else {
    // Dual1 and Dual2 lift a plain double; their derivative blocks start
    // empty, which every arithmetic op treats as zero.
    static_assert(std::is_same_v<T, double>, "no promotion path between these scalars");
    return S(x);
  }
}

class VecFn {
 public:
  virtual ~VecFn() = default;
  virtual int n_in() const = 0;
  virtual int n_out() const = 0;

#define SIMSHOOT_DECLARE_EVAL(T) \
  virtual void eval(std::span<const T> in, std::span<T> out) const = 0;
  SIMSHOOT_AD_SCALARS(SIMSHOOT_DECLARE_EVAL)
#undef SIMSHOOT_DECLARE_EVAL

  /// Lets a VecFn be used wherever a generic functor is expected.
  template <class T>
  void operator()(std::span<const T> in, std::span<T> out) const {
    eval(in, out);
  }
};

using FnPtr = std::shared_ptr<const VecFn>;

template <class F>
class FnImpl final : public VecFn {
 public:
  FnImpl(int n_in, int n_out, F f) : n_in_(n_in), n_out_(n_out), f_(std::move(f)) {}
  int n_in() const override { return n_in_; }
  int n_out() const override { return n_out_; }

#define SIMSHOOT_DEFINE_EVAL(T)                                       \
  void eval(std::span<const T> in, std::span<T> out) const override { \
    f_(in, out);                                                      \
  }
  SIMSHOOT_AD_SCALARS(SIMSHOOT_DEFINE_EVAL)
#undef SIMSHOOT_DEFINE_EVAL

 private:
  int n_in_;
  int n_out_;
  F f_;
};

/// Wrap a generic callable f(span<const T> in, span<T> out) as a VecFn.
template <class F>
FnPtr make_fn(int n_in, int n_out, F f) {
  return std::make_shared<FnImpl<F>>(n_in, n_out, std::move(f));
}

}  // namespace simshoot::ad

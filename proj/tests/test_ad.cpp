#include <doctest.h>

#include <cmath>

#include "simshoot/ad.hpp"
#include "simshoot/dual.hpp"
#include "simshoot/fn.hpp"

using namespace simshoot;

TEST_SUITE_BEGIN("ad");

TEST_CASE("first-order duals follow the product and quotient rules") {
  ad::Dual1 x = ad::Dual1::seed(3.0, 0, 2);
  ad::Dual1 y = ad::Dual1::seed(2.0, 1, 2);
  ad::Dual1 p = x * y;
  CHECK(p.value == doctest::Approx(6.0));
  CHECK(p.partials[0] == doctest::Approx(2.0));
  CHECK(p.partials[1] == doctest::Approx(3.0));
  ad::Dual1 q = x / y;
  CHECK(q.value == doctest::Approx(1.5));
  CHECK(q.partials[0] == doctest::Approx(0.5));        // 1/y
  CHECK(q.partials[1] == doctest::Approx(-0.75));      // -x/y^2
  ad::Dual1 s = 2.0 * x - y + 1.0;
  CHECK(s.value == doctest::Approx(5.0));
  CHECK(s.partials[0] == doctest::Approx(2.0));
  CHECK(s.partials[1] == doctest::Approx(-1.0));
}

TEST_CASE("empty partials mean zero and accumulate correctly") {
  ad::Dual1 c(4.0);  // constant, no partials
  ad::Dual1 x = ad::Dual1::seed(2.0, 0, 1);
  ad::Dual1 r = c * x + c;
  CHECK(r.value == doctest::Approx(12.0));
  REQUIRE(r.partials.size() == 1);
  CHECK(r.partials[0] == doctest::Approx(4.0));
  ad::Dual1 cc = c + c * c;
  CHECK(cc.value == doctest::Approx(20.0));
  CHECK(cc.partials.size() == 0);
}

TEST_CASE("second-order duals carry exact gradients and Hessians") {
  // f(x, y) = x^2 y + y^3: grad = (2xy, x^2 + 3y^2), hess = [[2y, 2x], [2x, 6y]]
  ad::Dual2 x = ad::Dual2::seed(1.0, 0, 2);
  ad::Dual2 y = ad::Dual2::seed(2.0, 1, 2);
  ad::Dual2 f = x * x * y + y * y * y;
  CHECK(f.value == doctest::Approx(10.0));
  CHECK(f.grad[0] == doctest::Approx(4.0));
  CHECK(f.grad[1] == doctest::Approx(13.0));
  CHECK(f.hess(0, 0) == doctest::Approx(4.0));
  CHECK(f.hess(0, 1) == doctest::Approx(2.0));
  CHECK(f.hess(1, 0) == doctest::Approx(2.0));
  CHECK(f.hess(1, 1) == doctest::Approx(12.0));
}

TEST_CASE("second-order division and elementary functions match closed forms") {
  ad::Dual2 x = ad::Dual2::seed(2.0, 0, 1);
  ad::Dual2 inv = 1.0 / x;
  CHECK(inv.value == doctest::Approx(0.5));
  CHECK(inv.grad[0] == doctest::Approx(-0.25));
  CHECK(inv.hess(0, 0) == doctest::Approx(0.25));  // 2/x^3

  ad::Dual2 e = ad::exp(x);
  CHECK(e.grad[0] == doctest::Approx(std::exp(2.0)));
  CHECK(e.hess(0, 0) == doctest::Approx(std::exp(2.0)));

  ad::Dual2 l = ad::log(x);
  CHECK(l.grad[0] == doctest::Approx(0.5));
  CHECK(l.hess(0, 0) == doctest::Approx(-0.25));

  ad::Dual2 r = ad::sqrt(x);
  CHECK(r.grad[0] == doctest::Approx(0.5 / std::sqrt(2.0)));
  CHECK(r.hess(0, 0) == doctest::Approx(-0.25 * std::pow(2.0, -1.5)));

  ad::Dual2 sn = ad::sin(x), cs = ad::cos(x);
  CHECK(sn.grad[0] == doctest::Approx(std::cos(2.0)));
  CHECK(sn.hess(0, 0) == doctest::Approx(-std::sin(2.0)));
  CHECK(cs.grad[0] == doctest::Approx(-std::sin(2.0)));
  CHECK(cs.hess(0, 0) == doctest::Approx(-std::cos(2.0)));
}

TEST_CASE("single-direction duals nest to higher directional derivatives") {
  // f(t) = t^3 along direction 1: f'' = 6t, f''' = 6
  using D1 = ad::Dual<double>;
  using D2 = ad::Dual<D1>;
  using D3 = ad::Dual<D2>;
  // every direction seed 1: a slot with k deriv indices holds the k-th derivative
  D3 t(D2(D1(0.5, 1.0), D1(1.0, 0.0)), D2(D1(1.0, 0.0), D1(0.0, 0.0)));
  D3 f = t * t * t;
  CHECK(ad::value_of(f) == doctest::Approx(0.125));
  CHECK(f.value.value.deriv == doctest::Approx(0.75));       // f' = 3t^2
  CHECK(f.value.deriv.value == doctest::Approx(0.75));
  CHECK(f.deriv.value.value == doctest::Approx(0.75));
  CHECK(f.deriv.deriv.value == doctest::Approx(3.0));        // f'' = 6t
  CHECK(f.deriv.value.deriv == doctest::Approx(3.0));
  CHECK(f.value.deriv.deriv == doctest::Approx(3.0));
  CHECK(f.deriv.deriv.deriv == doctest::Approx(6.0));        // f'''
}

TEST_CASE("pow_int is exact on integers and differentiates") {
  CHECK(ad::pow_int(2.0, 10) == 1024.0);
  CHECK(ad::pow_int(2.0, 0) == 1.0);
  CHECK(ad::pow_int(2.0, -2) == doctest::Approx(0.25));
  ad::Dual2 x = ad::Dual2::seed(3.0, 0, 1);
  ad::Dual2 p = ad::pow_int(x, 3);
  CHECK(p.value == doctest::Approx(27.0));
  CHECK(p.grad[0] == doctest::Approx(27.0));   // 3x^2
  CHECK(p.hess(0, 0) == doctest::Approx(18.0));  // 6x
}

TEST_CASE("jacobian drives dense seeds through a VecFn") {
  auto f = ad::make_fn(2, 2, [](auto in, auto out) {
    out[0] = in[0] * in[1];
    out[1] = ad::sin(in[0]) + in[1] * in[1];
  });
  Vec x(2);
  x << 1.2, 0.7;
  Mat J = ad::jacobian(*f, x);
  CHECK(J(0, 0) == doctest::Approx(0.7));
  CHECK(J(0, 1) == doctest::Approx(1.2));
  CHECK(J(1, 0) == doctest::Approx(std::cos(1.2)));
  CHECK(J(1, 1) == doctest::Approx(1.4));

  auto c = ad::make_fn(2, 1, [](auto in, auto out) {
    (void)in;
    out[0] = 3.0;
  });
  Mat Jc = ad::jacobian(*c, x);
  CHECK(Jc.norm() == 0.0);  // constant output row stays empty, read as zero

  CHECK_THROWS_AS(ad::jacobian(*f, Vec::Zero(3)), InputError);
}

TEST_CASE("time derivatives of a linear field are matrix powers") {
  Mat A(3, 3);
  A << 0.0, 1.0, 0.0,
      -2.0, -0.3, 0.5,
       0.1, 0.0, -1.0;
  auto field = [&]<class S>(std::span<const S> x, std::span<S> out) {
    for (int i = 0; i < 3; ++i) {
      S acc(0.0);
      for (int j = 0; j < 3; ++j) acc += A(i, j) * x[j];
      out[i] = std::move(acc);
    }
  };
  Vec x0(3);
  x0 << 1.0, -0.5, 2.0;
  std::vector<Vec> d = ad::time_derivatives(field, x0, 4);
  Mat Ak = Mat::Identity(3, 3);
  for (int k = 1; k <= 4; ++k) {
    Ak = A * Ak;
    Vec expect = Ak * x0;
    CHECK((d[k - 1] - expect).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("time derivatives of x' = x^2 at x=1 are factorials") {
  // solution 1/(1-t): k-th derivative at t=0 equals k!
  auto field = [&]<class S>(std::span<const S> x, std::span<S> out) { out[0] = x[0] * x[0]; };
  Vec x0 = Vec::Ones(1);
  std::vector<Vec> d = ad::time_derivatives(field, x0, 4);
  CHECK(d[0][0] == doctest::Approx(1.0));
  CHECK(d[1][0] == doctest::Approx(2.0));
  CHECK(d[2][0] == doctest::Approx(6.0));
  CHECK(d[3][0] == doctest::Approx(24.0));
  CHECK_THROWS_AS(ad::time_derivatives(field, x0, 5), InputError);
  CHECK_THROWS_AS(ad::time_derivatives(field, x0, 0), InputError);
}

TEST_CASE("hessian of the weighted constraint aggregate") {
  auto obj = ad::make_fn(2, 1, [](auto in, auto out) { out[0] = in[0] * in[0] * in[1]; });
  auto con = ad::make_fn(2, 1, [](auto in, auto out) { out[0] = in[0] * in[1] * in[1]; });
  Vec x(2);
  x << 1.0, 2.0;
  Vec lam = Vec::Constant(1, 3.0);
  Mat H = ad::hessian_lagrangian(*obj, *con, x, lam);
  // hess(x^2 y) = [[2y, 2x], [2x, 0]] = [[4,2],[2,0]]
  // hess(x y^2) = [[0, 2y], [2y, 2x]] = [[0,4],[4,2]]
  Mat expect(2, 2);
  expect << 4.0, 14.0, 14.0, 6.0;
  CHECK((H - expect).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(ad::hessian_lagrangian(*obj, *con, x, Vec::Zero(2)), InputError);
  CHECK_THROWS_AS(ad::hessian_lagrangian(*con, *con, Vec::Zero(3), lam), InputError);
}

TEST_CASE("promote lifts values through every nesting level") {
  using DH2 = ad::Dual<ad::Dual<ad::Dual2>>;
  DH2 lifted = ad::promote<DH2>(3.5);
  CHECK(ad::value_of(lifted) == 3.5);
  CHECK(ad::abs_max(lifted) == 3.5);
  ad::Dual1 seeded = ad::Dual1::seed(2.0, 0, 4);
  auto deep = ad::promote<ad::Dual<ad::Dual1>>(seeded);
  CHECK(ad::value_of(deep) == 2.0);
  CHECK(deep.value.partials[0] == 1.0);
  CHECK(ad::abs_max(deep.deriv) == 0.0);
}

TEST_CASE("gradient and second_order agree on a scalar function") {
  auto f = [](auto in, auto out) { out[0] = ad::exp(in[0]) * in[1] + in[1] * in[1]; };
  Vec x(2);
  x << 0.3, -1.2;
  Vec g = ad::gradient(f, x);
  CHECK(g[0] == doctest::Approx(std::exp(0.3) * -1.2));
  CHECK(g[1] == doctest::Approx(std::exp(0.3) - 2.4));
  ad::Dual2 so = ad::second_order(f, x);
  CHECK(so.value == doctest::Approx(std::exp(0.3) * -1.2 + 1.44));
  CHECK((so.grad - g).norm() == doctest::Approx(0.0).epsilon(1e-13));
  CHECK(so.hess(0, 0) == doctest::Approx(std::exp(0.3) * -1.2));
  CHECK(so.hess(0, 1) == doctest::Approx(std::exp(0.3)));
  CHECK(so.hess(1, 1) == doctest::Approx(2.0));
}

TEST_SUITE_END();

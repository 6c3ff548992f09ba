#pragma once

#include <cmath>

#include "simshoot/common.hpp"

namespace simshoot::odeint {

struct ButcherTableau {
  std::string name;
  Mat A;
  Vec b;
  Vec c;
  int order{0};
  bool stiffly_accurate{false};
};

/// Classic 4-stage explicit Runge-Kutta, order 4.
inline ButcherTableau rk4_tableau() {
  ButcherTableau t;
  t.name = "rk4";
  t.order = 4;
  t.A = Mat::Zero(4, 4);
  t.A(1, 0) = 0.5;
  t.A(2, 1) = 0.5;
  t.A(3, 2) = 1.0;
  t.b = Vec(4);
  t.b << 1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0;
  t.c = Vec(4);
  t.c << 0.0, 0.5, 0.5, 1.0;
  return t;
}

/// 3-stage Radau IIA, order 5 (Hairer & Wanner, Solving ODEs II, Table 5.6).
/// L-stable and stiffly accurate: c_3 = 1 and the last row of A equals b.
/// Constants below are exact to 30 significant digits:
///   c_1 = (4 - sqrt(6))/10  = 0.155051025721682190180271592529
///   c_2 = (4 + sqrt(6))/10  = 0.644948974278317809819728407471
///   c_3 = 1
///   a_11 = (88 - 7 sqrt(6))/360    =  0.196815477223660425868386142992
///   a_12 = (296 - 169 sqrt(6))/1800 = -0.0655354258501983881085227825696
///   a_13 = (-2 + 3 sqrt(6))/225    =  0.0237709743482201524204082321072
///   a_21 = (296 + 169 sqrt(6))/1800 =  0.394424314739087276997411671458
///   a_22 = (88 + 7 sqrt(6))/360    =  0.292073411665228463020502745897
///   a_23 = (-2 - 3 sqrt(6))/225    = -0.0415487521259979301981860098850
///   a_31 = (16 - sqrt(6))/36       =  0.376403062700467275050075442369
///   a_32 = (16 + sqrt(6))/36       =  0.512485826188421613838813446520
///   a_33 = 1/9                     =  0.111111111111111111111111111111
///   b = (a_31, a_32, a_33)
inline ButcherTableau radau_iia_tableau() {
  const double s6 = std::sqrt(6.0);
  ButcherTableau t;
  t.name = "radau_iia_5";
  t.order = 5;
  t.stiffly_accurate = true;
  t.A = Mat(3, 3);
  t.A << (88.0 - 7.0 * s6) / 360.0, (296.0 - 169.0 * s6) / 1800.0, (-2.0 + 3.0 * s6) / 225.0,
      (296.0 + 169.0 * s6) / 1800.0, (88.0 + 7.0 * s6) / 360.0, (-2.0 - 3.0 * s6) / 225.0,
      (16.0 - s6) / 36.0, (16.0 + s6) / 36.0, 1.0 / 9.0;
  t.b = t.A.row(2).transpose();
  t.c = Vec(3);
  t.c << (4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0;
  return t;
}

/// Linear stability function R(z) = 1 + z b^T (I - z A)^{-1} 1. The method
/// maps x to R(h lambda) x on x' = lambda x.
inline double stability_value(const ButcherTableau& t, double z) {
  const int s = static_cast<int>(t.b.size());
  Mat M = Mat::Identity(s, s) - z * t.A;
  Vec k = M.partialPivLu().solve(Vec::Ones(s));
  return 1.0 + z * t.b.dot(k);
}

}  // namespace simshoot::odeint

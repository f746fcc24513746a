#pragma once

#include <cmath>
#include <functional>

#include "bounce/types.hpp"

namespace bounce::detail {

// One accepted Dormand-Prince 5(4) step with its quartic dense-output
// polynomial, valid for theta in [0,1].
struct Dopri5Segment {
  double t0 = 0.0;
  double h = 0.0;
  Vec r1, r2, r3, r4, r5;

  Vec eval(double theta) const {
    const double th1 = 1.0 - theta;
    return r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)));
  }
};

class Dopri5 {
 public:
  using Rhs = std::function<Vec(const Vec&)>;

  Dopri5(Rhs f, int dim) : f_(std::move(f)), dim_(dim) {}

  // Attempts a step of size h from y0 (with k1 = f(y0) supplied for FSAL).
  // Fills y1, k_last = f(y1), the dense segment, and the scaled error norm.
  struct Attempt {
    Vec y1;
    Vec k_last;
    Dopri5Segment seg;
    double err = 0.0;
  };

  Attempt step(double t0, const Vec& y0, const Vec& k1, double h, double abs_tol,
               double rel_tol) const {
    const Vec k2 = f_(y0 + h * (a21 * k1));
    const Vec k3 = f_(y0 + h * (a31 * k1 + a32 * k2));
    const Vec k4 = f_(y0 + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vec k5 = f_(y0 + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vec k6 = f_(y0 + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    Attempt out;
    out.y1 = y0 + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    out.k_last = f_(out.y1);
    const Vec& k7 = out.k_last;

    const Vec e = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double acc = 0.0;
    for (int i = 0; i < dim_; ++i) {
      const double sc = abs_tol + rel_tol * std::max(std::abs(y0[i]), std::abs(out.y1[i]));
      const double r = e[i] / sc;
      acc += r * r;
    }
    out.err = std::sqrt(acc / dim_);

    Dopri5Segment& s = out.seg;
    s.t0 = t0;
    s.h = h;
    s.r1 = y0;
    s.r2 = out.y1 - y0;
    s.r3 = h * k1 - s.r2;
    s.r4 = s.r2 - h * k7 - s.r3;
    s.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
    return out;
  }

  Vec rhs(const Vec& y) const { return f_(y); }
  int dim() const { return dim_; }

  static double accept_factor(double err) {
    const double fac = 0.9 * std::pow(std::max(err, 1e-16), -0.2);
    return std::min(5.0, std::max(0.2, fac));
  }

 private:
  Rhs f_;
  int dim_;

  static constexpr double a21 = 1.0 / 5.0;
  static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
  static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
  static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                          a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
  static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                          a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
  static constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                          a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
  static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                          e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

}  // namespace bounce::detail

#include "bounce/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bounce/errors.hpp"

namespace bounce {

Vec el_acceleration(const PotentialField& pot, const PenaltyContext* pen, double eps,
                    const Vec& q) {
  Vec a = -pot.gradient(q);
  if (eps != 0.0) {
    if (!pen || !pen->domain || !pen->profile)
      throw std::invalid_argument("el_acceleration: eps > 0 requires a penalty context");
    a -= eps * penalty_U(*pen->domain, *pen->profile, q).grad;
  }
  return a;
}

double energy_value(const PotentialField& pot, const PenaltyContext* pen, double eps,
                    const PhaseState& s) {
  double e = 0.5 * s.v.squaredNorm() + pot.value(s.q);
  if (eps != 0.0) {
    if (!pen || !pen->domain || !pen->profile)
      throw std::invalid_argument("energy_value: eps > 0 requires a penalty context");
    e += eps * penalty_U(*pen->domain, *pen->profile, s.q).U;
  }
  return e;
}

Vec Trajectory::y_at(double t) const {
  if (segments.empty()) throw std::out_of_range("Trajectory::y_at: empty trajectory");
  const double span = std::max(t1 - t0, 1e-300);
  if (t < t0 - 1e-9 * span || t > t1 + 1e-9 * span)
    throw std::out_of_range("Trajectory::y_at: time outside trajectory range");
  t = std::clamp(t, t0, t1);
  // Find the segment whose [t0, t0+h] window contains t.
  size_t lo = 0, hi = segments.size() - 1;
  while (lo < hi) {
    const size_t mid = (lo + hi + 1) / 2;
    if (segments[mid].t0 <= t)
      lo = mid;
    else
      hi = mid - 1;
  }
  const auto& seg = segments[lo];
  const double theta = std::clamp((t - seg.t0) / seg.h, 0.0, 1.0);
  return seg.eval(theta);
}

PhaseState Trajectory::state_at(double t) const {
  const Vec y = y_at(t);
  return PhaseState{y.head(dim), y.tail(dim)};
}

Trajectory integrate_smooth(const PotentialField& pot, const PenaltyContext* pen, double eps,
                            const PhaseState& start, double duration, const OdeOptions& opts) {
  if (!(duration > 0.0)) throw std::invalid_argument("integrate_smooth: duration must be > 0");
  const int n = static_cast<int>(start.q.size());
  if (start.v.size() != n) throw std::invalid_argument("integrate_smooth: q/v size mismatch");

  detail::Dopri5 stepper(
      [&](const Vec& y) {
        Vec dy(2 * n);
        dy.head(n) = y.tail(n);
        dy.tail(n) = el_acceleration(pot, pen, eps, y.head(n));
        return dy;
      },
      2 * n);

  Vec y(2 * n);
  y.head(n) = start.q;
  y.tail(n) = start.v;
  Vec k1 = stepper.rhs(y);

  const double e0 = energy_value(pot, pen, eps, start);
  const double spike_tol = 1e-5 * (1.0 + std::abs(e0));
  const bool check_domain = eps != 0.0 && pen && pen->domain;

  double h = opts.init_step > 0.0 ? opts.init_step : duration / 100.0;
  h = std::min({h, opts.max_step, duration});
  const double k1n = k1.norm();
  if (opts.init_step <= 0.0 && k1n > 0.0) h = std::min(h, 0.1 * (y.norm() + 1.0) / k1n);
  const double h_min = 1e-14 * duration;

  Trajectory traj;
  traj.t0 = 0.0;
  traj.t1 = duration;
  traj.dim = n;
  traj.start = start;

  double t = 0.0;
  double e_prev = e0;
  long steps = 0;
  while (t < duration) {
    if (++steps > opts.max_steps) throw IntegrationError("integrate_smooth: step budget exhausted");
    h = std::min(h, duration - t);
    auto att = stepper.step(t, y, k1, h, opts.abs_tol, opts.rel_tol);

    bool ok = att.y1.allFinite() && att.err <= 1.0;
    double shrink = ok ? 1.0 : std::min(0.9, detail::Dopri5::accept_factor(att.err));
    if (ok && check_domain) {
      const Vec q_mid = att.seg.eval(0.5).head(n);
      const Vec q_end = att.y1.head(n);
      if (pen->domain->implicit(q_mid) >= 0.0 || pen->domain->implicit(q_end) >= 0.0) {
        ok = false;
        shrink = 0.3;
      }
    }
    if (ok) {
      const double e_new =
          energy_value(pot, pen, eps, PhaseState{att.y1.head(n), att.y1.tail(n)});
      if (std::abs(e_new - e_prev) > spike_tol) {
        ok = false;
        shrink = 0.3;
      } else {
        e_prev = e_new;
      }
    }

    if (!ok) {
      h *= shrink;
      if (h < h_min)
        throw IntegrationError("integrate_smooth: step size underflow (stiff penalty region?)");
      continue;
    }

    traj.segments.push_back(att.seg);
    t += h;
    y = att.y1;
    k1 = att.k_last;
    traj.energy_drift = std::max(traj.energy_drift, std::abs(e_prev - e0));
    h = std::min(h * detail::Dopri5::accept_factor(att.err), opts.max_step);
  }

  traj.end = PhaseState{y.head(n), y.tail(n)};
  return traj;
}

}  // namespace bounce

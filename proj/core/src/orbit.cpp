#include "bounce/orbit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "bounce/errors.hpp"

namespace bounce {
namespace {

double characteristic_speed(const PotentialField& pot, double energy) {
  const double gap = std::max(energy - pot.stats().v_min, 0.0);
  return std::sqrt(2.0 * std::max(gap, 1e-300));
}

// Orthonormal basis of the hyperplane normal to n, as columns.
Mat tangent_frame(const Vec& n) {
  const int N = static_cast<int>(n.size());
  Mat frame(N, N - 1);
  // Householder: columns 1..N-1 of the reflector mapping e_k -> n.
  int k;
  n.cwiseAbs().maxCoeff(&k);
  Vec u = n;
  u[k] += (n[k] >= 0.0 ? 1.0 : -1.0) * n.norm();
  u.normalize();
  int col = 0;
  for (int j = 0; j < N; ++j) {
    if (j == k) continue;
    Vec e = Vec::Zero(N);
    e[j] = 1.0;
    frame.col(col++) = e - 2.0 * u[j] * u;
  }
  return frame;
}

}  // namespace

PhaseState BounceOrbit::state_at(double t) const {
  if (arcs.empty()) throw std::out_of_range("BounceOrbit::state_at: empty orbit");
  if (t < -1e-9 * period || t > period * (1.0 + 1e-9))
    throw std::out_of_range("BounceOrbit::state_at: time outside [0, period]");
  t = std::clamp(t, 0.0, period);
  for (size_t i = 0; i + 1 < arcs.size(); ++i)
    if (t < arcs[i].t1) return arcs[i].state_at(t);
  return arcs.back().state_at(std::min(t, arcs.back().t1));
}

Vec reflect_velocity(const Vec& v_in, const Vec& normal, double grazing_tol) {
  const double vn = v_in.dot(normal);
  if (vn <= 0.0)
    throw std::invalid_argument("reflect_velocity: velocity is not outgoing at the wall");
  if (vn <= grazing_tol)
    throw GrazingEvent("reflect_velocity: normal velocity component within grazing tolerance");
  return v_in - 2.0 * vn * normal;
}

BounceOrbit integrate_with_bounces(const Domain& dom, const PotentialField& pot,
                                   const PhaseState& start, double duration,
                                   const BounceIntegrateOptions& opts) {
  if (!(duration > 0.0))
    throw std::invalid_argument("integrate_with_bounces: duration must be > 0");
  const int n = dom.dim();
  if (start.q.size() != n || start.v.size() != n)
    throw std::invalid_argument("integrate_with_bounces: state dimension mismatch");
  if (dom.implicit(start.q) >= 0.0)
    throw DomainViolation("integrate_with_bounces: start point outside the open domain");

  const double E = energy_value(pot, nullptr, 0.0, start);
  const double char_speed = characteristic_speed(pot, E);
  const double grazing = opts.grazing_tol > 0.0 ? opts.grazing_tol : 1e-6 * char_speed;
  const double diam = dom.diameter();
  const double nudge = 1e-12 * diam;

  detail::Dopri5 stepper(
      [&](const Vec& y) {
        Vec dy(2 * n);
        dy.head(n) = y.tail(n);
        dy.tail(n) = el_acceleration(pot, nullptr, 0.0, y.head(n));
        return dy;
      },
      2 * n);

  BounceOrbit orbit;
  orbit.energy = E;
  orbit.period = duration;
  orbit.start = start;

  Vec y(2 * n);
  y.head(n) = start.q;
  y.tail(n) = start.v;
  Vec k1 = stepper.rhs(y);
  double t = 0.0;
  double e_prev = E;
  const double spike_tol = 1e-5 * (1.0 + std::abs(E));

  Trajectory arc;
  arc.t0 = 0.0;
  arc.dim = n;
  arc.start = start;

  auto close_arc = [&](double t_end, const PhaseState& end) {
    arc.t1 = t_end;
    arc.end = end;
    if (!arc.segments.empty() || orbit.arcs.empty()) orbit.arcs.push_back(std::move(arc));
    arc = Trajectory{};
    arc.t0 = t_end;
    arc.dim = n;
    arc.end = {};
  };

  double h = duration / 100.0;
  long steps = 0;
  const double h_min = 1e-14 * duration;

  while (t < duration) {
    if (++steps > opts.ode.max_steps)
      throw IntegrationError("integrate_with_bounces: step budget exhausted");
    const double speed = y.tail(n).norm();
    const double cap = opts.step_cap_rel * diam / std::max(speed, 0.05 * char_speed);
    h = std::min({h, duration - t, cap, opts.ode.max_step});

    auto att = stepper.step(t, y, k1, h, opts.ode.abs_tol, opts.ode.rel_tol);
    bool ok = att.y1.allFinite() && att.err <= 1.0;
    if (ok) {
      const double e_new = energy_value(pot, nullptr, 0.0, {att.y1.head(n), att.y1.tail(n)});
      ok = std::abs(e_new - e_prev) <= spike_tol;
      if (ok) e_prev = e_new;
    }
    if (!ok) {
      h *= std::min(0.9, detail::Dopri5::accept_factor(att.err));
      if (h < h_min) throw IntegrationError("integrate_with_bounces: step size underflow");
      continue;
    }

    // Scan the dense output for the first wall crossing.
    const int S = std::max(opts.scan_points, 4);
    double theta_lo = -1.0, theta_hi = -1.0;
    double f_prev = dom.implicit(att.seg.eval(0.0).head(n));
    if (f_prev > 0.0)
      throw IntegrationError("integrate_with_bounces: step began outside the domain");
    for (int j = 1; j <= S; ++j) {
      const double th = static_cast<double>(j) / S;
      const double f = dom.implicit(att.seg.eval(th).head(n));
      if (f_prev <= 0.0 && f > 0.0) {
        theta_lo = static_cast<double>(j - 1) / S;
        theta_hi = th;
        break;
      }
      f_prev = f;
    }

    if (theta_lo < 0.0) {
      // No crossing: accept the whole step.
      arc.segments.push_back(att.seg);
      t += h;
      y = att.y1;
      k1 = att.k_last;
      h = std::min(h * detail::Dopri5::accept_factor(att.err), opts.ode.max_step);
      continue;
    }

    // Root of F along the dense output: bisection, then Newton polish on
    // dF/dt = ∇F · v.
    double lo = theta_lo, hi = theta_hi;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (dom.implicit(att.seg.eval(mid).head(n)) > 0.0)
        hi = mid;
      else
        lo = mid;
    }
    double theta = 0.5 * (lo + hi);
    for (int it = 0; it < 4; ++it) {
      const Vec ye = att.seg.eval(theta);
      const double f = dom.implicit(ye.head(n));
      const double df = dom.implicit_gradient(ye.head(n)).dot(ye.tail(n)) * h;
      if (df == 0.0) break;
      theta = std::clamp(theta - f / df, theta_lo, theta_hi);
    }

    const Vec ye = att.seg.eval(theta);
    const double t_event = t + theta * h;
    const Vec q_e = ye.head(n);
    const Vec v_e = ye.tail(n);

    const Projection proj = dom.boundary_projection(q_e);
    if ((q_e - proj.point).norm() > 1e-6 * diam)
      throw IntegrationError("integrate_with_bounces: event point snapped too far");
    const Vec v_out = reflect_velocity(v_e, proj.normal, grazing);

    if (static_cast<int>(orbit.events.size()) >= opts.max_events)
      throw IntegrationError("integrate_with_bounces: event budget exhausted");

    BounceEvent ev;
    ev.t = t_event;
    ev.point = proj.point;
    ev.normal = proj.normal;
    ev.v_in = v_e;
    ev.v_out = v_out;
    orbit.events.push_back(ev);

    arc.segments.push_back(att.seg);  // valid on [t, t+h]; the arc ends at t_event
    close_arc(t_event, PhaseState{proj.point, v_e});
    arc.start = PhaseState{proj.point, v_out};

    y.head(n) = proj.point - nudge * proj.normal;
    y.tail(n) = v_out;
    k1 = stepper.rhs(y);
    t = t_event;
    e_prev = energy_value(pot, nullptr, 0.0, {y.head(n), y.tail(n)});
  }

  close_arc(duration, PhaseState{y.head(n), y.tail(n)});
  return orbit;
}

ReflectionReport check_reflection_law(const Domain& dom, const BounceOrbit& orbit, double tol) {
  ReflectionReport rep;
  rep.min_normal_component = std::numeric_limits<double>::infinity();
  for (const auto& ev : orbit.events) {
    const Vec g = dom.implicit_gradient(ev.point);
    const Vec nrm = g.normalized();
    const double vmag = std::max(ev.v_in.norm(), 1e-300);
    rep.max_normal_residual =
        std::max(rep.max_normal_residual,
                 std::abs(ev.v_out.dot(nrm) + ev.v_in.dot(nrm)) / vmag);
    const Vec dv = ev.v_out - ev.v_in;
    const Vec tang = dv - dv.dot(nrm) * nrm;
    rep.max_tangential_residual = std::max(rep.max_tangential_residual, tang.norm() / vmag);
    rep.min_normal_component = std::min(rep.min_normal_component, ev.v_in.dot(nrm));
    rep.max_boundary_violation =
        std::max(rep.max_boundary_violation, std::abs(dom.implicit(ev.point)));
  }
  if (orbit.events.empty()) rep.min_normal_component = 0.0;
  rep.pass = rep.max_normal_residual <= tol && rep.max_tangential_residual <= tol &&
             rep.max_boundary_violation <= 1e-8 &&
             (orbit.events.empty() || rep.min_normal_component > 0.0);
  return rep;
}

EnergyReport check_energy_invariant(const PotentialField& pot, const BounceOrbit& orbit,
                                    double tol, int samples_per_arc) {
  EnergyReport rep;
  for (const auto& a : orbit.arcs) {
    for (int j = 0; j <= samples_per_arc; ++j) {
      const double t = a.t0 + (a.t1 - a.t0) * j / samples_per_arc;
      const double e = energy_value(pot, nullptr, 0.0, a.state_at(t));
      rep.max_deviation = std::max(rep.max_deviation, std::abs(e - orbit.energy));
    }
  }
  rep.pass = rep.max_deviation <= tol * std::max(1.0, std::abs(orbit.energy));
  return rep;
}

RefineResult refine_periodic_shooting(const Domain& dom, const PotentialField& pot,
                                      const BounceOrbit& candidate, const ShootingOptions& opts) {
  const int k = candidate.bounce_count();
  if (k < 1)
    throw std::invalid_argument(
        "refine_periodic_shooting: candidate must have at least one bounce event");
  const int N = dom.dim();
  const int per = 2 * N - 1;
  const double E = candidate.energy;
  const double diam = dom.diameter();
  const double char_speed = characteristic_speed(pot, E);
  const double grazing = opts.grazing_tol > 0.0 ? opts.grazing_tol : 1e-6 * char_speed;

  // Base charts at the candidate events.
  std::vector<Vec> p0(k), d0(k);
  std::vector<Mat> Tf(k), Df(k);
  Vec dt0(k);
  for (int j = 0; j < k; ++j) {
    const auto& ev = candidate.events[j];
    p0[j] = ev.point;
    Tf[j] = tangent_frame(ev.normal);
    d0[j] = ev.v_out.normalized();
    Df[j] = tangent_frame(d0[j]);
    const auto& nx = candidate.events[(j + 1) % k];
    double dt = nx.t - ev.t;
    if (j == k - 1) dt = candidate.period - ev.t + candidate.events[0].t;
    dt0[j] = dt;
    if (!(dt > 0.0))
      throw std::invalid_argument("refine_periodic_shooting: nonpositive flight time in candidate");
  }

  struct Leg {
    Vec p, nu, v_out, q_end, v_end;
    double speed;
  };

  // Decodes the unknowns for junction j and flies the leg.
  auto decode = [&](const Vec& u, int j) {
    Leg leg;
    const Vec s = u.segment(j * per, N - 1);
    const Vec w = u.segment(j * per + (N - 1), N - 1);
    const Projection proj = dom.boundary_projection(p0[j] + Tf[j] * s);
    leg.p = proj.point;
    leg.nu = proj.normal;
    const double gap = E - pot.value(leg.p);
    if (!(gap > 0.0)) throw SolveError("refine_periodic_shooting: energy at or below V at a bounce point");
    leg.speed = std::sqrt(2.0 * gap);
    leg.v_out = leg.speed * (d0[j] + Df[j] * w).normalized();
    return leg;
  };

  auto residual = [&](const Vec& u) {
    Vec r(k * per);
    std::vector<Leg> legs(k);
    for (int j = 0; j < k; ++j) legs[j] = decode(u, j);
    for (int j = 0; j < k; ++j) {
      const double dt = u[j * per + per - 1];
      if (!(dt > 0.0)) throw SolveError("refine_periodic_shooting: flight time went nonpositive");
      const Trajectory fl =
          integrate_smooth(pot, nullptr, 0.0, PhaseState{legs[j].p, legs[j].v_out}, dt, opts.ode);
      const Leg& nx = legs[(j + 1) % k];
      r.segment(j * per, N) = (fl.end.q - nx.p) / diam;
      const Vec vr = fl.end.v - 2.0 * fl.end.v.dot(nx.nu) * nx.nu;
      // Tangent frame at the moved point: base frame re-orthogonalized
      // against the current normal.
      Mat T = Tf[(j + 1) % k] - nx.nu * (nx.nu.transpose() * Tf[(j + 1) % k]);
      for (int c = 0; c < T.cols(); ++c) T.col(c).normalize();
      r.segment(j * per + N, N - 1) = T.transpose() * (vr - nx.v_out) / char_speed;
    }
    return r;
  };

  Vec u = Vec::Zero(k * per);
  for (int j = 0; j < k; ++j) u[j * per + per - 1] = dt0[j];

  RefineResult out;
  Vec r;
  try {
    r = residual(u);
  } catch (const std::exception& e) {
    out.rejected = true;
    out.message = std::string("initial residual evaluation failed: ") + e.what();
    out.orbit = candidate;
    return out;
  }

  double lambda = 1e-10;
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    if (r.lpNorm<Eigen::Infinity>() <= opts.closure_tol) break;
    // Forward-difference Jacobian in the scaled unknowns.
    Mat J(k * per, k * per);
    bool jac_ok = true;
    for (int c = 0; c < k * per && jac_ok; ++c) {
      const int slot = c % per;
      double scale = slot < N - 1 ? diam : (slot < 2 * (N - 1) ? 1.0 : std::max(dt0.maxCoeff(), 1.0));
      const double step = opts.fd_step * scale;
      Vec up = u;
      up[c] += step;
      try {
        J.col(c) = (residual(up) - r) / step;
      } catch (const std::exception&) {
        jac_ok = false;
      }
    }
    if (!jac_ok) break;
    const Mat JtJ = J.transpose() * J;
    const Vec Jtr = J.transpose() * r;
    bool accepted = false;
    for (int inner = 0; inner < 25; ++inner) {
      Mat A = JtJ;
      A.diagonal().array() += lambda * (JtJ.diagonal().mean() + 1e-30);
      Eigen::LDLT<Mat> ldlt(A);
      if (ldlt.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Vec du = ldlt.solve(-Jtr);
      try {
        const Vec ut = u + du;
        const Vec rt = residual(ut);
        if (rt.norm() < r.norm()) {
          u = ut;
          r = rt;
          lambda = std::max(lambda * 0.25, 1e-14);
          accepted = true;
          break;
        }
      } catch (const std::exception&) {
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
  }

  out.iterations = it;
  out.residual = r.lpNorm<Eigen::Infinity>();
  out.converged = out.residual <= opts.closure_tol;
  if (!out.converged) {
    std::ostringstream os;
    os << "shooting did not reach closure tolerance: residual " << out.residual;
    out.message = os.str();
  }

  // Rebuild the orbit from the converged unknowns: arc j flies junction j to
  // junction j+1; the event at the end of arc j happens at the junction
  // j+1 (mod k), and the last event closes the period.
  OdeOptions tight = opts.ode;
  tight.rel_tol = std::min(tight.rel_tol, 1e-12);
  tight.abs_tol = std::min(tight.abs_tol, 1e-13);
  BounceOrbit orb;
  orb.energy = E;
  std::vector<Leg> legs(k);
  for (int j = 0; j < k; ++j) legs[j] = decode(u, j);
  orb.start = PhaseState{legs[0].p, legs[0].v_out};
  double t_abs = 0.0;
  double worst_inside = 0.0;
  for (int j = 0; j < k; ++j) {
    const double dt = u[j * per + per - 1];
    Trajectory fl =
        integrate_smooth(pot, nullptr, 0.0, PhaseState{legs[j].p, legs[j].v_out}, dt, tight);
    // Shift to absolute time.
    for (auto& seg : fl.segments) seg.t0 += t_abs;
    fl.t0 = t_abs;
    fl.t1 = t_abs + dt;
    // Interior check at dense samples (endpoints touch the wall).
    for (int sjj = 1; sjj < 64; ++sjj)
      worst_inside =
          std::max(worst_inside, dom.implicit(fl.y_at(fl.t0 + dt * sjj / 64.0).head(N)));
    const Leg& nx = legs[(j + 1) % k];
    BounceEvent ev;
    ev.t = t_abs + dt;
    ev.point = nx.p;
    ev.normal = nx.nu;
    ev.v_in = fl.end.v;
    ev.v_out = nx.v_out;
    orb.events.push_back(ev);
    orb.arcs.push_back(std::move(fl));
    t_abs += dt;
    if (ev.v_in.dot(ev.normal) <= grazing) {
      out.rejected = true;
      out.message = "refined orbit has a grazing event";
    }
  }
  orb.period = t_abs;
  if (worst_inside > 1e-9 * std::max(1.0, diam)) {
    out.rejected = true;
    std::ostringstream os;
    os << "refined arc leaves the domain (max implicit value " << worst_inside
       << "); bounce count would change";
    out.message = os.str();
  }
  out.orbit = std::move(orb);
  return out;
}

}  // namespace bounce

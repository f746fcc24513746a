#include "bounce/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bounce/errors.hpp"

namespace bounce {
namespace {

std::vector<double> eps_schedule(double start, double ratio, double floor) {
  if (!(start > 0.0) || !(floor > 0.0) || !(floor <= start))
    throw std::invalid_argument("continuation: need 0 < eps_floor <= eps_start");
  if (!(ratio > 0.0) || !(ratio < 1.0))
    throw std::invalid_argument("continuation: eps_ratio must lie in (0,1)");
  std::vector<double> out;
  double e = start;
  while (true) {
    out.push_back(e);
    if (e <= floor * (1.0 + 1e-12)) break;
    e = std::max(e * ratio, floor);
  }
  return out;
}

}  // namespace

ContinuationResult run_continuation(const ActionContext& ctx, const DiscreteLoop& init,
                                    const ContinuationOptions& opts) {
  if (!ctx.domain || !ctx.collar || !ctx.potential)
    throw std::invalid_argument("run_continuation: incomplete context");
  const PotentialStats& stats = ctx.potential->stats();
  if (opts.check_regularity && !(ctx.energy > stats.v_max)) {
    std::ostringstream os;
    os << "run_continuation: energy " << ctx.energy
       << " does not exceed the potential maximum " << stats.v_max
       << " over the closed domain; the level set is not regular there. "
          "Raise the energy or disable the regularity check.";
    throw SolveError(os.str());
  }

  ContinuationResult res;
  SolveOptions sopts = opts.solve;
  if (sopts.tau_floor <= 0.0) sopts.tau_floor = default_tau_floor(ctx);
  res.tau_floor = sopts.tau_floor;
  res.diam_floor = opts.diam_floor_rel * ctx.domain->diameter();

  const double plateau_h = ctx.collar->plateau();
  DiscreteLoop warm = init;
  for (const double eps : eps_schedule(opts.eps_start, opts.eps_ratio, opts.eps_floor)) {
    CriticalPoint cp = find_critical_point(ctx, warm, eps, sopts);

    ContinuationRecord rec;
    rec.eps = eps;
    rec.plateau_density = 2.0 * eps / (plateau_h * plateau_h * plateau_h);
    const int m = cp.loop.M();
    rec.penalty_density = Vec(m);
    double mass = 0.0, excess = 0.0;
    for (int i = 0; i < m; ++i) {
      const double h = collar_value(*ctx.domain, *ctx.collar, cp.loop.nodes.col(i));
      const double d = 2.0 * eps / (h * h * h);
      rec.penalty_density[i] = d;
      mass += d;
      excess += std::max(0.0, d - rec.plateau_density);
    }
    rec.density_mass = mass / m;
    rec.excess_mass = excess / m;
    rec.h1_diff_prev =
        res.records.empty() ? 0.0 : h1_distance(cp.loop.nodes, res.records.back().point.loop.nodes);
    rec.point = cp;
    res.records.push_back(std::move(rec));

    const CriticalPoint& last = res.records.back().point;
    if (!last.converged && !last.tau_at_floor) {
      std::ostringstream os;
      os << "solver did not converge at eps=" << eps << " (status: " << last.status << ")";
      res.message = os.str();
      return res;
    }

    const double dloop = loop_diameter(last.loop.nodes);
    const bool collapse_signal = last.tau_at_floor ||
                                 last.loop.tau <= res.tau_floor * (1.0 + 1e-9) ||
                                 dloop < res.diam_floor;
    if (collapse_signal && static_cast<int>(res.records.size()) >= opts.min_records) {
      res.collapsed = true;
      std::ostringstream os;
      os << "loop degenerated at eps=" << eps << " (tau=" << last.loop.tau
         << ", loop diameter=" << dloop << ")";
      res.message = os.str();
      return res;
    }
    warm = last.loop;
  }

  const auto& fin = res.records.back().point;
  const double dloop = loop_diameter(fin.loop.nodes);
  if (fin.tau_at_floor || dloop < res.diam_floor) {
    res.collapsed = true;
    res.message = "loop degenerated at the eps floor";
  } else {
    res.completed = fin.converged;
    res.message = res.completed ? "reached eps floor" : "final solve incomplete";
  }
  return res;
}

BounceTimes extract_bounce_times(const ContinuationRecord& rec, const ClusterOptions& opts) {
  const int m = static_cast<int>(rec.penalty_density.size());
  if (m == 0) throw std::invalid_argument("extract_bounce_times: record has no density");
  Vec excess(m);
  for (int i = 0; i < m; ++i)
    excess[i] = std::max(0.0, rec.penalty_density[i] - rec.plateau_density);
  const double total = excess.sum() / m;

  BounceTimes out;
  if (total < opts.excess_floor) return out;

  const double cut = opts.threshold_rel * excess.maxCoeff();
  std::vector<bool> marked(m);
  for (int i = 0; i < m; ++i) marked[i] = excess[i] > cut;

  // Merge marked nodes separated by short cyclic gaps, then collect runs.
  std::vector<bool> merged = marked;
  for (int i = 0; i < m; ++i) {
    if (marked[i]) continue;
    // Distance to nearest marked node on both sides.
    int fwd = -1, bwd = -1;
    for (int s = 1; s < opts.merge_gap; ++s) {
      if (fwd < 0 && marked[(i + s) % m]) fwd = s;
      if (bwd < 0 && marked[(i + m - s) % m]) bwd = s;
    }
    if (fwd > 0 && bwd > 0) merged[i] = true;
  }

  // Runs of merged nodes, cyclically.
  std::vector<std::pair<int, int>> runs;  // [first, last] in unwrapped indices
  int start_search = 0;
  while (start_search < m && merged[start_search]) ++start_search;
  if (start_search == m) {
    // Everything marked: one giant cluster.
    runs.push_back({0, m - 1});
  } else {
    for (int cnt = 0; cnt < m; ++cnt) {
      const int idx = (start_search + cnt) % m;
      if (merged[idx]) {
        int len = 0;
        while (len < m && merged[(idx + len) % m]) ++len;
        const int base = start_search + cnt;
        runs.push_back({base, base + len - 1});
        cnt += len - 1;
      }
    }
  }

  for (const auto& [first, last] : runs) {
    double w = 0.0, c = 0.0;
    for (int u = first; u <= last; ++u) {
      const double e = excess[(u % m + m) % m];
      w += e;
      c += e * u;
    }
    if (w <= 0.0) continue;
    const double mass = w / m;
    if (mass < opts.mass_min_rel * total) continue;
    double t = (c / w) / m;
    t -= std::floor(t);
    out.times.push_back(t);
    out.masses.push_back(mass);
    if (last - first + 1 > opts.width_max_rel * m) out.isolated = false;
  }

  // Sort clusters by time.
  std::vector<size_t> ord(out.times.size());
  for (size_t j = 0; j < ord.size(); ++j) ord[j] = j;
  std::sort(ord.begin(), ord.end(),
            [&](size_t a, size_t b) { return out.times[a] < out.times[b]; });
  BounceTimes sorted;
  sorted.isolated = out.isolated;
  for (size_t j : ord) {
    sorted.times.push_back(out.times[j]);
    sorted.masses.push_back(out.masses[j]);
  }
  return sorted;
}

CollapseReport detect_collapse(const ActionContext& ctx,
                               const std::vector<ContinuationRecord>& records, double tau_floor,
                               double diam_floor) {
  CollapseReport rep;
  if (records.empty()) return rep;
  const CriticalPoint& last = records.back().point;
  const double dloop = loop_diameter(last.loop.nodes);
  const bool signal = last.tau_at_floor || last.loop.tau <= tau_floor * (1.0 + 1e-9) ||
                      dloop < diam_floor;
  if (!signal) return rep;

  const Vec q = last.loop.nodes.rowwise().mean();
  const Vec gv = ctx.potential->gradient(q);
  const double tol_grad = std::max(1e-2 * ctx.potential->stats().grad_max, 1e-10);

  if (gv.norm() <= tol_grad) {
    rep.kind = CollapseReport::Kind::interior_critical_point;
    rep.point = q;
    rep.grad_norm = gv.norm();
    std::ostringstream os;
    os << "loop contracts to an interior critical point of V (|grad V| = " << gv.norm() << ")";
    rep.detail = os.str();
    return rep;
  }

  const double dist = -ctx.domain->signed_distance(q);
  if (dist <= 2.0 * ctx.collar->d0) {
    const Projection proj = ctx.domain->boundary_projection(q);
    const Vec gw = ctx.potential->gradient(proj.point);
    const double a = -gw.dot(proj.normal);
    const Vec tang = gw + a * proj.normal;
    if (a > 0.0 && tang.norm() <= 0.05 * std::max(gw.norm(), 1e-10)) {
      rep.kind = CollapseReport::Kind::boundary_equilibrium;
      rep.point = proj.point;
      rep.multiplier = a;
      std::ostringstream os;
      os << "loop accumulates on a boundary equilibrium: grad V = -a nu with a = " << a;
      rep.detail = os.str();
      return rep;
    }
  }

  rep.detail = "loop degenerated without a recognized limit structure";
  return rep;
}

BounceOrbit assemble_bounce_orbit(const ActionContext& ctx, const ContinuationRecord& rec,
                                  const BounceTimes& times, const AssembleOptions& opts) {
  const Domain& dom = *ctx.domain;
  const PotentialField& pot = *ctx.potential;
  const DiscreteLoop& loop = rec.point.loop;
  const int m = loop.M();
  const double E = ctx.energy;
  const double diam = dom.diameter();

  auto node_state = [&](int i) {
    const Vec q = loop.nodes.col((i % m + m) % m);
    const Vec vc = (loop.nodes.col((i + 1) % m) - loop.nodes.col((i + m - 1) % m)) *
                   (m / (2.0 * loop.tau));
    const double gap = E - pot.value(q);
    if (!(gap > 0.0))
      throw SolveError("assemble_bounce_orbit: energy at or below V at a sample node");
    const double vn = vc.norm();
    if (vn <= 1e-12 * std::sqrt(2.0 * gap))
      throw SolveError("assemble_bounce_orbit: stagnant loop node (no direction)");
    return PhaseState{q, vc * (std::sqrt(2.0 * gap) / vn)};
  };

  const int k = static_cast<int>(times.times.size());
  BounceOrbit orbit;
  orbit.energy = E;

  if (k == 0) {
    // Smooth orbit: re-fly the loop's own period from node 0.
    const PhaseState s0 = node_state(0);
    Trajectory fl = integrate_smooth(pot, nullptr, 0.0, s0, loop.tau, opts.ode);
    orbit.period = loop.tau;
    orbit.start = s0;
    orbit.arcs.push_back(std::move(fl));
    return orbit;
  }

  BounceIntegrateOptions bopts;
  bopts.ode = opts.ode;
  bopts.grazing_tol = opts.grazing_tol;
  const double t_cap = 2.0 * loop.tau;

  // Flies from s until the first wall hit; returns the pre-reflection event.
  auto first_hit = [&](const PhaseState& s) {
    const BounceOrbit probe = integrate_with_bounces(dom, pot, s, t_cap, bopts);
    if (probe.events.empty())
      throw SolveError("assemble_bounce_orbit: flight did not reach the wall");
    return probe.events.front();
  };

  struct ArcData {
    PhaseState mid;
    BounceEvent fwd;   // wall hit ahead of the mid node
    BounceEvent bwd;   // wall hit behind it (in reversed time)
    double duration = 0.0;
  };
  std::vector<ArcData> arcs(k);

  for (int j = 0; j < k; ++j) {
    // Node window strictly between bounce j and bounce j+1 (cyclic).
    const double t0 = times.times[j];
    const double t1 = j + 1 < k ? times.times[j + 1] : times.times[0] + 1.0;
    const int i0 = static_cast<int>(std::ceil(t0 * m)) + 1;
    const int i1 = static_cast<int>(std::floor(t1 * m)) - 1;
    if (i1 < i0)
      throw SolveError("assemble_bounce_orbit: bounce times too close to separate arcs");
    // Deepest node in the window.
    int best = i0;
    double best_clear = -std::numeric_limits<double>::infinity();
    for (int u = i0; u <= i1; ++u) {
      const double clear = -dom.signed_distance(loop.nodes.col((u % m + m) % m));
      if (clear > best_clear) {
        best_clear = clear;
        best = u;
      }
    }
    ArcData& a = arcs[j];
    a.mid = node_state(best);
    a.fwd = first_hit(a.mid);
    a.bwd = first_hit(PhaseState{a.mid.q, -a.mid.v});
    a.duration = a.fwd.t + a.bwd.t;
  }

  // Junction consistency: forward hit of arc j meets backward hit of arc j+1.
  const double snap_max = opts.snap_max_rel * diam;
  for (int j = 0; j < k; ++j) {
    const ArcData& a = arcs[j];
    const ArcData& b = arcs[(j + 1) % k];
    const double gap = (a.fwd.point - b.bwd.point).norm();
    if (gap > snap_max) {
      std::ostringstream os;
      os << "assemble_bounce_orbit: junction " << (j + 1) % k << " mismatch " << gap
         << " exceeds " << snap_max;
      throw SolveError(os.str());
    }
  }

  // Re-fly each arc from its entry wall point; outgoing velocity is the
  // time-reversed backward hit velocity.
  double t_abs = 0.0;
  for (int j = 0; j < k; ++j) {
    const ArcData& a = arcs[j];
    const PhaseState entry{a.bwd.point, -a.bwd.v_in};
    if (j == 0) orbit.start = entry;
    Trajectory fl = integrate_smooth(pot, nullptr, 0.0, entry, a.duration, opts.ode);
    for (auto& seg : fl.segments) seg.t0 += t_abs;
    fl.t0 = t_abs;
    fl.t1 = t_abs + a.duration;

    const ArcData& b = arcs[(j + 1) % k];
    if ((fl.end.q - b.bwd.point).norm() > snap_max)
      throw SolveError("assemble_bounce_orbit: re-flight missed the next junction");

    BounceEvent ev;
    ev.t = t_abs + a.duration;
    ev.point = b.bwd.point;
    ev.normal = b.bwd.normal;
    ev.v_in = fl.end.v;
    ev.v_out = -b.bwd.v_in;
    orbit.events.push_back(ev);
    orbit.arcs.push_back(std::move(fl));
    t_abs += a.duration;
  }
  orbit.period = t_abs;
  return orbit;
}

}  // namespace bounce

// Acceptance suite: runs the full shipped scenarios and the library-level
// property checks, printing one [PASS]/[FAIL] line per criterion. Exits
// nonzero when any criterion fails. Needs BOUNCE_SCENARIO_DIR.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "bounce/action.hpp"
#include "bounce/errors.hpp"
#include "bounce/orbit.hpp"
#include "bounce/potential.hpp"
#include "bounce/scenario.hpp"

using namespace bounce;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

// One completed scenario run with its parsed summary document.
struct Run {
  RunSummary sum;
  json doc;
  double seconds = 0.0;
  std::string error;  // nonempty when the run threw

  bool ok() const { return error.empty(); }
};

Run execute(const std::string& dir, const std::string& name) {
  Run r;
  try {
    const Scenario sc = parse_scenario_file(dir + "/" + name + ".cfg");
    const auto t0 = std::chrono::steady_clock::now();
    r.sum = run_scenario(sc);
    const auto t1 = std::chrono::steady_clock::now();
    r.seconds = std::chrono::duration<double>(t1 - t0).count();
    r.doc = json::parse(r.sum.summary_json);
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

json last_trace_line(const std::string& jsonl) {
  size_t end = jsonl.find_last_not_of('\n');
  if (end == std::string::npos) throw std::runtime_error("empty trace");
  const size_t start = jsonl.rfind('\n', end);
  return json::parse(jsonl.substr(start == std::string::npos ? 0 : start + 1,
                                  end - (start == std::string::npos ? 0 : start + 1) + 1));
}

// Jittered ellipse loop strictly inside the unit disk, reaching the collar.
DiscreteLoop random_loop(std::mt19937_64& rng, int m, double tau) {
  auto uni = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  Mat nodes(2, m);
  const double rx = uni(0.3, 0.6), ry = uni(0.2, 0.5);
  const double cx = uni(-0.15, 0.15), cy = uni(-0.15, 0.15);
  for (int i = 0; i < m; ++i) {
    const double t = 2.0 * M_PI * i / m;
    nodes(0, i) = cx + rx * std::cos(t) + uni(-0.02, 0.02);
    nodes(1, i) = cy + ry * std::sin(t) + uni(-0.02, 0.02);
  }
  return DiscreteLoop{std::move(nodes), tau};
}

Eigen::VectorXd flatten(const DiscreteLoop& loop) {
  const int n = loop.dim(), m = loop.M();
  Eigen::VectorXd x(n * m + 1);
  for (int i = 0; i < m; ++i) x.segment(i * n, n) = loop.nodes.col(i);
  x[n * m] = loop.tau;
  return x;
}

DiscreteLoop unflatten(const Eigen::VectorXd& x, int n, int m) {
  Mat nodes(n, m);
  for (int i = 0; i < m; ++i) nodes.col(i) = x.segment(i * n, n);
  return DiscreteLoop{std::move(nodes), x[n * m]};
}

}  // namespace

int main() {
  const char* sd = std::getenv("BOUNCE_SCENARIO_DIR");
  if (!sd) {
    std::fprintf(stderr, "BOUNCE_SCENARIO_DIR is not set\n");
    return 2;
  }
  const std::string dir = sd;

  // Shared scenario runs (full shipped sizes).
  const Run disk = execute(dir, "disk_billiard");
  const Run grav = execute(dir, "gravity_corollary");
  const Run harm = execute(dir, "harmonic_interior");
  const Run ci = execute(dir, "collapse_interior");
  const Run cb = execute(dir, "collapse_boundary");

  std::vector<std::pair<std::string, Outcome>> rows;
  auto criterion = [&rows](const std::string& name, const std::function<Outcome()>& fn) {
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    rows.emplace_back(name, std::move(out));
  };

  // 1. Disk billiard: 2 bounce points, refined period 4.0 within 1e-6,
  //    continuation period within 1% at the eps floor, under 60 s.
  criterion("disk billiard: 2 bounces, period 4.0 (1e-6), tau_eps 1%, <60s", [&] {
    Outcome o;
    if (!disk.ok()) { o.detail = disk.error; return o; }
    const double tau_eps = disk.doc.at("continuation").at("tau_history").back().get<double>();
    const double eps_last = last_trace_line(disk.sum.trace_jsonl).at("eps").get<double>();
    const bool conv = disk.sum.status == "converged";
    const bool refined = disk.doc.at("refined").at("converged").get<bool>();
    const double perr = std::abs(disk.sum.period - 4.0);
    const double terr = std::abs(tau_eps - 4.0) / 4.0;
    o.pass = conv && refined && disk.sum.bounce_count == 2 && perr <= 1e-6 && terr <= 0.01 &&
             std::abs(eps_last - 1e-5) <= 1e-12 && disk.seconds <= 60.0;
    o.detail = fmt("bounces=%d refined period=%.9f (|err|=%.2e) tau_eps=%.5f (%.3f%%) "
                   "eps=%.1e runtime=%.1fs",
                   disk.sum.bounce_count, disk.sum.period, perr, tau_eps, 100.0 * terr, eps_last,
                   disk.seconds);
    return o;
  });

  // 2. A-priori bounds audit on every converged scenario; the disk period
  //    bound evaluates to 784.0 and holds with margin.
  criterion("bounds audit: count <= N+1, period <= bound, disk bound 784", [&] {
    Outcome o;
    bool pass = true;
    std::string d;
    for (const Run* r : {&disk, &grav, &harm}) {
      if (!r->ok() || r->sum.status != "converged") { pass = false; continue; }
      const bool ap = r->doc.at("audit").at("pass").get<bool>();
      const int bc = r->doc.at("orbit").at("bounce_count").get<int>();
      const double period = r->doc.at("orbit").at("period").get<double>();
      const double bound = r->doc.at("bounds").at("period_upper_bound").get<double>();
      pass = pass && ap && bc <= 3 && period <= bound;
    }
    const double disk_bound = disk.ok()
                                  ? disk.doc.at("bounds").at("period_upper_bound").get<double>()
                                  : 0.0;
    const double margin = disk.ok()
                              ? disk.doc.at("audit").at("period_margin").get<double>()
                              : 0.0;
    pass = pass && std::abs(disk_bound - 784.0) <= 1e-9 * 784.0 && margin > 0.0;
    o.pass = pass;
    o.detail = fmt("disk bound=%.4f margin=%.1f; all converged audits pass", disk_bound, margin);
    return o;
  });

  // 3. Single-bounce threshold: linear field on the unit disk at E = 3 > 2
  //    produces at least one bounce.
  criterion("oscillation threshold: E=3 > 2 gives >= 1 bounce", [&] {
    Outcome o;
    if (!grav.ok()) { o.detail = grav.error; return o; }
    const double thr = grav.doc.at("bounds").at("corollary_threshold").get<double>();
    const bool applicable = grav.doc.at("audit").at("corollary_applicable").get<bool>();
    o.pass = grav.sum.status == "converged" && std::abs(thr - 2.0) <= 1e-9 && applicable &&
             grav.sum.bounce_count >= 1;
    o.detail = fmt("threshold=%.6f bounces=%d period=%.6f", thr, grav.sum.bounce_count,
                   grav.sum.period);
    return o;
  });

  // 4. Analytic gradient vs central differences at 20 random loops (1e-6);
  //    full Hessian vs differences of the gradient (1e-5).
  criterion("derivative exactness: gradient 1e-6, Hessian 1e-5 vs FD", [&] {
    Outcome o;
    DiskDomain d2(2, 1.0);
    const CollarProfile collar = CollarProfile::with_d0(d2, 0.45);
    HarmonicPotential pot(1.0, Vec::Zero(2));
    const ActionContext ctx{&d2, &collar, &pot, 0.5};
    std::mt19937_64 rng(411u);
    auto uni = [&rng](double lo, double hi) {
      return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    double worst_g = 0.0, worst_h = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const double eps = std::pow(10.0, uni(-3.0, -1.0));
      {
        const int n = 2, m = 24;
        const DiscreteLoop loop = random_loop(rng, m, uni(1.0, 5.0));
        const Eigen::VectorXd x = flatten(loop);
        const ActionGradient g = action_gradient(ctx, loop, eps);
        const Eigen::VectorXd ga = flatten(DiscreteLoop{g.nodes, g.tau});
        Eigen::VectorXd fd(x.size());
        for (int i = 0; i < x.size(); ++i) {
          Eigen::VectorXd xp = x, xm = x;
          xp[i] += 1e-6;
          xm[i] -= 1e-6;
          fd[i] = (action_value(ctx, unflatten(xp, n, m), eps) -
                   action_value(ctx, unflatten(xm, n, m), eps)) /
                  2e-6;
        }
        worst_g = std::max(worst_g, (ga - fd).norm() / fd.norm());
      }
      {
        const int n = 2, m = 12;
        const DiscreteLoop loop = random_loop(rng, m, uni(1.5, 4.0));
        const Eigen::VectorXd x = flatten(loop);
        const Mat H = action_hessian_full(ctx, loop, eps);
        Mat fd(x.size(), x.size());
        for (int i = 0; i < x.size(); ++i) {
          Eigen::VectorXd xp = x, xm = x;
          xp[i] += 1e-6;
          xm[i] -= 1e-6;
          const ActionGradient gp = action_gradient(ctx, unflatten(xp, n, m), eps);
          const ActionGradient gm = action_gradient(ctx, unflatten(xm, n, m), eps);
          fd.col(i) = (flatten(DiscreteLoop{gp.nodes, gp.tau}) -
                       flatten(DiscreteLoop{gm.nodes, gm.tau})) /
                      2e-6;
        }
        const Mat sym = 0.5 * (fd + fd.transpose());
        worst_h = std::max(worst_h, (H - sym).norm() / sym.norm());
      }
    }
    o.pass = worst_g <= 1e-6 && worst_h <= 1e-5;
    o.detail = fmt("worst gradient rel err=%.2e, worst Hessian rel err=%.2e over 20 loops",
                   worst_g, worst_h);
    return o;
  });

  // 5. Reflection identities exact to 1e-15 over 1000 random pairs; event-
  //    driven orbits conserve energy to 1e-9.
  criterion("reflection exact to 1e-15 (1000 pairs), energy drift <= 1e-9", [&] {
    Outcome o;
    std::mt19937_64 rng(1597u);
    std::normal_distribution<double> nd(0.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const int dim = 2 + k % 3;
      Vec n(dim), v(dim);
      double dot = 0.0;
      do {
        for (int i = 0; i < dim; ++i) n[i] = nd(rng);
        n.normalize();
        for (int i = 0; i < dim; ++i) v[i] = nd(rng);
        v *= std::uniform_real_distribution<double>(0.5, 2.0)(rng) / v.norm();
        dot = v.dot(n);
      } while (dot <= 1e-6 * v.norm());
      const Vec w = reflect_velocity(v, n);
      const double speed = std::abs(w.norm() - v.norm()) / v.norm();
      const double flip = std::abs(w.dot(n) + v.dot(n)) / v.norm();
      const double tang = ((w - w.dot(n) * n) - (v - v.dot(n) * n)).norm() / v.norm();
      worst = std::max({worst, speed, flip, tang});
    }

    DiskDomain d2(2, 1.0);
    Vec g(2);
    g << 0.0, 1.0;
    LinearPotential pot(g);
    attach_stats(pot, d2);
    Vec q0(2), v0(2);
    q0 << 0.2, -0.3;
    v0 << 0.6, 0.8;
    v0 *= std::sqrt(2.0 * (3.0 - pot.value(q0))) / v0.norm();
    const BounceOrbit orbit = integrate_with_bounces(d2, pot, PhaseState{q0, v0}, 25.0);
    const EnergyReport er = check_energy_invariant(pot, orbit, 1e-9);

    double scen_drift = 0.0;
    bool scen_pass = true;
    for (const Run* r : {&disk, &grav, &harm}) {
      if (!r->ok() || r->sum.status != "converged") { scen_pass = false; continue; }
      const auto& e = r->doc.at("verification").at("energy");
      scen_pass = scen_pass && e.at("pass").get<bool>();
      scen_drift = std::max(scen_drift, e.at("max_deviation").get<double>());
    }
    o.pass = worst <= 1e-15 && er.pass && scen_pass;
    o.detail = fmt("worst reflection residual=%.2e; oracle drift=%.2e over %d events; "
                   "scenario drift=%.2e",
                   worst, er.max_deviation, orbit.bounce_count(), scen_drift);
    return o;
  });

  // 6. Continuation-limit orbit vs independently refined orbit: bounce
  //    points, period, and traces within 1e-3.
  criterion("continuation vs refined orbit: events/period/trace <= 1e-3", [&] {
    Outcome o;
    if (!disk.ok()) { o.detail = disk.error; return o; }
    const auto& avr = disk.doc.at("verification").at("assembled_vs_refined");
    const double pd = avr.at("period_diff").get<double>();
    const double ed = avr.at("max_event_dist").get<double>();
    const double hd = avr.at("hausdorff").get<double>();
    o.pass = disk.doc.at("refined").at("converged").get<bool>() && pd <= 1e-3 && ed <= 1e-3 &&
             hd <= 1e-3;
    o.detail = fmt("period diff=%.2e, event dist=%.2e, Hausdorff=%.2e", pd, ed, hd);
    return o;
  });

  // 7. Bounce count never exceeds the Morse index of the terminal critical
  //    point; the disk index sits in {2, 3}.
  criterion("Morse index bounds the bounce count; disk index in {2,3}", [&] {
    Outcome o;
    bool pass = true;
    int disk_idx = -1;
    for (const Run* r : {&disk, &grav, &harm}) {
      if (!r->ok() || r->sum.status != "converged") { pass = false; continue; }
      const auto hist = r->doc.at("continuation").at("morse_index_history");
      const int idx = hist.back().get<int>();
      if (r == &disk) disk_idx = idx;
      pass = pass && r->sum.bounce_count <= idx;
    }
    pass = pass && (disk_idx == 2 || disk_idx == 3);
    o.pass = pass;
    o.detail = fmt("disk: %d bounces, index %d; gravity: %d; harmonic: %d", disk.sum.bounce_count,
                   disk_idx, grav.sum.bounce_count, harm.sum.bounce_count);
    return o;
  });

  // 8. Collapse classification: interior critical point, and boundary
  //    equilibrium with multiplier within 5% of |grad V|.
  criterion("collapse: interior critical point / boundary equilibrium (5%)", [&] {
    Outcome o;
    if (!ci.ok()) { o.detail = ci.error; return o; }
    if (!cb.ok()) { o.detail = cb.error; return o; }
    const std::string ki = ci.doc.at("collapse").at("kind").get<std::string>();
    const std::string kb = cb.doc.at("collapse").at("kind").get<std::string>();
    const double a = kb == "boundary_equilibrium"
                         ? cb.doc.at("collapse").at("multiplier").get<double>()
                         : 0.0;
    // The boundary scenario's field is linear with |grad V| = 1 everywhere.
    o.pass = ci.sum.exit_code == 0 && cb.sum.exit_code == 0 &&
             ki == "interior_critical_point" && kb == "boundary_equilibrium" &&
             std::abs(a - 1.0) <= 0.05;
    o.detail = fmt("interior kind=%s; boundary kind=%s multiplier=%.6f", ki.c_str(), kb.c_str(),
                   a);
    return o;
  });

  // 9. Smooth negative control: the interior harmonic orbit has no bounces,
  //    passes the audits, and carries no boundary-layer mass at the floor.
  criterion("harmonic interior: 0 bounces, audits pass, excess mass < 1e-6", [&] {
    Outcome o;
    if (!harm.ok()) { o.detail = harm.error; return o; }
    const json last = last_trace_line(harm.sum.trace_jsonl);
    const double mass = last.at("excess_mass").get<double>();
    const double eps = last.at("eps").get<double>();
    o.pass = harm.sum.status == "converged" && harm.sum.bounce_count == 0 &&
             harm.sum.audit_pass && mass < 1e-6 && std::abs(eps - 1e-5) <= 1e-12;
    o.detail = fmt("bounces=%d audit=%s excess mass=%.2e at eps=%.1e", harm.sum.bounce_count,
                   harm.sum.audit_pass ? "pass" : "fail", mass, eps);
    return o;
  });

  int failures = 0;
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& [name, out] = rows[i];
    std::printf("[%s] %zu. %s — %s\n", out.pass ? "PASS" : "FAIL", i + 1, name.c_str(),
                out.detail.c_str());
    if (!out.pass) ++failures;
  }
  std::printf("%zu/%zu acceptance criteria passed\n", rows.size() - failures, rows.size());
  return failures == 0 ? 0 : 1;
}

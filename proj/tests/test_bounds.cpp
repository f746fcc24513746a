#include <doctest.h>

#include <cmath>

#include "bounce/bounds.hpp"
#include "test_util.hpp"

using namespace bounce;

namespace {

BounceOrbit fake_orbit(double period, int bounces) {
  BounceOrbit o;
  o.period = period;
  for (int i = 0; i < bounces; ++i) {
    BounceEvent ev;
    ev.t = period * (i + 0.5) / std::max(bounces, 1);
    ev.point = Vec::Zero(2);
    ev.normal = (Vec(2) << 1.0, 0.0).finished();
    ev.v_in = ev.normal;
    ev.v_out = -ev.normal;
    o.events.push_back(ev);
  }
  return o;
}

}  // namespace

TEST_CASE("frozen reference values of the period and constraint constants") {
  // V_min = -1, V_max = 0, E = 1: denominator 1 + 48 * 4 = 193.
  CHECK(lambda_E(1.0, -1.0, 0.0) == doctest::Approx(1.0 / 386.0).epsilon(1e-14));
  const CBound c = c_of_E(1.0, -1.0, 0.0);
  CHECK(c.value == doctest::Approx(8.0 / 193.0).epsilon(1e-14));
  CHECK(c.value == doctest::Approx(0.0414508).epsilon(1e-5));
  CHECK(c.margin == doctest::Approx(1.0 / 193.0).epsilon(1e-12));
}

TEST_CASE("free billiard on the unit disk gives the 784 period bound") {
  PotentialStats stats;  // V = 0
  const BoundsReport rep = make_bounds_report(0.5, stats, 2.0, 2);
  CHECK(rep.lambda == doctest::Approx(1.0 / 196.0).epsilon(1e-14));
  CHECK(rep.displacement == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(rep.period_bound == doctest::Approx(784.0).epsilon(1e-12));
  CHECK(rep.threshold == 0.0);
  CHECK(rep.max_bounces == 3);
  CHECK(rep.c.margin > 0.0);
}

TEST_CASE("gravity on the unit disk crosses the corollary threshold at E = 2") {
  PotentialStats stats;
  stats.v_min = -1.0;
  stats.v_max = 1.0;
  stats.grad_max = 1.0;
  const BoundsReport rep = make_bounds_report(3.0, stats, 2.0, 2);
  CHECK(rep.threshold == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(rep.lambda == doctest::Approx(8.0 / 1544.0).epsilon(1e-14));
  CHECK(rep.displacement == doctest::Approx(8.0 * std::sqrt(2.0)).epsilon(1e-14));
  CHECK(rep.period_bound ==
        doctest::Approx(8.0 * std::sqrt(2.0) * 193.0).epsilon(1e-12));
}

TEST_CASE("lambda grows with energy and the constraint margin is a squared ratio") {
  double prev = 0.0;
  for (double E = 0.2; E < 8.0; E += 0.3) {
    const double lam = lambda_E(E, -1.0, 0.1);
    CHECK(lam > prev);
    prev = lam;
    const double a = E - 0.1, b = E + 1.0;
    const CBound c = c_of_E(E, -1.0, 0.1);
    CHECK(c.margin == doctest::Approx(a * a / (a * a + 48.0 * b * b)).epsilon(1e-12));
    CHECK(c.margin > 0.0);
  }
}

TEST_CASE("degenerate energies are rejected") {
  CHECK_THROWS(lambda_E(0.5, 0.0, 0.5));   // E == V_max
  CHECK_THROWS(lambda_E(0.4, 0.0, 0.5));   // E < V_max
  CHECK_THROWS(lambda_E(1.0, 2.0, 0.5));   // V_min > V_max
  CHECK_THROWS(displacement_energy_bound(-2.0, -1.0, 2.0));
  CHECK_THROWS(c_of_E(0.0, -1.0, 0.0));
}

TEST_CASE("audit passes a conforming orbit and reports margins") {
  PotentialStats stats;
  const BoundsReport rep = make_bounds_report(0.5, stats, 2.0, 2);
  const AuditResult res = audit_orbit(fake_orbit(4.0, 2), rep);
  CHECK(res.pass);
  CHECK(res.failures.empty());
  CHECK(res.period_margin == doctest::Approx(780.0).epsilon(1e-12));
  CHECK(res.bounce_margin == 1);
  CHECK(res.corollary_applicable);  // threshold 0 < E
  CHECK(res.corollary_margin == 1);
}

TEST_CASE("audit flags each violated bound separately") {
  PotentialStats stats;
  const BoundsReport rep = make_bounds_report(0.5, stats, 2.0, 2);

  AuditResult res = audit_orbit(fake_orbit(4.0, 4), rep);  // dim+1 = 3
  CHECK_FALSE(res.pass);
  CHECK(res.bounce_margin == -1);
  REQUIRE(res.failures.size() == 1);
  CHECK(res.failures[0].find("dim+1") != std::string::npos);

  res = audit_orbit(fake_orbit(1000.0, 2), rep);  // bound 784
  CHECK_FALSE(res.pass);
  CHECK(res.period_margin < 0.0);

  // Below the uniform lower bound only matters for bouncing orbits.
  res = audit_orbit(fake_orbit(1e-4, 2), rep);  // lambda = 1/196
  CHECK_FALSE(res.pass);
  res = audit_orbit(fake_orbit(1e-4, 0), rep);
  // No bounce: lower bound not applicable, but the corollary is (E above
  // threshold, zero bounces).
  CHECK_FALSE(res.pass);
  REQUIRE(res.failures.size() == 1);
  CHECK(res.failures[0].find("no bounce") != std::string::npos);
}

TEST_CASE("corollary fires only above the threshold") {
  PotentialStats stats;
  stats.v_min = -1.0;
  stats.v_max = 1.0;
  stats.grad_max = 1.0;
  const BoundsReport low = make_bounds_report(1.5, stats, 2.0, 2);
  AuditResult res = audit_orbit(fake_orbit(2.0, 0), low);
  CHECK_FALSE(res.corollary_applicable);  // 1.5 < 2
  CHECK(res.pass);
  const BoundsReport high = make_bounds_report(3.0, stats, 2.0, 2);
  res = audit_orbit(fake_orbit(2.0, 0), high);
  CHECK(res.corollary_applicable);
  CHECK_FALSE(res.pass);
  res = audit_orbit(fake_orbit(2.0, 1), high);
  CHECK(res.pass);
  CHECK(res.corollary_margin == 0);
}

TEST_CASE("bounds report copies dimensional data") {
  PotentialStats stats;
  stats.v_min = -0.5;
  stats.v_max = 0.25;
  stats.grad_max = 2.0;
  const BoundsReport rep = make_bounds_report(1.0, stats, 3.5, 4);
  CHECK(rep.dim == 4);
  CHECK(rep.max_bounces == 5);
  CHECK(rep.diameter == 3.5);
  CHECK(rep.v_min == -0.5);
  CHECK(rep.v_max == 0.25);
  CHECK(rep.grad_max == 2.0);
  CHECK(rep.energy == 1.0);
}

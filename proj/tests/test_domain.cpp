#include <cmath>

#include <doctest.h>

#include "bounce/errors.hpp"
#include "bounce/geometry.hpp"
#include "test_util.hpp"

using namespace bounce;
using testutil::fd_gradient;
using testutil::fd_jacobian;
using testutil::rel_err;

TEST_CASE("disk implicit function and analytic distance") {
  DiskDomain disk(2, 1.0);
  Vec q(2);
  q << 0.3, 0.4;  // |q| = 0.5
  CHECK(disk.implicit(q) == doctest::Approx(-0.375).epsilon(1e-12));  // (0.25-1)/2
  CHECK(disk.signed_distance(q) == doctest::Approx(-0.5).epsilon(1e-12));
  const Projection proj = disk.boundary_projection(q);
  Vec want(2);
  want << 0.6, 0.8;
  CHECK((proj.point - want).norm() < 1e-12);
  CHECK((proj.normal - want).norm() < 1e-12);
  CHECK(proj.distance == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(disk.diameter() == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("disk distance jet matches the radial closed form") {
  DiskDomain disk(2, 1.0);
  Vec q(2);
  q << 0.5, 0.0;
  const DistanceJet jet = disk.interior_distance_jet(q);
  CHECK(jet.dist == doctest::Approx(0.5).epsilon(1e-12));
  // grad dist = -nu, pointing inward.
  CHECK(jet.grad[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(jet.grad[1] == doctest::Approx(0.0).epsilon(1e-12));
  // Hess dist = -(I - q_hat q_hat^T)/r.
  CHECK(jet.hess(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(jet.hess(1, 1) == doctest::Approx(-2.0).epsilon(1e-10));
  CHECK(jet.hess(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("disk center is ambiguous for projection") {
  DiskDomain disk(2, 1.0);
  Vec q = Vec::Zero(2);
  CHECK_THROWS_AS(disk.boundary_projection(q), GeometryError);
  CHECK_THROWS_AS(disk.interior_distance_jet(q), GeometryError);
  // Signed distance stays well defined.
  CHECK(disk.signed_distance(q) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("ellipse projection at the major axis") {
  EllipseDomain ell(2.0, 1.0);
  Vec q(2);
  q << 1.9, 0.0;
  const Projection proj = ell.boundary_projection(q);
  CHECK(proj.point[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(std::abs(proj.point[1]) < 1e-10);
  CHECK(proj.normal[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(ell.signed_distance(q) == doctest::Approx(-0.1).epsilon(1e-9));
}

TEST_CASE("ellipse distance against a dense boundary sweep") {
  EllipseDomain ell(2.0, 1.0);
  auto brute = [&](const Vec& q) {
    double best = std::numeric_limits<double>::infinity();
    const int n = 2'000'000;
    for (int i = 0; i < n; ++i) {
      const double t = 2.0 * M_PI * i / n;
      const double dx = q[0] - 2.0 * std::cos(t);
      const double dy = q[1] - std::sin(t);
      best = std::min(best, std::hypot(dx, dy));
    }
    return best;
  };
  Vec q(2);
  q << 0.7, 0.3;
  CHECK(rel_err(-ell.signed_distance(q), brute(q)) < 1e-6);
  q << -0.4, 0.52;
  CHECK(rel_err(-ell.signed_distance(q), brute(q)) < 1e-6);
  // Center guard: distance is the semi-minor axis.
  CHECK(ell.signed_distance(Vec::Zero(2)) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("distance jets agree with finite differences of signed_distance") {
  auto check_domain = [](const Domain& dom, const Vec& q) {
    const DistanceJet jet = dom.interior_distance_jet(q);
    auto sd = [&](const Vec& p) { return -dom.signed_distance(p); };
    const Vec g = fd_gradient(sd, q, 1e-6);
    CHECK(rel_err(jet.grad, g) < 1e-6);
    const Mat h = fd_jacobian([&](const Vec& p) { return dom.interior_distance_jet(p).grad; }, q,
                              1e-6);
    CHECK(rel_err(jet.hess, Mat(0.5 * (h + h.transpose())), 1e-8) < 1e-5);
  };
  DiskDomain disk(2, 1.0);
  Vec q(2);
  q << 0.35, -0.2;
  check_domain(disk, q);
  EllipseDomain ell(2.0, 1.0);
  q << 1.2, 0.3;
  check_domain(ell, q);
  q << -0.5, -0.6;
  check_domain(ell, q);
  SmoothRectDomain rect(1.2, 0.8, 4);
  q << 0.7, 0.3;
  check_domain(rect, q);
  q << -0.2, 0.55;
  check_domain(rect, q);
}

TEST_CASE("projection picks the global basin past the superellipse ridge") {
  // Oracle: 4M-point parametric sweep of |x/1.2|^4 + |y/0.8|^4 = 1 from
  // (0.7, 0.3) gives min distance 0.467902994 at (0.811901, 0.754325); a
  // single-start projector descends to the side-wall saddle basin (0.490986).
  SmoothRectDomain rect(1.2, 0.8, 4);
  Vec q(2);
  q << 0.7, 0.3;
  const Projection p = rect.boundary_projection(q);
  CHECK(p.distance == doctest::Approx(0.467902994).epsilon(1e-6));
  CHECK(p.point[0] == doctest::Approx(0.811901).epsilon(1e-4));
  CHECK(p.point[1] == doctest::Approx(0.754325).epsilon(1e-4));
  CHECK(-rect.signed_distance(q) == doctest::Approx(0.467902994).epsilon(1e-6));
}

TEST_CASE("ellipse curvature term at the flat and tight ends") {
  // At (a,0) the curvature is a/b^2; the interior Hessian eigenvalue along
  // the tangent is -kappa / (1 - d kappa).
  EllipseDomain ell(2.0, 1.0);
  Vec q(2);
  q << 1.8, 0.0;  // d = 0.2, kappa = 2
  const DistanceJet jet = ell.interior_distance_jet(q);
  CHECK(jet.hess(1, 1) == doctest::Approx(-2.0 / (1.0 - 0.2 * 2.0)).epsilon(1e-8));
  CHECK(std::abs(jet.hess(0, 0)) < 1e-8);
}

TEST_CASE("boundary projection is idempotent and lands on the wall") {
  SmoothRectDomain rect(1.0, 0.7, 4);
  for (int i = 0; i < 32; ++i) {
    Vec q = testutil::random_unit(2) * testutil::uniform(0.05, 0.6);
    const Projection p1 = rect.boundary_projection(q);
    CHECK(std::abs(rect.implicit(p1.point)) < 1e-10);
    const Projection p2 = rect.boundary_projection(p1.point - 1e-3 * p1.normal);
    CHECK((p1.point - p2.point).norm() < 1e-6);
    CHECK(p1.normal.dot(rect.implicit_gradient(p1.point).normalized()) ==
          doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("generic implicit domain matches the analytic disk") {
  auto f = [](const Vec& q) { return 0.5 * (q.squaredNorm() - 1.0); };
  auto g = [](const Vec& q) { return Vec(q); };
  auto h = [](const Vec& q) { return Mat(Mat::Identity(q.size(), q.size())); };
  Box box;
  box.lo = Vec::Constant(2, -1.0);
  box.hi = Vec::Constant(2, 1.0);
  ImplicitDomain dom(2, f, g, h, box, "unit_disk_implicit", 0.0);
  DiskDomain disk(2, 1.0);
  for (int i = 0; i < 16; ++i) {
    const Vec q = testutil::random_unit(2) * testutil::uniform(0.15, 0.85);
    CHECK(rel_err(dom.signed_distance(q), disk.signed_distance(q)) < 1e-8);
    const Projection a = dom.boundary_projection(q);
    const Projection b = disk.boundary_projection(q);
    CHECK((a.point - b.point).norm() < 1e-8);
    const DistanceJet ja = dom.interior_distance_jet(q);
    const DistanceJet jb = disk.interior_distance_jet(q);
    CHECK(rel_err(ja.hess, jb.hess, 1e-8) < 1e-6);
  }
  CHECK(rel_err(dom.diameter(), 2.0) < 5e-3);
}

TEST_CASE("collar profile: identity, blend, plateau") {
  DiskDomain disk(2, 1.0);
  const CollarProfile prof = CollarProfile::with_d0(disk, 0.1);
  CHECK(prof.plateau() == doctest::Approx(0.15));
  // Identity region.
  CHECK(prof.k(0.05) == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(prof.k_prime(0.05) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(prof.k_second(0.05) == doctest::Approx(0.0));
  // Plateau.
  CHECK(prof.k(0.3) == doctest::Approx(0.15).epsilon(1e-14));
  CHECK(prof.k_prime(0.3) == doctest::Approx(0.0));
  CHECK(prof.k_second(0.3) == doctest::Approx(0.0));
  // C^2 joins.
  CHECK(prof.k(0.1) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(prof.k_prime(0.1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(prof.k(0.2) == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(prof.k_prime(0.2) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(prof.k_second(0.2) == doctest::Approx(0.0).epsilon(1e-10));
  // Derivatives match finite differences across the blend.
  for (double x : {0.11, 0.13, 0.15, 0.17, 0.19}) {
    const double fd1 = (prof.k(x + 1e-6) - prof.k(x - 1e-6)) / 2e-6;
    const double fd2 = (prof.k(x + 1e-5) - 2 * prof.k(x) + prof.k(x - 1e-5)) / 1e-10;
    CHECK(rel_err(prof.k_prime(x), fd1, 1e-6) < 1e-7);
    CHECK(std::abs(prof.k_second(x) - fd2) < 1e-4);
  }
  // Slope stays within [0, 1]; k is positive and capped.
  for (int i = 1; i <= 200; ++i) {
    const double x = 0.35 * i / 200;
    CHECK(prof.k_prime(x) >= -1e-12);
    CHECK(prof.k_prime(x) <= 1.0 + 1e-12);
    CHECK(prof.k(x) > 0.0);
    CHECK(prof.k(x) <= prof.plateau() + 1e-12);
  }
}

TEST_CASE("collar width validation") {
  DiskDomain disk(2, 1.0);
  CHECK_THROWS_AS(CollarProfile::with_d0(disk, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(CollarProfile::with_d0(disk, 0.55), std::invalid_argument);
  CHECK_THROWS_AS(CollarProfile::with_d0(disk, 0.51), std::invalid_argument);
  const CollarProfile def = CollarProfile::for_domain(disk);
  CHECK(def.d0 > 0.0);
  CHECK(def.d0 <= 0.5 * disk.reach_estimate() + 1e-12);
}

TEST_CASE("collar h and its derivatives") {
  DiskDomain disk(2, 1.0);
  const CollarProfile prof = CollarProfile::with_d0(disk, 0.1);
  auto hval = [&](const Vec& p) { return collar_value(disk, prof, p); };

  // Deep inside: plateau, exact zero derivatives.
  Vec q(2);
  q << 0.2, 0.1;
  const CollarJet deep = collar_h(disk, prof, q);
  CHECK(deep.plateau);
  CHECK(deep.h == doctest::Approx(prof.plateau()));
  CHECK(deep.grad.norm() == 0.0);
  CHECK(deep.hess.norm() == 0.0);

  // Identity and blend regions: finite-difference cross-check.
  for (double r : {0.93, 0.86, 0.82}) {
    q << r / std::sqrt(2.0), r / std::sqrt(2.0);
    const CollarJet jet = collar_h(disk, prof, q);
    CHECK(jet.h == doctest::Approx(prof.k(1.0 - r)).epsilon(1e-10));
    CHECK(rel_err(jet.grad, fd_gradient(hval, q), 1e-10) < 1e-5);
    const Mat fh = fd_jacobian([&](const Vec& p) { return collar_h(disk, prof, p).grad; }, q);
    CHECK(rel_err(jet.hess, Mat(0.5 * (fh + fh.transpose())), 1e-8) < 1e-5);
  }

  // Outside the domain: rejected.
  q << 1.2, 0.0;
  CHECK_THROWS_AS(collar_value(disk, prof, q), DomainViolation);
}

TEST_CASE("penalty U = 1/h^2 with matching derivatives") {
  EllipseDomain ell(1.5, 1.0);
  const CollarProfile prof = CollarProfile::with_d0(ell, 0.12);
  auto uval = [&](const Vec& p) { return penalty_value(ell, prof, p); };

  Vec q(2);
  for (double s : {0.95, 0.88, 0.8}) {
    q << 1.5 * s, 0.0;
    const PenaltyJet jet = penalty_U(ell, prof, q);
    const double h = collar_value(ell, prof, q);
    CHECK(jet.U == doctest::Approx(1.0 / (h * h)).epsilon(1e-12));
    CHECK(rel_err(jet.grad, fd_gradient(uval, q), 1e-10) < 1e-5);
    const Mat fh = fd_jacobian([&](const Vec& p) { return penalty_U(ell, prof, p).grad; }, q);
    CHECK(rel_err(jet.hess, Mat(0.5 * (fh + fh.transpose())), 1e-8) < 2e-5);
  }

  // Plateau: constant with zero derivatives.
  q << 0.0, 0.0;
  const PenaltyJet deep = penalty_U(ell, prof, q);
  CHECK(deep.plateau);
  CHECK(deep.U == doctest::Approx(1.0 / (prof.plateau() * prof.plateau())));
  CHECK(deep.grad.norm() == 0.0);

  // U blows up towards the wall.
  Vec close(2), closer(2);
  close << 1.5 * (1.0 - 1e-3), 0.0;
  closer << 1.5 * (1.0 - 1e-5), 0.0;
  CHECK(penalty_value(ell, prof, closer) > penalty_value(ell, prof, close));
  CHECK(penalty_value(ell, prof, closer) > 1e8);
}

TEST_CASE("boundary samples lie on the wall") {
  SmoothRectDomain rect(1.0, 0.6, 4);
  const auto pts = boundary_samples(rect, 128);
  CHECK(pts.size() == 128);
  for (const auto& p : pts) CHECK(std::abs(rect.implicit(p)) < 1e-9);
}

TEST_CASE("distance lower bound is a true lower bound") {
  EllipseDomain ell(2.0, 1.0);
  for (int i = 0; i < 64; ++i) {
    const Vec q = testutil::random_unit(2) * testutil::uniform(0.0, 0.9);
    if (ell.implicit(q) >= 0.0) continue;
    CHECK(ell.distance_lower_bound(q) <= -ell.signed_distance(q) + 1e-12);
  }
}

TEST_CASE("diameter dominates axis lengths") {
  EllipseDomain ell(2.0, 1.0);
  CHECK(ell.diameter() >= 2.0 * 2.0 - 1e-6);
  SmoothRectDomain rect(1.0, 0.5, 6);
  CHECK(rect.diameter() >= 2.0 - 1e-6);
  CHECK(rect.diameter() <= 2.0 * std::hypot(1.0, 0.5) + 1e-6);
}

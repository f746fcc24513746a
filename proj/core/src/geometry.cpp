#include "bounce/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "bounce/errors.hpp"

namespace bounce {

namespace {

double ipow(double x, int n) {
  double r = 1.0;
  for (double base = x; n > 0; n >>= 1, base *= base)
    if (n & 1) r *= base;
  return r;
}

// First boundary hit along dir from an interior anchor (bisection).
Vec ray_cast(const Domain& dom, const Vec& anchor, const Vec& dir) {
  const double scale = dom.bounding_box().widths().maxCoeff();
  double lo = 0.0;
  double hi = 0.5 * scale;
  int expand = 0;
  while (dom.implicit(anchor + hi * dir) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++expand > 60) throw GeometryError("ray cast failed to leave the domain");
  }
  for (int i = 0; i < 200 && (hi - lo) > 1e-15 * scale; ++i) {
    const double mid = 0.5 * (lo + hi);
    (dom.implicit(anchor + mid * dir) < 0.0 ? lo : hi) = mid;
  }
  return anchor + 0.5 * (lo + hi) * dir;
}

double sampled_diameter(const std::vector<Vec>& pts) {
  double best = 0.0;
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j)
      best = std::max(best, (pts[i] - pts[j]).norm());
  return best;
}

// Curvature bound from the shape operator P (HessF/|∇F|) P at boundary samples,
// capped by the anchor clearance (medial axis can bind before curvature does).
double sampled_reach(const Domain& dom, const std::vector<Vec>& pts, const Vec& anchor) {
  const int n = dom.dim();
  double kappa_max = 0.0;
  double clearance = std::numeric_limits<double>::infinity();
  for (const Vec& p : pts) {
    clearance = std::min(clearance, (p - anchor).norm());
    const Vec g = dom.implicit_gradient(p);
    const double gn = g.norm();
    if (gn < 1e-14) continue;
    const Vec nu = g / gn;
    const Mat P = Mat::Identity(n, n) - nu * nu.transpose();
    const Mat S = P * dom.implicit_hessian(p) * P / gn;
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    kappa_max = std::max(kappa_max, es.eigenvalues().cwiseAbs().maxCoeff());
  }
  const double from_curvature =
      kappa_max > 1e-14 ? 1.0 / kappa_max : std::numeric_limits<double>::infinity();
  return std::min(from_curvature, clearance);
}

double sampled_grad_bound(const Domain& dom, const Box& box) {
  const int n = box.dim();
  const int pts = n <= 2 ? 33 : (n == 3 ? 17 : 9);
  long total = 1;
  for (int d = 0; d < n; ++d) total *= pts;
  double best = 0.0;
  Vec q(n);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int d = 0; d < n; ++d) {
      const int i = static_cast<int>(rem % pts);
      rem /= pts;
      q[d] = box.lo[d] + (box.hi[d] - box.lo[d]) * i / (pts - 1.0);
    }
    best = std::max(best, dom.implicit_gradient(q).norm());
  }
  return 1.25 * best;
}

}  // namespace

// ---------------------------------------------------------------------------
// Domain: generic implementations

Projection Domain::boundary_projection(const Vec& q) const {
  const double scale = std::max(diameter_, 1e-12);

  auto reproject = [&](Vec x) {
    for (int k = 0; k < 8; ++k) {
      const double f = implicit(x);
      const Vec g = implicit_gradient(x);
      const double gn2 = g.squaredNorm();
      if (gn2 < 1e-24) break;
      x -= (f / gn2) * g;
      if (std::abs(f) <= 1e-15 * scale) break;
    }
    return x;
  };

  // Start from the nearest stored boundary sample; a single level-set walk
  // can land in the wrong basin past the medial axis. Fall back to the walk
  // when no samples exist (e.g. mid-construction).
  Vec p = q;
  if (!proj_seeds_.empty()) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec& s : proj_seeds_) {
      const double d = (q - s).norm();
      if (d < best) {
        best = d;
        p = s;
      }
    }
  } else {
    // The raw first-order step f/|g|^2 g blows up where |grad F| is small
    // (deep interior of flat-sided shapes), so clamp it.
    for (int i = 0; i < 64; ++i) {
      const double f = implicit(p);
      const Vec g = implicit_gradient(p);
      const double gn2 = g.squaredNorm();
      if (gn2 < 1e-24) throw GeometryError("projection seed stalled at a critical point of F");
      Vec step = -(f / gn2) * g;
      const double sn = step.norm();
      if (sn > 0.1 * scale) step *= 0.1 * scale / sn;
      p += step;
      if (sn <= 1e-14 * scale) break;
    }
  }

  // Slide along the level set until q - p aligns with the normal. Each sweep
  // moves tangentially toward q's shadow and re-projects onto F = 0; the
  // backtracking keeps |q - p| non-increasing, so the iteration cannot settle
  // on a distance saddle the way a plain KKT Newton can.
  p = reproject(p);
  double best = (q - p).norm();
  for (int it = 0; it < 200; ++it) {
    const Vec g = implicit_gradient(p);
    const double gn = g.norm();
    if (gn < 1e-14) throw GeometryError("degenerate boundary gradient at projection");
    const Vec nu = g / gn;
    const Vec r = q - p;
    Vec t = r - nu * nu.dot(r);
    const double tn = t.norm();
    if (tn <= 1e-13 * scale) break;
    double step = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 30; ++bt) {
      const Vec cand = reproject(p + step * t);
      const double d = (q - cand).norm();
      if (d <= best * (1.0 + 1e-15)) {
        p = cand;
        best = d;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }

  const Vec g = implicit_gradient(p);
  const double gn = g.norm();
  if (gn < 1e-14) throw GeometryError("degenerate boundary gradient at projection");
  const Vec nu = g / gn;
  const Vec r = q - p;
  if (std::abs(implicit(p)) > 1e-10 * scale ||
      (r - nu * nu.dot(r)).norm() > 1e-9 * scale)
    throw GeometryError("boundary projection did not converge");
  // Uniqueness past the reach is the caller's concern; collar queries stay
  // within it, and the distance jet rejects focal points on its own.
  return Projection{p, nu, r.norm()};
}

double Domain::signed_distance(const Vec& q) const {
  const Projection proj = boundary_projection(q);
  return implicit(q) < 0.0 ? -proj.distance : proj.distance;
}

DistanceJet Domain::interior_distance_jet(const Vec& q) const {
  if (implicit(q) > 0.0) throw DomainViolation("interior distance requested outside the domain");
  const Projection proj = boundary_projection(q);
  const int n = dim();
  const Vec& nu = proj.normal;
  const Vec g = implicit_gradient(proj.point);
  const Mat P = Mat::Identity(n, n) - nu * nu.transpose();
  const Mat S = P * implicit_hessian(proj.point) * P / g.norm();
  const Mat A = Mat::Identity(n, n) - proj.distance * S;
  // The formula is valid strictly before the focal set: I - d S must stay
  // positive definite, not merely nonsingular.
  Eigen::SelfAdjointEigenSolver<Mat> es(A, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < 1e-10)
    throw GeometryError("distance Hessian singular: point at the focal set");
  Mat H = -S * A.inverse();
  H = 0.5 * (H + H.transpose()).eval();
  return DistanceJet{proj.distance, -nu, H};
}

double Domain::distance_lower_bound(const Vec& q) const {
  if (grad_norm_bound_ <= 0.0) return 0.0;
  return std::abs(implicit(q)) / grad_norm_bound_;
}

// ---------------------------------------------------------------------------
// DiskDomain

DiskDomain::DiskDomain(int dim, double radius) : n_(dim), radius_(radius) {
  if (dim < 1 || dim > 8) throw std::invalid_argument("disk: dimension out of range");
  if (!(radius > 0.0)) throw std::invalid_argument("disk: radius must be positive");
  box_.lo = Vec::Constant(dim, -radius);
  box_.hi = Vec::Constant(dim, radius);
  diameter_ = 2.0 * radius;
  reach_ = radius;
  grad_norm_bound_ = std::sqrt(static_cast<double>(dim));
}

double DiskDomain::implicit(const Vec& q) const {
  return 0.5 * (q.squaredNorm() - radius_ * radius_) / radius_;
}

Vec DiskDomain::implicit_gradient(const Vec& q) const { return q / radius_; }

Mat DiskDomain::implicit_hessian(const Vec& q) const {
  (void)q;
  return Mat::Identity(n_, n_) / radius_;
}

std::string DiskDomain::describe() const {
  std::ostringstream os;
  os << "disk(radius=" << radius_ << ", dim=" << n_ << ")";
  return os.str();
}

Projection DiskDomain::boundary_projection(const Vec& q) const {
  const double r = q.norm();
  if (r < 1e-12 * radius_)
    throw GeometryError("projection ambiguous: center of the disk");
  const Vec nu = q / r;
  return Projection{radius_ * nu, nu, std::abs(radius_ - r)};
}

double DiskDomain::signed_distance(const Vec& q) const { return q.norm() - radius_; }

DistanceJet DiskDomain::interior_distance_jet(const Vec& q) const {
  const double r = q.norm();
  if (r >= radius_) throw DomainViolation("interior distance requested outside the disk");
  if (r < 1e-12 * radius_)
    throw GeometryError("distance jet ambiguous: center of the disk");
  const Vec nu = q / r;
  DistanceJet jet;
  jet.dist = radius_ - r;
  jet.grad = -nu;
  jet.hess = -(Mat::Identity(n_, n_) - nu * nu.transpose()) / r;
  return jet;
}

// ---------------------------------------------------------------------------
// EllipseDomain

EllipseDomain::EllipseDomain(double a, double b) : a_(a), b_(b) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("ellipse: semi-axes must be positive");
  box_.lo = Vec(2);
  box_.hi = Vec(2);
  box_.lo << -a, -b;
  box_.hi << a, b;
  diameter_ = 2.0 * std::max(a, b);
  const double mn = std::min(a, b), mx = std::max(a, b);
  reach_ = mn * mn / mx;
  grad_norm_bound_ = std::hypot(1.0 / a, 1.0 / b);
}

double EllipseDomain::implicit(const Vec& q) const {
  return 0.5 * (q[0] * q[0] / (a_ * a_) + q[1] * q[1] / (b_ * b_) - 1.0);
}

Vec EllipseDomain::implicit_gradient(const Vec& q) const {
  Vec g(2);
  g << q[0] / (a_ * a_), q[1] / (b_ * b_);
  return g;
}

Mat EllipseDomain::implicit_hessian(const Vec& q) const {
  (void)q;
  Mat H = Mat::Zero(2, 2);
  H(0, 0) = 1.0 / (a_ * a_);
  H(1, 1) = 1.0 / (b_ * b_);
  return H;
}

std::string EllipseDomain::describe() const {
  std::ostringstream os;
  os << "ellipse(a=" << a_ << ", b=" << b_ << ")";
  return os.str();
}

// Root of g(t) = (a²-b²)·cos·sin - a·qx·sin + b·qy·cos on [0, π/2] for qx, qy ≥ 0
// (stationarity of |q - p(t)|²); Newton with a bisection bracket.
double EllipseDomain::nearest_angle(double qx, double qy) const {
  const double scale = a_ * a_ + b_ * b_ + a_ * qx + b_ * qy;
  auto g = [&](double t) {
    const double c = std::cos(t), s = std::sin(t);
    return (a_ * a_ - b_ * b_) * c * s - a_ * qx * s + b_ * qy * c;
  };
  auto gp = [&](double t) {
    const double c = std::cos(t), s = std::sin(t);
    return (a_ * a_ - b_ * b_) * (c * c - s * s) - a_ * qx * c - b_ * qy * s;
  };
  double lo = 0.0, hi = 0.5 * M_PI;
  double t = std::atan2(a_ * qy, b_ * qx);
  for (int it = 0; it < 100; ++it) {
    const double val = g(t);
    if (std::abs(val) <= 1e-15 * scale) break;
    (val > 0.0 ? lo : hi) = t;
    const double dval = gp(t);
    double tn = (std::abs(dval) > 1e-300) ? t - val / dval : 0.5 * (lo + hi);
    if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);
    if (std::abs(tn - t) < 1e-16) break;
    t = tn;
  }
  return t;
}

Projection EllipseDomain::boundary_projection(const Vec& q) const {
  if (q.norm() < 1e-12 * std::min(a_, b_))
    throw GeometryError("projection ambiguous: center of the ellipse");
  const double sx = q[0] < 0.0 ? -1.0 : 1.0;
  const double sy = q[1] < 0.0 ? -1.0 : 1.0;
  const double t = nearest_angle(sx * q[0], sy * q[1]);
  Vec p(2);
  p << sx * a_ * std::cos(t), sy * b_ * std::sin(t);
  Vec g = implicit_gradient(p);
  return Projection{p, g / g.norm(), (q - p).norm()};
}

double EllipseDomain::signed_distance(const Vec& q) const {
  if (q.norm() < 1e-12 * std::min(a_, b_)) return -std::min(a_, b_);
  const Projection proj = boundary_projection(q);
  return implicit(q) < 0.0 ? -proj.distance : proj.distance;
}

// ---------------------------------------------------------------------------
// SmoothRectDomain

SmoothRectDomain::SmoothRectDomain(double a, double b, int p) : a_(a), b_(b), p_(p) {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::invalid_argument("smooth_rect: semi-axes must be positive");
  if (p < 2 || p % 2 != 0) throw std::invalid_argument("smooth_rect: p must be even and ≥ 2");
  box_.lo = Vec(2);
  box_.hi = Vec(2);
  box_.lo << -a, -b;
  box_.hi << a, b;
  grad_norm_bound_ = p * std::hypot(1.0 / a, 1.0 / b);
  const auto pts = boundary_samples(*this, 512);
  diameter_ = sampled_diameter(pts);
  reach_ = sampled_reach(*this, pts, Vec::Zero(2));
  proj_seeds_ = pts;
}

double SmoothRectDomain::implicit(const Vec& q) const {
  return ipow(q[0] / a_, p_) + ipow(q[1] / b_, p_) - 1.0;
}

Vec SmoothRectDomain::implicit_gradient(const Vec& q) const {
  Vec g(2);
  g << p_ * ipow(q[0] / a_, p_ - 1) / a_, p_ * ipow(q[1] / b_, p_ - 1) / b_;
  return g;
}

Mat SmoothRectDomain::implicit_hessian(const Vec& q) const {
  Mat H = Mat::Zero(2, 2);
  H(0, 0) = p_ * (p_ - 1) * ipow(q[0] / a_, p_ - 2) / (a_ * a_);
  H(1, 1) = p_ * (p_ - 1) * ipow(q[1] / b_, p_ - 2) / (b_ * b_);
  return H;
}

std::string SmoothRectDomain::describe() const {
  std::ostringstream os;
  os << "smooth_rect(a=" << a_ << ", b=" << b_ << ", p=" << p_ << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// ImplicitDomain

ImplicitDomain::ImplicitDomain(int dim, ScalarFn f, VecFn grad, MatFn hess, Box box,
                               std::string name, double grad_bound)
    : n_(dim), f_(std::move(f)), grad_(std::move(grad)), hess_(std::move(hess)),
      name_(std::move(name)) {
  box_ = std::move(box);
  if (box_.dim() != dim) throw std::invalid_argument("implicit domain: box dimension mismatch");
  grad_norm_bound_ = grad_bound > 0.0 ? grad_bound : sampled_grad_bound(*this, box_);
  // Provisional values so boundary sampling (which needs a diameter scale) works.
  diameter_ = box_.widths().norm();
  reach_ = diameter_;
  const auto pts = boundary_samples(*this, dim == 2 ? 256 : 128);
  diameter_ = sampled_diameter(pts);
  reach_ = sampled_reach(*this, pts, 0.5 * (box_.lo + box_.hi));
  proj_seeds_ = pts;
}

// ---------------------------------------------------------------------------
// Collar profile

static void validate_d0(double d0, const Domain& dom) {
  if (!(d0 > 0.0) || d0 >= 0.5)
    throw std::invalid_argument("collar: d0 must lie in (0, 0.5)");
  if (d0 > 0.5 * dom.reach_estimate())
    throw std::invalid_argument("collar: d0 exceeds half the reach estimate");
}

CollarProfile CollarProfile::for_domain(const Domain& dom) {
  const double d0 = std::min(0.1 * dom.reach_estimate(), 0.45);
  validate_d0(d0, dom);
  return CollarProfile{d0};
}

CollarProfile CollarProfile::with_d0(const Domain& dom, double d0) {
  validate_d0(d0, dom);
  return CollarProfile{d0};
}

double CollarProfile::k(double x) const {
  if (x <= d0) return std::max(x, 0.0);
  if (x >= 2.0 * d0) return 1.5 * d0;
  const double u = (x - d0) / d0;
  return d0 * (1.0 + u - u * u * u + 0.5 * u * u * u * u);
}

double CollarProfile::k_prime(double x) const {
  if (x <= d0) return x >= 0.0 ? 1.0 : 0.0;
  if (x >= 2.0 * d0) return 0.0;
  const double u = (x - d0) / d0;
  return 1.0 - 3.0 * u * u + 2.0 * u * u * u;
}

double CollarProfile::k_second(double x) const {
  if (x <= d0 || x >= 2.0 * d0) return 0.0;
  const double u = (x - d0) / d0;
  return 6.0 * u * (u - 1.0) / d0;
}

// ---------------------------------------------------------------------------
// Collar and penalty evaluation

static void require_inside(const Domain& dom, const Vec& q, double f) {
  if (f > 0.0) {
    std::ostringstream os;
    os << "point outside " << dom.describe() << " (F=" << f << ")";
    throw DomainViolation(os.str());
  }
  (void)q;
}

double collar_value(const Domain& dom, const CollarProfile& prof, const Vec& q) {
  const double f = dom.implicit(q);
  require_inside(dom, q, f);
  const double cut = 2.0 * prof.d0;
  if (dom.distance_lower_bound(q) >= cut) return prof.plateau();
  const double d = std::max(-dom.signed_distance(q), 0.0);
  return prof.k(d);
}

CollarJet collar_h(const Domain& dom, const CollarProfile& prof, const Vec& q) {
  const double f = dom.implicit(q);
  require_inside(dom, q, f);
  const int n = dom.dim();
  const double cut = 2.0 * prof.d0;
  CollarJet jet{prof.plateau(), Vec::Zero(n), Mat::Zero(n, n), true};
  if (dom.distance_lower_bound(q) >= cut) return jet;
  // Settle the plateau question with a value query before asking for the
  // jet: the jet is undefined at medial points (e.g. the disk center) that
  // are nevertheless comfortably past the cutoff.
  if (-dom.signed_distance(q) >= cut) return jet;
  const DistanceJet dj = dom.interior_distance_jet(q);
  if (dj.dist >= cut) return jet;
  const double kp = prof.k_prime(dj.dist);
  const double ks = prof.k_second(dj.dist);
  jet.h = prof.k(dj.dist);
  jet.grad = kp * dj.grad;
  jet.hess = ks * dj.grad * dj.grad.transpose() + kp * dj.hess;
  jet.plateau = false;
  return jet;
}

double penalty_value(const Domain& dom, const CollarProfile& prof, const Vec& q) {
  const double h = collar_value(dom, prof, q);
  if (h < 1e-12) throw BoundaryContact("penalty evaluated at zero collar distance");
  return 1.0 / (h * h);
}

PenaltyJet penalty_U(const Domain& dom, const CollarProfile& prof, const Vec& q) {
  const CollarJet cj = collar_h(dom, prof, q);
  if (cj.h < 1e-12) throw BoundaryContact("penalty evaluated at zero collar distance");
  const double h3 = cj.h * cj.h * cj.h;
  PenaltyJet pj;
  pj.U = 1.0 / (cj.h * cj.h);
  pj.plateau = cj.plateau;
  if (cj.plateau) {
    pj.grad = Vec::Zero(dom.dim());
    pj.hess = Mat::Zero(dom.dim(), dom.dim());
    return pj;
  }
  pj.grad = (-2.0 / h3) * cj.grad;
  pj.hess = (6.0 / (h3 * cj.h)) * cj.grad * cj.grad.transpose() - (2.0 / h3) * cj.hess;
  return pj;
}

std::vector<Vec> boundary_samples(const Domain& dom, int n) {
  const Vec anchor = 0.5 * (dom.bounding_box().lo + dom.bounding_box().hi);
  if (dom.implicit(anchor) >= 0.0)
    throw GeometryError("boundary sampling requires an interior box center");
  std::vector<Vec> pts;
  pts.reserve(n);
  if (dom.dim() == 2) {
    for (int i = 0; i < n; ++i) {
      const double phi = 2.0 * M_PI * i / n;
      Vec dir(2);
      dir << std::cos(phi), std::sin(phi);
      pts.push_back(ray_cast(dom, anchor, dir));
    }
  } else {
    std::mt19937_64 rng(9001);
    std::normal_distribution<double> gauss;
    for (int i = 0; i < n; ++i) {
      Vec dir(dom.dim());
      do {
        for (int d = 0; d < dom.dim(); ++d) dir[d] = gauss(rng);
      } while (dir.norm() < 1e-12);
      dir.normalize();
      pts.push_back(ray_cast(dom, anchor, dir));
    }
  }
  return pts;
}

}  // namespace bounce

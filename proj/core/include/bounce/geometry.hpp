#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bounce/types.hpp"

namespace bounce {

struct Projection {
  Vec point;        // nearest boundary point
  Vec normal;       // outward unit normal at point
  double distance;  // unsigned |q - point|
};

// Interior distance to the boundary with derivatives; valid where the nearest
// boundary point is unique (dist < reach).
struct DistanceJet {
  double dist;  // > 0 strictly inside, 0 on the boundary
  Vec grad;     // unit, points inward (equals -normal of the nearest point)
  Mat hess;
};

// Bounded domain Ω = {F < 0} with smooth boundary {F = 0}, ∇F ≠ 0 near ∂Ω.
class Domain {
 public:
  virtual ~Domain() = default;

  virtual int dim() const = 0;
  virtual double implicit(const Vec& q) const = 0;
  virtual Vec implicit_gradient(const Vec& q) const = 0;
  virtual Mat implicit_hessian(const Vec& q) const = 0;
  virtual std::string describe() const = 0;

  const Box& bounding_box() const { return box_; }
  double diameter() const { return diameter_; }
  double reach_estimate() const { return reach_; }

  bool contains(const Vec& q, double tol = 0.0) const { return implicit(q) < tol; }

  // Newton on the projection system p = q + mu ∇F(p), F(p) = 0, seeded by
  // gradient descent on F². Overridden with closed forms where available.
  virtual Projection boundary_projection(const Vec& q) const;

  // Negative inside, zero on ∂Ω, positive outside.
  virtual double signed_distance(const Vec& q) const;

  // Derivatives of the interior distance via the shape operator at the
  // projected point: Hess dist = -S (I - dist·S)^{-1}.
  virtual DistanceJet interior_distance_jet(const Vec& q) const;

  // Lower bound dist ≥ |F(q)| / sup|∇F|, used to shortcut plateau queries.
  double distance_lower_bound(const Vec& q) const;

 protected:
  Box box_;
  double diameter_ = 0.0;
  double reach_ = 0.0;
  double grad_norm_bound_ = 0.0;
  // Starting candidates for the generic projection; without them a single
  // start can descend into the wrong basin past the medial axis.
  std::vector<Vec> proj_seeds_;
};

class DiskDomain : public Domain {
 public:
  explicit DiskDomain(int dim, double radius);
  explicit DiskDomain(double radius) : DiskDomain(2, radius) {}

  int dim() const override { return n_; }
  double implicit(const Vec& q) const override;
  Vec implicit_gradient(const Vec& q) const override;
  Mat implicit_hessian(const Vec& q) const override;
  std::string describe() const override;

  Projection boundary_projection(const Vec& q) const override;
  double signed_distance(const Vec& q) const override;
  DistanceJet interior_distance_jet(const Vec& q) const override;

  double radius() const { return radius_; }

 private:
  int n_;
  double radius_;
};

class EllipseDomain : public Domain {
 public:
  EllipseDomain(double a, double b);

  int dim() const override { return 2; }
  double implicit(const Vec& q) const override;
  Vec implicit_gradient(const Vec& q) const override;
  Mat implicit_hessian(const Vec& q) const override;
  std::string describe() const override;

  Projection boundary_projection(const Vec& q) const override;
  double signed_distance(const Vec& q) const override;

  double a() const { return a_; }
  double b() const { return b_; }

 private:
  double a_, b_;
  // Nearest-point parameter on the folded first quadrant.
  double nearest_angle(double qx, double qy) const;
};

// Level set |x/a|^p + |y/b|^p = 1 for even p ≥ 4; smooth rounded rectangle.
class SmoothRectDomain : public Domain {
 public:
  SmoothRectDomain(double a, double b, int p = 4);

  int dim() const override { return 2; }
  double implicit(const Vec& q) const override;
  Vec implicit_gradient(const Vec& q) const override;
  Mat implicit_hessian(const Vec& q) const override;
  std::string describe() const override;

  double a() const { return a_; }
  double b() const { return b_; }
  int p() const { return p_; }

 private:
  double a_, b_;
  int p_;
};

// Generic implicit domain from user functors; geometry summaries are sampled.
class ImplicitDomain : public Domain {
 public:
  using ScalarFn = std::function<double(const Vec&)>;
  using VecFn = std::function<Vec(const Vec&)>;
  using MatFn = std::function<Mat(const Vec&)>;

  ImplicitDomain(int dim, ScalarFn f, VecFn grad, MatFn hess, Box box,
                 std::string name = "implicit", double grad_bound = 0.0);

  int dim() const override { return n_; }
  double implicit(const Vec& q) const override { return f_(q); }
  Vec implicit_gradient(const Vec& q) const override { return grad_(q); }
  Mat implicit_hessian(const Vec& q) const override { return hess_(q); }
  std::string describe() const override { return name_; }

 private:
  int n_;
  ScalarFn f_;
  VecFn grad_;
  MatFn hess_;
  std::string name_;
};

// Cutoff profile for the collar function h = k(dist). Identity below d0,
// quintic Hermite blend on [d0, 2d0], constant 1.5·d0 beyond.
struct CollarProfile {
  double d0;

  double k(double x) const;
  double k_prime(double x) const;
  double k_second(double x) const;
  double plateau() const { return 1.5 * d0; }

  // Default d0 = 0.1 × reach capped at 0.45.
  static CollarProfile for_domain(const Domain& dom);
  static CollarProfile with_d0(const Domain& dom, double d0);
};

struct CollarJet {
  double h;
  Vec grad;
  Mat hess;
  bool plateau;
};

struct PenaltyJet {
  double U;
  Vec grad;
  Mat hess;
  bool plateau;
};

double collar_value(const Domain& dom, const CollarProfile& prof, const Vec& q);
CollarJet collar_h(const Domain& dom, const CollarProfile& prof, const Vec& q);

// U = 1/h², ∇U = -2 h^{-3} ∇h.
double penalty_value(const Domain& dom, const CollarProfile& prof, const Vec& q);
PenaltyJet penalty_U(const Domain& dom, const CollarProfile& prof, const Vec& q);

// Boundary points by ray casting from the box center; angle-ordered for dim 2.
std::vector<Vec> boundary_samples(const Domain& dom, int n);

}  // namespace bounce

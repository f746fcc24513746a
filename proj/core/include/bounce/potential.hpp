#pragma once

#include <memory>
#include <optional>
#include <string>

#include "bounce/geometry.hpp"
#include "bounce/types.hpp"

namespace bounce {

// Extremes of V and |∇V| over the closure of the domain the field was built
// for. Sampled stats are padded by a Lipschitz margin so they bound the true
// extremes; analytic stats are exact.
struct PotentialStats {
  double v_min = 0.0;
  double v_max = 0.0;
  double grad_max = 0.0;
  int resolution = 0;  // samples per axis (0 when analytic)
  bool analytic = false;
};

class PotentialField {
 public:
  virtual ~PotentialField() = default;

  virtual double value(const Vec& q) const = 0;
  virtual Vec gradient(const Vec& q) const = 0;
  virtual Mat hessian(const Vec& q) const = 0;
  virtual std::string describe() const = 0;

  // Exact extremes where the (potential, domain) pair admits closed forms.
  virtual std::optional<PotentialStats> analytic_stats(const Domain& dom) const {
    (void)dom;
    return std::nullopt;
  }

  const PotentialStats& stats() const { return stats_; }
  void set_stats(const PotentialStats& s) { stats_ = s; }

 protected:
  PotentialStats stats_{};
};

class ZeroPotential : public PotentialField {
 public:
  explicit ZeroPotential(int dim) : n_(dim) {}
  double value(const Vec&) const override { return 0.0; }
  Vec gradient(const Vec&) const override { return Vec::Zero(n_); }
  Mat hessian(const Vec&) const override { return Mat::Zero(n_, n_); }
  std::string describe() const override { return "zero"; }
  std::optional<PotentialStats> analytic_stats(const Domain&) const override {
    return PotentialStats{0.0, 0.0, 0.0, 0, true};
  }

 private:
  int n_;
};

// V(q) = g · q.
class LinearPotential : public PotentialField {
 public:
  explicit LinearPotential(Vec g) : g_(std::move(g)) {}
  double value(const Vec& q) const override { return g_.dot(q); }
  Vec gradient(const Vec&) const override { return g_; }
  Mat hessian(const Vec&) const override { return Mat::Zero(g_.size(), g_.size()); }
  std::string describe() const override;
  std::optional<PotentialStats> analytic_stats(const Domain& dom) const override;
  const Vec& g() const { return g_; }

 private:
  Vec g_;
};

// V(q) = ω²/2 · |q - c|².
class HarmonicPotential : public PotentialField {
 public:
  HarmonicPotential(double omega, Vec center) : omega_(omega), c_(std::move(center)) {}
  double value(const Vec& q) const override { return 0.5 * omega_ * omega_ * (q - c_).squaredNorm(); }
  Vec gradient(const Vec& q) const override { return omega_ * omega_ * (q - c_); }
  Mat hessian(const Vec& q) const override {
    (void)q;
    return omega_ * omega_ * Mat::Identity(c_.size(), c_.size());
  }
  std::string describe() const override;
  std::optional<PotentialStats> analytic_stats(const Domain& dom) const override;
  double omega() const { return omega_; }

 private:
  double omega_;
  Vec c_;
};

// V(q) = A exp(-|q - c|²/s²).
class GaussianBumpPotential : public PotentialField {
 public:
  GaussianBumpPotential(double amplitude, Vec center, double width);
  double value(const Vec& q) const override;
  Vec gradient(const Vec& q) const override;
  Mat hessian(const Vec& q) const override;
  std::string describe() const override;
  std::optional<PotentialStats> analytic_stats(const Domain& dom) const override;

 private:
  double amp_, width_;
  Vec c_;
};

// Conservative sampled extremes: grid over the bounding box masked to Ω̄ plus
// dense boundary samples, padded first-order by the sampled Lipschitz data.
PotentialStats sampled_stats(const PotentialField& pot, const Domain& dom, int per_axis = 256);

// Analytic stats when available, padded sampled stats otherwise; stores the
// result on the field.
void attach_stats(PotentialField& pot, const Domain& dom, int per_axis = 256);

}  // namespace bounce

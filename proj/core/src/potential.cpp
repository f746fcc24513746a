#include "bounce/potential.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bounce/errors.hpp"

namespace bounce {
namespace {

std::string format_vec(const Vec& v) {
  std::ostringstream os;
  os << "[";
  for (int i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  os << "]";
  return os.str();
}

// Range of |q - c| over the closed disk of radius R about the origin.
void disk_distance_range(const Vec& c, double R, double& d_min, double& d_max) {
  const double r = c.norm();
  d_min = std::max(0.0, r - R);
  d_max = r + R;
}

}  // namespace

std::string LinearPotential::describe() const {
  return "linear(g=" + format_vec(g_) + ")";
}

std::optional<PotentialStats> LinearPotential::analytic_stats(const Domain& dom) const {
  double support = -1.0;
  if (const auto* disk = dynamic_cast<const DiskDomain*>(&dom)) {
    support = g_.norm() * disk->radius();
  } else if (const auto* ell = dynamic_cast<const EllipseDomain*>(&dom)) {
    support = std::hypot(ell->a() * g_[0], ell->b() * g_[1]);
  } else if (const auto* rect = dynamic_cast<const SmoothRectDomain*>(&dom)) {
    // Dual norm of the p-superellipse gauge.
    const double p = rect->p();
    const double pd = p / (p - 1.0);
    support = std::pow(std::pow(std::abs(rect->a() * g_[0]), pd) +
                           std::pow(std::abs(rect->b() * g_[1]), pd),
                       1.0 / pd);
  }
  if (support < 0.0) return std::nullopt;
  PotentialStats s;
  s.v_min = -support;
  s.v_max = support;
  s.grad_max = g_.norm();
  s.analytic = true;
  return s;
}

std::string HarmonicPotential::describe() const {
  std::ostringstream os;
  os << "harmonic(omega=" << omega_ << ",center=" << format_vec(c_) << ")";
  return os.str();
}

std::optional<PotentialStats> HarmonicPotential::analytic_stats(const Domain& dom) const {
  double d_min = -1.0, d_max = -1.0;
  if (const auto* disk = dynamic_cast<const DiskDomain*>(&dom)) {
    disk_distance_range(c_, disk->radius(), d_min, d_max);
  } else if (const auto* ell = dynamic_cast<const EllipseDomain*>(&dom)) {
    if (c_.norm() == 0.0) {
      d_min = 0.0;
      d_max = std::max(ell->a(), ell->b());
    }
  }
  if (d_max < 0.0) return std::nullopt;
  PotentialStats s;
  s.v_min = 0.5 * omega_ * omega_ * d_min * d_min;
  s.v_max = 0.5 * omega_ * omega_ * d_max * d_max;
  s.grad_max = omega_ * omega_ * d_max;
  s.analytic = true;
  return s;
}

GaussianBumpPotential::GaussianBumpPotential(double amplitude, Vec center, double width)
    : amp_(amplitude), width_(width), c_(std::move(center)) {
  if (!(width > 0.0)) throw std::invalid_argument("gaussian bump width must be positive");
}

double GaussianBumpPotential::value(const Vec& q) const {
  return amp_ * std::exp(-(q - c_).squaredNorm() / (width_ * width_));
}

Vec GaussianBumpPotential::gradient(const Vec& q) const {
  const Vec d = q - c_;
  return (-2.0 / (width_ * width_) * value(q)) * d;
}

Mat GaussianBumpPotential::hessian(const Vec& q) const {
  const Vec d = q - c_;
  const double s2 = width_ * width_;
  const double v = value(q);
  Mat h = (4.0 / (s2 * s2) * v) * (d * d.transpose());
  h.diagonal().array() += -2.0 / s2 * v;
  return h;
}

std::string GaussianBumpPotential::describe() const {
  std::ostringstream os;
  os << "gaussian_bump(A=" << amp_ << ",center=" << format_vec(c_) << ",width=" << width_ << ")";
  return os.str();
}

std::optional<PotentialStats> GaussianBumpPotential::analytic_stats(const Domain& dom) const {
  const auto* disk = dynamic_cast<const DiskDomain*>(&dom);
  if (!disk) return std::nullopt;
  double d_min, d_max;
  disk_distance_range(c_, disk->radius(), d_min, d_max);
  const double s2 = width_ * width_;
  const double near = std::exp(-d_min * d_min / s2);
  const double far = std::exp(-d_max * d_max / s2);
  PotentialStats s;
  s.v_min = std::min(amp_ * near, amp_ * far);
  s.v_max = std::max(amp_ * near, amp_ * far);
  // |∇V|(d) = 2|A| d/s² exp(-d²/s²) is unimodal with peak at d = s/√2.
  auto gmag = [&](double d) { return 2.0 * std::abs(amp_) * d / s2 * std::exp(-d * d / s2); };
  double g = std::max(gmag(d_min), gmag(d_max));
  const double d_star = width_ / std::sqrt(2.0);
  if (d_min <= d_star && d_star <= d_max) g = std::max(g, gmag(d_star));
  s.grad_max = g;
  s.analytic = true;
  return s;
}

PotentialStats sampled_stats(const PotentialField& pot, const Domain& dom, int per_axis) {
  if (per_axis < 2) throw std::invalid_argument("sampled_stats: per_axis must be >= 2");
  const int n = dom.dim();
  // Total work is capped by shrinking the per-axis count in higher dimensions.
  int axis = per_axis;
  if (n == 3) axis = std::min(per_axis, 64);
  if (n >= 4) axis = std::min(per_axis, 24);

  const Box& box = dom.bounding_box();
  const Vec widths = box.widths();
  double v_min = std::numeric_limits<double>::infinity();
  double v_max = -v_min;
  double g_max = 0.0;
  double h_max = 0.0;
  long count = 0;

  auto visit = [&](const Vec& q) {
    v_min = std::min(v_min, pot.value(q));
    v_max = std::max(v_max, pot.value(q));
    g_max = std::max(g_max, pot.gradient(q).norm());
    h_max = std::max(h_max, pot.hessian(q).cwiseAbs().rowwise().sum().maxCoeff());
    ++count;
  };

  std::vector<int> idx(n, 0);
  Vec q(n);
  while (true) {
    for (int d = 0; d < n; ++d) q[d] = box.lo[d] + widths[d] * idx[d] / (axis - 1);
    if (dom.implicit(q) <= 0.0) visit(q);
    int d = 0;
    while (d < n && ++idx[d] == axis) idx[d++] = 0;
    if (d == n) break;
  }
  for (const Vec& b : boundary_samples(dom, 4 * axis)) visit(b);
  if (count == 0) throw GeometryError("sampled_stats: no sample landed in the domain");

  // First-order Lipschitz pad: every point of the closure lies within about a
  // cell diagonal of some sample, so the padded values bound the true extremes.
  const double pad = widths.norm() / (axis - 1);
  PotentialStats s;
  s.v_min = v_min - g_max * pad - 0.5 * h_max * pad * pad;
  s.v_max = v_max + g_max * pad + 0.5 * h_max * pad * pad;
  s.grad_max = g_max + h_max * pad;
  s.resolution = axis;
  s.analytic = false;
  return s;
}

void attach_stats(PotentialField& pot, const Domain& dom, int per_axis) {
  if (auto s = pot.analytic_stats(dom)) {
    pot.set_stats(*s);
  } else {
    pot.set_stats(sampled_stats(pot, dom, per_axis));
  }
}

}  // namespace bounce

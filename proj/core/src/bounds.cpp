#include "bounce/bounds.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bounce {
namespace {

void require_regular(double E, double v_min, double v_max) {
  if (!(v_min <= v_max)) throw std::invalid_argument("bounds: v_min must not exceed v_max");
  if (!(E > v_max))
    throw std::invalid_argument("bounds: energy must exceed the potential maximum");
}

double denom(double E, double v_min, double v_max) {
  const double a = E - v_max;
  const double b = E - v_min;
  return a * a + 48.0 * b * b;
}

}  // namespace

double lambda_E(double E, double v_min, double v_max) {
  require_regular(E, v_min, v_max);
  const double a = E - v_max;
  return a * a * a / (2.0 * denom(E, v_min, v_max));
}

CBound c_of_E(double E, double v_min, double v_max) {
  require_regular(E, v_min, v_max);
  CBound out;
  out.value = 8.0 / denom(E, v_min, v_max);
  const double b = E - v_min;
  out.margin = 1.0 - 6.0 * out.value * b * b;
  return out;
}

double displacement_energy_bound(double E, double v_min, double diam) {
  if (!(E >= v_min)) throw std::invalid_argument("bounds: energy below the potential minimum");
  return 2.0 * std::sqrt(2.0 * (E - v_min)) * diam;
}

double period_upper_bound(double E, double v_min, double v_max, double diam) {
  return displacement_energy_bound(E, v_min, diam) / lambda_E(E, v_min, v_max);
}

double corollary_threshold(double v_max, double grad_max, double diam) {
  return v_max + 0.5 * diam * grad_max;
}

BoundsReport make_bounds_report(double E, const PotentialStats& stats, double diam, int dim) {
  BoundsReport rep;
  rep.energy = E;
  rep.v_min = stats.v_min;
  rep.v_max = stats.v_max;
  rep.grad_max = stats.grad_max;
  rep.diameter = diam;
  rep.dim = dim;
  rep.lambda = lambda_E(E, stats.v_min, stats.v_max);
  rep.c = c_of_E(E, stats.v_min, stats.v_max);
  rep.displacement = displacement_energy_bound(E, stats.v_min, diam);
  rep.period_bound = period_upper_bound(E, stats.v_min, stats.v_max, diam);
  rep.threshold = corollary_threshold(stats.v_max, stats.grad_max, diam);
  rep.max_bounces = dim + 1;
  return rep;
}

AuditResult audit_orbit(const BounceOrbit& orbit, const BoundsReport& rep) {
  AuditResult out;
  out.period_margin = rep.period_bound - orbit.period;
  out.bounce_margin = rep.max_bounces - orbit.bounce_count();
  out.corollary_applicable = rep.energy > rep.threshold;
  out.corollary_margin = out.corollary_applicable ? orbit.bounce_count() - 1 : 0;

  if (!(orbit.period > 0.0)) out.failures.push_back("orbit period is not positive");
  if (out.period_margin < 0.0) {
    std::ostringstream os;
    os << "period " << orbit.period << " exceeds upper bound " << rep.period_bound;
    out.failures.push_back(os.str());
  }
  if (out.bounce_margin < 0) {
    std::ostringstream os;
    os << "bounce count " << orbit.bounce_count() << " exceeds dim+1 = " << rep.max_bounces;
    out.failures.push_back(os.str());
  }
  if (out.corollary_applicable && orbit.bounce_count() < 1)
    out.failures.push_back("energy above threshold but orbit has no bounce");
  if (orbit.bounce_count() >= 1 && orbit.period < rep.lambda) {
    std::ostringstream os;
    os << "period " << orbit.period << " is below the uniform lower bound " << rep.lambda;
    out.failures.push_back(os.str());
  }
  out.pass = out.failures.empty();
  return out;
}

}  // namespace bounce

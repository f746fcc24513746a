#pragma once

#include <string>
#include <vector>

#include "bounce/orbit.hpp"
#include "bounce/potential.hpp"
#include "bounce/types.hpp"

namespace bounce {

// Uniform lower bound on the period of a bounce orbit at energy E:
//   Λ(E) = (E - V_max)³ / (2 [(E - V_max)² + 48 (E - V_min)²]).
// Requires E > V_max.
double lambda_E(double E, double v_min, double v_max);

struct CBound {
  double value = 0.0;   // C(E) = 8 / [(E - V_max)² + 48 (E - V_min)²]
  double margin = 0.0;  // 1 - 6 C(E) (E - V_min)², positive when admissible
};

CBound c_of_E(double E, double v_min, double v_max);

// Total displacement bound 2 sqrt(2E - 2 V_min) * diam for one period.
double displacement_energy_bound(double E, double v_min, double diam);

// Period upper bound: displacement bound divided by Λ(E).
double period_upper_bound(double E, double v_min, double v_max, double diam);

// Energy threshold above which at least one orbit with a single bounce
// exists: V_max + (diam / 2) * max |∇V|.
double corollary_threshold(double v_max, double grad_max, double diam);

struct BoundsReport {
  double energy = 0.0;
  double v_min = 0.0;
  double v_max = 0.0;
  double grad_max = 0.0;
  double diameter = 0.0;
  int dim = 0;
  double lambda = 0.0;
  CBound c;
  double displacement = 0.0;
  double period_bound = 0.0;
  double threshold = 0.0;
  int max_bounces = 0;  // dim + 1
};

BoundsReport make_bounds_report(double E, const PotentialStats& stats, double diam, int dim);

struct AuditResult {
  bool pass = false;
  double period_margin = 0.0;        // period_bound - period
  int bounce_margin = 0;             // (dim + 1) - bounce_count
  bool corollary_applicable = false; // E > threshold
  int corollary_margin = 0;          // bounce_count - 1 when applicable
  std::vector<std::string> failures;
};

// Checks a computed orbit against the a priori bounds.
AuditResult audit_orbit(const BounceOrbit& orbit, const BoundsReport& rep);

}  // namespace bounce

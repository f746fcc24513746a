#pragma once

#include <string>
#include <vector>

#include "bounce/dynamics.hpp"
#include "bounce/geometry.hpp"
#include "bounce/potential.hpp"
#include "bounce/types.hpp"

namespace bounce {

// One transversal wall hit. v_in points outward (⟨v_in, ν⟩ > 0), v_out is its
// specular reflection.
struct BounceEvent {
  double t = 0.0;
  Vec point;
  Vec normal;  // outward unit
  Vec v_in;
  Vec v_out;
};

// Concatenation of free-flight arcs joined by reflections. arcs[i] covers
// [events[i-1].t, events[i].t] in absolute time (arc 0 starts at t = 0);
// orbits without events consist of a single arc.
struct BounceOrbit {
  std::vector<Trajectory> arcs;
  std::vector<BounceEvent> events;
  double period = 0.0;
  double energy = 0.0;
  PhaseState start;

  int bounce_count() const { return static_cast<int>(events.size()); }
  PhaseState state_at(double t) const;  // t in [0, period]
};

// Specular reflection v - 2⟨v, n⟩n. Requires an outgoing velocity
// (⟨v, n⟩ > 0); throws GrazingEvent when the normal component is positive but
// at most grazing_tol.
Vec reflect_velocity(const Vec& v_in, const Vec& normal, double grazing_tol = 0.0);

struct BounceIntegrateOptions {
  OdeOptions ode{};
  // Grazing threshold on ⟨v, ν⟩ at events; 0 derives 1e-6 sqrt(2 (E - V_min))
  // from the field stats.
  double grazing_tol = 0.0;
  int max_events = 100000;
  double boundary_tol = 1e-8;    // |F| at snapped event points, relative to domain scale
  double step_cap_rel = 0.25;    // max step = step_cap_rel * diam / speed
  int scan_points = 24;          // dense-output samples per step for event detection
};

// Integrates the eps = 0 flow inside the domain, detecting wall crossings on
// the dense output and applying specular reflection at each.
BounceOrbit integrate_with_bounces(const Domain& dom, const PotentialField& pot,
                                   const PhaseState& start, double duration,
                                   const BounceIntegrateOptions& opts = {});

struct ReflectionReport {
  bool pass = false;
  double max_normal_residual = 0.0;      // |⟨v_out,ν⟩ + ⟨v_in,ν⟩| / |v|
  double max_tangential_residual = 0.0;  // |P(v_out - v_in)| / |v|
  double min_normal_component = 0.0;     // min ⟨v_in,ν⟩ over events
  double max_boundary_violation = 0.0;   // max |F| at event points
};

ReflectionReport check_reflection_law(const Domain& dom, const BounceOrbit& orbit,
                                      double tol = 1e-9);

struct EnergyReport {
  bool pass = false;
  double max_deviation = 0.0;
};

EnergyReport check_energy_invariant(const PotentialField& pot, const BounceOrbit& orbit,
                                    double tol = 1e-9, int samples_per_arc = 64);

struct ShootingOptions {
  double closure_tol = 1e-11;  // residual norm, relative to domain scale
  int max_iterations = 60;
  double fd_step = 1e-7;
  double grazing_tol = 0.0;  // 0 derives as in BounceIntegrateOptions
  OdeOptions ode{};
};

struct RefineResult {
  BounceOrbit orbit;
  bool converged = false;
  bool rejected = false;  // arc left the domain or bounce count changed
  double residual = 0.0;
  int iterations = 0;
  std::string message;
};

// Polishes a near-periodic bounce orbit to a closed one by Newton iteration
// on boundary positions, outgoing directions, and flight times, with speeds
// slaved to the energy. The bounce count is held fixed; refinements that
// change it are rejected with diagnostics.
RefineResult refine_periodic_shooting(const Domain& dom, const PotentialField& pot,
                                      const BounceOrbit& candidate,
                                      const ShootingOptions& opts = {});

}  // namespace bounce

#pragma once

#include <limits>
#include <vector>

#include "bounce/detail/dopri5.hpp"
#include "bounce/geometry.hpp"
#include "bounce/potential.hpp"
#include "bounce/types.hpp"

namespace bounce {

struct PhaseState {
  Vec q;
  Vec v;
};

// Domain and collar data needed to evaluate the penalty term. Pass nullptr
// wherever eps == 0; the penalized pieces are then never touched.
struct PenaltyContext {
  const Domain* domain = nullptr;
  const CollarProfile* profile = nullptr;
};

// Acceleration -∇V(q) - eps ∇U(q) of the penalized Lagrangian flow.
Vec el_acceleration(const PotentialField& pot, const PenaltyContext* pen, double eps, const Vec& q);

// Conserved energy |v|²/2 + V(q) + eps U(q).
double energy_value(const PotentialField& pot, const PenaltyContext* pen, double eps,
                    const PhaseState& s);

struct OdeOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  double init_step = 0.0;  // 0 selects automatically
  long max_steps = 2'000'000;
};

// Dense-output trajectory over [t0, t1]; states can be queried at any
// intermediate time.
class Trajectory {
 public:
  double t0 = 0.0;
  double t1 = 0.0;
  int dim = 0;
  std::vector<detail::Dopri5Segment> segments;
  PhaseState start, end;
  double energy_drift = 0.0;  // max |E(t_k) - E(t0)| over accepted steps

  Vec y_at(double t) const;
  PhaseState state_at(double t) const;
  double duration() const { return t1 - t0; }
};

// Integrates the smooth (event-free) flow for the given duration (> 0).
// With eps > 0 every accepted step is checked to stay inside the domain and
// to preserve energy to within a guard band; violating steps are retried at
// smaller size. Throws IntegrationError when no acceptable step exists.
Trajectory integrate_smooth(const PotentialField& pot, const PenaltyContext* pen, double eps,
                            const PhaseState& start, double duration, const OdeOptions& opts = {});

}  // namespace bounce

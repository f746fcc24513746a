#pragma once

#include <string>
#include <vector>

#include "bounce/action.hpp"
#include "bounce/orbit.hpp"
#include "bounce/types.hpp"

namespace bounce {

// Snapshot of one continuation step.
struct ContinuationRecord {
  double eps = 0.0;
  CriticalPoint point;
  Vec penalty_density;       // 2 eps h⁻³ at each node
  double density_mass = 0.0; // quadrature of the density over normalized time
  double plateau_density = 0.0;  // baseline 2 eps / h_plateau³ deep inside
  double excess_mass = 0.0;      // quadrature of max(0, density - plateau)
  double h1_diff_prev = 0.0;     // H¹ distance to the previous record's loop
};

struct ContinuationOptions {
  double eps_start = 1e-1;
  double eps_ratio = 0.5;
  double eps_floor = 1e-5;
  SolveOptions solve{};
  double diam_floor_rel = 1e-3;  // collapse when loop diameter < rel * domain diameter
  bool check_regularity = true;  // refuse energies at or below max V
  int min_records = 2;           // keep stepping at least this many records
};

struct ContinuationResult {
  std::vector<ContinuationRecord> records;
  bool collapsed = false;
  bool completed = false;  // reached eps_floor with a converged solve
  double tau_floor = 0.0;
  double diam_floor = 0.0;
  std::string message;
};

// Decreasing-eps continuation with warm starts. Solves at each eps of the
// geometric schedule (last step clamped to eps_floor exactly), records the
// penalty diagnostics, and stops early when the loop collapses.
ContinuationResult run_continuation(const ActionContext& ctx, const DiscreteLoop& init,
                                    const ContinuationOptions& opts = {});

struct ClusterOptions {
  double threshold_rel = 0.1;     // cut at rel * max excess density
  int merge_gap = 4;              // merge clusters closer than this many grid steps
  double mass_min_rel = 0.05;     // discard clusters lighter than rel * total mass
  double width_max_rel = 0.1;     // isolated only when every cluster is narrower
  double excess_floor = 1e-6;     // total excess below this means no bounces
};

struct BounceTimes {
  std::vector<double> times;   // cluster centers, normalized time in [0,1)
  std::vector<double> masses;  // per-cluster excess mass
  bool isolated = true;        // false when some cluster is too wide
};

// Locates bounce times as mass clusters of the above-plateau part of the
// penalty density.
BounceTimes extract_bounce_times(const ContinuationRecord& rec, const ClusterOptions& opts = {});

struct CollapseReport {
  enum class Kind { none, interior_critical_point, boundary_equilibrium };
  Kind kind = Kind::none;
  Vec point;              // limit point (interior) or wall point (boundary)
  double grad_norm = 0.0; // |∇V| at the interior point
  double multiplier = 0.0;  // a > 0 with ∇V = -a ν at the wall point
  std::string detail;
};

// Classifies a degenerating continuation branch from its trailing records.
CollapseReport detect_collapse(const ActionContext& ctx,
                               const std::vector<ContinuationRecord>& records, double tau_floor,
                               double diam_floor);

struct AssembleOptions {
  OdeOptions ode{};
  double grazing_tol = 0.0;
  double snap_max_rel = 0.05;  // junction consistency: flight end vs next arc start
};

// Converts the final continuation record into a genuine bounce orbit: each
// arc between consecutive bounce times is re-flown under the eps = 0 dynamics
// from a mid-arc sample rescaled to the exact energy, and the flights are
// stitched at their wall hits. A record with no bounce times is returned as a
// smooth orbit (single arc re-flown over the full period).
BounceOrbit assemble_bounce_orbit(const ActionContext& ctx, const ContinuationRecord& rec,
                                  const BounceTimes& times, const AssembleOptions& opts = {});

}  // namespace bounce

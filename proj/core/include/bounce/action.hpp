#pragma once

#include <string>

#include "bounce/geometry.hpp"
#include "bounce/potential.hpp"
#include "bounce/types.hpp"

namespace bounce {

// Closed polygonal loop: column i is node Γ_i, traversal wraps M -> 0.
// tau is the free period of the rescaled orbit.
struct DiscreteLoop {
  Mat nodes;  // N x M
  double tau = 0.0;

  int M() const { return static_cast<int>(nodes.cols()); }
  int dim() const { return static_cast<int>(nodes.rows()); }

  static DiscreteLoop validated(Mat nodes, double tau);
};

// Fixed data of one solve: geometry, collar, field, and the energy level.
struct ActionContext {
  const Domain* domain = nullptr;
  const CollarProfile* collar = nullptr;
  const PotentialField* potential = nullptr;
  double energy = 0.0;
};

// Free-time action of the penalized system on the discrete loop space:
//   A = (M / 2tau) Σ_i |Γ_{i+1} - Γ_i|²  +  (tau / M) Σ_i (E - V_i - eps U_i).
double action_value(const ActionContext& ctx, const DiscreteLoop& loop, double eps);

struct ActionGradient {
  Mat nodes;  // N x M, ∂A/∂Γ_i
  double tau = 0.0;

  double norm() const;
};

ActionGradient action_gradient(const ActionContext& ctx, const DiscreteLoop& loop, double eps);

// Second derivative in the nodes at fixed tau, as a dense (N*M)² matrix in
// node-major flattening x[i*N + d] = Γ_i[d]. Block tridiagonal with periodic
// corner blocks.
Mat action_hessian_fixed_tau(const ActionContext& ctx, const DiscreteLoop& loop, double eps);

// Full second derivative including the tau row/column, (N*M + 1)².
Mat action_hessian_full(const ActionContext& ctx, const DiscreteLoop& loop, double eps);

// Root of dA/dtau = -K/(2 tau²) + S at fixed nodes, where K = M Σ|ΔΓ|² and
// S = mean(E - V - eps U). Returns 0 when S <= 0 (no stationary tau exists).
double stationary_tau(const ActionContext& ctx, const Mat& nodes, double eps);

struct CriticalPoint {
  DiscreteLoop loop;
  double action = 0.0;
  double gradient_norm = 0.0;
  double energy_residual = 0.0;  // max over nodes of |E_i - E|
  int morse_index = -1;
  bool converged = false;
  bool tau_at_floor = false;
  int iterations = 0;
  std::string status;
};

struct SolveOptions {
  double grad_tol = 1e-8;
  int max_newton_iterations = 400;
  int max_descent_iterations = 400;
  double tau_floor = 0.0;  // 0 derives 1e-3 diam / sqrt(2 max(E - V_min, tiny))
  double tau_ceil = 1e6;
  double index_tol_rel = 1e-8;
  bool compute_index = true;
};

double default_tau_floor(const ActionContext& ctx);

// Finds a critical point of the free-time action near the initial loop by
// Levenberg-Marquardt on the residual ∇A with its exact Jacobian (the
// Hessian), which handles the saddle geometry of the action: the damped step
// interpolates between the Newton step and descent on |∇A|²/2, and strict
// decrease of the residual norm is enforced at every step. tau is a free
// variable of the system; when no stationary period exists (the mean of
// E - V - eps U is nonpositive) or tau is pressed onto its floor, the
// period is frozen and the reduced node system is solved instead, reported
// via tau_at_floor.
CriticalPoint find_critical_point(const ActionContext& ctx, const DiscreteLoop& init, double eps,
                                  const SolveOptions& opts = {});

// Number of negative eigenvalues of the fixed-tau Hessian, counting
// eigenvalues below -tol_rel times the spectral radius.
int morse_index(const ActionContext& ctx, const DiscreteLoop& loop, double eps,
                double tol_rel = 1e-8);

// Max over nodes of |E_i - E| with E_i from centered-difference velocities.
double energy_residual(const ActionContext& ctx, const DiscreteLoop& loop, double eps);

double loop_diameter(const Mat& nodes);

// Sqrt of ∫|δ|² + ∫|δ'|² for the piecewise-linear interpolants of two loops
// on the same grid.
double h1_distance(const Mat& a, const Mat& b);

}  // namespace bounce

#include "bounce/action.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "bounce/errors.hpp"

namespace bounce {
namespace {

struct NodeData {
  double W = 0.0;  // V + eps U
  Vec gW;
  Mat hW;
};

std::vector<NodeData> eval_nodes(const ActionContext& ctx, const Mat& nodes, double eps,
                                 bool with_hess) {
  const int m = static_cast<int>(nodes.cols());
  std::vector<NodeData> out(m);
  for (int i = 0; i < m; ++i) {
    const Vec q = nodes.col(i);
    NodeData& d = out[i];
    d.W = ctx.potential->value(q);
    d.gW = ctx.potential->gradient(q);
    if (with_hess) d.hW = ctx.potential->hessian(q);
    if (eps != 0.0) {
      const PenaltyJet u = penalty_U(*ctx.domain, *ctx.collar, q);
      d.W += eps * u.U;
      d.gW += eps * u.grad;
      if (with_hess) d.hW += eps * u.hess;
    } else if (ctx.domain->implicit(q) >= 0.0) {
      throw DomainViolation("action: loop node outside the open domain");
    }
  }
  return out;
}

double kinetic_sum(const Mat& nodes) {
  const int m = static_cast<int>(nodes.cols());
  double k = 0.0;
  for (int i = 0; i < m; ++i) k += (nodes.col((i + 1) % m) - nodes.col(i)).squaredNorm();
  return m * k;
}

struct FullEval {
  double value = 0.0;
  Vec grad;   // size n*m (+1 when with_tau)
  Mat hess;   // assembled only when requested
  double node_grad_norm = 0.0;
};

// Assembles value, gradient and (optionally) Hessian in one pass over the
// nodes. Layout: x[i*n + d] = Γ_i[d], tau last when included.
FullEval eval_action(const ActionContext& ctx, const Mat& nodes, double tau, double eps,
                     bool with_tau, bool with_hess) {
  const int n = static_cast<int>(nodes.rows());
  const int m = static_cast<int>(nodes.cols());
  const int D = n * m;
  const auto data = eval_nodes(ctx, nodes, eps, with_hess);

  const double K = kinetic_sum(nodes);
  double S = 0.0;
  for (const auto& d : data) S += (ctx.energy - d.W);
  S /= m;

  FullEval out;
  out.value = K / (2.0 * tau) + tau * S;
  out.grad = Vec::Zero(with_tau ? D + 1 : D);

  for (int i = 0; i < m; ++i) {
    const int ip = (i + 1) % m, im = (i + m - 1) % m;
    const Vec lap = 2.0 * nodes.col(i) - nodes.col(ip) - nodes.col(im);
    out.grad.segment(i * n, n) = (m / tau) * lap - (tau / m) * data[i].gW;
  }
  out.node_grad_norm = out.grad.head(D).norm();
  if (with_tau) out.grad[D] = -K / (2.0 * tau * tau) + S;

  if (with_hess) {
    const int DH = with_tau ? D + 1 : D;
    out.hess = Mat::Zero(DH, DH);
    const double kd = 2.0 * m / tau;
    const double ko = -m / tau;
    for (int i = 0; i < m; ++i) {
      const int ip = (i + 1) % m;
      out.hess.block(i * n, i * n, n, n) =
          kd * Mat::Identity(n, n) - (tau / m) * data[i].hW;
      out.hess.block(i * n, ip * n, n, n) += ko * Mat::Identity(n, n);
      out.hess.block(ip * n, i * n, n, n) += ko * Mat::Identity(n, n);
    }
    if (with_tau) {
      for (int i = 0; i < m; ++i) {
        const int ip = (i + 1) % m, im = (i + m - 1) % m;
        const Vec lap = 2.0 * nodes.col(i) - nodes.col(ip) - nodes.col(im);
        const Vec cross = -(m / (tau * tau)) * lap - (1.0 / m) * data[i].gW;
        out.hess.block(i * n, D, n, 1) = cross;
        out.hess.block(D, i * n, 1, n) = cross.transpose();
      }
      out.hess(D, D) = K / (tau * tau * tau);
    }
  }
  return out;
}

// RMS spread of the nodes about their centroid. Used as a cheap per-step
// trust measure: corrector steps that halve or double it in one move have
// left the branch being tracked.
double rms_extent(const Mat& nodes) {
  const Vec c = nodes.rowwise().mean();
  double s = 0.0;
  const int m = static_cast<int>(nodes.cols());
  for (int i = 0; i < m; ++i) s += (nodes.col(i) - c).squaredNorm();
  return std::sqrt(s / m);
}

}  // namespace

DiscreteLoop DiscreteLoop::validated(Mat nodes, double tau) {
  if (nodes.cols() < 16) throw std::invalid_argument("DiscreteLoop: need at least 16 nodes");
  if (nodes.rows() < 1) throw std::invalid_argument("DiscreteLoop: empty node dimension");
  if (!nodes.allFinite()) throw std::invalid_argument("DiscreteLoop: nodes must be finite");
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw std::invalid_argument("DiscreteLoop: tau must be positive and finite");
  return DiscreteLoop{std::move(nodes), tau};
}

double ActionGradient::norm() const { return std::sqrt(nodes.squaredNorm() + tau * tau); }

double action_value(const ActionContext& ctx, const DiscreteLoop& loop, double eps) {
  return eval_action(ctx, loop.nodes, loop.tau, eps, false, false).value;
}

ActionGradient action_gradient(const ActionContext& ctx, const DiscreteLoop& loop, double eps) {
  const auto ev = eval_action(ctx, loop.nodes, loop.tau, eps, true, false);
  const int n = loop.dim(), m = loop.M();
  ActionGradient g;
  g.nodes = Mat(n, m);
  for (int i = 0; i < m; ++i) g.nodes.col(i) = ev.grad.segment(i * n, n);
  g.tau = ev.grad[n * m];
  return g;
}

Mat action_hessian_fixed_tau(const ActionContext& ctx, const DiscreteLoop& loop, double eps) {
  return eval_action(ctx, loop.nodes, loop.tau, eps, false, true).hess;
}

Mat action_hessian_full(const ActionContext& ctx, const DiscreteLoop& loop, double eps) {
  return eval_action(ctx, loop.nodes, loop.tau, eps, true, true).hess;
}

double stationary_tau(const ActionContext& ctx, const Mat& nodes, double eps) {
  const auto data = eval_nodes(ctx, nodes, eps, false);
  double S = 0.0;
  for (const auto& d : data) S += (ctx.energy - d.W);
  S /= static_cast<double>(nodes.cols());
  if (S <= 0.0) return 0.0;
  return std::sqrt(kinetic_sum(nodes) / (2.0 * S));
}

double default_tau_floor(const ActionContext& ctx) {
  const double e_gap =
      std::max(ctx.energy - ctx.potential->stats().v_min, 1e-12 * std::max(1.0, std::abs(ctx.energy)));
  return 1e-3 * ctx.domain->diameter() / std::sqrt(2.0 * e_gap);
}

double energy_residual(const ActionContext& ctx, const DiscreteLoop& loop, double eps) {
  const int m = loop.M();
  const auto data = eval_nodes(ctx, loop.nodes, eps, false);
  double worst = 0.0;
  for (int i = 0; i < m; ++i) {
    const int ip = (i + 1) % m, im = (i + m - 1) % m;
    const Vec v = (loop.nodes.col(ip) - loop.nodes.col(im)) * (m / (2.0 * loop.tau));
    worst = std::max(worst, std::abs(0.5 * v.squaredNorm() + data[i].W - ctx.energy));
  }
  return worst;
}

int morse_index(const ActionContext& ctx, const DiscreteLoop& loop, double eps, double tol_rel) {
  const Mat h = action_hessian_fixed_tau(ctx, loop, eps);
  Eigen::SelfAdjointEigenSolver<Mat> es(h, Eigen::EigenvaluesOnly);
  const Vec ev = es.eigenvalues();
  const double scale = std::max({std::abs(ev[0]), std::abs(ev[ev.size() - 1]), 1e-300});
  int idx = 0;
  for (int i = 0; i < ev.size(); ++i)
    if (ev[i] < -tol_rel * scale) ++idx;
  return idx;
}

double loop_diameter(const Mat& nodes) {
  const int m = static_cast<int>(nodes.cols());
  double d = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) d = std::max(d, (nodes.col(i) - nodes.col(j)).norm());
  return d;
}

double h1_distance(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("h1_distance: shape mismatch");
  const int m = static_cast<int>(a.cols());
  const Mat d = a - b;
  double l2 = 0.0, dd = 0.0;
  for (int i = 0; i < m; ++i) {
    l2 += d.col(i).squaredNorm();
    dd += (d.col((i + 1) % m) - d.col(i)).squaredNorm();
  }
  return std::sqrt(l2 / m + m * dd);
}

CriticalPoint find_critical_point(const ActionContext& ctx, const DiscreteLoop& init, double eps,
                                  const SolveOptions& opts) {
  if (!ctx.domain || !ctx.collar || !ctx.potential)
    throw std::invalid_argument("find_critical_point: incomplete context");
  if (eps < 0.0) throw std::invalid_argument("find_critical_point: eps must be >= 0");
  DiscreteLoop cur = DiscreteLoop::validated(init.nodes, init.tau > 0 ? init.tau : 1.0);
  const int n = cur.dim(), m = cur.M();
  const int D = n * m;
  const double tau_floor = opts.tau_floor > 0.0 ? opts.tau_floor : default_tau_floor(ctx);
  const double tau_ceil = opts.tau_ceil;

  auto apply = [&](const Mat& nodes, const Vec& delta) {
    Mat out = nodes;
    for (int i = 0; i < m; ++i) out.col(i) += delta.segment(i * n, n);
    return out;
  };

  CriticalPoint cp;
  cp.status = "max_iterations";

  // tau presolve on the initial loop.
  {
    const double ts = stationary_tau(ctx, cur.nodes, eps);
    cur.tau = std::clamp(ts > 0.0 ? ts : cur.tau, tau_floor, tau_ceil);
  }

  // Levenberg-Marquardt on the residual r(x) = ∇A(x) with its exact
  // symmetric Jacobian H: (H² + λ s I) δ = −H r. The action is a saddle
  // problem, so damping the Newton system itself fails once λ is large
  // (the step degenerates to descent on A, which grows |∇A| at a saddle);
  // here the large-λ limit is descent on φ = |r|²/2 instead, and strict
  // monotonicity in φ also fences off the parasitic constant loops of the
  // penalty plateau, which sit at φ > 0. tau is a free variable of the
  // system; its stationarity root is used only to detect degeneracy (no
  // root, or a root below the floor, pins tau there and solves the reduced
  // node system).
  int total_iters = 0;
  const int budget = opts.max_descent_iterations + opts.max_newton_iterations;
  const double dom_scale = ctx.domain->diameter();
  double lambda = 1e-4;
  for (int it = 0; it < budget; ++it, ++total_iters) {
    auto ev = eval_action(ctx, cur.nodes, cur.tau, eps, true, true);
    const double S = ev.grad[D] + kinetic_sum(cur.nodes) / (2.0 * cur.tau * cur.tau);
    const bool at_floor = cur.tau <= tau_floor * (1.0 + 1e-12);
    // Reduced (tau-frozen) mode: either the energy sits at or below the
    // loop's mean of V + eps U, so no stationary period exists at all, or
    // tau has been driven onto the floor and the action still pushes it
    // down. Both are degeneracy signals, not solvable saddle directions,
    // and neither may teleport tau: a transiently hot penalty layer has to
    // be able to recover without losing the period.
    const bool pinned = S <= 0.0 || (at_floor && ev.grad[D] >= 0.0);
    const double gn = ev.grad.norm();
    if (!pinned && gn <= opts.grad_tol) {
      cp.converged = true;
      cp.status = "converged";
      break;
    }
    if (pinned && ev.node_grad_norm <= opts.grad_tol) {
      cp.tau_at_floor = true;
      cp.status = "tau_floor";
      break;
    }

    const int DH = pinned ? D : D + 1;
    const Vec r = ev.grad.head(DH);
    const double ref = r.norm();
    const Mat H = pinned ? Mat(ev.hess.topLeftCorner(D, D)) : std::move(ev.hess);
    const Mat H2 = H * H;
    const Vec Hr = H * r;
    const double sc = H2.diagonal().mean() + 1e-30;

    bool accepted = false;
    for (int inner = 0; inner < 30; ++inner) {
      Mat Hl = H2;
      Hl.diagonal().array() += lambda * sc;
      Eigen::LLT<Mat> llt(Hl);
      if (llt.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Vec delta = llt.solve(-Hr);
      if (!delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      double tau_t = pinned ? cur.tau : std::clamp(cur.tau + delta[D], tau_floor, tau_ceil);
      if (!pinned && (tau_t < 0.5 * cur.tau || tau_t > 2.0 * cur.tau)) {
        lambda *= 10.0;
        continue;
      }
      try {
        const Mat nt = apply(cur.nodes, delta.head(D));
        // Trust guard: a single step that halves or doubles the loop's
        // extent has left the branch being tracked, whatever it does to
        // the residual.
        const double ext_cur = rms_extent(cur.nodes);
        const double ext_t = rms_extent(nt);
        if (ext_cur > 1e-9 * dom_scale && (ext_t < 0.5 * ext_cur || ext_t > 2.0 * ext_cur)) {
          lambda *= 10.0;
          continue;
        }
        auto evt = eval_action(ctx, nt, tau_t, eps, true, false);
        const double trial = pinned ? evt.node_grad_norm : evt.grad.norm();
        if (std::isfinite(trial) && trial < ref * (1.0 - 1e-13)) {
          cur.nodes = nt;
          cur.tau = tau_t;
          lambda = std::max(lambda / 3.0, 1e-12);
          accepted = true;
          break;
        }
      } catch (const DomainViolation&) {
      } catch (const BoundaryContact&) {
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      cp.status = "stalled";
      break;
    }
  }

  cp.loop = cur;
  cp.iterations = total_iters;
  const auto fin = eval_action(ctx, cur.nodes, cur.tau, eps, true, false);
  cp.action = fin.value;
  cp.gradient_norm = cp.tau_at_floor ? fin.node_grad_norm : fin.grad.norm();
  cp.energy_residual = energy_residual(ctx, cur, eps);
  if (opts.compute_index) cp.morse_index = morse_index(ctx, cur, eps, opts.index_tol_rel);
  return cp;
}

}  // namespace bounce

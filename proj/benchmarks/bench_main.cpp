#include <benchmark/benchmark.h>

#include "bounce/action.hpp"
#include "bounce/dynamics.hpp"
#include "bounce/geometry.hpp"
#include "bounce/potential.hpp"

namespace {

using namespace bounce;

struct Fixture {
  DiskDomain disk{2, 1.0};
  CollarProfile collar = CollarProfile::with_d0(disk, 0.45);
  ZeroPotential pot{2};
  ActionContext ctx{&disk, &collar, &pot, 0.5};
  DiscreteLoop loop;

  Fixture() {
    attach_stats(pot, disk);
    const int m = 256;
    Mat nodes(2, m);
    for (int i = 0; i < m; ++i) {
      const double t = 2.0 * M_PI * i / m;
      nodes(0, i) = 0.7 * std::cos(t);
      nodes(1, i) = 0.2 * std::sin(t);
    }
    loop = DiscreteLoop{std::move(nodes), 4.0};
  }
};

Fixture& fix() {
  static Fixture f;
  return f;
}

void BM_ActionGradient(benchmark::State& state) {
  auto& f = fix();
  for (auto _ : state) benchmark::DoNotOptimize(action_gradient(f.ctx, f.loop, 1e-3));
}
BENCHMARK(BM_ActionGradient);

void BM_ActionHessian(benchmark::State& state) {
  auto& f = fix();
  for (auto _ : state) benchmark::DoNotOptimize(action_hessian_full(f.ctx, f.loop, 1e-3));
}
BENCHMARK(BM_ActionHessian);

void BM_PenaltyJet(benchmark::State& state) {
  auto& f = fix();
  Vec q(2);
  q << 0.62, 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(penalty_U(f.disk, f.collar, q));
}
BENCHMARK(BM_PenaltyJet);

void BM_BoundaryProjection(benchmark::State& state) {
  EllipseDomain ell(2.0, 1.0);
  Vec q(2);
  q << 0.9, 0.4;
  for (auto _ : state) benchmark::DoNotOptimize(ell.boundary_projection(q));
}
BENCHMARK(BM_BoundaryProjection);

void BM_SmoothFlight(benchmark::State& state) {
  auto& f = fix();
  PhaseState s;
  s.q = Vec::Zero(2);
  s.v = Vec(2);
  s.v << 1.0, 0.3;
  s.v.normalize();
  PenaltyContext pen{&f.disk, &f.collar};
  for (auto _ : state)
    benchmark::DoNotOptimize(integrate_smooth(f.pot, &pen, 1e-3, s, 0.5));
}
BENCHMARK(BM_SmoothFlight);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "conflab/conflab.hpp"

using namespace conflab;
using std::numbers::pi;

static void BM_LatticeDistance(benchmark::State& state) {
  const Manifold t = Manifold::torus(2);
  const double h = 2 * pi / static_cast<double>(state.range(0));
  const std::vector<Point> pts{Point{0.3, 0.3}, Point{3.5, 2.9}};
  const LatticeGraph g(t, WeightField::burago(2), h, 3 * h, Estimator{}, 1, pts);
  for (auto _ : state) benchmark::DoNotOptimize(g.distance(g.extra_node(0), g.extra_node(1)));
}
BENCHMARK(BM_LatticeDistance)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_BuildGraph(benchmark::State& state) {
  const Manifold t = Manifold::torus(2);
  const double h = 2 * pi / static_cast<double>(state.range(0));
  const PointSet nodes = t.lattice(h);
  for (auto _ : state)
    benchmark::DoNotOptimize(build_graph(t, nodes, 3 * h, WeightField::burago(1), Estimator{}, 1).edge_count());
}
BENCHMARK(BM_BuildGraph)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_MuBall(benchmark::State& state) {
  const Manifold t = Manifold::torus(2);
  const WeightField f = WeightField::burago(4);
  for (auto _ : state)
    benchmark::DoNotOptimize(mu_f_ball(t, f, {Point{1, 1}, 0.5}, static_cast<std::size_t>(state.range(0)), 1).value);
}
BENCHMARK(BM_MuBall)->Arg(1024)->Arg(16384);

static void BM_ScalarCurvature(benchmark::State& state) {
  const Manifold s = Manifold::sphere(3);
  const WeightField f = WeightField::sphere_bubble(10, Point{0, 0, 0, 1});
  const Point x{0.5, 0.5, 0.5, 0.5};
  for (auto _ : state) benchmark::DoNotOptimize(scalar_curvature(s, f, x).scal);
}
BENCHMARK(BM_ScalarCurvature);

static void BM_LowestEigenpair(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Manifold t = Manifold::torus({2.0, 2.0, 2.0});
  const GridField V = GridField::sample(t, {n, n, n}, [](std::span<const double> x) {
    return 0.2 * std::cos(pi * x[0]) * std::cos(pi * x[1]);
  });
  const GridOperator op(V);
  for (auto _ : state) benchmark::DoNotOptimize(lowest_eigenpair(op).lambda0);
}
BENCHMARK(BM_LowestEigenpair)->Arg(8)->Arg(12)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();

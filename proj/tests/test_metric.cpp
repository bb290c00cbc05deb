#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "conflab/error.hpp"
#include "conflab/metric.hpp"
#include "conflab/weight.hpp"

using namespace conflab;
using std::numbers::pi;

namespace {

EpsGraph two_nodes(const Manifold& m, const WeightField& f, Estimator est, double gap = 0.3) {
  PointSet ps(2, 0.0);
  ps.push_back(Point{1.0, 1.0});
  ps.push_back(Point{1.0 + gap, 1.0});
  return build_graph(m, std::move(ps), 1.0, f, est, 3);
}

double edge_weight(const EpsGraph& g) { return g.weights(0)[0]; }

void check_metric(const DistanceMatrix& d) {
  const std::size_t n = d.rows();
  REQUIRE(d.sources == d.targets);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(d(i, i) == 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(d(i, j) >= 0.0);
      CHECK(d(i, j) == doctest::Approx(d(j, i)).epsilon(1e-12));
      for (std::size_t k = 0; k < n; ++k) CHECK(d(i, k) <= d(i, j) + d(j, k) + 1e-12);
    }
  }
}

std::vector<Point> ring_points() {
  std::vector<Point> p;
  for (int i = 0; i < 8; ++i) p.push_back(Point{0.4 + 0.7 * i, 0.3 + 0.55 * ((i * 3) % 8)});
  return p;
}

DistanceMatrix lattice_matrix(const Manifold& m, const WeightField& f, const std::vector<Point>& pts, double h,
                              double eps, std::uint64_t seed = 1) {
  const LatticeGraph g(m, f, h, eps, Estimator{}, seed, pts);
  DistanceMatrix d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    d.sources.push_back(i);
    d.targets.push_back(i);
  }
  d.values.assign(pts.size() * pts.size(), 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      d(i, j) = d(j, i) = g.distance(g.extra_node(i), g.extra_node(j));
  return d;
}

}  // namespace

TEST_CASE("edge weights: closed forms") {
  const Manifold t = Manifold::torus(2);
  const Estimator chain{EstimatorKind::ChainBall};
  const Estimator line{EstimatorKind::RiemannLine};
  CHECK(edge_weight(two_nodes(t, WeightField::constant(0), line)) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(edge_weight(two_nodes(t, WeightField::constant(0), chain)) == doctest::Approx(0.15).epsilon(1e-12));
  for (const Estimator& e : {chain, line}) {
    const double a = edge_weight(two_nodes(t, WeightField::constant(0), e));
    const double b = edge_weight(two_nodes(t, WeightField::constant(0.7), e));
    CHECK(b / a == doctest::Approx(std::exp(0.7)).epsilon(1e-12));
  }
}

TEST_CASE("shortest path on a single edge is the edge weight; factor-2 chain relation") {
  const Manifold t = Manifold::torus(2);
  const EpsGraph g = two_nodes(t, WeightField::burago(1), Estimator{});
  const std::size_t src[] = {0};
  CHECK(shortest_paths(g, src)(0, 1) == edge_weight(g));
  const EpsGraph c = two_nodes(t, WeightField::constant(0), Estimator{EstimatorKind::ChainBall});
  const EpsGraph r = two_nodes(t, WeightField::constant(0), Estimator{EstimatorKind::RiemannLine});
  CHECK(2.0 * shortest_paths(c, src)(0, 1) == doctest::Approx(shortest_paths(r, src)(0, 1)).epsilon(1e-12));
}

TEST_CASE("disconnected graphs are rejected") {
  const Manifold t = Manifold::torus(2);
  PointSet ps(2, 0.0);
  ps.push_back(Point{0, 0});
  ps.push_back(Point{3, 3});
  CHECK_THROWS_AS(build_graph(t, ps, 0.5, WeightField::constant(0), Estimator{}, 1), ConstructionError);
  CHECK_THROWS_AS(build_graph(t, t.lattice(0.1), 0.2, WeightField::constant(0), Estimator{}, 1), InputError);
}

TEST_CASE("flat torus graph distance within 3%") {
  const Manifold t = Manifold::torus(2);
  const std::vector<Point> pts{Point{0, 0}, Point{1, 0}};
  const LatticeGraph g(t, WeightField::constant(0), 0.05, 0.15, Estimator{}, 1, pts);
  const double d = g.distance(g.extra_node(0), g.extra_node(1));
  CHECK(d >= 1.0 - 1e-12);
  CHECK(d <= 1.03);
}

TEST_CASE("lattice graph agrees with an explicit eps-graph") {
  const Manifold t = Manifold::torus(2);
  const WeightField f = WeightField::burago(1);
  const double h = 2 * pi / 40;
  const LatticeGraph lg(t, f, h, 3 * h, Estimator{}, 1);
  const EpsGraph eg = build_graph(t, t.lattice(h), 3 * h, f, Estimator{}, 1);
  const std::size_t src[] = {0, 77};
  const DistanceMatrix dm = shortest_paths(eg, src);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t target : {5u, 400u, 1234u, 1599u})
      CHECK(lg.distance(src[s], target) == doctest::Approx(dm(s, target)).epsilon(1e-12));
}

TEST_CASE("property: distance matrices are metrics") {
  const Manifold t = Manifold::torus(2);
  for (const WeightField& f : {WeightField::burago(2), WeightField::log_cusp(Point{pi, pi}, 1.0, 3.0)})
    check_metric(lattice_matrix(t, f, ring_points(), 2 * pi / 64, 3 * 2 * pi / 64));
}

TEST_CASE("property: scaling equivariance") {
  const Manifold t = Manifold::torus(2);
  const WeightField base = WeightField::burago(3);
  const auto pts = ring_points();
  const DistanceMatrix a = lattice_matrix(t, base, pts, 2 * pi / 64, 0.3);
  const DistanceMatrix b = lattice_matrix(t, WeightField::scaled(base, -0.4), pts, 2 * pi / 64, 0.3);
  for (std::size_t i = 0; i < a.values.size(); ++i)
    if (a.values[i] > 0) CHECK(std::abs(b.values[i] / (std::exp(-0.4) * a.values[i]) - 1) <= 1e-10);
}

TEST_CASE("property: distances do not increase with eps on a fixed point set") {
  const Manifold t = Manifold::torus(2);
  const WeightField f = WeightField::burago(1);
  const PointSet nodes = t.lattice(2 * pi / 48);
  const std::size_t src[] = {0, 300};
  DistanceMatrix prev;
  for (double eps : {0.4, 0.55, 0.8}) {
    const DistanceMatrix d = shortest_paths(build_graph(t, nodes, eps, f, Estimator{}, 1), src);
    if (!prev.values.empty())
      for (std::size_t i = 0; i < d.values.size(); ++i) CHECK(d.values[i] <= prev.values[i] + 1e-12);
    prev = d;
  }
}

TEST_CASE("refinement extrapolates to the limit distance") {
  const Manifold t = Manifold::torus(2);
  const std::vector<std::pair<Point, Point>> pairs{{Point{0.2, 0.3}, Point{2.0, 1.1}}, {Point{1, 1}, Point{1, 3.5}}};
  const double schedule[] = {0.3, 0.15, 0.075};
  RefineOptions o;
  o.seed = 2;
  for (double c : {0.0, 0.5}) {
    const RefineResult r = refine_distance(t, WeightField::constant(c), pairs, schedule, o);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const double d0 = t.distance(pairs[i].first, pairs[i].second);
      CHECK(r.rows[i].extrapolated == doctest::Approx(std::exp(c) * d0).epsilon(0.005));
    }
  }
  const std::vector<std::pair<Point, Point>> valley{{Point{0, 0}, Point{0, pi}}};
  const RefineResult b = refine_distance(t, WeightField::burago(1), valley, schedule, o);
  CHECK(b.rows[0].extrapolated == doctest::Approx(pi / std::sqrt(2.0)).epsilon(0.01));
  const double bad[] = {0.1, 0.2};
  CHECK_THROWS_AS(refine_distance(t, WeightField::burago(1), valley, bad, o), InputError);
}

TEST_CASE("chain and line metrics agree after extrapolation") {
  const Manifold t = Manifold::torus(2);
  const std::vector<std::pair<Point, Point>> pairs{{Point{0.5, 0.5}, Point{1.7, 1.3}}};
  const double schedule[] = {0.4, 0.2, 0.1};
  RefineOptions line, chain;
  chain.estimator.kind = EstimatorKind::ChainBall;
  const WeightField f = WeightField::burago(1);
  const double a = refine_distance(t, f, pairs, schedule, line).rows[0].extrapolated;
  const double b = 2.0 * refine_distance(t, f, pairs, schedule, chain).rows[0].extrapolated;
  CHECK(b == doctest::Approx(a).epsilon(0.03));
}

TEST_CASE("f-balls") {
  const Manifold t = Manifold::torus(2);
  const WeightField flat = WeightField::constant(0);
  const double h = 2 * pi / 80;
  const EpsGraph g = build_graph(t, t.lattice(h), 3 * h, flat, Estimator{}, 1);
  const std::size_t center = 40 * 80 + 40;
  const std::size_t src[] = {center};
  const DistanceMatrix d = shortest_paths(g, src);
  const Point c = g.points().point(center);

  const FBall small = f_ball(t, flat, g, d, center, 0.25);
  for (std::size_t i : small.members) CHECK(t.distance(c, g.points()[i]) <= 0.25 + 1e-12);

  const FBall all = f_ball(t, flat, g, d, center, 100.0);
  CHECK(all.coverage_warning);
  CHECK(all.mass == doctest::Approx(4 * pi * pi).epsilon(0.02));

  for (double r : {0.3, 0.6, 1.0}) {
    const FBall b = f_ball(t, flat, g, d, center, r);
    CHECK(b.mass / (r * r) == doctest::Approx(pi).epsilon(0.1));
  }
}

TEST_CASE("stable norm") {
  const Manifold t = Manifold::torus(2);
  const double ts[] = {4 * pi, 8 * pi};
  const double e1[] = {1, 0}, e2[] = {0, 1}, diag[] = {1, 1};
  const double flat = stable_norm(t, WeightField::constant(0), e1, ts).estimate;
  CHECK(flat == doctest::Approx(1.0).epsilon(0.01));

  const WeightField b = WeightField::burago(1);
  const double n1 = stable_norm(t, b, e1, ts).estimate, n2 = stable_norm(t, b, e2, ts).estimate;
  const double ref1 = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                          [](double s) { return std::sqrt(1 - 0.5 * std::cos(s)); }, 0.0, 2 * pi, 15, 1e-14) /
                      (2 * pi);
  CHECK(n2 == doctest::Approx(1 / std::sqrt(2.0)).epsilon(0.01));
  CHECK(n1 == doctest::Approx(ref1).epsilon(0.01));
  const double n12 = stable_norm(t, b, diag, ts).estimate;
  CHECK(n12 <= (n1 + n2) * 1.02);
  const double zero[] = {0, 0};
  CHECK_THROWS_AS(stable_norm(t, b, zero, ts), InputError);
}

TEST_CASE("matrix io round trip") {
  const Manifold t = Manifold::torus(2);
  const DistanceMatrix d = lattice_matrix(t, WeightField::burago(1), ring_points(), 2 * pi / 32, 0.6);
  const auto p = std::filesystem::temp_directory_path() / "conflab-tests" / "matrix.json";
  std::filesystem::create_directories(p.parent_path());
  write_matrix(p, d);
  const DistanceMatrix r = read_matrix(p);
  CHECK(r.values == d.values);
  CHECK(r.sources == d.sources);
  CHECK(r.targets == d.targets);
}

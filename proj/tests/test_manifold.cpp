#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "conflab/error.hpp"
#include "conflab/manifold.hpp"

using namespace conflab;
using std::numbers::pi;

TEST_CASE("torus distance: half period and wraparound") {
  const Manifold t = Manifold::torus(2);
  CHECK(t.distance(Point{0, 0}, Point{pi, 0}) == doctest::Approx(pi).epsilon(1e-15));
  CHECK(t.distance(Point{0.1, 0}, Point{2 * pi - 0.1, 0}) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK_THROWS_AS(t.distance(Point{0, 0}, Point{0, 0, 0}), InputError);
}

TEST_CASE("sphere distance: antipodal points") {
  const Manifold s = Manifold::sphere(2);
  CHECK(s.distance(Point{0, 0, 1}, Point{0, 0, -1}) == doctest::Approx(pi));
  const Manifold s2 = Manifold::sphere(2, 2.0);
  CHECK(s2.distance(Point{0, 0, 2}, Point{2, 0, 0}) == doctest::Approx(pi));
}

TEST_CASE("box distance is Euclidean") {
  const Manifold b = Manifold::box({{0, 1}, {0, 2}});
  CHECK(b.distance(Point{0, 0}, Point{1, 2}) == doctest::Approx(std::sqrt(5.0)));
}

TEST_CASE("ball volumes") {
  const Manifold t = Manifold::torus(2);
  CHECK(t.ball_volume({Point{0, 0}, 0.5}).value == doctest::Approx(pi * 0.25).epsilon(1e-14));
  CHECK(t.ball_volume({Point{0, 0}, 0.5}).std_error == 0.0);
  const Manifold s = Manifold::sphere(2);
  CHECK(s.ball_volume({Point{0, 0, 1}, pi / 2}).value == doctest::Approx(2 * pi).epsilon(1e-10));
  CHECK(s.ball_volume({Point{0, 0, 1}, pi}).value == doctest::Approx(4 * pi).epsilon(1e-10));
  CHECK(s.ball_volume({Point{0, 0, 1}, 5.0}).value == doctest::Approx(4 * pi).epsilon(1e-10));
  // n = 3 torus: omega_3 r^3
  const Manifold t3 = Manifold::torus(3);
  CHECK(t3.ball_volume({Point{1, 1, 1}, 0.7}).value == doctest::Approx(4.0 / 3.0 * pi * 0.343).epsilon(1e-14));
}

TEST_CASE("large torus balls fall back to Monte Carlo") {
  const Manifold t = Manifold::torus(2);
  const Measure m = t.ball_volume({Point{0, 0}, 4.0});
  CHECK(m.std_error > 0.0);
  CHECK(m.value <= t.volume() + 1e-9);
  // a disc of radius 4 clipped by the torus exceeds the disc of radius pi
  CHECK(m.value > pi * pi * pi);
}

TEST_CASE("ball volume is monotone in radius") {
  for (const Manifold& m : {Manifold::torus(2), Manifold::sphere(3), Manifold::box({{0, 1}, {0, 1}})}) {
    Point c = m.kind() == ManifoldKind::Sphere ? Point{0, 0, 0, 1} : Point{0.3, 0.3};
    double prev = 0.0;
    for (double r = 0.05; r < 2.0; r += 0.05) {
      const double v = m.ball_volume({c, r}).value;
      CHECK(v >= prev - 1e-9);
      prev = v;
    }
  }
}

TEST_CASE("midpoints") {
  const Manifold t = Manifold::torus(2);
  const Point mid = t.midpoint(Point{0, 0}, Point{1, 0});
  CHECK(mid[0] == doctest::Approx(0.5));
  CHECK(mid[1] == doctest::Approx(0.0));
  const Manifold s = Manifold::sphere(2);
  const Point q = s.midpoint(Point{0, 0, 1}, Point{1, 0, 0});
  CHECK(q[0] == doctest::Approx(std::sqrt(0.5)));
  CHECK(q[1] == doctest::Approx(0.0));
  CHECK(q[2] == doctest::Approx(std::sqrt(0.5)));
  CHECK_THROWS_AS(s.midpoint(Point{0, 0, 1}, Point{0, 0, -1}), GeometryError);
}

TEST_CASE("property: triangle inequality and midpoint identities") {
  std::mt19937_64 rng(7);
  for (const Manifold& m : {Manifold::torus(2), Manifold::torus({1.0, 3.0, 2.0}), Manifold::sphere(3),
                            Manifold::box({{-1, 1}, {0, 2}})}) {
    const SampleSet s = m.sample_uniform(60, 11);
    for (std::size_t i = 0; i + 2 < s.size(); i += 3) {
      const double a = m.distance(s[i], s[i + 1]), b = m.distance(s[i + 1], s[i + 2]), c = m.distance(s[i], s[i + 2]);
      CHECK(c <= a + b + 1e-12);
      CHECK(a == doctest::Approx(m.distance(s[i + 1], s[i])).epsilon(1e-15));
      const Point mid = m.midpoint(s[i], s[i + 1]);
      const double l = m.distance(s[i], mid), r = m.distance(mid, s[i + 1]);
      CHECK(std::abs(l - r) <= 1e-10);
      CHECK(std::abs(l - a / 2) <= 1e-10);
    }
  }
}

TEST_CASE("lattice sizes") {
  CHECK(Manifold::torus(2).lattice(pi / 2).size() == 16);
  CHECK(Manifold::box({{0, 1}, {0, 1}}).lattice(0.5).size() == 9);
  // hexagonal layout constant sqrt(3)/2
  const PointSet s = Manifold::sphere(2).lattice(0.1);
  const double expected = 4 * pi / (0.01 * std::sqrt(3.0) / 2.0);
  CHECK(static_cast<double>(s.size()) >= 0.5 * expected);
  CHECK(static_cast<double>(s.size()) <= 2.0 * expected);
  CHECK_THROWS_AS(Manifold::torus(3).lattice(0.001, 1000), ResourceError);
}

TEST_CASE("sphere lattice nearest-neighbour spacing within [0.5, 2] of requested") {
  const Manifold s = Manifold::sphere(2);
  const PointSet ps = s.lattice(0.2);
  std::vector<double> nn(ps.size(), 1e9);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < ps.size(); ++j)
      if (i != j) nn[i] = std::min(nn[i], s.distance(ps[i], ps[j]));
  std::sort(nn.begin(), nn.end());
  const double median = nn[nn.size() / 2];
  CHECK(median >= 0.1);
  CHECK(median <= 0.4);
  double total = 0;
  for (double c : ps.cell_volumes()) total += c;
  CHECK(total == doctest::Approx(4 * pi).epsilon(1e-12));
}

TEST_CASE("cubed-sphere lattice weights sum to vol(S^3)") {
  const PointSet ps = Manifold::sphere(3).lattice(0.3);
  double total = 0;
  for (double c : ps.cell_volumes()) total += c;
  CHECK(total == doctest::Approx(2 * pi * pi).epsilon(1e-12));
}

TEST_CASE("sample_ball normalization and determinism") {
  for (const Manifold& m : {Manifold::torus(2), Manifold::sphere(2), Manifold::sphere(3)}) {
    const Point c = m.kind() == ManifoldKind::Sphere ? Point(std::vector<double>(m.coord_dim(), 0.0)) : Point{1, 1};
    Point cc = c;
    if (m.kind() == ManifoldKind::Sphere) cc.coords.back() = 1.0;
    const BallSpec b{cc, 0.8};
    const SampleSet s = m.sample_ball(b, 500, 3);
    CHECK(s.total_weight() == doctest::Approx(m.ball_volume(b).value).epsilon(1e-12));
    const SampleSet s2 = m.sample_ball(b, 500, 3);
    CHECK(s.coords == s2.coords);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(m.distance(cc, s[i]) <= 0.8 + 1e-12);
  }
}

TEST_CASE("uniform disc sampling is centred") {
  const Manifold t = Manifold::torus(2);
  const SampleSet s = t.sample_ball({Point{0, 0}, 0.5}, 100000, 5);
  double sum = 0, sum2 = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double x = s[i][0];
    if (x > pi) x -= 2 * pi;
    sum += x;
    sum2 += x * x;
  }
  const double N = static_cast<double>(s.size());
  const double mean = sum / N, sd = std::sqrt(sum2 / N - mean * mean);
  CHECK(std::abs(mean) <= 3 * sd / std::sqrt(N));
}

TEST_CASE("validation") {
  const Manifold s = Manifold::sphere(2);
  CHECK_THROWS_AS(s.validate(Point{0, 0, 1.1}), InputError);
  CHECK_NOTHROW(s.validate(Point{0, 0, 1}));
  CHECK_THROWS_AS(Manifold::torus(2).validate(Point{0, NAN}), InputError);
}

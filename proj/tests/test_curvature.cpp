#include <doctest.h>

#include <cmath>
#include <numbers>

#include "conflab/curvature.hpp"
#include "conflab/error.hpp"

using namespace conflab;
using std::numbers::pi;

namespace {

// vol of the geodesic cap of angle a on the unit S^3
double s3_cap(double a) { return 2 * pi * (a - std::sin(a) * std::cos(a)); }

}  // namespace

TEST_CASE("alpha(n,2) closed forms") {
  CHECK(alpha_n2(3) == doctest::Approx(6 * std::pow(2 * pi * pi, 2.0 / 3.0)).epsilon(1e-14));
  CHECK(alpha_n2(3) == doctest::Approx(43.825).epsilon(1e-4));
  CHECK(alpha_n2(4) == doctest::Approx(12 * std::sqrt(8 * pi * pi / 3)).epsilon(1e-14));
  CHECK(alpha_n2(4) == doctest::Approx(61.56).epsilon(1e-3));
  for (int n : {3, 4, 5}) CHECK(std::abs(alpha_n2_quadrature(n) / alpha_n2(n) - 1) <= 1e-6);
  CHECK_THROWS_AS(alpha_n2(2), InputError);
}

TEST_CASE("scalar curvature of model geometries") {
  CHECK(scalar_curvature(Manifold::torus(3), WeightField::constant(0), Point{1, 2, 3}).scal == 0.0);
  CHECK(scalar_curvature(Manifold::sphere(3), WeightField::constant(0), Point{0, 0, 0, 1}).scal ==
        doctest::Approx(6.0));
  CHECK(scalar_curvature(Manifold::sphere(3, 2.0), WeightField::constant(0), Point{0, 0, 0, 2}).scal ==
        doctest::Approx(1.5));
  // constant shift c rescales scal by e^{-2c}
  CHECK(scalar_curvature(Manifold::sphere(3), WeightField::constant(0.5), Point{0, 0, 1, 0}).scal ==
        doctest::Approx(6.0 * std::exp(-1.0)));
}

TEST_CASE("burago curvature at the valley, n = 2") {
  const Manifold t = Manifold::torus(2);
  const WeightField b = WeightField::burago(1);
  // f = 1/2 ln(1 - cos(x)/2): f''(0) = 1/2, e^{-2f} = 2, scal = e^{-2f} * 2 * (-f'') = -2
  CHECK(scalar_curvature(t, b, Point{0, 1}).scal == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(scalar_curvature(t, b, Point{0, 1}, CurvatureMethod::FiniteDifference, 1e-3).scal ==
        doctest::Approx(-2.0).epsilon(1e-5));
}

TEST_CASE("property: sphere bubbles are round") {
  const Manifold s = Manifold::sphere(3);
  const SampleSet pts = s.sample_uniform(200, 4);
  for (double l : {1.0, 3.0, 40.0}) {
    const WeightField f = WeightField::sphere_bubble(l, Point{0, 0, 0, 1});
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(std::abs(scalar_curvature(s, f, pts[i]).scal / 6 - 1) <= 1e-6);
      if (i % 20 == 0 && l < 10)
        CHECK(std::abs(scalar_curvature(s, f, pts[i], CurvatureMethod::FiniteDifference, 1e-3).scal / 6 - 1) <= 5e-2);
    }
  }
}

TEST_CASE("finite differences converge at second order") {
  const Manifold t = Manifold::torus(3);
  const WeightField f = WeightField::sum({WeightField::burago(2), WeightField::constant(0.1)});
  const Point x{0.7, 1.1, 2.0};
  const double exact = scalar_curvature(t, f, x).scal;
  double prev = 0;
  std::vector<double> orders;
  for (double h : {0.08, 0.04, 0.02}) {
    const double err = std::abs(scalar_curvature(t, f, x, CurvatureMethod::FiniteDifference, h).scal - exact);
    if (prev > 0) orders.push_back(std::log2(prev / err));
    prev = err;
  }
  for (double o : orders) CHECK(o >= 1.8);
}

TEST_CASE("L^p curvature norms") {
  const BallSpec hemi{Point{0, 0, 0, 1}, pi / 2};
  CHECK(lp_scal_norm(Manifold::torus(2), WeightField::constant(0), {Point{1, 1}, 1.0}, 1.5, 1000, 1).value == 0.0);
  const Manifold s = Manifold::sphere(3);
  const double ref = std::pow(std::pow(6.0, 1.5) * pi * pi, 2.0 / 3.0);
  CHECK(lp_scal_norm(s, WeightField::constant(0), hemi, 1.5, 4096, 1).value == doctest::Approx(ref).epsilon(1e-8));
  const BallSpec whole{Point{0, 0, 0, 1}, pi};
  const double a = lp_scal_norm(s, WeightField::sphere_bubble(1, Point{0, 0, 0, 1}), whole, 1.5, 4096, 1).value;
  const double b = lp_scal_norm(s, WeightField::sphere_bubble(10, Point{0, 0, 0, 1}), whole, 1.5, 4096, 1).value;
  CHECK(b == doctest::Approx(a).epsilon(0.02));
}

TEST_CASE("positive part never exceeds the absolute norm") {
  const Manifold t = Manifold::torus(2);
  for (int l : {1, 3}) {
    const BallSpec ball{Point{0.5, 0.5}, 1.0};
    const double pos = lp_scal_norm(t, WeightField::burago(l), ball, 1.0, 2000, 2, true).value;
    const double abs = lp_scal_norm(t, WeightField::burago(l), ball, 1.0, 2000, 2, false).value;
    CHECK(pos <= abs);
    CHECK(pos > 0);
  }
}

TEST_CASE("pinching profiles") {
  const Manifold t = Manifold::torus(3);
  PointSet c3(3, 0.0);
  c3.push_back(Point{1, 1, 1});
  const PinchingReport flat = pinching_profile(t, WeightField::constant(0), 0.5, c3, 1000, 1);
  CHECK(flat.sup_pos == 0.0);
  CHECK(flat.below_alpha);
  CHECK(flat.below_lambda0);

  const Manifold s = Manifold::sphere(3);
  PointSet cs(4, 0.0);
  cs.push_back(Point{0, 0, 0, -1});
  cs.push_back(Point{0, 1, 0, 0});
  const PinchingReport round = pinching_profile(s, WeightField::sphere_bubble(1, Point{0, 0, 0, 1}), 0.5, cs, 4096, 1);
  CHECK(round.sup_pos == doctest::Approx(6 * std::pow(s3_cap(0.5), 2.0 / 3.0)).epsilon(1e-8));
  CHECK(round.sup_pos <= round.sup_abs);
  const PinchingReport sharp =
      pinching_profile(s, WeightField::sphere_bubble(100, Point{0, 0, 0, 1}), 0.5, cs, 4096, 1);
  CHECK(sharp.sup_pos >= 0.95 * alpha_n2(3));
  CHECK(sharp.sup_pos <= 1.01 * alpha_n2(3));
}

TEST_CASE("pinching is invariant under constant shifts") {
  const Manifold t = Manifold::torus(3);
  PointSet c(3, 0.0);
  c.push_back(Point{0.2, 1, 1});
  c.push_back(Point{3, 3, 0.5});
  const WeightField base = WeightField::burago(2);
  const PinchingReport a = pinching_profile(t, base, 0.6, c, 2000, 5);
  const PinchingReport b = pinching_profile(t, WeightField::scaled(base, 0.35), 0.6, c, 2000, 5);
  CHECK(std::abs(b.sup_pos / a.sup_pos - 1) <= 1e-10);
  CHECK(std::abs(b.sup_abs / a.sup_abs - 1) <= 1e-10);
}

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "conflab/diagnostics.hpp"
#include "conflab/error.hpp"

using namespace conflab;
using std::numbers::pi;

namespace {

BallSampler whole_torus() {
  BallSampler s;
  s.centers = PointSet(2, 0.0);
  s.centers.push_back(Point{0, 0});
  s.radii = {pi * std::sqrt(2.0)};
  s.seed = 3;
  return s;
}

PointSet scattered(std::size_t n) {
  PointSet ps(2, 0.0);
  for (std::size_t i = 0; i < n; ++i) ps.push_back(Point{0.3 + 0.37 * i, 0.1 + std::fmod(0.91 * i * i, 6.0)});
  return ps;
}

DistanceMatrix square_d0(const Manifold& m, const PointSet& ps) {
  std::vector<std::size_t> idx(ps.size());
  std::iota(idx.begin(), idx.end(), 0);
  return background_distances(m, ps, idx, idx);
}

}  // namespace

TEST_CASE("reverse hoelder and A_p on the whole torus") {
  const Manifold t = Manifold::torus(2);
  const BallSampler s = whole_torus();
  CHECK(reverse_holder(t, WeightField::constant(0), 2.0, s, 4096).value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ap_product(t, WeightField::constant(0.3), 2.0, s, 4096).value == doctest::Approx(1.0).epsilon(1e-12));
  // avg w = 1, avg w^2 = 9/8, avg 1/w = 2/sqrt(3)
  const WeightField b = WeightField::burago(1);
  CHECK(reverse_holder(t, b, 2.0, s, 40000).value == doctest::Approx(std::sqrt(1.125)).epsilon(0.002));
  CHECK(ap_product(t, b, 2.0, s, 40000).value == doctest::Approx(2 / std::sqrt(3.0)).epsilon(0.002));
}

TEST_CASE("A_p is uniform in the oscillation frequency") {
  const Manifold t = Manifold::torus(2);
  const BallSampler s = whole_torus();
  const double a1 = ap_product(t, WeightField::burago(1), 2.0, s, 40000).value;
  for (int l : {2, 4, 8}) CHECK(ap_product(t, WeightField::burago(l), 2.0, s, 40000).value == doctest::Approx(a1).epsilon(0.05));
}

TEST_CASE("property: constants are monotone in their exponents") {
  const Manifold t = Manifold::torus(2);
  const BallSampler s = BallSampler::random(t, 6, {0.4, 0.8}, 11);
  const WeightField f = WeightField::burago(2);
  double prev = 0;
  for (double q : {1.5, 2.0, 3.0}) {
    const double c = reverse_holder(t, f, q, s, 4096).value;
    CHECK(c >= prev - 1e-12);
    CHECK(c >= 1.0 - 1e-12);
    prev = c;
  }
  prev = 1e300;
  for (double p : {1.5, 2.0, 4.0}) {
    const double c = ap_product(t, f, p, s, 4096).value;
    CHECK(c <= prev + 1e-12);
    CHECK(c >= 1.0 - 1e-12);
    prev = c;
  }
}

TEST_CASE("doubling constants of flat space") {
  const BallSampler s2 = BallSampler::random(Manifold::torus(2), 5, {0.2, 0.5}, 1);
  CHECK(doubling_constant(Manifold::torus(2), WeightField::constant(0), s2, 2048).value ==
        doctest::Approx(4.0).epsilon(1e-9));
  const BallSampler s3 = BallSampler::random(Manifold::torus(3), 5, {0.2, 0.5}, 1);
  CHECK(doubling_constant(Manifold::torus(3), WeightField::constant(0.2), s3, 2048).value ==
        doctest::Approx(8.0).epsilon(1e-9));
  const BallSampler sb = BallSampler::random(Manifold::torus(2), 12, {0.1, 0.3, 0.6}, 2);
  CHECK(doubling_constant(Manifold::torus(2), WeightField::burago(8), sb, 4096).value <= 12.0);
}

TEST_CASE("subset exponent") {
  const Manifold t = Manifold::torus(2);
  const BallSampler s = BallSampler::random(t, 6, {0.3, 0.6}, 4);
  const SubsetExponent flat = subset_ratio_exponent(t, WeightField::constant(0), s, 8, 4096);
  CHECK(flat.slope == doctest::Approx(1.0).epsilon(0.05));
  CHECK(flat.alpha >= 1.0);
  const SubsetExponent b = subset_ratio_exponent(t, WeightField::burago(1), s, 8, 4096);
  CHECK(b.alpha <= 1.5);
  CHECK(b.pairs > 0);
}

TEST_CASE("strong ratio of flat space") {
  const Manifold t = Manifold::torus(2);
  std::vector<PairDistance> pairs;
  for (double d : {0.1, 0.4, 0.9}) pairs.push_back({Point{1, 1}, Point{1 + d, 1}, d});
  const StrongRatio r = strong_ratio(t, WeightField::constant(0), pairs, 1.0, 2048, 1);
  CHECK(r.theta_at_x == doctest::Approx(std::sqrt(pi)).epsilon(1e-9));
  CHECK(r.theta_centered == doctest::Approx(2 / std::sqrt(pi)).epsilon(1e-9));
  CHECK(r.B == doctest::Approx(1 / pi).epsilon(1e-9));
  CHECK(std::isfinite(r.B));

  // d_f -> e^c d_f and mu_f -> e^{2c} mu_f leave the ratios unchanged
  std::vector<PairDistance> scaled = pairs;
  for (auto& p : scaled) p.d_f *= std::exp(0.4);
  const StrongRatio s = strong_ratio(t, WeightField::constant(0.4), scaled, 1.0, 2048, 1);
  CHECK(s.theta_at_x == doctest::Approx(r.theta_at_x).epsilon(1e-12));

  pairs.push_back({Point{0, 0}, Point{2, 0}, 2});
  CHECK_THROWS_AS(strong_ratio(t, WeightField::constant(0), pairs, 1.0, 2048, 1), InputError);
}

TEST_CASE("bi-hoelder fit of the background metric") {
  const Manifold t = Manifold::torus(2);
  const PointSet ps = scattered(16);
  const DistanceMatrix d0 = square_d0(t, ps);
  const BiHolderFit fit = biholder_fit(d0, d0, 4 * pi * pi, 2);
  CHECK(fit.slope == doctest::Approx(1.0).epsilon(0.02));
  CHECK(fit.alpha_low == doctest::Approx(1.0).epsilon(0.02));
  CHECK(fit.C == doctest::Approx(2 * pi).epsilon(0.02));

  DistanceMatrix scaled = d0;
  for (double& v : scaled.values) v *= 3.0;
  const BiHolderFit s = biholder_fit(scaled, d0, 9 * 4 * pi * pi, 2);
  CHECK(s.slope == doctest::Approx(fit.slope).epsilon(1e-12));
  CHECK(s.intercept == doctest::Approx(fit.intercept).epsilon(1e-12));
}

TEST_CASE("hoelder seminorm") {
  const Manifold t = Manifold::torus(2);
  const PointSet ps = scattered(10);
  const DistanceMatrix d0 = square_d0(t, ps);
  const double s = holder_seminorm(d0, d0, 1.0);
  CHECK(s <= 1.0 + 1e-12);
  CHECK(s >= 0.5);
  CHECK(holder_seminorm(d0, d0, 1.0, &d0) == 0.0);
}

TEST_CASE("isoperimetric ratios") {
  const Manifold t = Manifold::torus(2);
  const std::vector<Domain> discs{Domain::ball(Point{1, 1}, 0.5), Domain::ball(Point{3, 2}, 1.2)};
  const IsoperimetricReport flat = isoperimetric_ratio(t, WeightField::constant(0), discs, 4096, 1);
  for (const auto& row : flat.rows) CHECK(row.ratio == doctest::Approx(2 * std::sqrt(pi)).epsilon(1e-3));
  const IsoperimetricReport shifted = isoperimetric_ratio(t, WeightField::constant(0.7), discs, 4096, 1);
  CHECK(shifted.inf_ratio == doctest::Approx(flat.inf_ratio).epsilon(1e-10));

  const std::vector<Domain> box{Domain::box({0.5, 0.5}, {1.5, 2.5})};
  CHECK(isoperimetric_ratio(t, WeightField::constant(0), box, 4096, 1).inf_ratio ==
        doctest::Approx(6 / std::sqrt(2.0)).epsilon(1e-3));

  const IsoperimetricReport b = isoperimetric_ratio(t, WeightField::burago(1), discs, 20000, 2);
  CHECK(b.inf_ratio >= 2 * std::sqrt(pi) / std::sqrt(3.0));
}

TEST_CASE("distance bounded by mass: d_f^n <= B mu_f") {
  const Manifold t = Manifold::torus(2);
  const WeightField f = WeightField::burago(2);
  const double h = 2 * pi / 96;
  PointSet ps = scattered(8);
  std::vector<Point> extras;
  for (std::size_t i = 0; i < ps.size(); ++i) extras.push_back(ps.point(i));
  const LatticeGraph g(t, f, h, 3 * h, Estimator{}, 1, extras);
  std::vector<PairDistance> pairs;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = i + 1; j < ps.size(); ++j)
      if (t.distance(ps[i], ps[j]) <= 1.5)
        pairs.push_back({ps.point(i), ps.point(j), g.distance(g.extra_node(i), g.extra_node(j))});
  REQUIRE(pairs.size() >= 3);
  const StrongRatio r = strong_ratio(t, f, pairs, 1.5, 4096, 1);
  CHECK(std::isfinite(r.B));
  CHECK(r.B > 0);
  CHECK(r.B < 10.0);
}

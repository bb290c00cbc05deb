#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <nlohmann/json.hpp>

#include "conflab/error.hpp"
#include "conflab/grid_io.hpp"
#include "conflab/weight.hpp"

using namespace conflab;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

double gk(auto f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13);
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "conflab-tests";
  fs::create_directories(d);
  return d / name;
}

bool within_sigma(const Measure& m, double ref, double k = 3.0) {
  return std::abs(m.value - ref) <= k * m.std_error + 1e-12 * std::abs(ref);
}

}  // namespace

TEST_CASE("burago weight at a valley") {
  const Manifold t = Manifold::torus(2);
  const WeightField b = WeightField::burago(1);
  for (double y : {0.0, 1.0, 4.0}) CHECK(b.weight(t, Point{0, y}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(b.weight(t, Point{pi, 0}) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(WeightField::burago(3).weight(t, Point{pi / 3, 0.2}) == doctest::Approx(1.5));
  CHECK_THROWS_AS(b.check_manifold(Manifold::sphere(2)), InputError);
}

TEST_CASE("identity fields") {
  const Manifold s = Manifold::sphere(3);
  const WeightField one = WeightField::sphere_bubble(1.0, Point{0, 0, 0, 1});
  const SampleSet pts = s.sample_uniform(50, 2);
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK(std::abs(one.eval(s, pts[i])) <= 1e-14);
  CHECK(std::abs(one.eval(s, Point{0, 0, 0, 1})) <= 1e-14);
  CHECK(WeightField::constant(0).eval(Manifold::torus(2), Point{1, 2}) == 0.0);
  CHECK_THROWS_AS(one.check_manifold(Manifold::torus(3)), InputError);
}

TEST_CASE("sphere bubble value at the pole is -ln lambda") {
  const Manifold s = Manifold::sphere(3);
  const WeightField f = WeightField::sphere_bubble(7.0, Point{0, 0, 0, 1});
  CHECK(f.eval(s, Point{0, 0, 0, 1}) == doctest::Approx(-std::log(7.0)));
  CHECK(f.eval(s, Point{0, 0, 0, -1}) == doctest::Approx(std::log(7.0)));
}

TEST_CASE("log cusp profile and blending") {
  const Manifold t = Manifold::torus(2);
  const Point x0{pi, pi};
  const WeightField f = WeightField::log_cusp(x0, 1.0);
  const double d = 0.05;
  CHECK(f.eval(t, Point{pi + d, pi}) == doctest::Approx(std::sqrt(std::log(1.0 / d))).epsilon(1e-14));
  CHECK(f.eval(t, Point{pi + 2.5, pi}) == 0.0);
  CHECK(std::isinf(f.eval(t, x0)));
  // blend continuity with two derivatives at R0/e and 2 R0
  for (double r : {1.0 / std::exp(1.0), 2.0}) {
    double d1a, d2a, d1b, d2b;
    const double a = cusp_profile(r - 1e-7, 1.0, &d1a, &d2a), b = cusp_profile(r + 1e-7, 1.0, &d1b, &d2b);
    CHECK(std::abs(a - b) < 1e-6);
    CHECK(std::abs(d1a - d1b) < 1e-5);
    CHECK(std::abs(d2a - d2b) < 1e-4);
  }
  const WeightField capped = WeightField::log_cusp(x0, 1.0, 2.0);
  CHECK(capped.eval(t, x0) <= 2.0);
  CHECK(capped.eval(t, x0) > 1.9);
}

TEST_CASE("mu_f_ball against closed forms") {
  const Manifold t = Manifold::torus(2);
  const BallSpec b{Point{1, 1}, 0.6};
  const double v0 = t.ball_volume(b).value;
  CHECK(within_sigma(mu_f_ball(t, WeightField::constant(0), b, 4000, 1), v0));
  CHECK(within_sigma(mu_f_ball(t, WeightField::constant(0.4), b, 4000, 1), std::exp(0.8) * v0));
  const Measure whole = mu_f_ball(t, WeightField::burago(1), {Point{0, 0}, pi * std::sqrt(2.0)}, 20000, 4);
  CHECK(within_sigma(whole, 4 * pi * pi));
  CHECK_THROWS_AS(mu_f_ball(t, WeightField::constant(0), b, 50, 1), InputError);
}

TEST_CASE("total masses") {
  const Manifold t = Manifold::torus(2);
  CHECK(within_sigma(total_mass(t, WeightField::constant(0), 4096, 1), 4 * pi * pi));
  for (int l : {1, 2, 5}) CHECK(within_sigma(total_mass(t, WeightField::burago(l), 20000, 3), 4 * pi * pi));
  const Manifold s = Manifold::sphere(3);
  for (double l : {1.0, 3.0, 30.0})
    CHECK(total_mass(s, WeightField::sphere_bubble(l, Point{0, 0, 0, 1}), 4096, 1).value ==
          doctest::Approx(2 * pi * pi).epsilon(0.01));
}

TEST_CASE("integrability profile") {
  const Manifold t = Manifold::torus(2);
  const double e[] = {-2.0, 1.0, 4.0};
  for (const auto& m : integrability_profile(t, WeightField::constant(0), e, 2048, 1))
    CHECK(m.value == doctest::Approx(4 * pi * pi).epsilon(1e-12));
  const double pm[] = {-2.0};
  const Measure inv = integrability_profile(t, WeightField::burago(1), pm, 50000, 9)[0];
  CHECK(within_sigma(inv, 4 * pi * pi * 2 / std::sqrt(3.0)));
}

TEST_CASE("log cusp is e^{nf}-integrable; radial oracle") {
  const Manifold t = Manifold::torus(2);
  const double p[] = {2.0};
  double prev = 0.0;
  for (double R0 : {0.5, 1.0, 1.4}) {
    // 2 pi int_0^{2R0} (e^{2 f(r)} - 1) r dr + vol, split at the singularity-free blend start
    auto g = [R0](double r) { return (std::exp(2.0 * cusp_profile(r, R0)) - 1.0) * r; };
    const double ref = 4 * pi * pi + 2 * pi * (gk(g, 0.0, R0 / std::exp(1.0)) + gk(g, R0 / std::exp(1.0), 2 * R0));
    const Measure m = integrability_profile(t, WeightField::log_cusp(Point{pi, pi}, R0), p, 200000, 5)[0];
    CHECK(std::isfinite(m.value));
    CHECK(within_sigma(m, ref, 4.0));
    // the integrand grows pointwise with R0
    CHECK(ref > prev);
    prev = ref;
  }
}

TEST_CASE("scaled fields: pointwise shift and exact mass scaling") {
  const Manifold t = Manifold::torus(2);
  const WeightField base = WeightField::burago(2);
  const WeightField s = WeightField::scaled(base, 0.3);
  for (double x : {0.1, 1.7, 3.3})
    CHECK(s.eval(t, Point{x, 0.4}) == doctest::Approx(base.eval(t, Point{x, 0.4}) + 0.3).epsilon(1e-15));
  const BallSpec b{Point{2, 2}, 0.7};
  const double r = mu_f_ball(t, s, b, 3000, 8).value / mu_f_ball(t, base, b, 3000, 8).value;
  CHECK(std::abs(r / std::exp(0.6) - 1.0) <= 1e-12);
}

TEST_CASE("standard error shrinks like budget^{-1/2}") {
  const Manifold t = Manifold::torus(2);
  const BallSpec b{Point{0, 0}, 1.0};
  const double e1 = mu_f_ball(t, WeightField::burago(1), b, 1000, 2).std_error;
  const double e2 = mu_f_ball(t, WeightField::burago(1), b, 10000, 2).std_error;
  const double ratio = e1 / e2 / std::sqrt(10.0);
  CHECK(ratio > 0.5);
  CHECK(ratio < 2.0);
}

TEST_CASE("sphere bubble mass concentrates at the antipode of the pole") {
  const Manifold s = Manifold::sphere(3);
  const Point pole{0, 0, 0, 1}, south{0, 0, 0, -1};
  double prev = 0.0;
  for (double l : {1.0, 2.0, 10.0, 100.0, 1000.0}) {
    const double frac = mu_f_ball(s, WeightField::sphere_bubble(l, pole), {south, 0.5}, 4096, 1).value / (2 * pi * pi);
    CHECK(frac > prev);
    prev = frac;
  }
  CHECK(prev > 0.99);
}

TEST_CASE("weight json round trip") {
  const Manifold t = Manifold::torus(2);
  for (const WeightField& f :
       {WeightField::constant(0.2), WeightField::burago(4), WeightField::log_cusp(Point{1, 1}, 0.5, 3.0),
        WeightField::scaled(WeightField::burago(1), -0.1),
        WeightField::sum({WeightField::burago(1), WeightField::constant(0.1)})}) {
    const WeightField g = WeightField::from_json(f.to_json(), t);
    for (double x : {0.3, 2.2}) CHECK(g.eval(t, Point{x, 0.9}) == f.eval(t, Point{x, 0.9}));
  }
  CHECK_THROWS_AS(WeightField::from_json(nlohmann::json{{"kind", "nope"}}, t), InputError);
}

TEST_CASE("grid io round trip and failures") {
  const Manifold t = Manifold::torus({1.0, 2.0});
  const GridField g = GridField::sample(t, {8, 5}, [](std::span<const double> x) { return std::sin(x[0]) + x[1]; });
  const fs::path p = scratch("grid.json");
  write_grid(p, g);
  CHECK(read_grid(p) == g);

  const fs::path c = scratch("grid.csv");
  write_grid_csv(c, g);
  const GridField gc = read_grid_csv(c, t);
  CHECK(gc.shape() == g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(gc.values()[i] == doctest::Approx(g.values()[i]).epsilon(1e-15));

  fs::resize_file(scratch("grid.f64"), 8 * 10);
  CHECK_THROWS_AS(read_grid(p), FormatError);

  write_grid(p, g);
  nlohmann::json j;
  std::ifstream(p) >> j;
  j["colour"] = "red";
  std::ofstream(p) << j.dump();
  try {
    read_grid(p);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("expected keys") != std::string::npos);
  }
}

TEST_CASE("grid weights interpolate node values") {
  const Manifold t = Manifold::torus(2);
  const GridField g = GridField::sample(t, {16, 16}, [](std::span<const double> x) { return 0.1 * std::cos(x[0]); });
  const WeightField w1 = WeightField::grid(g, 1), w3 = WeightField::grid(g, 3);
  std::vector<double> x(2);
  for (std::size_t k : {0u, 17u, 100u}) {
    g.node(k, x);
    CHECK(w1.eval(t, x) == doctest::Approx(g.values()[k]).epsilon(1e-13));
    CHECK(w3.eval(t, x) == doctest::Approx(g.values()[k]).epsilon(1e-13));
  }
  CHECK(w3.eval(t, Point{0.3, 1.0}) == doctest::Approx(0.1 * std::cos(0.3)).epsilon(1e-3));
}

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "conflab/error.hpp"
#include "conflab/schrodinger.hpp"

using namespace conflab;
using std::numbers::pi;

namespace {

std::vector<std::size_t> cube(std::size_t n, std::size_t dim = 3) { return std::vector<std::size_t>(dim, n); }

std::vector<double> cos_potential(const Manifold& m, const std::vector<std::size_t>& shape, double a) {
  const GridField g = GridField::sample(m, shape, [&](std::span<const double> x) {
    return a * std::cos(2 * pi * x[0] / m.periods()[0]) * std::cos(2 * pi * x[1] / m.periods()[1]);
  });
  return {g.values().begin(), g.values().end()};
}

// Explicit matrix of Delta - V on a periodic grid, for dense eigen solves.
Eigen::MatrixXd dense_operator(const GridOperator& op) {
  const std::size_t N = op.size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  for (std::size_t k = 0; k < N; ++k) {
    A(k, k) -= op.potential()[k];
    for (std::size_t a = 0; a < op.shape().size(); ++a) {
      const double h2 = op.spacing(a) * op.spacing(a);
      A(k, k) += 2 / h2;
      A(k, op.neighbour(k, a, 1)) -= 1 / h2;
      A(k, op.neighbour(k, a, -1)) -= 1 / h2;
    }
  }
  return A;
}

}  // namespace

TEST_CASE("laplacian stencil") {
  const Manifold t = Manifold::torus({2.0, 2.0, 2.0});
  const GridOperator op(t, cube(8), std::vector<double>(512, 0.0));
  std::vector<double> one(op.size(), 1.0), out(op.size());
  op.laplacian(one, out);
  for (double v : out) CHECK(std::abs(v) <= 1e-12);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<double> u(op.size()), w(op.size()), lu(op.size()), lw(op.size());
  for (auto& v : u) v = g(rng);
  for (auto& v : w) v = g(rng);
  op.laplacian(u, lu);
  op.laplacian(w, lw);
  CHECK(op.dot(lu, w) == doctest::Approx(op.dot(u, lw)).epsilon(1e-12));
  CHECK(op.dot(lu, u) >= 0.0);
}

TEST_CASE("lowest eigenvalue of constant potentials") {
  const Manifold t = Manifold::torus({2.0, 2.0, 2.0});
  const GridOperator zero(t, cube(8), std::vector<double>(512, 0.0));
  const SchrodingerSolve s = lowest_eigenpair(zero, 1e-12);
  CHECK(std::abs(s.lambda0) <= 1e-10);
  for (double v : s.phi) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
  const SchrodingerSolve c = lowest_eigenpair(zero.with_potential(std::vector<double>(512, 0.7)), 1e-12);
  CHECK(c.lambda0 == doctest::Approx(-0.7).epsilon(1e-10));
  const GridOperator coarse(t, cube(4), std::vector<double>(64, 0.0));
  CHECK_THROWS_AS(lowest_eigenpair(coarse), InputError);
}

TEST_CASE("lowest eigenvalue against a dense solve") {
  const Manifold t = Manifold::torus(2);
  const auto V = cos_potential(t, cube(16, 2), 0.05);
  const GridOperator op(t, cube(16, 2), V);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_operator(op), Eigen::EigenvaluesOnly);
  const SchrodingerSolve s = lowest_eigenpair(op, 1e-12);
  CHECK(s.lambda0 == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-8));
  CHECK(s.residual <= 1e-10);
}

TEST_CASE("property: shifts and positivity of the ground state") {
  const Manifold t = Manifold::torus({2.0, 2.0, 2.0});
  const auto V = cos_potential(t, cube(8), 0.3);
  const GridOperator op(t, cube(8), V);
  const SchrodingerSolve a = lowest_eigenpair(op, 1e-12);
  for (double c : {-0.5, 0.25, 2.0}) {
    std::vector<double> W = V;
    for (double& v : W) v += c;
    CHECK(std::abs(lowest_eigenpair(op.with_potential(W), 1e-12).lambda0 - (a.lambda0 - c)) <= 1e-9);
  }
  for (double v : a.phi) CHECK(v > 0.0);
  CHECK(*std::max_element(a.phi.begin(), a.phi.end()) == 1.0);
}

TEST_CASE("ground-state shift of a bump") {
  const Manifold t = Manifold::torus({2.0, 2.0, 2.0});
  const std::size_t N = 512;
  const GridOperator grid(t, cube(8), std::vector<double>(N, 0.0));
  const double beta = estimate_sobolev_beta(grid, 1).beta;
  const Point x0{1, 1, 1};
  std::vector<double> q(N, 0.0), x(3);
  CHECK(gs_shift_c0(grid, q, x0, 0.8, beta).c0 == 0.0);
  for (std::size_t k = 0; k < N; ++k) {
    grid.potential_field().node(k, x);
    const double r = t.distance(x0.coords, x) / 0.8;
    if (r <= 1) q[k] = 0.5 * (1 - r) * (1 - r);
  }
  const GsShift pos = gs_shift_c0(grid, q, x0, 0.8, beta);
  CHECK(pos.c0 < 0.0);
  CHECK(pos.c0 >= pos.c_minus);
  CHECK(std::abs(pos.lambda0) <= 1e-10);
  for (double& v : q) v = -v;
  const GsShift neg = gs_shift_c0(grid, q, x0, 0.8, beta);
  CHECK(neg.c0 > 0.0);
  CHECK(neg.c0 <= neg.c_plus);
  CHECK(std::abs(neg.lambda0) <= 1e-10);

  const GridOperator flat2(Manifold::torus(2), cube(8, 2), std::vector<double>(64, 0.0));
  CHECK_THROWS_AS(gs_shift_c0(flat2, std::vector<double>(64, 0.0), Point{1, 1}, 0.5, 1.0), InputError);
}

TEST_CASE("log-gradient fixed point") {
  const Manifold t = Manifold::torus({2.0, 2.0, 2.0});
  const GridOperator zero(t, cube(8), std::vector<double>(512, 0.0));
  const FixedPoint z = log_gradient_fixedpoint(zero);
  for (double v : z.v) CHECK(v == 0.0);
  CHECK(z.c == 0.0);

  const GridOperator op(t, cube(8), cos_potential(t, cube(8), 0.2));
  const FixedPoint f = log_gradient_fixedpoint(op, 1e-12, 200, 0.0, 1);
  CHECK(f.residual <= 1e-10);
  // e^v solves (Delta - V) e^v = c e^v, so it is the ground state
  const SchrodingerSolve g = lowest_eigenpair(op, 1e-12);
  CHECK(f.c == doctest::Approx(g.lambda0).epsilon(1e-8));
  double lo = 1e300, hi = 0;
  for (std::size_t k = 0; k < op.size(); ++k) {
    const double r = std::exp(f.v[k]) / g.phi[k];
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  CHECK(hi / lo - 1 <= 1e-8);

  // Gamma_h makes Delta e^v = e^v (Delta v - Gamma_h(v)) exact
  std::vector<double> ev(op.size()), lev(op.size()), lv(op.size()), gam(op.size());
  for (std::size_t k = 0; k < op.size(); ++k) ev[k] = std::exp(f.v[k]);
  op.laplacian(ev, lev);
  op.laplacian(f.v, lv);
  log_gradient_term(op, f.v, gam);
  for (std::size_t k = 0; k < op.size(); k += 37) CHECK(lev[k] == doctest::Approx(ev[k] * (lv[k] - gam[k])).epsilon(1e-10));

  const GridOperator big(t, cube(8), cos_potential(t, cube(8), 50.0));
  CHECK_THROWS_AS(log_gradient_fixedpoint(big, 1e-12, 200, f.A), InputError);
}

TEST_CASE("ground-state decomposition") {
  const Manifold t = Manifold::torus({2.0, 2.0, 2.0});
  const GridOperator zero(t, cube(8), std::vector<double>(512, 0.0));
  const Decomposition d0 = decompose_ground_state(zero, 0.8, std::vector<double>(512, 1.0));
  for (double v : d0.f) CHECK(std::abs(v) <= 1e-12);
  for (double v : d0.w) CHECK(std::abs(v - d0.w[0]) <= 1e-12);

  const auto V = cos_potential(t, cube(8), 0.2);
  double first = 0;
  for (double s : {1.0, 0.5}) {
    std::vector<double> W = V;
    for (double& v : W) v *= s;
    const GridOperator base(t, cube(8), W);
    const double l0 = lowest_eigenpair(base, 1e-13).lambda0;
    for (double& v : W) v += l0;
    const GridOperator op = base.with_potential(W);
    const SchrodingerSolve g = lowest_eigenpair(op, 1e-13);
    const Decomposition d = decompose_ground_state(op, 0.8, g.phi);
    CHECK(d.reconstruction <= 1e-8);
    CHECK(std::isfinite(d.holder_w));
    if (s == 1.0)
      first = d.df_Ln;
    else
      CHECK(d.df_Ln <= 1.2 * s * first);
  }
}

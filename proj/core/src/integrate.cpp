#include "conflab/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "conflab/error.hpp"
#include "conflab/parallel.hpp"

namespace conflab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kQuadTol = 1e-11;

using GK = boost::math::quadrature::gauss_kronrod<double, 21>;

// Nested (t, psi) quadrature over a geodesic ball on the sphere for integrands
// depending only on the angle to the zonal axis. t is the distance from the
// centre, psi the angle between the initial direction and the axis direction.
Measure zonal_ball_integral(const Manifold& m, const ZonalProfile& zonal, const BallSpec& ball,
                            const Integrand& g) {
  const int n = m.dim();
  const double R = m.radius();
  const std::size_t d = m.coord_dim();
  std::vector<double> c(ball.center.coords);
  for (double& v : c) v /= R;
  std::vector<double> N = zonal.axis_free ? c : zonal.axis.coords;
  {
    double len = 0.0;
    for (double v : N) len += v * v;
    len = std::sqrt(len);
    for (double& v : N) v /= len;
  }
  double cN = 0.0;
  for (std::size_t i = 0; i < d; ++i) cN += c[i] * N[i];
  // e1: unit tangent at c towards the axis; e2: any unit tangent orthogonal to e1.
  std::vector<double> e1(d), e2(d, 0.0);
  double len = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    e1[i] = N[i] - cN * c[i];
    len += e1[i] * e1[i];
  }
  auto orthonormal_to = [&](std::vector<double>& v, const std::vector<std::vector<double>*>& basis) {
    for (std::size_t k = 0; k < d; ++k) {
      std::fill(v.begin(), v.end(), 0.0);
      v[k] = 1.0;
      for (auto* b : basis) {
        double p = 0.0;
        for (std::size_t i = 0; i < d; ++i) p += v[i] * (*b)[i];
        for (std::size_t i = 0; i < d; ++i) v[i] -= p * (*b)[i];
      }
      double l = 0.0;
      for (double x : v) l += x * x;
      if (l > 1e-6) {
        l = std::sqrt(l);
        for (double& x : v) x /= l;
        return;
      }
    }
  };
  if (len < 1e-24) {
    orthonormal_to(e1, {&c});
  } else {
    len = std::sqrt(len);
    for (double& v : e1) v /= len;
  }
  orthonormal_to(e2, {&c, &e1});
  double e1N = 0.0;
  for (std::size_t i = 0; i < d; ++i) e1N += e1[i] * N[i];

  const double a = std::min(ball.radius / R, kPi);
  const double shell = unit_sphere_volume(n - 2) * std::pow(R, n);
  std::vector<double> x(d);
  bool bad = false;
  auto point_value = [&](double t, double psi) {
    const double ct = std::cos(t), st = std::sin(t), cp = std::cos(psi), sp = std::sin(psi);
    for (std::size_t i = 0; i < d; ++i) x[i] = R * (ct * c[i] + st * (cp * e1[i] + sp * e2[i]));
    const double cos_axis = std::clamp(ct * cN + st * cp * e1N, -1.0, 1.0);
    const double f = zonal.f(std::acos(cos_axis));
    const double v = g(x, f);
    if (!std::isfinite(v)) bad = true;
    return std::isfinite(v) ? v : 0.0;
  };
  auto inner = [&](double t) {
    const double st = std::sin(t);
    if (st == 0.0) return 0.0;
    auto h = [&](double psi) { return std::pow(std::sin(psi), n - 2) * point_value(t, psi); };
    const double I = GK::integrate(h, 0.0, kPi, 12, kQuadTol);
    return std::pow(st, n - 1) * I;
  };
  const double I = GK::integrate(inner, 0.0, a, 18, kQuadTol);
  if (bad) throw IntegrationError("zonal quadrature: non-finite integrand values");
  return {shell * I, 0.0};
}

}  // namespace

std::vector<double> eval_on(const Manifold& m, const WeightField& field, const SampleSet& sample) {
  std::vector<double> f(sample.size());
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (sample.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t end = std::min(sample.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) f[i] = field.eval(m, sample[i]);
  });
  return f;
}

std::vector<Measure> integrate_sample(const SampleSet& sample, std::span<const double> f,
                                      std::span<const Integrand> integrands) {
  const std::size_t N = sample.size();
  std::vector<Measure> out(integrands.size());
  if (N == 0) return out;
  const double total = sample.total_weight();
  std::size_t bad_points = 0;
  std::vector<char> bad(N, 0);
  std::vector<std::vector<double>> vals(integrands.size(), std::vector<double>(N));
  for (std::size_t k = 0; k < integrands.size(); ++k)
    for (std::size_t i = 0; i < N; ++i) {
      const double v = integrands[k](sample[i], f[i]);
      vals[k][i] = v;
      if (!std::isfinite(v)) bad[i] = 1;
    }
  for (char b : bad) bad_points += static_cast<std::size_t>(b);
  if (static_cast<double>(bad_points) > kMaxNonFiniteFraction * static_cast<double>(N))
    throw IntegrationError("integration: " + std::to_string(bad_points) + " of " +
                           std::to_string(N) + " samples are non-finite");
  const double used = static_cast<double>(N - bad_points);
  for (std::size_t k = 0; k < integrands.size(); ++k) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      if (bad[i]) continue;
      s += vals[k][i];
      s2 += vals[k][i] * vals[k][i];
    }
    const double mean = s / used;
    const double var = used > 1 ? std::max(0.0, (s2 / used - mean * mean) * used / (used - 1.0)) : 0.0;
    out[k] = {total * mean, total * std::sqrt(var / used)};
  }
  return out;
}

std::vector<Measure> integrate_ball(const Manifold& m, const WeightField& field,
                                    const BallSpec& ball, std::span<const Integrand> integrands,
                                    std::size_t budget, std::uint64_t seed, bool field_local) {
  field.check_manifold(m);
  if (budget < 1) throw InputError("integrate_ball: budget must be positive");
  if (m.kind() == ManifoldKind::Sphere && field_local) {
    if (auto zonal = field.zonal(m)) {
      m.validate(ball.center.coords);
      std::vector<Measure> out;
      out.reserve(integrands.size());
      for (const auto& g : integrands) out.push_back(zonal_ball_integral(m, *zonal, ball, g));
      return out;
    }
  }
  const SampleSet sample = m.sample_ball(ball, budget, seed);
  const std::vector<double> f = eval_on(m, field, sample);
  return integrate_sample(sample, f, integrands);
}

std::vector<Measure> integrate_manifold(const Manifold& m, const WeightField& field,
                                        std::span<const Integrand> integrands,
                                        std::size_t budget, std::uint64_t seed, bool field_local) {
  field.check_manifold(m);
  if (budget < 1) throw InputError("integrate_manifold: budget must be positive");
  if (m.kind() == ManifoldKind::Sphere && field_local) {
    if (auto zonal = field.zonal(m)) {
      Point centre = zonal->axis_free ? Point(std::vector<double>(m.coord_dim(), 0.0)) : zonal->axis;
      if (zonal->axis_free) centre[0] = m.radius();
      double len = 0.0;
      for (double v : centre.coords) len += v * v;
      for (double& v : centre.coords) v *= m.radius() / std::sqrt(len);
      const BallSpec whole{centre, kPi * m.radius()};
      std::vector<Measure> out;
      for (const auto& g : integrands) out.push_back(zonal_ball_integral(m, *zonal, whole, g));
      return out;
    }
  }
  const SampleSet sample = m.sample_uniform(budget, seed);
  const std::vector<double> f = eval_on(m, field, sample);
  return integrate_sample(sample, f, integrands);
}

}  // namespace conflab

#include "conflab/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "conflab/error.hpp"
#include "conflab/integrate.hpp"
#include "conflab/parallel.hpp"

namespace conflab {

double alpha_n2(int n) {
  if (n < 3) throw InputError("alpha_n2: n must be >= 3");
  return n * (n - 1.0) * std::pow(unit_sphere_volume(n), 2.0 / n);
}

double alpha_n2_quadrature(int n) {
  if (n < 3) throw InputError("alpha_n2: n must be >= 3");
  const double vol = sphere_cap_volume(n, 1.0, std::numbers::pi);
  return std::pow(std::pow(n * (n - 1.0), 0.5 * n) * vol, 2.0 / n);
}

namespace {

double default_step(const WeightField& field) {
  if (const GridField* g = field.grid_field()) {
    double h = g->spacing(0);
    for (std::size_t i = 1; i < g->dim(); ++i) h = std::min(h, g->spacing(i));
    return h;
  }
  return 1e-3;
}

}  // namespace

double scal_from_jet(const Manifold& m, const FieldJet& jet) {
  const double n = m.dim();
  // Geometer's Laplacian is minus the Hessian trace.
  const double lap = -jet.hess_trace;
  return std::exp(-2.0 * jet.f) *
         (m.background_scalar_curvature() + 2.0 * (n - 1.0) * lap - (n - 1.0) * (n - 2.0) * jet.grad_sq());
}

FieldJet finite_difference_jet(const Manifold& m, const WeightField& field,
                               std::span<const double> x, double h) {
  if (!(h > 0.0)) throw InputError("finite differences: step must be positive");
  const std::size_t d = m.coord_dim();
  FieldJet jet;
  jet.f = field.eval(m, x);
  jet.grad.assign(d, 0.0);
  std::vector<double> xp(d), xm(d);
  auto accumulate = [&](std::span<const double> dir) {
    double fp = 0.0, fm = 0.0;
    if (m.kind() == ManifoldKind::Sphere) {
      // Points exp_x(+-h dir) on the great circle through x along dir.
      const double R = m.radius();
      const double c = std::cos(h / R), s = std::sin(h / R);
      for (std::size_t i = 0; i < d; ++i) {
        xp[i] = c * x[i] + s * R * dir[i];
        xm[i] = c * x[i] - s * R * dir[i];
      }
    } else {
      for (std::size_t i = 0; i < d; ++i) {
        xp[i] = x[i] + h * dir[i];
        xm[i] = x[i] - h * dir[i];
      }
      m.canonicalize(xp);
      m.canonicalize(xm);
    }
    fp = field.eval(m, xp);
    fm = field.eval(m, xm);
    const double g = (fp - fm) / (2.0 * h);
    for (std::size_t i = 0; i < d; ++i) jet.grad[i] += g * dir[i];
    jet.hess_trace += (fp - 2.0 * jet.f + fm) / (h * h);
  };
  if (m.kind() != ManifoldKind::Sphere) {
    std::vector<double> e(d, 0.0);
    for (std::size_t a = 0; a < d; ++a) {
      std::fill(e.begin(), e.end(), 0.0);
      e[a] = 1.0;
      accumulate(e);
    }
  } else {
    // Orthonormal tangent frame by Gram-Schmidt against x.
    std::vector<std::vector<double>> basis;
    std::vector<double> xn(x.begin(), x.end());
    double len = 0.0;
    for (double v : xn) len += v * v;
    len = std::sqrt(len);
    for (double& v : xn) v /= len;
    basis.push_back(xn);
    for (std::size_t k = 0; k < d && basis.size() < d; ++k) {
      std::vector<double> v(d, 0.0);
      v[k] = 1.0;
      for (const auto& b : basis) {
        double p = 0.0;
        for (std::size_t i = 0; i < d; ++i) p += v[i] * b[i];
        for (std::size_t i = 0; i < d; ++i) v[i] -= p * b[i];
      }
      double l = 0.0;
      for (double t : v) l += t * t;
      if (l < 1e-8) continue;
      l = std::sqrt(l);
      for (double& t : v) t /= l;
      basis.push_back(v);
    }
    for (std::size_t k = 1; k < basis.size(); ++k) accumulate(basis[k]);
  }
  return jet;
}

CurvatureSample scalar_curvature(const Manifold& m, const WeightField& field,
                                 std::span<const double> x, CurvatureMethod method, double h) {
  m.validate(x);
  CurvatureSample s;
  s.point = Point(x);
  s.method = method;
  FieldJet jet;
  if (method == CurvatureMethod::Exact) {
    if (!field.has_exact_derivatives())
      throw UnsupportedError("scalar_curvature: field has no exact derivatives; use finite differences");
    jet = field.jet(m, x);
  } else {
    if (h <= 0.0) h = default_step(field);
    s.h = h;
    jet = finite_difference_jet(m, field, x, h);
  }
  if (!std::isfinite(jet.f) || !std::isfinite(jet.hess_trace) || !std::isfinite(jet.grad_sq()))
    throw NumericError("scalar_curvature: field is singular at the evaluation point");
  s.scal = scal_from_jet(m, jet);
  return s;
}

namespace {

double scal_at(const Manifold& m, const WeightField& field, std::span<const double> x,
               CurvatureMethod method) {
  const FieldJet jet = method == CurvatureMethod::Exact ? field.jet(m, x)
                                                        : finite_difference_jet(m, field, x, default_step(field));
  return scal_from_jet(m, jet);
}

}  // namespace

Measure lp_scal_norm(const Manifold& m, const WeightField& field, const BallSpec& ball, double p,
                     std::size_t budget, std::uint64_t seed, bool positive_part,
                     CurvatureMethod method) {
  if (!(p >= 1.0)) throw InputError("lp_scal_norm: p must be >= 1");
  if (budget < 100) throw InputError("lp_scal_norm: budget must be >= 100");
  if (method == CurvatureMethod::Exact && !field.has_exact_derivatives())
    throw UnsupportedError("lp_scal_norm: field has no exact derivatives");
  const int n = m.dim();
  const Integrand g = [&, p, n, positive_part](std::span<const double> x, double f) {
    const double s = scal_at(m, field, x, method);
    const double v = positive_part ? std::max(s, 0.0) : std::abs(s);
    return std::pow(v, p) * std::exp(n * f);
  };
  const Measure I = integrate_ball(m, field, ball, std::span(&g, 1), budget, seed)[0];
  const double value = std::pow(I.value, 1.0 / p);
  // Delta method for the standard error of I^{1/p}.
  const double se = I.value > 0.0 ? value * I.std_error / (p * I.value) : 0.0;
  return {value, se};
}

PinchingReport pinching_profile(const Manifold& m, const WeightField& field, double R0,
                                const PointSet& centers, std::size_t budget, std::uint64_t seed,
                                double lambda0, CurvatureMethod method) {
  if (!(R0 > 0.0)) throw InputError("pinching_profile: R0 must be positive");
  if (centers.empty()) throw InputError("pinching_profile: no centers");
  if (method == CurvatureMethod::Exact && !field.has_exact_derivatives())
    throw UnsupportedError("pinching_profile: field has no exact derivatives");
  field.check_manifold(m);
  const int n = m.dim();
  const double half_n = 0.5 * n;
  PinchingReport r;
  r.R0 = R0;
  r.centers = centers.size();
  r.lambda0 = lambda0;
  r.budget = budget;
  r.seed = seed;
  if (n >= 3) r.alpha_n2 = alpha_n2(n);
  r.rows.resize(centers.size());
  std::vector<double> raw_abs(centers.size());
  parallel_for(centers.size(), [&](std::size_t k) {
    const Integrand pos = [&](std::span<const double> x, double f) {
      return std::pow(std::max(scal_at(m, field, x, method), 0.0), half_n) * std::exp(n * f);
    };
    const Integrand abs = [&](std::span<const double> x, double f) {
      return std::pow(std::abs(scal_at(m, field, x, method)), half_n) * std::exp(n * f);
    };
    const Integrand fns[] = {pos, abs};
    const BallSpec ball{centers.point(k), R0};
    const auto I = integrate_ball(m, field, ball, fns, budget, seed ^ static_cast<std::uint64_t>(k));
    r.rows[k] = {k, std::pow(I[0].value, 1.0 / half_n), std::pow(I[1].value, 1.0 / half_n)};
    raw_abs[k] = I[1].value;
  });
  for (std::size_t k = 0; k < centers.size(); ++k) {
    r.sup_pos = std::max(r.sup_pos, r.rows[k].pos);
    r.sup_abs = std::max(r.sup_abs, r.rows[k].abs);
    r.lambda_margin = std::max(r.lambda_margin, raw_abs[k]);
  }
  r.below_alpha = n >= 3 && r.sup_pos < r.alpha_n2;
  r.below_lambda0 = r.lambda_margin < lambda0;
  return r;
}

nlohmann::json to_json(const PinchingReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back({{"center", row.center}, {"pos", row.pos}, {"abs", row.abs}});
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"R0", r.R0},
          {"centers", r.centers},
          {"sup_pos", r.sup_pos},
          {"sup_abs", r.sup_abs},
          {"alpha_n2", num(r.alpha_n2)},
          {"lambda_margin", r.lambda_margin},
          {"lambda0", num(r.lambda0)},
          {"below_alpha", r.below_alpha},
          {"below_lambda0", r.below_lambda0},
          {"budget", r.budget},
          {"seed", r.seed},
          {"rows", rows}};
}

}  // namespace conflab

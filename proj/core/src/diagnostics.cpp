#include "conflab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "conflab/error.hpp"
#include "conflab/integrate.hpp"
#include "conflab/parallel.hpp"
#include "conflab/random.hpp"

namespace conflab {

BallSpec BallSampler::ball(std::size_t k) const {
  return {centers.point(k / radii.size()), radii[k % radii.size()]};
}

std::uint64_t BallSampler::ball_seed(std::size_t k) const { return derive_seed(seed, k); }

BallSampler BallSampler::random(const Manifold& m, std::size_t count, std::vector<double> radii,
                                std::uint64_t seed) {
  if (count == 0) throw InputError("BallSampler: need at least one center");
  const SampleSet s = m.sample_uniform(count, derive_seed(seed, 0xBA11));
  BallSampler b;
  b.centers = PointSet(s.dim, 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) b.centers.push_back(s[i]);
  b.radii = std::move(radii);
  b.seed = seed;
  return b;
}

void BallSampler::validate(double eta) const {
  if (centers.empty() || radii.empty()) throw InputError("BallSampler: no balls");
  for (double r : radii)
    if (!(r > 0.0) || r > eta * (1.0 + 1e-12))
      throw InputError("BallSampler: radius " + std::to_string(r) + " outside (0, eta = " +
                       std::to_string(eta) + "]");
}

double default_eta(const Manifold& m) {
  double s = std::numeric_limits<double>::infinity();
  switch (m.kind()) {
    case ManifoldKind::Torus:
      s = m.min_period();
      break;
    case ManifoldKind::Box:
      for (const auto& e : m.extents()) s = std::min(s, e.length());
      break;
    case ManifoldKind::Sphere:
      s = std::numbers::pi * m.radius();
      break;
  }
  return std::min(0.25 * s, 1.0);
}

namespace {

void require_balls(const BallSampler& sampler) {
  if (sampler.size() == 0) throw InputError("diagnostics: empty ball sampler");
  for (double r : sampler.radii)
    if (!(r > 0.0)) throw InputError("diagnostics: radii must be positive");
}

ConstantEstimate reduce(std::vector<double> per_ball) {
  ConstantEstimate c;
  c.per_ball = std::move(per_ball);
  c.value = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < c.per_ball.size(); ++k)
    if (c.per_ball[k] > c.value) {
      c.value = c.per_ball[k];
      c.worst_ball = k;
    }
  return c;
}

// Per-ball averages of each integrand, all on one sample pool.
template <typename Fn>
ConstantEstimate per_ball(const Manifold& m, const WeightField& field, const BallSampler& sampler,
                          std::span<const Integrand> fns, std::size_t budget, Fn&& combine) {
  require_balls(sampler);
  field.check_manifold(m);
  std::vector<double> out(sampler.size());
  parallel_for(sampler.size(), [&](std::size_t k) {
    const BallSpec b = sampler.ball(k);
    const double vol = m.ball_volume(b).value;
    const auto I = integrate_ball(m, field, b, fns, budget, sampler.ball_seed(k));
    std::vector<double> avg(I.size());
    for (std::size_t i = 0; i < I.size(); ++i) avg[i] = I[i].value / vol;
    out[k] = combine(avg);
  });
  return reduce(std::move(out));
}

}  // namespace

ConstantEstimate reverse_holder(const Manifold& m, const WeightField& field, double q,
                                const BallSampler& sampler, std::size_t budget) {
  if (!(q > 1.0)) throw InputError("reverse_holder: q must be > 1");
  const double n = m.dim();
  const Integrand fns[] = {
      [n](std::span<const double>, double f) { return std::exp(n * f); },
      [n, q](std::span<const double>, double f) { return std::exp(q * n * f); },
  };
  return per_ball(m, field, sampler, fns, budget,
                  [q](const std::vector<double>& a) { return std::pow(a[1], 1.0 / q) / a[0]; });
}

ConstantEstimate ap_product(const Manifold& m, const WeightField& field, double p,
                            const BallSampler& sampler, std::size_t budget) {
  if (!(p > 1.0)) throw InputError("ap_product: p must be > 1");
  const double n = m.dim();
  const Integrand fns[] = {
      [n](std::span<const double>, double f) { return std::exp(n * f); },
      [n, p](std::span<const double>, double f) { return std::exp(-n * f / (p - 1.0)); },
  };
  return per_ball(m, field, sampler, fns, budget,
                  [p](const std::vector<double>& a) { return a[0] * std::pow(a[1], p - 1.0); });
}

ConstantEstimate doubling_constant(const Manifold& m, const WeightField& field,
                                   const BallSampler& sampler, std::size_t budget) {
  require_balls(sampler);
  field.check_manifold(m);
  const double n = m.dim();
  const Integrand w = [n](std::span<const double>, double f) { return std::exp(n * f); };
  std::vector<double> out(sampler.size());
  parallel_for(sampler.size(), [&](std::size_t k) {
    const BallSpec b = sampler.ball(k);
    const BallSpec b2{b.center, 2.0 * b.radius};
    const std::uint64_t s = sampler.ball_seed(k);
    const double small = integrate_ball(m, field, b, std::span(&w, 1), budget, s)[0].value;
    const double big = integrate_ball(m, field, b2, std::span(&w, 1), budget, derive_seed(s, 2))[0].value;
    out[k] = big / small;
  });
  return reduce(std::move(out));
}

SubsetExponent subset_ratio_exponent(const Manifold& m, const WeightField& field,
                                     const BallSampler& sampler, int subdivisions,
                                     std::size_t budget) {
  if (subdivisions < 8) throw InputError("subset_ratio_exponent: subdivisions must be >= 8");
  if (budget < 100) throw InputError("subset_ratio_exponent: budget must be >= 100");
  require_balls(sampler);
  field.check_manifold(m);
  const double n = m.dim();
  const std::size_t D = m.coord_dim();
  const auto S = static_cast<std::size_t>(subdivisions);
  std::size_t cells = 1;
  for (std::size_t i = 0; i < D; ++i) cells *= S;

  struct Obs {
    std::vector<std::pair<double, double>> xy;
    std::size_t excluded = 0;
  };
  std::vector<Obs> obs(sampler.size());
  parallel_for(sampler.size(), [&](std::size_t k) {
    const BallSpec b = sampler.ball(k);
    const SampleSet s = m.sample_ball(b, budget, sampler.ball_seed(k));
    const std::vector<double> f = eval_on(m, field, s);
    std::vector<double> w(s.size()), dist(s.size());
    std::vector<std::size_t> cell(s.size());
    std::vector<double> off(D);
    double total_w = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      w[i] = std::exp(n * f[i]);
      total_w += w[i];
      dist[i] = m.distance(b.center, s[i]);
      if (m.kind() == ManifoldKind::Sphere) {
        for (std::size_t a = 0; a < D; ++a) off[a] = s[i][a] - b.center[a];
      } else {
        m.displacement(b.center, s[i], off);
      }
      std::size_t c = 0;
      for (std::size_t a = 0; a < D; ++a) {
        const double u = std::clamp((off[a] + b.radius) / (2.0 * b.radius), 0.0, 1.0 - 1e-15);
        c = c * S + static_cast<std::size_t>(u * static_cast<double>(S));
      }
      cell[i] = c;
    }
    Obs& o = obs[k];
    auto record = [&](auto&& in_E) {
      std::size_t count = 0;
      double wE = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (in_E(i)) {
          ++count;
          wE += w[i];
        }
      if (count == 0) {
        ++o.excluded;
        return;
      }
      if (count == s.size()) return;  // E = B carries no information
      o.xy.emplace_back(std::log(static_cast<double>(count) / static_cast<double>(s.size())),
                        std::log(wE / total_w));
    };
    for (std::size_t j = 1; j < S; ++j) {
      const double r = b.radius * static_cast<double>(j) / static_cast<double>(S);
      record([&](std::size_t i) { return dist[i] <= r; });
    }
    Rng rng(derive_seed(sampler.ball_seed(k), 0x5E7));
    std::bernoulli_distribution coin(0.5);
    std::vector<char> chosen(cells);
    for (std::size_t u = 0; u < S; ++u) {
      for (auto& c : chosen) c = coin(rng) ? 1 : 0;
      record([&](std::size_t i) { return chosen[cell[i]] != 0; });
    }
  });

  SubsetExponent r;
  std::vector<std::pair<double, double>> xy;
  for (const auto& o : obs) {
    xy.insert(xy.end(), o.xy.begin(), o.xy.end());
    r.excluded += o.excluded;
  }
  r.pairs = xy.size();
  if (xy.size() < 8)
    throw IntegrationError("subset_ratio_exponent: only " + std::to_string(xy.size()) +
                           " valid (E, B) pairs, need 8");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : xy) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double N = static_cast<double>(xy.size());
  const double det = N * sxx - sx * sx;
  r.slope = det > 0.0 ? (N * sxy - sx * sy) / det : 1.0;
  r.alpha = r.slope > 0.0 ? std::max(r.slope, 1.0 / r.slope) : std::numeric_limits<double>::infinity();
  double logC = 0.0;
  if (std::isfinite(r.alpha))
    for (const auto& [x, y] : xy) logC = std::max({logC, r.alpha * x - y, y - x / r.alpha});
  r.C = std::exp(logC);
  return r;
}

StrongRatio strong_ratio(const Manifold& m, const WeightField& field,
                         std::span<const PairDistance> pairs, double eta, std::size_t budget,
                         std::uint64_t seed) {
  if (!(eta > 0.0)) throw InputError("strong_ratio: eta must be positive");
  field.check_manifold(m);
  const double n = m.dim();
  std::vector<double> d0(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    d0[k] = m.distance(pairs[k].x, pairs[k].y);
    if (d0[k] > eta * (1.0 + 1e-12))
      throw InputError("strong_ratio: pair " + std::to_string(k) + " has d0 = " +
                       std::to_string(d0[k]) + " > eta = " + std::to_string(eta));
    if (!(pairs[k].d_f >= 0.0) || !std::isfinite(pairs[k].d_f))
      throw InputError("strong_ratio: pair " + std::to_string(k) + " has no finite distance");
  }
  const Integrand w = [n](std::span<const double>, double f) { return std::exp(n * f); };
  StrongRatio r;
  r.rho_at_x.assign(pairs.size(), std::numeric_limits<double>::quiet_NaN());
  r.rho_centered.assign(pairs.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<double> bound(pairs.size(), 0.0);
  parallel_for(pairs.size(), [&](std::size_t k) {
    if (d0[k] <= 0.0) return;
    const auto& p = pairs[k];
    const BallSpec at_x{p.x, d0[k]};
    const BallSpec centered{m.midpoint(p.x, p.y), 0.5 * d0[k]};
    const double mu_x = integrate_ball(m, field, at_x, std::span(&w, 1), budget, derive_seed(seed, k, 0))[0].value;
    const double mu_c = integrate_ball(m, field, centered, std::span(&w, 1), budget, derive_seed(seed, k, 1))[0].value;
    r.rho_at_x[k] = p.d_f / std::pow(mu_x, 1.0 / n);
    r.rho_centered[k] = p.d_f / std::pow(mu_c, 1.0 / n);
    bound[k] = std::pow(p.d_f, n) / mu_x;
  });
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (std::isnan(r.rho_at_x[k])) continue;
    ++r.pairs;
    r.theta_at_x = std::max({r.theta_at_x, r.rho_at_x[k], 1.0 / r.rho_at_x[k]});
    r.theta_centered = std::max({r.theta_centered, r.rho_centered[k], 1.0 / r.rho_centered[k]});
    r.B = std::max(r.B, bound[k]);
  }
  return r;
}

StrongRatio strong_ratio(const Manifold& m, const WeightField& field, const PointSet& points,
                         const DistanceMatrix& dmat,
                         std::span<const std::pair<std::size_t, std::size_t>> node_pairs,
                         double eta, std::size_t budget, std::uint64_t seed) {
  std::vector<PairDistance> pairs;
  pairs.reserve(node_pairs.size());
  for (const auto& [a, b] : node_pairs) {
    if (a >= points.size() || b >= points.size()) throw InputError("strong_ratio: node index out of range");
    pairs.push_back({points.point(a), points.point(b), dmat.between(a, b)});
  }
  return strong_ratio(m, field, pairs, eta, budget, seed);
}

namespace {

struct Line {
  double slope = 0.0, intercept = 0.0;
};

Line least_squares(std::span<const std::pair<double, double>> xy) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : xy) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double N = static_cast<double>(xy.size());
  const double det = N * sxx - sx * sx;
  Line l;
  l.slope = det > 0.0 ? (N * sxy - sx * sy) / det : 0.0;
  l.intercept = (sy - l.slope * sx) / N;
  return l;
}

}  // namespace

BiHolderFit biholder_fit(const DistanceMatrix& d_f, const DistanceMatrix& d_0, double mass_total,
                         int n) {
  if (!(mass_total > 0.0)) throw InputError("biholder_fit: total mass must be positive");
  if (n < 1) throw InputError("biholder_fit: dimension must be positive");
  std::unordered_map<std::size_t, std::size_t> row0, col0;
  for (std::size_t r = 0; r < d_0.rows(); ++r) row0.emplace(d_0.sources[r], r);
  for (std::size_t c = 0; c < d_0.cols(); ++c) col0.emplace(d_0.targets[c], c);
  const double scale = std::pow(mass_total, 1.0 / n);
  std::vector<std::pair<double, double>> xy;
  for (std::size_t r = 0; r < d_f.rows(); ++r) {
    auto ir = row0.find(d_f.sources[r]);
    if (ir == row0.end()) continue;
    for (std::size_t c = 0; c < d_f.cols(); ++c) {
      if (d_f.targets[c] == d_f.sources[r]) continue;
      auto ic = col0.find(d_f.targets[c]);
      if (ic == col0.end()) continue;
      const double a = d_0(ir->second, ic->second), b = d_f(r, c);
      if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) continue;
      xy.emplace_back(std::log(a), std::log(b / scale));
    }
  }
  if (xy.size() < 10)
    throw IntegrationError("biholder_fit: only " + std::to_string(xy.size()) + " pairs, need 10");
  BiHolderFit fit;
  fit.pairs = xy.size();
  const Line all = least_squares(xy);
  fit.slope = all.slope;
  fit.intercept = all.intercept;
  std::sort(xy.begin(), xy.end());
  const std::size_t half = xy.size() / 2;
  const double s_small = least_squares(std::span(xy).first(half)).slope;
  const double s_large = least_squares(std::span(xy).subspan(half)).slope;
  fit.alpha_low = std::min({all.slope, s_small, s_large});
  fit.alpha_high = std::max({all.slope, s_small, s_large});
  fit.alpha = std::clamp(all.slope, 0.01, 1.0);
  double logC = 0.0;
  for (const auto& [x, y] : xy) logC = std::max({logC, x / fit.alpha - y, y - fit.alpha * x});
  fit.C = std::exp(logC);
  return fit;
}

double holder_seminorm(const DistanceMatrix& d, const DistanceMatrix& d0, double alpha,
                       const DistanceMatrix* other, std::size_t max_quadruples,
                       std::uint64_t seed) {
  if (!(alpha > 0.0)) throw InputError("holder_seminorm: alpha must be positive");
  const std::size_t N = d.rows();
  auto square_on = [&](const DistanceMatrix& x, const char* what) {
    if (x.rows() != N || x.cols() != N || x.sources != d.sources || x.targets != d.sources)
      throw InputError(std::string("holder_seminorm: ") + what + " is not aligned with the distance matrix");
  };
  square_on(d, "distance matrix");
  square_on(d0, "background matrix");
  if (other) square_on(*other, "comparison matrix");
  if (N < 2) return 0.0;
  std::vector<double> D(d.values);
  if (other)
    for (std::size_t i = 0; i < D.size(); ++i) D[i] -= other->values[i];
  std::vector<double> p(N * N);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::pow(d0.values[i], alpha);

  auto term = [&](std::size_t x, std::size_t y, std::size_t xp, std::size_t yp) {
    const double den = p[x * N + xp] + p[y * N + yp];
    if (!(den > 0.0)) return 0.0;
    return std::abs(D[x * N + y] - D[xp * N + yp]) / den;
  };
  const double total = std::pow(static_cast<double>(N), 4.0);
  if (total <= static_cast<double>(max_quadruples)) {
    std::vector<double> best(N, 0.0);
    parallel_for(N, [&](std::size_t x) {
      double b = 0.0;
      for (std::size_t y = 0; y < N; ++y)
        for (std::size_t xp = 0; xp < N; ++xp)
          for (std::size_t yp = 0; yp < N; ++yp) b = std::max(b, term(x, y, xp, yp));
      best[x] = b;
    });
    return *std::max_element(best.begin(), best.end());
  }
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, N - 1);
  double b = 0.0;
  for (std::size_t s = 0; s < max_quadruples; ++s) {
    const std::size_t x = pick(rng), y = pick(rng), xp = pick(rng), yp = pick(rng);
    b = std::max(b, term(x, y, xp, yp));
  }
  // Moves of one endpoint are the sharpest quadruples; include all of them.
  for (std::size_t x = 0; x < N; ++x)
    for (std::size_t y = 0; y < N; ++y)
      for (std::size_t xp = 0; xp < N; ++xp) b = std::max(b, term(x, y, xp, y));
  return b;
}

namespace {

// Integral of e^{(n-1) f} over the boundary of a domain.
double perimeter(const Manifold& m, const WeightField& field, const Domain& dom,
                 std::size_t budget, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(m.dim());
  const double e = static_cast<double>(n) - 1.0;
  std::vector<double> x(n);
  auto at = [&](std::span<double> p) {
    m.canonicalize(p);
    const double f = field.eval(m, p);
    if (!std::isfinite(f)) throw IntegrationError("isoperimetric_ratio: non-finite field on a boundary");
    return std::exp(e * f);
  };
  if (dom.kind == Domain::Kind::Ball) {
    const double r = dom.radius;
    if (n == 2) {
      double s = 0.0;
      for (std::size_t k = 0; k < budget; ++k) {
        const double t = 2.0 * std::numbers::pi * (static_cast<double>(k) + 0.5) / static_cast<double>(budget);
        x[0] = dom.center[0] + r * std::cos(t);
        x[1] = dom.center[1] + r * std::sin(t);
        s += at(x);
      }
      return s * 2.0 * std::numbers::pi * r / static_cast<double>(budget);
    }
    Rng rng(seed);
    std::normal_distribution<double> g;
    double s = 0.0;
    for (std::size_t k = 0; k < budget; ++k) {
      double len = 0.0;
      for (auto& v : x) {
        v = g(rng);
        len += v * v;
      }
      len = std::sqrt(len);
      for (std::size_t i = 0; i < n; ++i) x[i] = dom.center[i] + r * x[i] / len;
      s += at(x);
    }
    return s / static_cast<double>(budget) * unit_sphere_volume(static_cast<int>(n) - 1) * std::pow(r, e);
  }
  // Box: each pair of faces normal to axis a.
  double total = 0.0;
  const std::size_t per_face = std::max<std::size_t>(1, budget / (2 * n));
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t a = 0; a < n; ++a) {
    double area = 1.0;
    for (std::size_t i = 0; i < n; ++i)
      if (i != a) area *= dom.hi[i] - dom.lo[i];
    for (int side = 0; side < 2; ++side) {
      double s = 0.0;
      for (std::size_t k = 0; k < per_face; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
          if (i == a) {
            x[i] = side == 0 ? dom.lo[i] : dom.hi[i];
            continue;
          }
          // Midpoint rule along the single free axis in 2-D, Monte Carlo otherwise.
          const double t = n == 2 ? (static_cast<double>(k) + 0.5) / static_cast<double>(per_face) : u(rng);
          x[i] = dom.lo[i] + t * (dom.hi[i] - dom.lo[i]);
        }
        s += at(x);
      }
      total += s / static_cast<double>(per_face) * area;
    }
  }
  return total;
}

double domain_mass(const Manifold& m, const WeightField& field, const Domain& dom,
                   std::size_t budget, std::uint64_t seed) {
  const double n = m.dim();
  const Integrand w = [n](std::span<const double>, double f) { return std::exp(n * f); };
  if (dom.kind == Domain::Kind::Ball)
    return integrate_ball(m, field, {dom.center, dom.radius}, std::span(&w, 1), budget, seed)[0].value;
  const std::size_t d = m.coord_dim();
  SampleSet s;
  s.dim = d;
  s.coords.resize(budget * d);
  double vol = 1.0;
  for (std::size_t i = 0; i < d; ++i) vol *= dom.hi[i] - dom.lo[i];
  s.weights.assign(budget, vol / static_cast<double>(budget));
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t k = 0; k < budget; ++k) {
    std::span<double> p(s.coords.data() + k * d, d);
    for (std::size_t i = 0; i < d; ++i) p[i] = dom.lo[i] + u(rng) * (dom.hi[i] - dom.lo[i]);
    m.canonicalize(p);
  }
  const auto f = eval_on(m, field, s);
  return integrate_sample(s, f, std::span(&w, 1))[0].value;
}

}  // namespace

IsoperimetricReport isoperimetric_ratio(const Manifold& m, const WeightField& field,
                                        std::span<const Domain> domains, std::size_t budget,
                                        std::uint64_t seed) {
  if (m.kind() == ManifoldKind::Sphere) throw UnsupportedError("isoperimetric_ratio: Torus and Box only");
  if (budget < 100) throw InputError("isoperimetric_ratio: budget must be >= 100");
  field.check_manifold(m);
  const auto n = static_cast<std::size_t>(m.dim());
  for (const auto& d : domains) {
    if (d.kind == Domain::Kind::Ball) {
      if (d.center.size() != n || !(d.radius > 0.0)) throw InputError("isoperimetric_ratio: bad ball domain");
    } else {
      if (d.lo.size() != n || d.hi.size() != n) throw InputError("isoperimetric_ratio: bad box domain");
      for (std::size_t i = 0; i < n; ++i)
        if (!(d.hi[i] > d.lo[i])) throw InputError("isoperimetric_ratio: empty box domain");
    }
  }
  const double nn = static_cast<double>(n);
  const Integrand w = [nn](std::span<const double>, double f) { return std::exp(nn * f); };
  const double total = integrate_manifold(m, field, std::span(&w, 1), budget, derive_seed(seed, 0x707))[0].value;
  IsoperimetricReport r;
  r.rows.resize(domains.size());
  parallel_for(domains.size(), [&](std::size_t k) {
    const std::uint64_t s = derive_seed(seed, k);
    IsoperimetricRow row;
    row.mass = domain_mass(m, field, domains[k], budget, derive_seed(s, 0));
    if (row.mass > 0.5 * total * (1.0 + 1e-9))
      throw InputError("isoperimetric_ratio: domain " + std::to_string(k) +
                       " carries more than half of the total mass");
    row.perimeter = perimeter(m, field, domains[k], budget, derive_seed(s, 1));
    row.ratio = row.perimeter / std::pow(row.mass, 1.0 - 1.0 / nn);
    r.rows[k] = row;
  });
  for (const auto& row : r.rows) r.inf_ratio = std::min(r.inf_ratio, row.ratio);
  return r;
}

AInftyReport ainfty_report(const Manifold& m, const WeightField& field, const AInftyOptions& opt) {
  const double eta = opt.eta > 0.0 ? opt.eta : default_eta(m);
  std::vector<double> radii;
  for (double fr : opt.radius_fractions) radii.push_back(fr * eta);
  const BallSampler sampler = BallSampler::random(m, opt.centers, radii, opt.seed);
  sampler.validate(eta);
  std::vector<double> half;
  for (double r : radii)
    if (r <= 0.5 * eta * (1.0 + 1e-12)) half.push_back(r);
  if (half.empty()) throw InputError("ainfty_report: no radius is at most eta / 2 for the doubling test");
  BallSampler small = sampler;
  small.radii = half;

  AInftyReport r;
  r.q = opt.q;
  r.p = opt.p;
  r.eta = eta;
  r.balls = sampler.size();
  r.budget = opt.budget;
  r.seed = opt.seed;
  r.C_rh = reverse_holder(m, field, opt.q, sampler, opt.budget).value;
  r.C_ap = ap_product(m, field, opt.p, sampler, opt.budget).value;
  r.theta_doubling = doubling_constant(m, field, small, opt.budget).value;
  const SubsetExponent sub = subset_ratio_exponent(m, field, sampler, opt.subdivisions, opt.budget);
  r.alpha_iv = sub.alpha;
  r.C_iv = sub.C;
  r.subset_pairs = sub.pairs;
  r.subset_excluded = sub.excluded;
  return r;
}

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const AInftyReport& r) {
  return {{"q", r.q},
          {"C_rh", num(r.C_rh)},
          {"p", r.p},
          {"C_ap", num(r.C_ap)},
          {"theta_doubling", num(r.theta_doubling)},
          {"alpha_iv", num(r.alpha_iv)},
          {"C_iv", num(r.C_iv)},
          {"eta", r.eta},
          {"theta_strong", num(r.theta_strong)},
          {"theta_strong_centered", num(r.theta_strong_centered)},
          {"balls", r.balls},
          {"budget", r.budget},
          {"subset_pairs", r.subset_pairs},
          {"subset_excluded", r.subset_excluded},
          {"seed", r.seed}};
}

nlohmann::json to_json(const StrongRatio& r) {
  nlohmann::json at_x = nlohmann::json::array(), centered = nlohmann::json::array();
  for (double v : r.rho_at_x) at_x.push_back(num(v));
  for (double v : r.rho_centered) centered.push_back(num(v));
  return {{"theta_at_x", r.theta_at_x},
          {"theta_centered", r.theta_centered},
          {"B", r.B},
          {"pairs", r.pairs},
          {"rho_at_x", at_x},
          {"rho_centered", centered}};
}

nlohmann::json to_json(const BiHolderFit& r) {
  return {{"slope", r.slope},         {"intercept", r.intercept}, {"alpha_low", r.alpha_low},
          {"alpha_high", r.alpha_high}, {"alpha", r.alpha},         {"C", r.C},
          {"pairs", r.pairs}};
}

nlohmann::json to_json(const IsoperimetricReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"perimeter", row.perimeter}, {"mass", row.mass}, {"ratio", row.ratio}});
  return {{"inf_ratio", num(r.inf_ratio)}, {"rows", rows}};
}

}  // namespace conflab

#include "conflab/manifold.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <nlohmann/json.hpp>

#include "conflab/error.hpp"
#include "conflab/random.hpp"

namespace conflab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kMonteCarloVolumeSamples = std::size_t{1} << 18;
constexpr double kMinRejectionEfficiency = 1e-3;

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::uint64_t hash_ball(const BallSpec& ball) {
  std::uint64_t h = 0x243F6A8885A308D3ull;
  for (double c : ball.center.coords) h = mix_seed(h ^ std::bit_cast<std::uint64_t>(c));
  return mix_seed(h ^ std::bit_cast<std::uint64_t>(ball.radius));
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw InputError(msg);
}

// Uniform direction in the tangent space of the unit vector c.
void tangent_direction(std::span<const double> c, Rng& rng, std::span<double> out) {
  std::normal_distribution<double> gauss;
  for (;;) {
    for (double& v : out) v = gauss(rng);
    const double proj = dot(out, c);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= proj * c[i];
    const double len = norm(out);
    if (len > 1e-8) {
      for (double& v : out) v /= len;
      return;
    }
  }
}

}  // namespace

const char* to_string(ManifoldKind kind) noexcept {
  switch (kind) {
    case ManifoldKind::Torus: return "torus";
    case ManifoldKind::Box: return "box";
    case ManifoldKind::Sphere: return "sphere";
  }
  return "unknown";
}

std::size_t PointSet::push_back(std::span<const double> x, double cell_volume) {
  if (x.size() != dim_) throw InputError("PointSet::push_back: dimension mismatch");
  coords_.insert(coords_.end(), x.begin(), x.end());
  cell_volumes_.push_back(cell_volume);
  return cell_volumes_.size() - 1;
}

double SampleSet::total_weight() const noexcept {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

double unit_ball_volume(int n) {
  return std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

double unit_sphere_volume(int n) {
  return 2.0 * std::pow(kPi, 0.5 * (n + 1)) / std::tgamma(0.5 * (n + 1));
}

double sphere_cap_volume(int n, double radius, double angle) {
  angle = std::clamp(angle, 0.0, kPi);
  if (angle == 0.0) return 0.0;
  auto integrand = [n](double t) { return std::pow(std::sin(t), n - 1); };
  double err = 0.0;
  const double I = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, 0.0, angle, 20, 1e-13, &err);
  return unit_sphere_volume(n - 1) * std::pow(radius, n) * I;
}

Manifold Manifold::torus(int dim) {
  require(dim >= 1, "torus: dim must be >= 1");
  return torus(std::vector<double>(static_cast<std::size_t>(dim), 2.0 * kPi));
}

Manifold Manifold::torus(std::vector<double> periods) {
  require(!periods.empty(), "torus: need at least one period");
  for (double p : periods) require(std::isfinite(p) && p > 0.0, "torus: periods must be positive");
  Manifold m;
  m.kind_ = ManifoldKind::Torus;
  m.dim_ = static_cast<int>(periods.size());
  m.periods_ = std::move(periods);
  return m;
}

Manifold Manifold::box(std::vector<Interval> extents) {
  require(!extents.empty(), "box: need at least one extent");
  for (const auto& e : extents)
    require(std::isfinite(e.lo) && std::isfinite(e.hi) && e.hi > e.lo, "box: empty extent");
  Manifold m;
  m.kind_ = ManifoldKind::Box;
  m.dim_ = static_cast<int>(extents.size());
  m.extents_ = std::move(extents);
  return m;
}

Manifold Manifold::sphere(int dim, double radius) {
  require(dim >= 2 && dim <= 4, "sphere: dim must be in {2,3,4}");
  require(std::isfinite(radius) && radius > 0.0, "sphere: radius must be positive");
  Manifold m;
  m.kind_ = ManifoldKind::Sphere;
  m.dim_ = dim;
  m.radius_ = radius;
  return m;
}

double Manifold::volume() const noexcept {
  switch (kind_) {
    case ManifoldKind::Torus:
      return std::accumulate(periods_.begin(), periods_.end(), 1.0, std::multiplies<>());
    case ManifoldKind::Box: {
      double v = 1.0;
      for (const auto& e : extents_) v *= e.length();
      return v;
    }
    case ManifoldKind::Sphere: return unit_sphere_volume(dim_) * std::pow(radius_, dim_);
  }
  return 0.0;
}

double Manifold::diameter() const noexcept {
  double s = 0.0;
  switch (kind_) {
    case ManifoldKind::Torus:
      for (double p : periods_) s += 0.25 * p * p;
      return std::sqrt(s);
    case ManifoldKind::Box:
      for (const auto& e : extents_) s += e.length() * e.length();
      return std::sqrt(s);
    case ManifoldKind::Sphere: return kPi * radius_;
  }
  return 0.0;
}

double Manifold::min_period() const noexcept {
  switch (kind_) {
    case ManifoldKind::Torus: return *std::min_element(periods_.begin(), periods_.end());
    case ManifoldKind::Box: {
      double m = std::numeric_limits<double>::infinity();
      for (const auto& e : extents_) m = std::min(m, e.length());
      return m;
    }
    case ManifoldKind::Sphere: return 2.0 * kPi * radius_;
  }
  return 0.0;
}

double Manifold::background_scalar_curvature() const noexcept {
  if (kind_ != ManifoldKind::Sphere) return 0.0;
  return dim_ * (dim_ - 1) / (radius_ * radius_);
}

double Manifold::exact_ball_radius() const noexcept {
  switch (kind_) {
    case ManifoldKind::Torus: return 0.5 * min_period();
    case ManifoldKind::Box: return 0.0;  // exactness depends on the center
    case ManifoldKind::Sphere: return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

void Manifold::validate(std::span<const double> x) const {
  if (x.size() != coord_dim())
    throw InputError("point has " + std::to_string(x.size()) + " coordinates, manifold expects " +
                     std::to_string(coord_dim()));
  for (double v : x)
    if (!std::isfinite(v)) throw InputError("point has non-finite coordinate");
  if (kind_ == ManifoldKind::Sphere) {
    const double r = norm(x);
    if (std::abs(r - radius_) > 1e-12 * radius_)
      throw InputError("sphere point off the sphere: |x| = " + std::to_string(r));
  }
}

void Manifold::canonicalize(std::span<double> x) const {
  if (kind_ != ManifoldKind::Torus) return;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = periods_[i];
    double v = x[i] - p * std::floor(x[i] / p);
    if (v >= p) v -= p;
    if (v < 0.0) v = 0.0;
    x[i] = v;
  }
}

Point Manifold::canonical(std::span<const double> x) const {
  Point p(x);
  canonicalize(p.coords);
  return p;
}

void Manifold::displacement(std::span<const double> x, std::span<const double> y,
                            std::span<double> out) const {
  if (kind_ == ManifoldKind::Sphere) throw UnsupportedError("displacement: not defined on sphere");
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = y[i] - x[i];
    // Wrap into [-p/2, p/2): on the cut locus the negative (lexicographically
    // smaller) translate wins.
    if (kind_ == ManifoldKind::Torus) d -= periods_[i] * std::floor(d / periods_[i] + 0.5);
    out[i] = d;
  }
}

double Manifold::sphere_distance(std::span<const double> x, std::span<const double> y) const {
  // Chord-based formulas keep full relative accuracy at both small and
  // near-antipodal separations, unlike acos of the inner product.
  double diff = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    diff += (x[i] - y[i]) * (x[i] - y[i]);
    sum += (x[i] + y[i]) * (x[i] + y[i]);
  }
  const double r2 = 2.0 * radius_;
  if (diff <= sum)
    return radius_ * 2.0 * std::asin(std::min(1.0, std::sqrt(diff) / r2));
  return radius_ * (kPi - 2.0 * std::asin(std::min(1.0, std::sqrt(sum) / r2)));
}

double Manifold::distance(std::span<const double> x, std::span<const double> y) const {
  const std::size_t d = coord_dim();
  if (x.size() != d || y.size() != d) throw InputError("distance: dimension mismatch");
  switch (kind_) {
    case ManifoldKind::Sphere: return sphere_distance(x, y);
    case ManifoldKind::Box: {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
      return std::sqrt(s);
    }
    case ManifoldKind::Torus: {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double p = periods_[i];
        double a = std::fmod(std::abs(x[i] - y[i]), p);
        a = std::min(a, p - a);
        s += a * a;
      }
      return std::sqrt(s);
    }
  }
  return 0.0;
}

void Manifold::geodesic_point(std::span<const double> x, std::span<const double> y, double t,
                              std::span<double> out) const {
  const std::size_t d = coord_dim();
  if (x.size() != d || y.size() != d || out.size() != d)
    throw InputError("geodesic_point: dimension mismatch");
  if (kind_ != ManifoldKind::Sphere) {
    displacement(x, y, out);
    for (std::size_t i = 0; i < d; ++i) out[i] = x[i] + t * out[i];
    canonicalize(out);
    return;
  }
  const double theta = sphere_distance(x, y) / radius_;
  if (theta > kPi - 1e-9) throw GeometryError("geodesic on sphere: points are antipodal");
  if (theta < 1e-8) {
    for (std::size_t i = 0; i < d; ++i) out[i] = (1.0 - t) * x[i] + t * y[i];
  } else {
    const double s = std::sin(theta);
    const double a = std::sin((1.0 - t) * theta) / s;
    const double b = std::sin(t * theta) / s;
    for (std::size_t i = 0; i < d; ++i) out[i] = a * x[i] + b * y[i];
  }
  const double r = norm(out);
  for (double& v : out) v *= radius_ / r;
}

Point Manifold::midpoint(std::span<const double> x, std::span<const double> y) const {
  Point m;
  m.coords.resize(coord_dim());
  geodesic_point(x, y, 0.5, m.coords);
  return m;
}

Measure Manifold::ball_volume(const BallSpec& ball) const {
  const double r = ball.radius;
  if (!(r > 0.0)) throw InputError("ball_volume: radius must be positive");
  if (ball.center.size() != coord_dim()) throw InputError("ball_volume: dimension mismatch");
  switch (kind_) {
    case ManifoldKind::Sphere:
      return {sphere_cap_volume(dim_, radius_, r / radius_), 0.0};
    case ManifoldKind::Torus:
      if (r <= exact_ball_radius()) return {unit_ball_volume(dim_) * std::pow(r, dim_), 0.0};
      if (r >= diameter()) return {volume(), 0.0};
      return monte_carlo_ball_volume(ball);
    case ManifoldKind::Box: {
      bool inside = true;
      for (int i = 0; i < dim_; ++i) {
        const double c = ball.center[static_cast<std::size_t>(i)];
        inside = inside && c - r >= extents_[i].lo && c + r <= extents_[i].hi;
      }
      if (inside) return {unit_ball_volume(dim_) * std::pow(r, dim_), 0.0};
      if (r >= diameter()) return {volume(), 0.0};
      return monte_carlo_ball_volume(ball);
    }
  }
  return {};
}

namespace {

// Per-axis bounding interval of the ball in chart offsets relative to the center.
struct ChartBox {
  std::vector<double> lo, hi;
  double volume = 1.0;
};

ChartBox chart_box(const Manifold& m, const BallSpec& ball) {
  ChartBox b;
  const auto n = static_cast<std::size_t>(m.dim());
  b.lo.resize(n);
  b.hi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lo = -ball.radius, hi = ball.radius;
    if (m.kind() == ManifoldKind::Torus) {
      const double h = 0.5 * m.periods()[i];
      lo = std::max(lo, -h);
      hi = std::min(hi, h);
    } else {
      lo = std::max(lo, m.extents()[i].lo - ball.center[i]);
      hi = std::min(hi, m.extents()[i].hi - ball.center[i]);
    }
    b.lo[i] = lo;
    b.hi[i] = hi;
    b.volume *= std::max(0.0, hi - lo);
  }
  return b;
}

}  // namespace

Measure Manifold::monte_carlo_ball_volume(const BallSpec& ball) const {
  const ChartBox box = chart_box(*this, ball);
  Rng rng(hash_ball(ball));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto n = static_cast<std::size_t>(dim_);
  std::vector<double> off(n);
  const double r2 = ball.radius * ball.radius;
  std::size_t hits = 0;
  for (std::size_t s = 0; s < kMonteCarloVolumeSamples; ++s) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      off[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * unif(rng);
      d2 += off[i] * off[i];
    }
    if (d2 <= r2) ++hits;
  }
  const double N = static_cast<double>(kMonteCarloVolumeSamples);
  const double frac = static_cast<double>(hits) / N;
  return {frac * box.volume, box.volume * std::sqrt(frac * (1.0 - frac) / N)};
}

SampleSet Manifold::sample_cap(const BallSpec& ball, std::size_t count, std::uint64_t seed) const {
  const std::size_t d = coord_dim();
  SampleSet out;
  out.dim = d;
  out.coords.resize(count * d);
  out.weights.assign(count, ball_volume(ball).value / static_cast<double>(count));
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> c(ball.center.coords), u(d);
  for (double& v : c) v /= radius_;
  const double a = std::min(ball.radius / radius_, kPi);
  const int n = dim_;
  for (std::size_t s = 0; s < count; ++s) {
    double* p = out.coords.data() + s * d;
    if (a <= 0.5 * kPi) {
      // Polar angle with density proportional to sin^{n-1}: propose from
      // t^{n-1} and accept with (sin t / t)^{n-1}.
      double theta = 0.0;
      for (;;) {
        theta = a * std::pow(unif(rng), 1.0 / n);
        const double ratio = theta > 0.0 ? std::sin(theta) / theta : 1.0;
        if (unif(rng) <= std::pow(ratio, n - 1)) break;
      }
      tangent_direction(c, rng, u);
      const double ct = std::cos(theta), st = std::sin(theta);
      for (std::size_t i = 0; i < d; ++i) p[i] = radius_ * (ct * c[i] + st * u[i]);
    } else {
      std::normal_distribution<double> gauss;
      for (;;) {
        for (std::size_t i = 0; i < d; ++i) u[i] = gauss(rng);
        const double len = norm(u);
        if (len < 1e-12) continue;
        if (std::acos(std::clamp(dot(u, c) / len, -1.0, 1.0)) <= a) {
          for (std::size_t i = 0; i < d; ++i) p[i] = radius_ * u[i] / len;
          break;
        }
      }
    }
  }
  return out;
}

SampleSet Manifold::sample_ball(const BallSpec& ball, std::size_t count, std::uint64_t seed) const {
  if (count < 1) throw InputError("sample_ball: count must be >= 1");
  if (!(ball.radius > 0.0)) throw InputError("sample_ball: radius must be positive");
  validate(ball.center.coords);
  if (kind_ == ManifoldKind::Sphere) return sample_cap(ball, count, seed);

  const Measure vol = ball_volume(ball);
  const ChartBox box = chart_box(*this, ball);
  if (box.volume <= 0.0 || vol.value / box.volume < kMinRejectionEfficiency)
    throw ResourceError("sample_ball: rejection efficiency below 1e-3 in dimension " +
                        std::to_string(dim_));
  const auto n = static_cast<std::size_t>(dim_);
  SampleSet out;
  out.dim = n;
  out.coords.resize(count * n);
  out.weights.assign(count, vol.value / static_cast<double>(count));
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double r2 = ball.radius * ball.radius;
  std::vector<double> off(n);
  for (std::size_t s = 0; s < count; ++s) {
    for (;;) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        off[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * unif(rng);
        d2 += off[i] * off[i];
      }
      if (d2 <= r2) break;
    }
    std::span<double> p(out.coords.data() + s * n, n);
    for (std::size_t i = 0; i < n; ++i) p[i] = ball.center[i] + off[i];
    canonicalize(p);
  }
  return out;
}

SampleSet Manifold::sample_uniform(std::size_t count, std::uint64_t seed) const {
  if (count < 1) throw InputError("sample_uniform: count must be >= 1");
  const std::size_t d = coord_dim();
  SampleSet out;
  out.dim = d;
  out.coords.resize(count * d);
  out.weights.assign(count, volume() / static_cast<double>(count));
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss;
  for (std::size_t s = 0; s < count; ++s) {
    double* p = out.coords.data() + s * d;
    switch (kind_) {
      case ManifoldKind::Torus:
        for (std::size_t i = 0; i < d; ++i) p[i] = periods_[i] * unif(rng);
        break;
      case ManifoldKind::Box:
        for (std::size_t i = 0; i < d; ++i)
          p[i] = extents_[i].lo + extents_[i].length() * unif(rng);
        break;
      case ManifoldKind::Sphere: {
        double len = 0.0;
        do {
          for (std::size_t i = 0; i < d; ++i) p[i] = gauss(rng);
          len = norm({p, d});
        } while (len < 1e-12);
        for (std::size_t i = 0; i < d; ++i) p[i] *= radius_ / len;
        break;
      }
    }
  }
  return out;
}

namespace {

void check_budget(double required, std::size_t budget) {
  if (required > static_cast<double>(budget))
    throw ResourceError("lattice: requires " + std::to_string(static_cast<std::uint64_t>(required)) +
                        " points, budget is " + std::to_string(budget));
}

// Fibonacci layout on S^2: N = area / (c s^2) with the hexagonal constant
// c = sqrt(3)/2.
PointSet fibonacci_sphere(double R, double spacing, std::size_t budget) {
  const double area = 4.0 * kPi * R * R;
  const double required = std::ceil(area / (std::sqrt(3.0) / 2.0 * spacing * spacing));
  check_budget(required, budget);
  const auto N = std::max<std::size_t>(2, static_cast<std::size_t>(required));
  PointSet ps(3, spacing);
  ps.reserve(N);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  const double cell = area / static_cast<double>(N);
  double p[3];
  for (std::size_t i = 0; i < N; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(N);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    p[0] = R * rho * std::cos(phi);
    p[1] = R * rho * std::sin(phi);
    p[2] = R * z;
    ps.push_back(p, cell);
  }
  return ps;
}

// Equal-angle cubed sphere: 2(n+1) gnomonic faces, each an M^n grid of cell
// centres in angle space. Cell volumes from the gnomonic Jacobian, rescaled so
// they sum to vol(S^n).
PointSet cubed_sphere(int n, double R, double spacing, std::size_t budget) {
  const auto M = static_cast<std::size_t>(std::ceil(0.5 * kPi * R / spacing));
  const auto d = static_cast<std::size_t>(n + 1);
  const double required = 2.0 * static_cast<double>(d) * std::pow(static_cast<double>(M), n);
  check_budget(required, budget);
  PointSet ps(d, spacing);
  ps.reserve(static_cast<std::size_t>(required));
  const double dtheta = 0.5 * kPi / static_cast<double>(M);
  std::vector<std::size_t> idx(static_cast<std::size_t>(n));
  std::vector<double> v(d), w;
  for (std::size_t axis = 0; axis < d; ++axis) {
    for (double sign : {1.0, -1.0}) {
      std::fill(idx.begin(), idx.end(), 0);
      for (;;) {
        double jac = 1.0, u2 = 0.0;
        v.assign(d, 0.0);
        v[axis] = sign;
        std::size_t k = 0;
        for (std::size_t a = 0; a < d; ++a) {
          if (a == axis) continue;
          const double th = -0.25 * kPi + (static_cast<double>(idx[k]) + 0.5) * dtheta;
          const double u = std::tan(th);
          v[a] = u;
          u2 += u * u;
          jac /= std::cos(th) * std::cos(th);
          ++k;
        }
        jac *= std::pow(1.0 + u2, -0.5 * (n + 1));
        const double len = std::sqrt(1.0 + u2);
        for (double& x : v) x *= R / len;
        ps.push_back(v, jac);
        std::size_t j = 0;
        while (j < idx.size() && ++idx[j] == M) idx[j++] = 0;
        if (j == idx.size()) break;
      }
    }
  }
  // Rescale cell weights to the exact total volume.
  const double total = unit_sphere_volume(n) * std::pow(R, n);
  double sum = 0.0;
  for (double c : ps.cell_volumes()) sum += c;
  PointSet out(d, spacing);
  out.reserve(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) out.push_back(ps[i], ps.cell_volume(i) * total / sum);
  return out;
}

}  // namespace

PointSet Manifold::lattice(double spacing, std::size_t budget) const {
  if (!(spacing > 0.0) || !std::isfinite(spacing)) throw InputError("lattice: spacing must be positive");
  if (kind_ == ManifoldKind::Sphere) {
    return dim_ == 2 ? fibonacci_sphere(radius_, spacing, budget)
                     : cubed_sphere(dim_, radius_, spacing, budget);
  }
  const auto n = static_cast<std::size_t>(dim_);
  std::vector<std::size_t> counts(n);
  std::vector<double> h(n), origin(n);
  double required = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (kind_ == ManifoldKind::Torus) {
      const double c = std::ceil(periods_[i] / spacing - 1e-9);
      counts[i] = static_cast<std::size_t>(std::max(1.0, c));
      h[i] = periods_[i] / static_cast<double>(counts[i]);
      origin[i] = 0.0;
    } else {
      const double L = extents_[i].length();
      const double c = std::ceil(L / spacing - 1e-9);
      counts[i] = static_cast<std::size_t>(std::max(1.0, c)) + 1;
      h[i] = L / static_cast<double>(counts[i] - 1);
      origin[i] = extents_[i].lo;
    }
    required *= static_cast<double>(counts[i]);
  }
  check_budget(required, budget);
  PointSet ps(n, spacing);
  ps.set_axis_spacing(h);
  ps.reserve(static_cast<std::size_t>(required));
  std::vector<std::size_t> idx(n, 0);
  std::vector<double> x(n);
  // Row-major: last axis fastest.
  for (;;) {
    double cell = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = origin[i] + static_cast<double>(idx[i]) * h[i];
      double w = h[i];
      if (kind_ == ManifoldKind::Box && (idx[i] == 0 || idx[i] + 1 == counts[i])) w *= 0.5;
      cell *= w;
    }
    ps.push_back(x, cell);
    std::size_t j = n;
    while (j > 0) {
      --j;
      if (++idx[j] < counts[j]) break;
      idx[j] = 0;
      if (j == 0) return ps;
    }
    if (n == 0) return ps;
  }
}

void to_json(nlohmann::json& j, const Manifold& m) {
  j = nlohmann::json{{"kind", to_string(m.kind())}, {"dim", m.dim()}};
  switch (m.kind()) {
    case ManifoldKind::Torus: j["periods"] = m.periods(); break;
    case ManifoldKind::Box: {
      auto arr = nlohmann::json::array();
      for (const auto& e : m.extents()) arr.push_back({e.lo, e.hi});
      j["extents"] = arr;
      break;
    }
    case ManifoldKind::Sphere: j["radius"] = m.radius(); break;
  }
}

Manifold manifold_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw FormatError("manifold: expected an object");
    const std::string kind = j.at("kind").get<std::string>();
    const int dim = j.value("dim", 0);
    if (kind == "torus") {
      if (j.contains("periods")) {
        auto p = j.at("periods").get<std::vector<double>>();
        if (dim != 0 && static_cast<std::size_t>(dim) != p.size())
          throw FormatError("manifold: periods length does not match dim");
        return Manifold::torus(std::move(p));
      }
      return Manifold::torus(dim);
    }
    if (kind == "box") {
      std::vector<Interval> ext;
      for (const auto& e : j.at("extents")) ext.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
      if (dim != 0 && static_cast<std::size_t>(dim) != ext.size())
        throw FormatError("manifold: extents length does not match dim");
      return Manifold::box(std::move(ext));
    }
    if (kind == "sphere") return Manifold::sphere(dim, j.value("radius", 1.0));
    throw FormatError("manifold: unknown kind '" + kind + "' (expected torus, box, sphere)");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifold: ") + e.what());
  }
}

}  // namespace conflab

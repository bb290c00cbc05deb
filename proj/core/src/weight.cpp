#include "conflab/weight.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "conflab/error.hpp"
#include "conflab/integrate.hpp"

namespace conflab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSaturationWidth = 0.5;

}  // namespace

struct WeightField::Impl {
  WeightKind kind = WeightKind::Constant;
  double c = 0.0;  // Constant value or Scaled shift
  int ell = 1;
  Point x0;
  double R0 = 1.0;
  double cap = kInf;
  double lambda = 1.0;
  Point pole;
  std::optional<GridField> grid;
  int order = 1;
  std::string source;
  std::vector<WeightField> parts;
};

const char* to_string(WeightKind kind) noexcept {
  switch (kind) {
    case WeightKind::Constant: return "constant";
    case WeightKind::BuragoTorus: return "burago";
    case WeightKind::LogCusp: return "log_cusp";
    case WeightKind::SphereBubble: return "sphere_bubble";
    case WeightKind::Grid: return "grid";
    case WeightKind::Scaled: return "scaled";
    case WeightKind::Sum: return "sum";
  }
  return "unknown";
}

double cusp_saturation(double t, double k, double* d1, double* d2) {
  const double h = kSaturationWidth;
  if (!std::isfinite(k) || t <= k - h) {
    if (d1) *d1 = 1.0;
    if (d2) *d2 = 0.0;
    return t;
  }
  if (!std::isfinite(t)) {
    if (d1) *d1 = 0.0;
    if (d2) *d2 = 0.0;
    return k;
  }
  // k - h / P(s), P(s) = 1 + s + s^2 + s^3, s = (t - k + h) / h.
  const double s = (t - k + h) / h;
  const double P = 1.0 + s * (1.0 + s * (1.0 + s));
  const double P1 = 1.0 + s * (2.0 + 3.0 * s);
  const double P2 = 2.0 + 6.0 * s;
  if (d1) *d1 = P1 / (P * P);
  if (d2) *d2 = (P2 * P - 2.0 * P1 * P1) / (P * P * P) / h;
  return k - h / P;
}

double cusp_profile(double d, double R0, double* d1, double* d2) {
  const double a = R0 / std::numbers::e;
  const double b = 2.0 * R0;
  if (d >= b) {
    if (d1) *d1 = 0.0;
    if (d2) *d2 = 0.0;
    return 0.0;
  }
  if (d <= a) {
    if (d <= 0.0) {
      if (d1) *d1 = -kInf;
      if (d2) *d2 = kInf;
      return kInf;
    }
    const double L = std::log(R0 / d);
    const double sL = std::sqrt(L);
    if (d1) *d1 = -1.0 / (2.0 * d * sL);
    if (d2) *d2 = (0.5 / sL - 0.25 / (L * sL)) / (d * d);
    return sL;
  }
  // Quintic Hermite from (1, -1/(2a), 1/(4a^2)) at a to (0, 0, 0) at b.
  const double H = b - a;
  const double s = (d - a) / H;
  const double m0 = -H / (2.0 * a);
  const double a0 = H * H / (4.0 * a * a);
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
  const double h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
  const double h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
  const double h2 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
  if (d1) {
    const double h0p = -30.0 * s2 + 60.0 * s3 - 30.0 * s4;
    const double h1p = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4;
    const double h2p = 0.5 * (2.0 * s - 9.0 * s2 + 12.0 * s3 - 5.0 * s4);
    *d1 = (h0p + m0 * h1p + a0 * h2p) / H;
  }
  if (d2) {
    const double h0pp = -60.0 * s + 180.0 * s2 - 120.0 * s3;
    const double h1pp = -36.0 * s + 96.0 * s2 - 60.0 * s3;
    const double h2pp = 0.5 * (2.0 - 18.0 * s + 36.0 * s2 - 20.0 * s3);
    *d2 = (h0pp + m0 * h1pp + a0 * h2pp) / (H * H);
  }
  return h0 + m0 * h1 + a0 * h2;
}

namespace {

struct BubbleProfile {
  double lambda;
  double value(double theta, double* d1 = nullptr, double* d2 = nullptr,
               double* cot_d1 = nullptr) const {
    const double l2 = lambda * lambda;
    const double a = 1.0 + l2, b = l2 - 1.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double E = a + b * ct;
    if (d1) *d1 = b * st / E;
    if (d2) *d2 = b * (a * ct + b) / (E * E);
    if (cot_d1) *cot_d1 = b * ct / E;
    return std::log(2.0 * lambda) - std::log(E);
  }
};

double unit_dot(std::span<const double> x, std::span<const double> y) {
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  return std::clamp(xy / std::sqrt(xx * yy), -1.0, 1.0);
}

// Unit tangent at x of the geodesic leaving `from`, i.e. the gradient
// direction of the distance to `from`. Zero at and opposite `from`.
std::vector<double> radial_tangent(std::span<const double> x, std::span<const double> from) {
  const std::size_t d = x.size();
  double xx = 0.0, ff = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    xx += x[i] * x[i];
    ff += from[i] * from[i];
  }
  xx = std::sqrt(xx);
  ff = std::sqrt(ff);
  const double ct = unit_dot(x, from);
  const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
  std::vector<double> out(d, 0.0);
  if (st < 1e-14) return out;
  for (std::size_t i = 0; i < d; ++i) out[i] = (ct * x[i] / xx - from[i] / ff) / st;
  return out;
}

double angle_between(std::span<const double> x, std::span<const double> y) {
  // Chord-based for accuracy near 0 and pi.
  double xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  xx = std::sqrt(xx);
  yy = std::sqrt(yy);
  double diff = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = x[i] / xx, b = y[i] / yy;
    diff += (a - b) * (a - b);
    sum += (a + b) * (a + b);
  }
  if (diff <= sum) return 2.0 * std::asin(std::min(1.0, 0.5 * std::sqrt(diff)));
  return kPi - 2.0 * std::asin(std::min(1.0, 0.5 * std::sqrt(sum)));
}

// Per-axis interpolation stencil: node indices and weights.
struct AxisStencil {
  std::size_t idx[4];
  double w[4];
  int count = 0;
};

AxisStencil axis_stencil(const GridField& g, std::size_t axis, double x, int order) {
  const Manifold& m = g.manifold();
  const auto N = static_cast<long>(g.shape()[axis]);
  const double h = g.spacing(axis);
  const bool periodic = m.kind() == ManifoldKind::Torus;
  const double origin = periodic ? 0.0 : m.extents()[axis].lo;
  double u = (x - origin) / h;
  auto wrap = [&](long j) -> std::size_t {
    if (periodic) return static_cast<std::size_t>(((j % N) + N) % N);
    return static_cast<std::size_t>(std::clamp(j, 0L, N - 1));
  };
  AxisStencil s;
  if (!periodic) u = std::clamp(u, 0.0, static_cast<double>(N - 1));
  auto j0 = static_cast<long>(std::floor(u));
  double t = u - static_cast<double>(j0);
  if (!periodic && j0 >= N - 1 && order > 0) {
    j0 = N - 2;
    t = u - static_cast<double>(j0);
  }
  switch (order) {
    case 0:
      s.count = 1;
      s.idx[0] = wrap(j0);
      s.w[0] = 1.0;
      break;
    case 1:
      s.count = 2;
      s.idx[0] = wrap(j0);
      s.idx[1] = wrap(j0 + 1);
      s.w[0] = 1.0 - t;
      s.w[1] = t;
      break;
    default: {
      // Catmull-Rom cubic convolution.
      s.count = 4;
      const double t2 = t * t, t3 = t2 * t;
      s.w[0] = 0.5 * (-t3 + 2.0 * t2 - t);
      s.w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
      s.w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
      s.w[3] = 0.5 * (t3 - t2);
      for (int k = 0; k < 4; ++k) s.idx[k] = wrap(j0 - 1 + k);
      break;
    }
  }
  return s;
}

double interpolate(const GridField& g, std::span<const double> x, int order) {
  const std::size_t n = g.dim();
  std::vector<AxisStencil> st(n);
  for (std::size_t i = 0; i < n; ++i) st[i] = axis_stencil(g, i, x[i], order);
  std::vector<int> pos(n, 0);
  std::vector<std::size_t> idx(n);
  double sum = 0.0;
  for (;;) {
    double w = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      idx[i] = st[i].idx[pos[i]];
      w *= st[i].w[pos[i]];
    }
    sum += w * g.at(idx);
    std::size_t k = 0;
    while (k < n && ++pos[k] == st[k].count) pos[k++] = 0;
    if (k == n) return sum;
  }
}

std::shared_ptr<WeightField::Impl> make(WeightKind kind) {
  auto p = std::make_shared<WeightField::Impl>();
  p->kind = kind;
  return p;
}

}  // namespace

WeightField WeightField::constant(double c) {
  if (!std::isfinite(c)) throw InputError("constant weight: value must be finite");
  auto p = make(WeightKind::Constant);
  p->c = c;
  return WeightField(p);
}

WeightField WeightField::burago(int ell) {
  if (ell < 1) throw InputError("burago weight: ell must be a positive integer");
  auto p = make(WeightKind::BuragoTorus);
  p->ell = ell;
  return WeightField(p);
}

WeightField WeightField::log_cusp(Point x0, double R0, double cap) {
  if (!(R0 > 0.0) || !std::isfinite(R0)) throw InputError("log_cusp: R0 must be positive");
  if (!(cap > 0.0)) throw InputError("log_cusp: cap must be positive");
  auto p = make(WeightKind::LogCusp);
  p->x0 = std::move(x0);
  p->R0 = R0;
  p->cap = cap;
  return WeightField(p);
}

WeightField WeightField::sphere_bubble(double lambda, Point pole) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InputError("sphere_bubble: lambda must be positive");
  auto p = make(WeightKind::SphereBubble);
  p->lambda = lambda;
  p->pole = std::move(pole);
  return WeightField(p);
}

WeightField WeightField::grid(GridField grid, int order) {
  if (order != 0 && order != 1 && order != 3)
    throw InputError("grid weight: interpolation order must be 0, 1 or 3");
  auto p = make(WeightKind::Grid);
  p->grid = std::move(grid);
  p->order = order;
  return WeightField(p);
}

WeightField WeightField::scaled(WeightField base, double shift) {
  if (!std::isfinite(shift)) throw InputError("scaled weight: shift must be finite");
  auto p = make(WeightKind::Scaled);
  p->c = shift;
  p->parts.push_back(std::move(base));
  return WeightField(p);
}

WeightField WeightField::sum(std::vector<WeightField> parts) {
  if (parts.empty()) throw InputError("sum weight: needs at least one part");
  auto p = make(WeightKind::Sum);
  p->parts = std::move(parts);
  return WeightField(p);
}

WeightKind WeightField::kind() const noexcept { return impl_->kind; }

const GridField* WeightField::grid_field() const noexcept {
  return impl_->grid ? &*impl_->grid : nullptr;
}

double WeightField::shift() const noexcept {
  return impl_->kind == WeightKind::Scaled ? impl_->c : 0.0;
}

bool WeightField::has_exact_derivatives() const noexcept {
  switch (impl_->kind) {
    case WeightKind::Grid: return false;
    case WeightKind::Scaled:
    case WeightKind::Sum:
      return std::all_of(impl_->parts.begin(), impl_->parts.end(),
                         [](const WeightField& w) { return w.has_exact_derivatives(); });
    default: return true;
  }
}

void WeightField::check_manifold(const Manifold& m) const {
  const Impl& p = *impl_;
  switch (p.kind) {
    case WeightKind::Constant: return;
    case WeightKind::BuragoTorus:
      if (m.kind() != ManifoldKind::Torus) throw InputError("burago weight is defined on a torus only");
      return;
    case WeightKind::SphereBubble:
      if (m.kind() != ManifoldKind::Sphere) throw InputError("sphere_bubble weight is defined on a sphere only");
      m.validate(p.pole.coords);
      return;
    case WeightKind::LogCusp:
      m.validate(p.x0.coords);
      if (m.kind() == ManifoldKind::Torus && 2.0 * p.R0 > m.exact_ball_radius())
        throw InputError("log_cusp: 2*R0 must not exceed half the smallest period");
      if (m.kind() == ManifoldKind::Sphere && 2.0 * p.R0 >= kPi * m.radius())
        throw InputError("log_cusp: 2*R0 must be below the sphere's diameter");
      return;
    case WeightKind::Grid:
      if (!(m == p.grid->manifold())) throw InputError("grid weight: manifold mismatch");
      return;
    case WeightKind::Scaled:
    case WeightKind::Sum:
      for (const auto& part : p.parts) part.check_manifold(m);
      return;
  }
}

double WeightField::eval(const Manifold& m, std::span<const double> x) const {
  const Impl& p = *impl_;
  switch (p.kind) {
    case WeightKind::Constant: return p.c;
    case WeightKind::BuragoTorus:
      return std::log(1.0 - 0.5 * std::cos(p.ell * x[0])) / m.dim();
    case WeightKind::LogCusp:
      return cusp_saturation(cusp_profile(m.distance(x, p.x0.coords), p.R0), p.cap);
    case WeightKind::SphereBubble:
      return BubbleProfile{p.lambda}.value(angle_between(x, p.pole.coords));
    case WeightKind::Grid: return interpolate(*p.grid, x, p.order);
    case WeightKind::Scaled: return p.parts[0].eval(m, x) + p.c;
    case WeightKind::Sum: {
      double s = 0.0;
      for (const auto& part : p.parts) s += part.eval(m, x);
      return s;
    }
  }
  return 0.0;
}

double WeightField::weight(const Manifold& m, std::span<const double> x) const {
  return std::exp(m.dim() * eval(m, x));
}

FieldJet WeightField::jet(const Manifold& m, std::span<const double> x) const {
  const Impl& p = *impl_;
  const std::size_t d = m.coord_dim();
  const int n = m.dim();
  FieldJet j;
  j.grad.assign(d, 0.0);
  switch (p.kind) {
    case WeightKind::Constant:
      j.f = p.c;
      return j;
    case WeightKind::BuragoTorus: {
      const double l = p.ell;
      const double a = 1.0 - 0.5 * std::cos(l * x[0]);
      const double a1 = 0.5 * l * std::sin(l * x[0]);
      const double a2 = 0.5 * l * l * std::cos(l * x[0]);
      j.f = std::log(a) / n;
      j.grad[0] = a1 / (n * a);
      j.hess_trace = (a2 * a - a1 * a1) / (n * a * a);
      return j;
    }
    case WeightKind::LogCusp: {
      double g1 = 0.0, g2 = 0.0, s1 = 0.0, s2 = 0.0;
      const double dist = m.distance(x, p.x0.coords);
      const double g = cusp_profile(dist, p.R0, &g1, &g2);
      j.f = cusp_saturation(g, p.cap, &s1, &s2);
      if (dist <= 0.0) {
        if (!std::isfinite(p.cap)) throw NumericError("log_cusp: derivatives undefined at the cusp point");
        return j;
      }
      if (dist >= 2.0 * p.R0) return j;
      const double df = s1 * g1;
      double lap_radial = 0.0;
      if (m.kind() == ManifoldKind::Sphere) {
        const double R = m.radius();
        const auto e = radial_tangent(x, p.x0.coords);
        for (std::size_t i = 0; i < d; ++i) j.grad[i] = df * e[i];
        lap_radial = (n - 1) * df / (R * std::tan(dist / R));
      } else {
        std::vector<double> delta(d);
        m.displacement(p.x0.coords, x, delta);
        for (std::size_t i = 0; i < d; ++i) j.grad[i] = df * delta[i] / dist;
        lap_radial = (n - 1) * df / dist;
      }
      j.hess_trace = s2 * g1 * g1 + s1 * g2 + lap_radial;
      return j;
    }
    case WeightKind::SphereBubble: {
      const double R = m.radius();
      const double theta = angle_between(x, p.pole.coords);
      double f1 = 0.0, f2 = 0.0, cot_f1 = 0.0;
      j.f = BubbleProfile{p.lambda}.value(theta, &f1, &f2, &cot_f1);
      const auto e = radial_tangent(x, p.pole.coords);
      for (std::size_t i = 0; i < d; ++i) j.grad[i] = f1 / R * e[i];
      j.hess_trace = (f2 + (n - 1) * cot_f1) / (R * R);
      return j;
    }
    case WeightKind::Grid:
      throw UnsupportedError("grid weight: exact derivatives unavailable, use finite differences");
    case WeightKind::Scaled: {
      j = p.parts[0].jet(m, x);
      j.f += p.c;
      return j;
    }
    case WeightKind::Sum: {
      for (const auto& part : p.parts) {
        const FieldJet q = part.jet(m, x);
        j.f += q.f;
        j.hess_trace += q.hess_trace;
        for (std::size_t i = 0; i < d; ++i) j.grad[i] += q.grad[i];
      }
      return j;
    }
  }
  return j;
}

std::optional<ZonalProfile> WeightField::zonal(const Manifold& m) const {
  if (m.kind() != ManifoldKind::Sphere) return std::nullopt;
  const Impl& p = *impl_;
  switch (p.kind) {
    case WeightKind::Constant: {
      const double c = p.c;
      return ZonalProfile{Point{}, true, [c](double) { return c; }};
    }
    case WeightKind::SphereBubble: {
      BubbleProfile prof{p.lambda};
      return ZonalProfile{p.pole, false, [prof](double t) { return prof.value(t); }};
    }
    case WeightKind::LogCusp: {
      const double R = m.radius(), R0 = p.R0, cap = p.cap;
      return ZonalProfile{p.x0, false, [=](double t) {
                            return cusp_saturation(cusp_profile(R * t, R0), cap);
                          }};
    }
    case WeightKind::Scaled: {
      auto base = p.parts[0].zonal(m);
      if (!base) return std::nullopt;
      const double c = p.c;
      auto fn = base->f;
      base->f = [fn, c](double t) { return fn(t) + c; };
      return base;
    }
    case WeightKind::Sum: {
      std::vector<ZonalProfile> parts;
      const ZonalProfile* anchored = nullptr;
      for (const auto& part : p.parts) {
        auto z = part.zonal(m);
        if (!z) return std::nullopt;
        parts.push_back(std::move(*z));
      }
      for (const auto& z : parts) {
        if (z.axis_free) continue;
        if (anchored && angle_between(anchored->axis.coords, z.axis.coords) > 1e-12) return std::nullopt;
        if (!anchored) anchored = &z;
      }
      ZonalProfile out;
      out.axis_free = anchored == nullptr;
      if (anchored) out.axis = anchored->axis;
      std::vector<std::function<double(double)>> fns;
      for (const auto& z : parts) fns.push_back(z.f);
      out.f = [fns](double t) {
        double s = 0.0;
        for (const auto& fn : fns) s += fn(t);
        return s;
      };
      return out;
    }
    default: return std::nullopt;
  }
}

std::pair<double, double> WeightField::bounds(const Manifold& m) const {
  const Impl& p = *impl_;
  switch (p.kind) {
    case WeightKind::Constant: return {p.c, p.c};
    case WeightKind::BuragoTorus: return {std::log(0.5) / m.dim(), std::log(1.5) / m.dim()};
    case WeightKind::LogCusp: return {0.0, p.cap};
    case WeightKind::SphereBubble: {
      const double l = std::abs(std::log(p.lambda));
      return {-l, l};
    }
    case WeightKind::Grid: {
      const auto [lo, hi] = std::minmax_element(p.grid->values().begin(), p.grid->values().end());
      const double pad = p.order == 3 ? 0.25 * (*hi - *lo) : 0.0;
      return {*lo - pad, *hi + pad};
    }
    case WeightKind::Scaled: {
      auto b = p.parts[0].bounds(m);
      return {b.first + p.c, b.second + p.c};
    }
    case WeightKind::Sum: {
      double lo = 0.0, hi = 0.0;
      for (const auto& part : p.parts) {
        auto b = part.bounds(m);
        lo += b.first;
        hi += b.second;
      }
      return {lo, hi};
    }
  }
  return {-kInf, kInf};
}

nlohmann::json WeightField::to_json() const {
  const Impl& p = *impl_;
  nlohmann::json j{{"kind", conflab::to_string(p.kind)}};
  switch (p.kind) {
    case WeightKind::Constant: j["c"] = p.c; break;
    case WeightKind::BuragoTorus: j["ell"] = p.ell; break;
    case WeightKind::LogCusp:
      j["x0"] = p.x0.coords;
      j["R0"] = p.R0;
      j["cap"] = std::isfinite(p.cap) ? nlohmann::json(p.cap) : nlohmann::json(nullptr);
      break;
    case WeightKind::SphereBubble:
      j["lambda"] = p.lambda;
      j["pole"] = p.pole.coords;
      break;
    case WeightKind::Grid:
      j["order"] = p.order;
      j["shape"] = p.grid->shape();
      if (!p.source.empty()) j["path"] = p.source;
      break;
    case WeightKind::Scaled:
      j["shift"] = p.c;
      j["base"] = p.parts[0].to_json();
      break;
    case WeightKind::Sum: {
      auto arr = nlohmann::json::array();
      for (const auto& part : p.parts) arr.push_back(part.to_json());
      j["parts"] = arr;
      break;
    }
  }
  return j;
}

WeightField WeightField::from_json(const nlohmann::json& j, const Manifold& m) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") return constant(j.value("c", 0.0));
    if (kind == "burago") return burago(j.at("ell").get<int>());
    if (kind == "log_cusp") {
      const double cap = j.contains("cap") && !j.at("cap").is_null() ? j.at("cap").get<double>() : kNoCap;
      return log_cusp(Point(j.at("x0").get<std::vector<double>>()), j.value("R0", 1.0), cap);
    }
    if (kind == "sphere_bubble") {
      std::vector<double> pole;
      if (j.contains("pole")) {
        pole = j.at("pole").get<std::vector<double>>();
      } else {
        pole.assign(m.coord_dim(), 0.0);
        pole.back() = m.radius();
      }
      return sphere_bubble(j.at("lambda").get<double>(), Point(std::move(pole)));
    }
    if (kind == "grid") {
      const std::string path = j.at("path").get<std::string>();
      GridField g = read_grid(path);
      auto w = grid(std::move(g), j.value("order", 1));
      auto impl = std::make_shared<Impl>(w.impl());
      impl->source = path;
      return WeightField(impl);
    }
    if (kind == "scaled") return scaled(from_json(j.at("base"), m), j.at("shift").get<double>());
    if (kind == "sum") {
      std::vector<WeightField> parts;
      for (const auto& e : j.at("parts")) parts.push_back(from_json(e, m));
      return sum(std::move(parts));
    }
    throw InputError("unknown weight kind '" + kind +
                     "' (expected constant, burago, log_cusp, sphere_bubble, grid, scaled, sum)");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("weight spec: ") + e.what());
  }
}

Measure mu_f_ball(const Manifold& m, const WeightField& field, const BallSpec& ball,
                  std::size_t budget, std::uint64_t seed) {
  if (budget < 100) throw InputError("mu_f_ball: budget must be >= 100");
  const int n = m.dim();
  const Integrand w = [n](std::span<const double>, double f) { return std::exp(n * f); };
  return integrate_ball(m, field, ball, std::span(&w, 1), budget, seed)[0];
}

Measure total_mass(const Manifold& m, const WeightField& field, std::size_t budget,
                   std::uint64_t seed) {
  if (budget < 100) throw InputError("total_mass: budget must be >= 100");
  const int n = m.dim();
  const Integrand w = [n](std::span<const double>, double f) { return std::exp(n * f); };
  return integrate_manifold(m, field, std::span(&w, 1), budget, seed)[0];
}

std::vector<Measure> integrability_profile(const Manifold& m, const WeightField& field,
                                           std::span<const double> exponents,
                                           std::size_t budget, std::uint64_t seed) {
  if (budget < 100) throw InputError("integrability_profile: budget must be >= 100");
  std::vector<Integrand> fns;
  for (double p : exponents) {
    if (!std::isfinite(p)) throw InputError("integrability_profile: exponents must be finite");
    fns.push_back([p](std::span<const double>, double f) { return std::exp(p * f); });
  }
  return integrate_manifold(m, field, fns, budget, seed);
}

}  // namespace conflab

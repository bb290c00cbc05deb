#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "conflab/parallel.hpp"
#include "experiments.hpp"

namespace conflab::lab {

namespace {

constexpr double kPi = std::numbers::pi;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Point> uniform_points(const Manifold& m, std::size_t count, std::uint64_t seed) {
  const SampleSet s = m.sample_uniform(count, seed);
  std::vector<Point> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.emplace_back(s[i]);
  return out;
}

std::vector<Domain> discs(const Manifold& m, std::span<const double> radii, std::size_t centers,
                          std::uint64_t seed, const std::vector<Point>& extra_centers) {
  std::vector<Point> cs = uniform_points(m, centers, seed);
  cs.insert(cs.end(), extra_centers.begin(), extra_centers.end());
  std::vector<Domain> out;
  for (const auto& c : cs)
    for (double r : radii) out.push_back(Domain::ball(c, r));
  return out;
}

}  // namespace

// ---------------------------------------------------------------- shared tools

DistanceMatrix lattice_distances(const Manifold& m, const WeightField& field, std::span<const Point> points,
                                 double spacing, double eps, const Estimator& est, std::uint64_t seed,
                                 std::size_t budget) {
  const LatticeGraph g(m, field, spacing, eps, est, seed, points, budget);
  const std::size_t K = points.size();
  DistanceMatrix d;
  for (std::size_t i = 0; i < K; ++i) {
    d.sources.push_back(i);
    d.targets.push_back(i);
  }
  d.values.assign(K * K, 0.0);
  d.eps = eps;
  d.estimator = est.kind;
  d.seed = seed;
  std::vector<std::size_t> nodes(K);
  for (std::size_t i = 0; i < K; ++i) nodes[i] = g.extra_node(i);
  parallel_for(K, [&](std::size_t i) {
    const auto row = g.distances(nodes[i], nodes);
    for (std::size_t j = 0; j < K; ++j) d(i, j) = i == j ? 0.0 : row[j];
  });
  return d;
}

DistanceMatrix background_matrix(const Manifold& m, std::span<const Point> points) {
  DistanceMatrix d;
  const std::size_t K = points.size();
  for (std::size_t i = 0; i < K; ++i) {
    d.sources.push_back(i);
    d.targets.push_back(i);
  }
  d.values.resize(K * K);
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) d(i, j) = m.distance(points[i].coords, points[j].coords);
  return d;
}

namespace {

void require_aligned(const DistanceMatrix& a, const DistanceMatrix& b) {
  if (a.sources != b.sources || a.targets != b.targets || a.values.size() != b.values.size())
    throw InputError("converge_compare: matrices are not aligned on the same sources and targets");
}

// NaN entries mark pairs that were not computed.
double sup_abs_diff(const DistanceMatrix& a, const DistanceMatrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = std::abs(a.values[i] - b.values[i]);
    if (!std::isnan(d)) s = std::max(s, d);
  }
  return s;
}

}  // namespace

ConvergenceTable converge_compare(std::span<const DistanceMatrix> matrices) {
  ConvergenceTable t;
  for (std::size_t k = 1; k < matrices.size(); ++k) {
    require_aligned(matrices[0], matrices[k]);
    t.sup_diff.push_back(sup_abs_diff(matrices[k - 1], matrices[k]));
  }
  double logsum = 0.0;
  for (std::size_t k = 1; k < t.sup_diff.size(); ++k) {
    const double r = t.sup_diff[k - 1] > 0.0 ? t.sup_diff[k] / t.sup_diff[k - 1] : 0.0;
    t.ratios.push_back(r);
    logsum += std::log(std::max(r, 1e-300));
  }
  if (!t.ratios.empty()) t.rate = std::exp(logsum / static_cast<double>(t.ratios.size()));
  return t;
}

std::vector<double> sup_difference(std::span<const DistanceMatrix> matrices, const DistanceMatrix& reference) {
  std::vector<double> out;
  for (const auto& d : matrices) {
    require_aligned(d, reference);
    out.push_back(sup_abs_diff(d, reference));
  }
  return out;
}

TestFunction TestFunction::parse(const std::string& s, const Manifold& m) {
  auto numbers = [](const std::string& list) {
    std::vector<double> v;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
    return v;
  };
  TestFunction t;
  try {
    if (s == "1") return t;
    if (s.rfind("cos:", 0) == 0) {
      t.kind = Kind::Cos;
      t.k = numbers(s.substr(4));
      if (t.k.size() != static_cast<std::size_t>(m.dim())) throw InputError("");
      return t;
    }
    if (s.rfind("bump:", 0) == 0) {
      const auto rest = s.substr(5);
      const auto colon = rest.find(':');
      if (colon == std::string::npos) throw InputError("");
      t.kind = Kind::Bump;
      t.center = Point(numbers(rest.substr(0, colon)));
      t.radius = std::stod(rest.substr(colon + 1));
      m.validate(t.center.coords);
      if (!(t.radius > 0.0)) throw InputError("");
      return t;
    }
  } catch (const std::invalid_argument&) {
  } catch (const InputError&) {
  }
  throw InputError("test function '" + s + "' (expected 1, cos:k1,...,kn or bump:x1,...,xn:r)");
}

std::string TestFunction::label() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::One: return "1";
    case Kind::Cos:
      os << "cos:";
      for (std::size_t i = 0; i < k.size(); ++i) os << (i ? "," : "") << k[i];
      return os.str();
    case Kind::Bump:
      os << "bump:";
      for (std::size_t i = 0; i < center.size(); ++i) os << (i ? "," : "") << center.coords[i];
      os << ':' << radius;
      return os.str();
  }
  return "?";
}

double TestFunction::operator()(const Manifold& m, std::span<const double> x) const {
  switch (kind) {
    case Kind::One: return 1.0;
    case Kind::Cos: {
      double s = 0.0;
      for (std::size_t a = 0; a < k.size(); ++a) {
        const double P = m.kind() == ManifoldKind::Torus ? m.periods()[a] : 2.0 * kPi;
        s += k[a] * 2.0 * kPi * x[a] / P;
      }
      return std::cos(s);
    }
    case Kind::Bump: {
      const double t = m.distance(center.coords, x) / radius;
      return t < 1.0 ? (1.0 - t * t) * (1.0 - t * t) : 0.0;
    }
  }
  return 0.0;
}

std::vector<std::vector<Measure>> weak_star_test(const Manifold& m, std::span<const WeightField> fields,
                                                 std::span<const TestFunction> testfns, std::size_t budget,
                                                 std::uint64_t seed) {
  const double n = m.dim();
  std::vector<Integrand> fns;
  for (const auto& t : testfns)
    fns.push_back([&m, t, n](std::span<const double> x, double f) { return t(m, x) * std::exp(n * f); });
  std::vector<std::vector<Measure>> out;
  for (const auto& field : fields) out.push_back(integrate_manifold(m, field, fns, budget, seed, false));
  return out;
}

// ---------------------------------------------------------------- flat torus

FlatDistances flat_distances(const FlatParams& p) {
  const auto t0 = std::chrono::steady_clock::now();
  const Manifold m = Manifold::torus(2);
  const WeightField f = WeightField::constant(0.0);
  FlatDistances r;
  Rng rng(derive_seed(p.seed, 0xF1A7));
  std::uniform_real_distribution<double> U(0.0, 2.0 * kPi);
  std::vector<Point> extras;
  while (r.pairs.size() < p.pairs) {
    Point a{U(rng), U(rng)}, b{U(rng), U(rng)};
    const double d = m.distance(a.coords, b.coords);
    if (d < p.min_pair) continue;
    r.d0.push_back(d);
    extras.push_back(a);
    extras.push_back(b);
    r.pairs.emplace_back(std::move(a), std::move(b));
  }
  const LatticeGraph g(m, f, p.spacing, p.eps, Estimator{}, p.seed, extras);
  r.d_f.resize(r.pairs.size());
  parallel_for(r.pairs.size(), [&](std::size_t i) {
    r.d_f[i] = g.distance(g.extra_node(2 * i), g.extra_node(2 * i + 1));
  });
  for (std::size_t i = 0; i < r.pairs.size(); ++i)
    r.max_rel_err = std::max(r.max_rel_err, std::abs(r.d_f[i] - r.d0[i]) / r.d0[i]);

  RefineOptions opt;
  opt.growth = p.growth;
  opt.seed = p.seed;
  r.refine = refine_distance(m, f, r.pairs, p.schedule, opt);
  for (std::size_t i = 0; i < r.pairs.size(); ++i)
    r.max_rel_err_extrapolated =
        std::max(r.max_rel_err_extrapolated, std::abs(r.refine.rows[i].extrapolated - r.d0[i]) / r.d0[i]);
  r.seconds = seconds_since(t0);
  return r;
}

IsoperimetricReport flat_isoperimetry(const FlatParams& p) {
  const Manifold m = Manifold::torus(2);
  const auto domains = discs(m, p.disc_radii, p.disc_centers, derive_seed(p.seed, 0x150), {});
  return isoperimetric_ratio(m, WeightField::constant(0.0), domains, p.budget, p.seed);
}

ConstantWeightCheck flat_constants(const FlatParams& p) {
  const Manifold m = Manifold::torus(2);
  const WeightField f = WeightField::constant(p.constant);
  const double eta = default_eta(m);
  const auto sampler = BallSampler::random(m, 16, {0.125 * eta, 0.25 * eta, 0.5 * eta, eta}, p.seed);
  ConstantWeightCheck c;
  c.C_rh = reverse_holder(m, f, 2.0, sampler, p.budget).value;
  c.C_ap = ap_product(m, f, 2.0, sampler, p.budget).value;
  return c;
}

// ---------------------------------------------------------------- sphere bubble

std::vector<BubbleRow> sphere_bubble(const BubbleParams& p) {
  const Manifold m = Manifold::sphere(3);
  const Point pole{0.0, 0.0, 0.0, 1.0};
  PointSet centers(4, 0.0);
  for (const auto& c : {std::vector<double>{0, 0, 0, -1}, std::vector<double>{1, 0, 0, 0},
                        std::vector<double>{0, 0.6, 0, -0.8}})
    centers.push_back(c);
  const SampleSet pts = m.sample_uniform(p.samples, derive_seed(p.seed, 0xB0B));
  std::vector<BubbleRow> rows;
  for (double lambda : p.lambdas) {
    const WeightField f = WeightField::sphere_bubble(lambda, pole);
    BubbleRow row;
    row.lambda = lambda;
    const double ref = m.background_scalar_curvature();
    for (std::size_t i = 0; i < pts.size(); ++i)
      row.max_rel_scal_err = std::max(row.max_rel_scal_err, std::abs(scalar_curvature(m, f, pts[i]).scal - ref) / ref);
    row.total_mass = total_mass(m, f, p.budget, p.seed).value;
    row.pinching = pinching_profile(m, f, p.R0, centers, p.budget, p.seed);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------- log cusp

CuspResult log_cusp(const CuspParams& p) {
  const Manifold m = Manifold::torus(2);
  const Point x0{kPi, kPi};
  CuspResult r;
  r.points = uniform_points(m, p.random_points, derive_seed(p.seed, 0xC05));
  for (double d : p.near_radii) {
    r.points.push_back(Point{kPi + d, kPi});
    r.points.push_back(Point{kPi - d, kPi + 0.3 * d});
  }
  r.caps = p.caps;
  r.caps.push_back(WeightField::kNoCap);
  const double h = 2.0 * kPi / static_cast<double>(p.nodes);
  const DistanceMatrix d0 = background_matrix(m, r.points);
  for (double cap : r.caps) {
    const WeightField f = WeightField::log_cusp(x0, p.R0, cap);
    r.matrices.push_back(lattice_distances(m, f, r.points, h, p.ratio * h, Estimator{}, p.seed));
    const double mass = total_mass(m, f, 65536, p.seed).value;
    r.fits.push_back(biholder_fit(r.matrices.back(), d0, mass, 2));
  }
  r.sup_diff_to_limit =
      sup_difference(std::span(r.matrices.data(), r.matrices.size() - 1), r.matrices.back());
  r.flat_diameter = m.diameter();
  return r;
}

// ---------------------------------------------------------------- Burago torus

StableStage burago_stable_norm(const BuragoParams& p) {
  const auto t0 = std::chrono::steady_clock::now();
  const Manifold m = Manifold::torus(2);
  const WeightField f = WeightField::burago(1);
  StableNormOptions opt;
  opt.ratio = p.stable_ratio;
  opt.seed = p.seed;
  StableStage s;
  const double e1[] = {1.0, 0.0}, e2[] = {0.0, 1.0};
  s.e1 = stable_norm(m, f, e1, p.t_list, opt);
  s.e2 = stable_norm(m, f, e2, p.t_list, opt);
  s.seconds = seconds_since(t0);
  return s;
}

ConvergenceStage burago_convergence(const BuragoParams& p) {
  const Manifold m = Manifold::torus(2);
  ConvergenceStage s;
  s.ells = p.conv_ells;
  // Vertical pairs across all phases of x1: the worst case of |d_l - d_2l| sits
  // at columns far from the valleys of one scale and close to those of the other.
  const std::size_t K = p.conv_columns;
  for (std::size_t i = 0; i < K; ++i) {
    const double x = 2.0 * kPi * (static_cast<double>(i) + 0.5) / static_cast<double>(K);
    s.points.push_back(Point{x, 0.3});
    s.points.push_back(Point{x, 0.3 + kPi});
  }
  const double h = 2.0 * kPi / static_cast<double>(p.conv_nodes);
  std::vector<WeightField> fields;
  for (int ell : s.ells) {
    fields.push_back(WeightField::burago(ell));
    const LatticeGraph g(m, fields.back(), h, p.conv_ratio * h, Estimator{}, p.seed, s.points);
    DistanceMatrix d;
    for (std::size_t i = 0; i < K; ++i) {
      d.sources.push_back(2 * i);
      d.targets.push_back(2 * i + 1);
    }
    d.values.assign(K * K, std::numeric_limits<double>::quiet_NaN());
    d.eps = p.conv_ratio * h;
    d.seed = p.seed;
    parallel_for(K, [&](std::size_t i) { d(i, i) = g.distance(g.extra_node(2 * i), g.extra_node(2 * i + 1)); });
    s.matrices.push_back(std::move(d));
  }
  s.table = converge_compare(s.matrices);
  s.testfns = {TestFunction{}, TestFunction::parse("cos:1,0", m), TestFunction::parse("bump:3.14159,3.14159:1", m)};
  s.weak = weak_star_test(m, fields, s.testfns, p.weak_budget, derive_seed(p.seed, 0x3EA));
  return s;
}

namespace {

struct StrongPoints {
  std::vector<Point> points;
};

std::vector<Point> strong_points(const Manifold& m, const BuragoParams& p) {
  std::vector<Point> pts = uniform_points(m, p.strong_random, derive_seed(p.seed, 0x57));
  // Pairs along x1 = const of length eta; on the valleys these see the
  // smallest distance per unit mass.
  for (std::size_t i = 0; i < p.strong_columns; ++i) {
    const double x = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(p.strong_columns);
    pts.push_back(Point{x, 0.5});
    pts.push_back(Point{x, 0.5 + p.eta});
  }
  return pts;
}

StrongRatio strong_for(const Manifold& m, const WeightField& f, const std::vector<Point>& pts,
                       const BuragoParams& p) {
  const double h = 2.0 * kPi / static_cast<double>(p.strong_nodes);
  const DistanceMatrix d = lattice_distances(m, f, pts, h, p.strong_ratio * h, Estimator{}, p.seed);
  // Pairs shorter than a few lattice steps measure the snapping, not d_f.
  const double min_d0 = 4.0 * h;
  std::vector<PairDistance> pairs;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double d0 = m.distance(pts[i].coords, pts[j].coords);
      if (d0 <= p.eta && d0 >= min_d0) pairs.push_back({pts[i], pts[j], d(i, j)});
    }
  return strong_ratio(m, f, pairs, p.eta, p.budget, derive_seed(p.seed, 0x5A));
}

AInftyOptions burago_ainfty_options(const BuragoParams& p) {
  AInftyOptions o;
  o.eta = p.eta;
  o.radius_fractions = {0.125, 0.25, 0.5, 1.0};
  o.budget = p.budget;
  o.seed = p.seed;
  return o;
}

}  // namespace

AInftyStage burago_ainfty(const BuragoParams& p) {
  const Manifold m = Manifold::torus(2);
  AInftyStage s;
  for (int ell : p.ap_ells) s.reports.push_back(ainfty_report(m, WeightField::burago(ell), burago_ainfty_options(p)));
  const auto pts = strong_points(m, p);
  for (int ell : p.strong_ells) s.strong.push_back({ell, strong_for(m, WeightField::burago(ell), pts, p)});
  // One ball of radius diam(M): the whole torus.
  BallSampler whole;
  whole.centers = PointSet(2, 0.0);
  const double origin[] = {0.0, 0.0};
  whole.centers.push_back(origin);
  whole.radii = {m.diameter()};
  whole.seed = p.seed;
  const WeightField f1 = WeightField::burago(1);
  s.full_C_rh = reverse_holder(m, f1, 2.0, whole, p.full_budget).value;
  s.full_C_ap = ap_product(m, f1, 2.0, whole, p.full_budget).value;
  return s;
}

std::vector<IsoperimetricReport> burago_isoperimetry(const BuragoParams& p) {
  const Manifold m = Manifold::torus(2);
  const auto domains = discs(m, p.disc_radii, p.disc_centers, derive_seed(p.seed, 0x150),
                             {Point{0.0, kPi}, Point{kPi, kPi}});
  std::vector<IsoperimetricReport> out;
  for (int ell : p.iso_ells) out.push_back(isoperimetric_ratio(m, WeightField::burago(ell), domains, p.budget, p.seed));
  return out;
}

ScalingStage burago_scaling(const BuragoParams& p) {
  const Manifold m = Manifold::torus(2);
  const WeightField base = WeightField::burago(p.scale_ell);
  const WeightField scaled = WeightField::scaled(base, p.scale_shift);
  const auto pts = strong_points(m, p);
  const auto domains = discs(m, p.disc_radii, p.disc_centers, derive_seed(p.seed, 0x150), {});
  AInftyOptions o = burago_ainfty_options(p);
  o.centers = 8;
  ScalingStage s;
  s.shift = p.scale_shift;
  auto side = [&](const WeightField& f) {
    ScalingSide out;
    const double h = 2.0 * kPi / 64.0;
    const DistanceMatrix d = lattice_distances(m, f, pts, h, 3.0 * h, Estimator{}, p.seed);
    out.distances = d.values;
    out.ainfty = ainfty_report(m, f, o);
    BuragoParams q = p;
    q.strong_nodes = 64;
    q.strong_ratio = 3.0;
    out.strong = strong_for(m, f, pts, q);
    out.iso = isoperimetric_ratio(m, f, domains, p.budget, p.seed);
    return out;
  };
  s.base = side(base);
  s.scaled = side(scaled);
  return s;
}

// ---------------------------------------------------------------- Schroedinger

std::vector<double> cosine_potential(const Manifold& m, const std::vector<std::size_t>& shape, double a) {
  const GridField g = GridField::sample(m, shape, [&](std::span<const double> x) {
    double v = a;
    for (std::size_t i = 0; i < std::min<std::size_t>(2, x.size()); ++i)
      v *= std::cos(2.0 * kPi * x[i] / m.periods()[i]);
    return v;
  });
  return g.values();
}

namespace {

Manifold schrodinger_torus(const SchrodingerParams& p) { return Manifold::torus({p.period, p.period, p.period}); }

std::vector<std::size_t> cube(std::size_t n) { return {n, n, n}; }

}  // namespace

SpectrumStage schrodinger_spectrum(const SchrodingerParams& p) {
  const Manifold m = schrodinger_torus(p);
  const std::size_t N = p.nodes * p.nodes * p.nodes;
  SpectrumStage s;
  s.shift = p.shift;
  s.lambda_zero = lowest_eigenpair(GridOperator(m, cube(p.nodes), std::vector<double>(N, 0.0))).lambda0;
  s.lambda_const = lowest_eigenpair(GridOperator(m, cube(p.nodes), std::vector<double>(N, p.shift))).lambda0;
  const Manifold m2 = Manifold::torus(2);
  s.dense_nodes = p.dense_nodes;
  const std::vector<std::size_t> shape{p.dense_nodes, p.dense_nodes};
  s.dense_potential = GridField::sample(m2, shape, [&](std::span<const double> x) {
                        return p.dense_amplitude * std::cos(x[0]);
                      }).values();
  s.dense_lambda = lowest_eigenpair(GridOperator(m2, shape, s.dense_potential), 1e-11).lambda0;
  return s;
}

ShiftStage schrodinger_shift(const SchrodingerParams& p) {
  const Manifold m = schrodinger_torus(p);
  const std::size_t N = p.nodes * p.nodes * p.nodes;
  const GridOperator grid(m, cube(p.nodes), std::vector<double>(N, 0.0));
  ShiftStage s;
  s.beta = estimate_sobolev_beta(grid, p.seed);
  const Point x0{0.5 * p.period, 0.5 * p.period, 0.5 * p.period};
  std::vector<double> q(N, 0.0), x(3);
  for (std::size_t k = 0; k < N; ++k) {
    grid.potential_field().node(k, x);
    const double t = m.distance(x0.coords, x) / p.gs_radius;
    if (t <= 1.0) q[k] = p.gs_amplitude * (1.0 - t) * (1.0 - t);
  }
  s.q_norm = grid.lp_norm(q, 1.5);
  s.positive = gs_shift_c0(grid, q, x0, p.gs_radius, s.beta.beta, 1e-10);
  for (double& v : q) v = -v;
  s.negative = gs_shift_c0(grid, q, x0, p.gs_radius, s.beta.beta, 1e-10);
  return s;
}

FixedPointStage schrodinger_fixed_point(const SchrodingerParams& p) {
  const Manifold m = schrodinger_torus(p);
  const auto V = cosine_potential(m, cube(p.nodes), p.amplitude);
  const GridOperator op(m, cube(p.nodes), V);
  FixedPointStage s;
  const std::vector<double> extra[] = {V};
  s.A = estimate_A(op, p.seed, extra);
  s.fixed = log_gradient_fixedpoint(op, 1e-12, 200, s.A.A, p.seed);
  s.ground = lowest_eigenpair(op, 1e-11);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t k = 0; k < op.size(); ++k) {
    const double r = std::exp(s.fixed.v[k]) / s.ground.phi[k];
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  s.ratio_spread = hi / lo - 1.0;
  return s;
}

DecompositionStage schrodinger_decomposition(const SchrodingerParams& p) {
  const Manifold m = schrodinger_torus(p);
  const auto V = cosine_potential(m, cube(p.nodes), p.amplitude);
  const GridOperator op(m, cube(p.nodes), V);
  DecompositionOptions opt;
  opt.seed = p.seed;
  opt.beta = estimate_sobolev_beta(op, p.seed).beta;
  const std::vector<double> extra[] = {V};
  opt.A = estimate_A(op, p.seed, extra).A;
  DecompositionStage s;
  s.scales = p.scales;
  for (double t : p.scales) {
    std::vector<double> Vt(V);
    for (double& v : Vt) v *= t;
    const double lambda = lowest_eigenpair(op.with_potential(Vt), 1e-12).lambda0;
    for (double& v : Vt) v += lambda;
    const GridOperator opt_op = op.with_potential(std::move(Vt));
    const SchrodingerSolve g = lowest_eigenpair(opt_op, 1e-12);
    s.rows.push_back(decompose_ground_state(opt_op, p.rho, g.phi, opt));
  }
  return s;
}

}  // namespace conflab::lab

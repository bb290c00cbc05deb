#include "conflab/metric.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <unordered_map>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "conflab/error.hpp"
#include "conflab/grid_io.hpp"
#include "conflab/integrate.hpp"
#include "conflab/parallel.hpp"
#include "conflab/random.hpp"

namespace conflab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t edge_key(std::uint64_t a, std::uint64_t b) {
  if (a > b) std::swap(a, b);
  return derive_seed(a, b);
}

}  // namespace

const char* to_string(EstimatorKind kind) noexcept {
  return kind == EstimatorKind::ChainBall ? "chain_ball" : "riemann_line";
}

EstimatorKind estimator_from_string(const std::string& s) {
  if (s == "chain_ball" || s == "ChainBall" || s == "chain") return EstimatorKind::ChainBall;
  if (s == "riemann_line" || s == "RiemannLine" || s == "line") return EstimatorKind::RiemannLine;
  throw InputError("unknown estimator '" + s + "' (expected riemann_line or chain_ball)");
}

void gauss_legendre01(int k, std::vector<double>& nodes, std::vector<double>& weights) {
  if (k < 1 || k > 64) throw InputError("Gauss rule: point count must be in [1, 64]");
  // Golub-Welsch on the Legendre Jacobi matrix.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(k, k);
  for (int i = 1; i < k; ++i) {
    const double b = i / std::sqrt(4.0 * i * i - 1.0);
    J(i, i - 1) = J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes.resize(static_cast<std::size_t>(k));
  weights.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    nodes[static_cast<std::size_t>(i)] = 0.5 * (es.eigenvalues()(i) + 1.0);
    const double v = es.eigenvectors()(0, i);
    weights[static_cast<std::size_t>(i)] = v * v;  // sums to 1 on [0, 1]
  }
}

EdgeWeigher::EdgeWeigher(const Manifold& m, const WeightField& field, Estimator est,
                         std::uint64_t seed)
    : m_(m), field_(field), est_(est), seed_(seed) {
  if (est_.kind == EstimatorKind::RiemannLine) gauss_legendre01(est_.quad_points, nodes_, weights_);
  if (est_.kind == EstimatorKind::ChainBall && est_.chain_samples < 1)
    throw InputError("ChainBall estimator needs at least one sample per edge");
  const double lo = field.bounds(m).first;
  if (std::isfinite(lo)) {
    lower_slope_ = std::exp(lo);
    if (est_.kind == EstimatorKind::ChainBall) lower_slope_ *= 0.5;
  }
}

double EdgeWeigher::operator()(std::span<const double> x, std::span<const double> y, double d0,
                               std::uint64_t key) const {
  if (d0 <= 0.0) return 0.0;
  const std::size_t d = m_.coord_dim();
  std::vector<double> p(d);
  const bool sphere = m_.kind() == ManifoldKind::Sphere;
  auto point_at = [&](double t) {
    if (sphere) {
      m_.geodesic_point(x, y, t, p);
    } else {
      for (std::size_t i = 0; i < d; ++i) p[i] = x[i] + t * (y[i] - x[i]);
      m_.canonicalize(p);
    }
  };
  if (est_.kind == EstimatorKind::RiemannLine) {
    double s = 0.0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      point_at(nodes_[k]);
      s += weights_[k] * std::exp(field_.eval(m_, p));
    }
    return s * d0;
  }
  point_at(0.5);
  const int n = m_.dim();
  const Integrand w = [n](std::span<const double>, double f) { return std::exp(n * f); };
  const BallSpec ball{Point(p), 0.5 * d0};
  const Measure mu = integrate_ball(m_, field_, ball, std::span(&w, 1), est_.chain_samples,
                                    derive_seed(seed_, key), /*field_local=*/false)[0];
  return std::pow(mu.value / unit_ball_volume(n), 1.0 / n);
}

// ---------------------------------------------------------------------------
// Explicit graph

namespace {

// Uniform binning with cell size >= eps, periodic per axis where flagged.
struct Binning {
  std::vector<long> cells;
  std::vector<double> origin, size;
  std::vector<bool> periodic;

  Binning(const Manifold& m, double eps) {
    const std::size_t D = m.coord_dim();
    cells.resize(D);
    origin.resize(D);
    size.resize(D);
    periodic.assign(D, false);
    for (std::size_t i = 0; i < D; ++i) {
      double lo = 0.0, len = 0.0;
      switch (m.kind()) {
        case ManifoldKind::Torus:
          len = m.periods()[i];
          periodic[i] = true;
          break;
        case ManifoldKind::Box:
          lo = m.extents()[i].lo;
          len = m.extents()[i].length();
          break;
        case ManifoldKind::Sphere:
          lo = -m.radius();
          len = 2.0 * m.radius();
          break;
      }
      cells[i] = std::max(1L, static_cast<long>(std::floor(len / eps)));
      origin[i] = lo;
      size[i] = len / static_cast<double>(cells[i]);
    }
  }

  long axis_cell(std::size_t i, double x) const {
    auto c = static_cast<long>(std::floor((x - origin[i]) / size[i]));
    if (periodic[i]) return ((c % cells[i]) + cells[i]) % cells[i];
    return std::clamp(c, 0L, cells[i] - 1);
  }

  std::uint64_t key(std::span<const long> c) const {
    std::uint64_t k = 0;
    for (std::size_t i = 0; i < c.size(); ++i) k = k * static_cast<std::uint64_t>(cells[i]) + static_cast<std::uint64_t>(c[i]);
    return k;
  }

  // Keys of the 3^D neighbourhood of cell c (deduplicated).
  std::vector<std::uint64_t> neighbourhood(std::span<const long> c) const {
    const std::size_t D = c.size();
    std::vector<std::uint64_t> out;
    std::vector<int> off(D, -1);
    std::vector<long> cc(D);
    for (;;) {
      bool ok = true;
      for (std::size_t i = 0; i < D; ++i) {
        long v = c[i] + off[i];
        if (periodic[i]) {
          v = ((v % cells[i]) + cells[i]) % cells[i];
        } else if (v < 0 || v >= cells[i]) {
          ok = false;
        }
        cc[i] = v;
      }
      if (ok) out.push_back(key(cc));
      std::size_t j = 0;
      while (j < D && ++off[j] > 1) off[j++] = -1;
      if (j == D) break;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

}  // namespace

EpsGraph build_graph(const Manifold& m, PointSet points, double eps, const WeightField& field,
                     const Estimator& est, std::uint64_t seed, bool allow_disconnected) {
  if (!(eps > 0.0)) throw InputError("build_graph: eps must be positive");
  if (points.dim() != m.coord_dim()) throw InputError("build_graph: point dimension mismatch");
  if (points.spacing() > 0.0 && eps < 3.0 * points.spacing() * (1.0 - 1e-12))
    throw InputError("build_graph: eps must be >= 3 * spacing (eps = " + std::to_string(eps) +
                     ", spacing = " + std::to_string(points.spacing()) + ")");
  if (points.size() >= std::numeric_limits<std::uint32_t>::max())
    throw ResourceError("build_graph: too many points");
  field.check_manifold(m);
  const std::size_t N = points.size();
  const std::size_t D = m.coord_dim();

  Binning bins(m, eps);
  std::vector<std::uint64_t> keys(N);
  std::vector<long> c(D);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t a = 0; a < D; ++a) c[a] = bins.axis_cell(a, points[i][a]);
    keys[i] = bins.key(c);
  }
  std::vector<std::uint32_t> order(N);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return keys[a] < keys[b]; });
  std::unordered_map<std::uint64_t, std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t s = 0; s < N;) {
    std::size_t e = s;
    while (e < N && keys[order[e]] == keys[order[s]]) ++e;
    ranges[keys[order[s]]] = {s, e};
    s = e;
  }

  struct Edge {
    std::uint32_t a, b;
    double d0;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t a = 0; a < D; ++a) c[a] = bins.axis_cell(a, points[i][a]);
    for (std::uint64_t k : bins.neighbourhood(c)) {
      auto it = ranges.find(k);
      if (it == ranges.end()) continue;
      for (std::size_t s = it->second.first; s < it->second.second; ++s) {
        const std::uint32_t j = order[s];
        if (j <= i) continue;
        const double d = m.distance(points[i], points[j]);
        if (d <= eps) edges.push_back({static_cast<std::uint32_t>(i), j, d});
      }
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    return x.a != y.a ? x.a < y.a : x.b < y.b;
  });

  EdgeWeigher weigh(m, field, est, seed);
  std::vector<double> w(edges.size());
  constexpr std::size_t kChunk = 2048;
  parallel_for((edges.size() + kChunk - 1) / kChunk, [&](std::size_t ch) {
    std::vector<double> y(D);
    const std::size_t end = std::min(edges.size(), (ch + 1) * kChunk);
    for (std::size_t e = ch * kChunk; e < end; ++e) {
      const auto x = points[edges[e].a];
      if (m.kind() == ManifoldKind::Sphere) {
        std::copy(points[edges[e].b].begin(), points[edges[e].b].end(), y.begin());
      } else {
        m.displacement(x, points[edges[e].b], y);
        for (std::size_t a = 0; a < D; ++a) y[a] += x[a];
      }
      w[e] = weigh(x, y, edges[e].d0, edge_key(edges[e].a, edges[e].b));
      if (!std::isfinite(w[e]) || w[e] < 0.0)
        throw ConstructionError("build_graph: non-finite edge weight between nodes " +
                                std::to_string(edges[e].a) + " and " + std::to_string(edges[e].b));
    }
  });

  EpsGraph g;
  g.eps_ = eps;
  g.est_ = est;
  g.seed_ = seed;
  g.offsets_.assign(N + 1, 0);
  for (const auto& e : edges) {
    ++g.offsets_[e.a + 1];
    ++g.offsets_[e.b + 1];
  }
  for (std::size_t i = 0; i < N; ++i) g.offsets_[i + 1] += g.offsets_[i];
  g.targets_.resize(2 * edges.size());
  g.weights_.resize(2 * edges.size());
  g.d0_.resize(2 * edges.size());
  std::vector<std::size_t> fill(g.offsets_.begin(), g.offsets_.end() - 1);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [a, b, d] = edges[e];
    g.targets_[fill[a]] = b;
    g.weights_[fill[a]] = w[e];
    g.d0_[fill[a]++] = static_cast<float>(d);
    g.targets_[fill[b]] = a;
    g.weights_[fill[b]] = w[e];
    g.d0_[fill[b]++] = static_cast<float>(d);
  }
  g.points_ = std::move(points);
  if (!allow_disconnected) {
    const std::size_t k = g.components();
    if (k != 1)
      throw ConstructionError("build_graph: graph has " + std::to_string(k) +
                              " connected components; increase eps");
  }
  return g;
}

std::size_t EpsGraph::components(std::vector<std::uint32_t>* labels) const {
  const std::size_t N = node_count();
  std::vector<std::uint32_t> lab(N, std::numeric_limits<std::uint32_t>::max());
  std::uint32_t count = 0;
  std::vector<std::uint32_t> stack;
  for (std::size_t s = 0; s < N; ++s) {
    if (lab[s] != std::numeric_limits<std::uint32_t>::max()) continue;
    lab[s] = count;
    stack.push_back(static_cast<std::uint32_t>(s));
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (auto v : neighbors(u))
        if (lab[v] == std::numeric_limits<std::uint32_t>::max()) {
          lab[v] = count;
          stack.push_back(v);
        }
    }
    ++count;
  }
  if (labels) *labels = std::move(lab);
  return count;
}

std::size_t DistanceMatrix::row_of(std::size_t source_node) const {
  auto it = std::find(sources.begin(), sources.end(), source_node);
  if (it == sources.end()) throw InputError("distance matrix has no row for node " + std::to_string(source_node));
  return static_cast<std::size_t>(it - sources.begin());
}

std::size_t DistanceMatrix::col_of(std::size_t target_node) const {
  auto it = std::find(targets.begin(), targets.end(), target_node);
  if (it == targets.end()) throw InputError("distance matrix has no column for node " + std::to_string(target_node));
  return static_cast<std::size_t>(it - targets.begin());
}

double DistanceMatrix::between(std::size_t s, std::size_t t) const {
  return (*this)(row_of(s), col_of(t));
}

namespace {

std::vector<double> dijkstra(const EpsGraph& g, std::size_t src, std::span<const std::size_t> targets) {
  const std::size_t N = g.node_count();
  std::vector<double> dist(N, kInf);
  std::vector<char> done(N, 0);
  std::vector<char> wanted;
  std::size_t remaining = targets.size();
  if (!targets.empty()) {
    wanted.assign(N, 0);
    for (auto t : targets) wanted[t] = 1;
    remaining = static_cast<std::size_t>(std::count(wanted.begin(), wanted.end(), 1));
  }
  using Item = std::pair<double, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[src] = 0.0;
  heap.push({0.0, static_cast<std::uint32_t>(src)});
  while (!heap.empty()) {
    const auto [du, u] = heap.top();
    heap.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (!wanted.empty() && wanted[u] && --remaining == 0) break;
    const auto nb = g.neighbors(u);
    const auto w = g.weights(u);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const double nd = du + w[k];
      if (nd < dist[nb[k]]) {
        dist[nb[k]] = nd;
        heap.push({nd, nb[k]});
      }
    }
  }
  return dist;
}

}  // namespace

DistanceMatrix shortest_paths(const EpsGraph& g, std::span<const std::size_t> sources,
                              std::span<const std::size_t> targets) {
  const std::size_t N = g.node_count();
  for (auto s : sources)
    if (s >= N) throw InputError("shortest_paths: source index out of range");
  for (auto t : targets)
    if (t >= N) throw InputError("shortest_paths: target index out of range");
  DistanceMatrix d;
  d.sources.assign(sources.begin(), sources.end());
  if (targets.empty()) {
    d.targets.resize(N);
    std::iota(d.targets.begin(), d.targets.end(), std::size_t{0});
  } else {
    d.targets.assign(targets.begin(), targets.end());
  }
  d.eps = g.eps();
  d.estimator = g.estimator().kind;
  d.seed = g.seed();
  d.values.assign(d.sources.size() * d.targets.size(), kInf);
  parallel_for(d.sources.size(), [&](std::size_t r) {
    const auto dist = dijkstra(g, d.sources[r], targets);
    for (std::size_t c = 0; c < d.targets.size(); ++c) d(r, c) = dist[d.targets[c]];
    // Exact zero diagonal regardless of rounding.
    for (std::size_t c = 0; c < d.targets.size(); ++c)
      if (d.targets[c] == d.sources[r]) d(r, c) = 0.0;
  });
  return d;
}

DistanceMatrix background_distances(const Manifold& m, const PointSet& points,
                                    std::span<const std::size_t> sources,
                                    std::span<const std::size_t> targets) {
  DistanceMatrix d;
  d.sources.assign(sources.begin(), sources.end());
  d.targets.assign(targets.begin(), targets.end());
  d.values.resize(d.sources.size() * d.targets.size());
  for (std::size_t r = 0; r < d.rows(); ++r)
    for (std::size_t c = 0; c < d.cols(); ++c)
      d(r, c) = m.distance(points[d.sources[r]], points[d.targets[c]]);
  return d;
}

// ---------------------------------------------------------------------------
// Implicit lattice graph

struct LatticeGraph::Impl {
  Manifold m;
  WeightField field;
  EdgeWeigher weigh;
  double spacing = 0.0, eps = 0.0;
  std::size_t n = 0;
  bool periodic = false;  // wrap indices (the torus itself)
  std::vector<long> lo, count;
  std::vector<double> h, origin;
  std::size_t lattice = 0;
  std::function<bool(std::span<const double>)> member;  // optional corridor

  struct Offset {
    std::vector<long> o;
    double len;
  };
  std::vector<Offset> stencil;

  struct Link {
    std::size_t node;
    double d0;
  };
  std::vector<std::vector<double>> extra_x;
  std::vector<std::vector<Link>> extra_links;
  std::unordered_map<std::size_t, std::vector<std::size_t>> lattice_to_extras;

  Impl(const Manifold& mm, const WeightField& f, const Estimator& est, std::uint64_t seed)
      : m(mm), field(f), weigh(mm, f, est, seed) {}

  void build_stencil() {
    const auto reach = [&](std::size_t i) { return static_cast<long>(std::floor(eps / h[i] + 1e-9)); };
    std::vector<long> o(n), r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = reach(i);
    for (std::size_t i = 0; i < n; ++i) o[i] = -r[i];
    for (;;) {
      double len2 = 0.0;
      bool zero = true;
      for (std::size_t i = 0; i < n; ++i) {
        len2 += (o[i] * h[i]) * (o[i] * h[i]);
        zero = zero && o[i] == 0;
      }
      if (!zero && std::sqrt(len2) <= eps * (1.0 + 1e-12)) stencil.push_back({o, std::sqrt(len2)});
      std::size_t j = 0;
      while (j < n && ++o[j] > r[j]) {
        o[j] = -r[j];
        ++j;
      }
      if (j == n) break;
    }
  }

  void coords(std::size_t node, std::span<double> x) const {
    if (node >= lattice) {
      const auto& e = extra_x[node - lattice];
      std::copy(e.begin(), e.end(), x.begin());
      return;
    }
    for (std::size_t i = n; i-- > 0;) {
      const long j = static_cast<long>(node % static_cast<std::size_t>(count[i])) + lo[i];
      node /= static_cast<std::size_t>(count[i]);
      x[i] = origin[i] + static_cast<double>(j) * h[i];
    }
  }

  void index(std::size_t node, std::span<long> idx) const {
    for (std::size_t i = n; i-- > 0;) {
      idx[i] = static_cast<long>(node % static_cast<std::size_t>(count[i]));
      node /= static_cast<std::size_t>(count[i]);
    }
  }

  // Flat node for relative indices (already offset by lo); npos if outside.
  std::size_t flat(std::span<long> idx) const {
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      long v = idx[i];
      if (periodic) {
        v = ((v % count[i]) + count[i]) % count[i];
      } else if (v < 0 || v >= count[i]) {
        return std::numeric_limits<std::size_t>::max();
      }
      k = k * static_cast<std::size_t>(count[i]) + static_cast<std::size_t>(v);
    }
    return k;
  }

  bool is_member(std::size_t node) const {
    if (!member || node >= lattice) return true;
    std::vector<double> x(n);
    coords(node, x);
    return member(x);
  }

  // Displacement from a to b in chart (minimal image on the torus).
  void displacement(std::span<const double> a, std::span<const double> b, std::span<double> out) const {
    if (periodic) {
      m.displacement(a, b, out);
    } else {
      for (std::size_t i = 0; i < n; ++i) out[i] = b[i] - a[i];
    }
  }

  double d0(std::span<const double> a, std::span<const double> b) const {
    std::vector<double> dv(n);
    displacement(a, b, dv);
    double s = 0.0;
    for (double v : dv) s += v * v;
    return std::sqrt(s);
  }

  void add_extras(std::span<const Point> extras) {
    std::vector<double> x(n);
    std::vector<long> base(n), idx(n), r(n);
    for (std::size_t k = 0; k < extras.size(); ++k) {
      if (extras[k].size() != n) throw InputError("LatticeGraph: extra point dimension mismatch");
      extra_x.push_back(extras[k].coords);
      extra_links.emplace_back();
    }
    for (std::size_t k = 0; k < extra_x.size(); ++k) {
      const auto& e = extra_x[k];
      const std::size_t id = lattice + k;
      for (std::size_t i = 0; i < n; ++i) {
        base[i] = static_cast<long>(std::floor((e[i] - origin[i]) / h[i])) - lo[i];
        r[i] = static_cast<long>(std::ceil(eps / h[i])) + 1;
      }
      std::vector<long> o(n);
      for (std::size_t i = 0; i < n; ++i) o[i] = -r[i];
      for (;;) {
        for (std::size_t i = 0; i < n; ++i) idx[i] = base[i] + o[i];
        const std::size_t node = flat(idx);
        if (node != std::numeric_limits<std::size_t>::max() && is_member(node)) {
          coords(node, x);
          const double d = d0(e, x);
          if (d <= eps) {
            extra_links[k].push_back({node, d});
            lattice_to_extras[node].push_back(id);
          }
        }
        std::size_t j = 0;
        while (j < n && ++o[j] > r[j]) {
          o[j] = -r[j];
          ++j;
        }
        if (j == n) break;
      }
      for (std::size_t k2 = 0; k2 < extra_x.size(); ++k2) {
        if (k2 == k) continue;
        const double d = d0(e, extra_x[k2]);
        if (d <= eps) extra_links[k].push_back({lattice + k2, d});
      }
      // A lattice point may be listed more than once under periodic wrap.
      auto& links = extra_links[k];
      std::sort(links.begin(), links.end(), [](const Link& a, const Link& b) { return a.node < b.node; });
      links.erase(std::unique(links.begin(), links.end(),
                              [](const Link& a, const Link& b) { return a.node == b.node; }),
                  links.end());
    }
    for (auto& [node, list] : lattice_to_extras) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    for (const auto& links : extra_links)
      if (links.empty()) throw ConstructionError("LatticeGraph: an extra point has no neighbour within eps");
  }

  // Edge weight, always evaluated from the lower node id so both directions agree.
  double edge(std::size_t u, std::size_t v, double len) const {
    std::vector<double> xu(n), xv(n), dv(n);
    if (u > v) std::swap(u, v);
    coords(u, xu);
    coords(v, xv);
    displacement(xu, xv, dv);
    for (std::size_t i = 0; i < n; ++i) xv[i] = xu[i] + dv[i];
    return weigh(xu, xv, len, edge_key(u, v));
  }

  template <typename Fn>
  void for_each_neighbour(std::size_t u, Fn&& fn) const {
    if (u >= lattice) {
      for (const auto& l : extra_links[u - lattice]) fn(l.node, l.d0);
      return;
    }
    std::vector<long> idx(n), nb(n);
    index(u, idx);
    for (const auto& s : stencil) {
      for (std::size_t i = 0; i < n; ++i) nb[i] = idx[i] + s.o[i];
      const std::size_t v = flat(nb);
      if (v == std::numeric_limits<std::size_t>::max() || v == u) continue;
      if (member && !is_member(v)) continue;
      fn(v, s.len);
    }
    if (auto it = lattice_to_extras.find(u); it != lattice_to_extras.end()) {
      std::vector<double> xu(n);
      coords(u, xu);
      for (auto e : it->second) fn(e, d0(xu, extra_x[e - lattice]));
    }
  }

  // A* (heuristic slope * d0 to `goal`) or plain Dijkstra to a target set.
  std::vector<double> search(std::size_t from, std::span<const std::size_t> goals, bool astar) const {
    const std::size_t N = lattice + extra_x.size();
    std::vector<double> dist(N, kInf);
    std::vector<char> done(N, 0);
    std::vector<char> wanted(N, 0);
    std::size_t remaining = 0;
    for (auto g : goals)
      if (!wanted[g]) {
        wanted[g] = 1;
        ++remaining;
      }
    std::vector<double> goal_x(n), xv(n);
    const double slope = astar ? weigh.lower_slope() : 0.0;
    if (astar) coords(goals[0], goal_x);
    auto heuristic = [&](std::size_t v) {
      if (slope == 0.0) return 0.0;
      coords(v, xv);
      return slope * d0(xv, goal_x);
    };
    struct Item {
      double key, g;
      std::size_t node;
      bool operator>(const Item& o) const { return key > o.key; }
    };
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[from] = 0.0;
    heap.push({heuristic(from), 0.0, from});
    while (!heap.empty() && remaining > 0) {
      const Item it = heap.top();
      heap.pop();
      const std::size_t u = it.node;
      if (done[u] || it.g > dist[u]) continue;
      done[u] = 1;
      if (wanted[u] && --remaining == 0) break;
      for_each_neighbour(u, [&](std::size_t v, double len) {
        if (done[v]) return;
        const double nd = it.g + edge(u, v, len);
        if (nd < dist[v]) {
          dist[v] = nd;
          heap.push({nd + heuristic(v), nd, v});
        }
      });
    }
    std::vector<double> out;
    out.reserve(goals.size());
    for (auto g : goals) out.push_back(dist[g]);
    return out;
  }
};

LatticeGraph::LatticeGraph(const Manifold& m, const WeightField& field, double spacing, double eps,
                           const Estimator& est, std::uint64_t seed, std::span<const Point> extras,
                           std::size_t budget) {
  if (m.kind() == ManifoldKind::Sphere) throw UnsupportedError("LatticeGraph: Torus and Box only");
  if (!(spacing > 0.0) || !(eps > 0.0)) throw InputError("LatticeGraph: spacing and eps must be positive");
  if (eps < 3.0 * spacing * (1.0 - 1e-12)) throw InputError("LatticeGraph: eps must be >= 3 * spacing");
  field.check_manifold(m);
  auto impl = std::make_unique<Impl>(m, field, est, seed);
  const std::size_t n = static_cast<std::size_t>(m.dim());
  impl->n = n;
  impl->spacing = spacing;
  impl->eps = eps;
  impl->periodic = m.kind() == ManifoldKind::Torus;
  impl->lo.assign(n, 0);
  impl->count.resize(n);
  impl->h.resize(n);
  impl->origin.resize(n);
  double total = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (impl->periodic) {
      const double p = m.periods()[i];
      impl->count[i] = std::max(1L, static_cast<long>(std::ceil(p / spacing - 1e-9)));
      impl->h[i] = p / static_cast<double>(impl->count[i]);
      impl->origin[i] = 0.0;
    } else {
      const double L = m.extents()[i].length();
      const long c = std::max(1L, static_cast<long>(std::ceil(L / spacing - 1e-9)));
      impl->count[i] = c + 1;
      impl->h[i] = L / static_cast<double>(c);
      impl->origin[i] = m.extents()[i].lo;
    }
    if (impl->periodic && eps >= 0.5 * m.periods()[i])
      throw InputError("LatticeGraph: eps must be below half of every period");
    total *= static_cast<double>(impl->count[i]);
  }
  if (total > static_cast<double>(budget))
    throw ResourceError("LatticeGraph: requires " + std::to_string(static_cast<std::uint64_t>(total)) +
                        " lattice points, budget is " + std::to_string(budget));
  impl->lattice = static_cast<std::size_t>(total);
  impl->build_stencil();
  impl->add_extras(extras);
  impl_ = std::move(impl);
}

LatticeGraph::~LatticeGraph() = default;
LatticeGraph::LatticeGraph(LatticeGraph&&) noexcept = default;
LatticeGraph& LatticeGraph::operator=(LatticeGraph&&) noexcept = default;

std::size_t LatticeGraph::lattice_size() const noexcept { return impl_->lattice; }
std::size_t LatticeGraph::size() const noexcept { return impl_->lattice + impl_->extra_x.size(); }
double LatticeGraph::spacing() const noexcept { return impl_->spacing; }
double LatticeGraph::eps() const noexcept { return impl_->eps; }

std::size_t LatticeGraph::nearest_node(std::span<const double> x) const {
  const auto& I = *impl_;
  std::vector<long> idx(I.n);
  for (std::size_t i = 0; i < I.n; ++i) {
    idx[i] = std::lround((x[i] - I.origin[i]) / I.h[i]) - I.lo[i];
    if (!I.periodic) idx[i] = std::clamp(idx[i], 0L, I.count[i] - 1);
  }
  return I.flat(idx);
}

Point LatticeGraph::node_point(std::size_t node) const {
  Point p;
  p.coords.resize(impl_->n);
  impl_->coords(node, p.coords);
  return p;
}

double LatticeGraph::distance(std::size_t from, std::size_t to) const {
  if (from >= size() || to >= size()) throw InputError("LatticeGraph: node out of range");
  if (from == to) return 0.0;
  const std::size_t goal[] = {to};
  return impl_->search(from, goal, true)[0];
}

std::vector<double> LatticeGraph::distances(std::size_t from, std::span<const std::size_t> to) const {
  for (auto t : to)
    if (t >= size()) throw InputError("LatticeGraph: node out of range");
  if (from >= size()) throw InputError("LatticeGraph: node out of range");
  auto d = impl_->search(from, to, false);
  for (std::size_t k = 0; k < to.size(); ++k)
    if (to[k] == from) d[k] = 0.0;
  return d;
}

// ---------------------------------------------------------------------------
// Refinement

RefineRow extrapolate(std::span<const double> eps, std::span<const double> values) {
  RefineRow row;
  row.values.assign(values.begin(), values.end());
  const std::size_t K = values.size();
  if (K == 0) return row;
  const double finest = values[K - 1];
  row.extrapolated = finest;
  if (K < 3) return row;
  const double scale = std::abs(finest) + 1e-300;
  int sign = 0;
  bool flat = true;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const double d = values[k] - values[k + 1];
    if (std::abs(d) <= 1e-12 * scale) continue;
    flat = false;
    const int s = d > 0 ? 1 : -1;
    if (sign != 0 && s != sign) {
      row.warning = true;
      return row;
    }
    sign = s;
  }
  if (flat) return row;

  // Least squares in (a, b) for fixed q; golden-section search over q.
  auto fit = [&](double q, double* a_out, double* b_out) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const double x = std::pow(eps[k], q);
      sx += x;
      sy += values[k];
      sxx += x * x;
      sxy += x * values[k];
    }
    const double det = K * sxx - sx * sx;
    const double b = det != 0.0 ? (K * sxy - sx * sy) / det : 0.0;
    const double a = (sy - b * sx) / K;
    double r = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double e = a + b * std::pow(eps[k], q) - values[k];
      r += e * e;
    }
    if (a_out) *a_out = a;
    if (b_out) *b_out = b;
    return r;
  };
  constexpr double kQmin = 0.1, kQmax = 8.0;
  double best_q = kQmin, best_r = kInf;
  for (int i = 0; i <= 400; ++i) {
    const double q = kQmin + (kQmax - kQmin) * i / 400.0;
    const double r = fit(q, nullptr, nullptr);
    if (r < best_r) {
      best_r = r;
      best_q = q;
    }
  }
  double lo = std::max(kQmin, best_q - (kQmax - kQmin) / 400.0);
  double hi = std::min(kQmax, best_q + (kQmax - kQmin) / 400.0);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 60; ++it) {
    const double m1 = hi - phi * (hi - lo), m2 = lo + phi * (hi - lo);
    if (fit(m1, nullptr, nullptr) < fit(m2, nullptr, nullptr)) hi = m2; else lo = m1;
  }
  const double q = 0.5 * (lo + hi);
  double a = 0.0, b = 0.0;
  fit(q, &a, &b);
  if (q <= kQmin + 1e-6 || q >= kQmax - 1e-6 || !std::isfinite(a)) {
    row.warning = true;
    return row;
  }
  // The correction may not exceed the last observed step.
  const double step = std::abs(values[K - 2] - values[K - 1]);
  row.q = q;
  row.extrapolated = std::clamp(a, finest - step, finest + step);
  return row;
}

RefineResult refine_distance(const Manifold& m, const WeightField& field,
                             std::span<const std::pair<Point, Point>> pairs,
                             std::span<const double> eps_schedule, const RefineOptions& opt) {
  if (eps_schedule.empty()) throw InputError("refine_distance: empty eps schedule");
  for (std::size_t k = 0; k + 1 < eps_schedule.size(); ++k)
    if (!(eps_schedule[k + 1] < eps_schedule[k]))
      throw InputError("refine_distance: eps schedule must be strictly decreasing");
  if (!(opt.base_ratio >= 3.0)) throw InputError("refine_distance: eps/spacing ratio must be >= 3");
  RefineResult res;
  res.rows.resize(pairs.size());
  std::vector<Point> extras;
  for (const auto& [x, y] : pairs) {
    m.validate(x.coords);
    m.validate(y.coords);
    extras.push_back(m.canonical(x.coords));
    extras.push_back(m.canonical(y.coords));
  }
  for (std::size_t k = 0; k < eps_schedule.size(); ++k) {
    const double eps = eps_schedule[k];
    const double ratio = opt.base_ratio * std::pow(eps_schedule[0] / eps, opt.growth);
    const double spacing = eps / ratio;
    res.eps.push_back(eps);
    res.spacing.push_back(spacing);
    LatticeGraph g(m, field, spacing, eps, opt.estimator, derive_seed(opt.seed, k), extras, opt.budget);
    std::vector<double> d(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t p) {
      d[p] = g.distance(g.extra_node(2 * p), g.extra_node(2 * p + 1));
    });
    for (std::size_t p = 0; p < pairs.size(); ++p) res.rows[p].values.push_back(d[p]);
  }
  for (auto& row : res.rows) {
    auto values = row.values;
    row = extrapolate(res.eps, values);
  }
  return res;
}

FBall f_ball(const Manifold& m, const WeightField& field, const EpsGraph& g,
             const DistanceMatrix& dmat, std::size_t center_node, double r_f) {
  const std::size_t r = dmat.row_of(center_node);
  const PointSet& pts = g.points();
  bool zero_cells = true;
  for (double c : pts.cell_volumes()) zero_cells = zero_cells && c == 0.0;
  const double fallback = m.volume() / static_cast<double>(pts.size());
  FBall out;
  double max_d = 0.0;
  for (std::size_t c = 0; c < dmat.cols(); ++c) {
    const double d = dmat(r, c);
    if (std::isfinite(d)) max_d = std::max(max_d, d);
    if (d <= r_f) {
      const std::size_t node = dmat.targets[c];
      out.members.push_back(node);
      const double cell = zero_cells ? fallback : pts.cell_volume(node);
      out.mass += field.weight(m, pts[node]) * cell;
    }
  }
  out.coverage_warning = r_f >= max_d;
  return out;
}

// ---------------------------------------------------------------------------
// Stable norm

namespace {

std::unique_ptr<LatticeGraph::Impl> cover_strip(const Manifold& m, const WeightField& field,
                                                const StableNormOptions& opt, double spacing,
                                                double eps, std::span<const double> vhat,
                                                double length, double corridor, double margin,
                                                std::span<const Point> extras) {
  auto I = std::make_unique<LatticeGraph::Impl>(m, field, opt.estimator, opt.seed);
  const std::size_t n = static_cast<std::size_t>(m.dim());
  I->n = n;
  I->spacing = spacing;
  I->eps = eps;
  I->periodic = false;
  I->lo.resize(n);
  I->count.resize(n);
  I->h.resize(n);
  I->origin.assign(n, 0.0);
  double total = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = m.periods()[i];
    I->h[i] = p / std::max(1.0, std::ceil(p / spacing - 1e-9));
    const double a = std::min(0.0, length * vhat[i]) - margin - corridor;
    const double b = std::max(0.0, length * vhat[i]) + margin + corridor;
    I->lo[i] = static_cast<long>(std::floor(a / I->h[i]));
    I->count[i] = static_cast<long>(std::ceil(b / I->h[i])) - I->lo[i] + 1;
    total *= static_cast<double>(I->count[i]);
  }
  if (total > static_cast<double>(opt.budget))
    throw ResourceError("stable_norm: cover strip needs " + std::to_string(static_cast<std::uint64_t>(total)) +
                        " lattice points, budget is " + std::to_string(opt.budget));
  // Lattice coordinates are origin + (lo + j) h; fold lo into the origin.
  for (std::size_t i = 0; i < n; ++i) {
    I->origin[i] = static_cast<double>(I->lo[i]) * I->h[i];
    I->lo[i] = 0;
  }
  I->lattice = static_cast<std::size_t>(total);
  std::vector<double> vh(vhat.begin(), vhat.end());
  I->member = [vh, length, corridor, margin](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * vh[i];
    if (s < -margin || s > length + margin) return false;
    double perp = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double w = x[i] - s * vh[i];
      perp += w * w;
    }
    return perp <= corridor * corridor;
  };
  I->build_stencil();
  I->add_extras(extras);
  return I;
}

}  // namespace

StableNormResult stable_norm(const Manifold& m, const WeightField& field, std::span<const double> v,
                             std::span<const double> t_list, const StableNormOptions& opt) {
  if (m.kind() != ManifoldKind::Torus) throw InputError("stable_norm: requires a torus");
  field.check_manifold(m);
  const std::size_t n = static_cast<std::size_t>(m.dim());
  if (v.size() != n) throw InputError("stable_norm: direction dimension mismatch");
  double vlen = 0.0;
  for (double x : v) vlen += x * x;
  vlen = std::sqrt(vlen);
  if (!(vlen > 0.0)) throw InputError("stable_norm: direction must be nonzero");
  if (t_list.empty()) throw InputError("stable_norm: empty t list");
  for (std::size_t k = 0; k < t_list.size(); ++k)
    if (!(t_list[k] > 0.0) || (k > 0 && !(t_list[k] > t_list[k - 1])))
      throw InputError("stable_norm: t list must be positive and increasing");
  const double spacing = opt.spacing > 0.0 ? opt.spacing : m.min_period() / 64.0;
  if (!(opt.ratio >= 3.0)) throw InputError("stable_norm: eps/spacing ratio must be >= 3");
  const double eps = opt.ratio * spacing;
  const double corridor =
      opt.corridor > 0.0 ? opt.corridor : *std::max_element(m.periods().begin(), m.periods().end());
  const double margin = opt.margin > 0.0 ? opt.margin : 2.0 * eps;
  std::vector<double> vhat(v.begin(), v.end());
  for (double& x : vhat) x /= vlen;

  auto run = [&](double corr, std::span<const double> ts) {
    const double length = ts.back() * vlen;
    std::vector<Point> extras;
    extras.push_back(Point(std::vector<double>(n, 0.0)));
    for (double t : ts) {
      Point p;
      p.coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) p.coords[i] = t * v[i];
      extras.push_back(std::move(p));
    }
    auto I = cover_strip(m, field, opt, spacing, eps, vhat, length, corr, margin, extras);
    std::vector<double> d(ts.size());
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const std::size_t goal[] = {I->lattice + 1 + k};
      d[k] = I->search(I->lattice, goal, true)[0];
    }
    return d;
  };

  StableNormResult r;
  r.t.assign(t_list.begin(), t_list.end());
  const auto d = run(corridor, t_list);
  double running = kInf;
  for (std::size_t k = 0; k < d.size(); ++k) {
    r.ratio.push_back(d[k] / t_list[k]);
    running = std::min(running, r.ratio.back());
    r.corrected.push_back(running);
  }
  if (r.t.size() >= 2) {
    // Least squares a + b / t on the corrected sequence.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double K = static_cast<double>(r.t.size());
    for (std::size_t k = 0; k < r.t.size(); ++k) {
      const double x = 1.0 / r.t[k];
      sx += x;
      sy += r.corrected[k];
      sxx += x * x;
      sxy += x * r.corrected[k];
    }
    const double det = K * sxx - sx * sx;
    const double b = det != 0.0 ? (K * sxy - sx * sy) / det : 0.0;
    const double a = (sy - b * sx) / K;
    r.fit_slope = b;
    r.estimate = std::clamp(a, 0.0, r.corrected.back());
  } else {
    r.estimate = r.corrected.back();
  }
  if (opt.check_corridor) {
    const double last[] = {t_list.back()};
    const double wide = run(2.0 * corridor, last)[0];
    r.corridor_change = std::abs(wide - d.back()) / d.back();
  }
  return r;
}

// ---------------------------------------------------------------------------
// Export

void write_matrix_csv(const std::filesystem::path& path, const DistanceMatrix& d) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << "source";
  for (auto t : d.targets) out << ',' << t;
  out << '\n';
  for (std::size_t r = 0; r < d.rows(); ++r) {
    out << d.sources[r];
    for (std::size_t c = 0; c < d.cols(); ++c) out << ',' << d(r, c);
    out << '\n';
  }
}

void write_matrix(const std::filesystem::path& manifest, const DistanceMatrix& d) {
  std::filesystem::path payload = manifest;
  payload.replace_extension(".f64");
  write_f64le(payload, d.values);
  nlohmann::json j{{"version", 1},
                   {"kind", "distance_matrix"},
                   {"sources", d.sources},
                   {"targets", d.targets},
                   {"eps", d.eps},
                   {"estimator", to_string(d.estimator)},
                   {"seed", d.seed},
                   {"payload", payload.filename().string()},
                   {"dtype", "f64le"},
                   {"order", "row-major"}};
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + manifest.string() + "' for writing");
  out << j.dump(2) << '\n';
}

DistanceMatrix read_matrix(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw FormatError("cannot open '" + manifest.string() + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("kind").get<std::string>() != "distance_matrix")
      throw FormatError("manifest is not a distance matrix");
    DistanceMatrix d;
    d.sources = j.at("sources").get<std::vector<std::size_t>>();
    d.targets = j.at("targets").get<std::vector<std::size_t>>();
    d.eps = j.at("eps").get<double>();
    d.estimator = estimator_from_string(j.at("estimator").get<std::string>());
    d.seed = j.at("seed").get<std::uint64_t>();
    d.values = read_f64le(manifest.parent_path() / j.at("payload").get<std::string>(),
                          d.sources.size() * d.targets.size());
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed matrix manifest: ") + e.what());
  }
}

nlohmann::json to_json(const RefineResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"values", row.values},
                    {"extrapolated", row.extrapolated},
                    {"q", row.q},
                    {"warning", row.warning}});
  return {{"eps", r.eps}, {"spacing", r.spacing}, {"rows", rows}};
}

nlohmann::json to_json(const StableNormResult& r) {
  return {{"t", r.t},
          {"ratio", r.ratio},
          {"corrected", r.corrected},
          {"estimate", r.estimate},
          {"fit_slope", r.fit_slope},
          {"corridor_change", r.corridor_change}};
}

}  // namespace conflab

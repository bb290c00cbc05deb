#include "conflab/schrodinger.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "conflab/error.hpp"
#include "conflab/parallel.hpp"
#include "conflab/random.hpp"

namespace conflab {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

Eigen::Map<const Vec> view(std::span<const double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

// Delta + diag(d).
SpMat assemble(const GridOperator& op, std::span<const double> diag) {
  const std::size_t N = op.size();
  const auto n = static_cast<std::size_t>(op.dim());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(N * (2 * n + 1));
  for (std::size_t k = 0; k < N; ++k) {
    double centre = diag.empty() ? 0.0 : diag[k];
    for (std::size_t a = 0; a < n; ++a) {
      const double c = 1.0 / (op.spacing(a) * op.spacing(a));
      centre += 2.0 * c;
      t.emplace_back(static_cast<int>(k), static_cast<int>(op.neighbour(k, a, +1)), -c);
      t.emplace_back(static_cast<int>(k), static_cast<int>(op.neighbour(k, a, -1)), -c);
    }
    t.emplace_back(static_cast<int>(k), static_cast<int>(k), centre);
  }
  SpMat A(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  A.setFromTriplets(t.begin(), t.end());  // duplicates (axes of length 2) are summed
  return A;
}

double norm2(std::span<const double> u) {
  double s = 0.0;
  for (double v : u) s += v * v;
  return std::sqrt(s);
}

}  // namespace

GridOperator::GridOperator(GridField potential) : V_(std::move(potential)) {
  if (V_.manifold().kind() != ManifoldKind::Torus)
    throw UnsupportedError("GridOperator: periodic grids on a torus only");
  const std::size_t n = V_.dim();
  stride_.assign(n, 1);
  for (std::size_t a = n - 1; a-- > 0;) stride_[a] = stride_[a + 1] * V_.shape()[a + 1];
  for (std::size_t a = 0; a < n; ++a) {
    if (V_.shape()[a] < 3) throw InputError("GridOperator: need at least 3 nodes per axis");
    cell_ *= V_.spacing(a);
  }
  for (double v : V_.values())
    if (!std::isfinite(v)) throw InputError("GridOperator: potential must be finite");
}

GridOperator::GridOperator(const Manifold& m, std::vector<std::size_t> shape, std::vector<double> potential)
    : GridOperator(GridField(m, std::move(shape), std::move(potential))) {}

GridOperator GridOperator::with_potential(std::vector<double> potential) const {
  return GridOperator(GridField(manifold(), shape(), std::move(potential)));
}

std::size_t GridOperator::neighbour(std::size_t k, std::size_t axis, int step) const {
  const std::size_t N = shape()[axis];
  const std::size_t i = (k / stride_[axis]) % N;
  const std::size_t j = (i + N + static_cast<std::size_t>(step + static_cast<int>(N))) % N;
  return k - i * stride_[axis] + j * stride_[axis];
}

void GridOperator::laplacian(std::span<const double> u, std::span<double> out) const {
  const std::size_t N = size();
  const std::size_t n = V_.dim();
  constexpr std::size_t kChunk = 4096;
  parallel_for((N + kChunk - 1) / kChunk, [&](std::size_t ch) {
    const std::size_t end = std::min(N, (ch + 1) * kChunk);
    for (std::size_t k = ch * kChunk; k < end; ++k) {
      double s = 0.0;
      for (std::size_t a = 0; a < n; ++a) {
        const double h = V_.spacing(a);
        s += (2.0 * u[k] - u[neighbour(k, a, 1)] - u[neighbour(k, a, -1)]) / (h * h);
      }
      out[k] = s;
    }
  });
}

void GridOperator::apply(std::span<const double> u, std::span<double> out) const {
  laplacian(u, out);
  const auto& V = V_.values();
  for (std::size_t k = 0; k < size(); ++k) out[k] -= V[k] * u[k];
}

void GridOperator::forward_diff(std::span<const double> u, std::size_t axis, std::span<double> out) const {
  const double h = V_.spacing(axis);
  for (std::size_t k = 0; k < size(); ++k) out[k] = (u[neighbour(k, axis, 1)] - u[k]) / h;
}

double GridOperator::dot(std::span<const double> a, std::span<const double> b) const {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s * cell_;
}

double GridOperator::lp_norm(std::span<const double> u, double p) const {
  double s = 0.0;
  for (double v : u) s += std::pow(std::abs(v), p);
  return std::pow(s * cell_, 1.0 / p);
}

double GridOperator::grad_norm(std::span<const double> u, double p) const {
  const std::size_t n = V_.dim();
  std::vector<double> sq(size(), 0.0), d(size());
  for (std::size_t a = 0; a < n; ++a) {
    forward_diff(u, a, d);
    for (std::size_t k = 0; k < size(); ++k) sq[k] += d[k] * d[k];
  }
  double s = 0.0;
  for (double v : sq) s += std::pow(v, 0.5 * p);
  return std::pow(s * cell_, 1.0 / p);
}

double GridOperator::mean(std::span<const double> u) const {
  return std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(u.size());
}

std::vector<double> GridOperator::inverse_laplacian(std::span<const double> g, double rel_tol) const {
  if (g.size() != size()) throw InputError("inverse_laplacian: size mismatch");
  const double m = mean(g);
  Vec rhs(static_cast<Eigen::Index>(size()));
  for (std::size_t k = 0; k < size(); ++k) rhs[static_cast<Eigen::Index>(k)] = g[k] - m;
  std::vector<double> out(size(), 0.0);
  if (rhs.norm() == 0.0) return out;
  const SpMat L = assemble(*this, {});
  Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(rel_tol);
  cg.setMaxIterations(static_cast<Eigen::Index>(std::max<std::size_t>(1000, 10 * size())));
  cg.compute(L);
  const Vec x = cg.solve(rhs);
  if (cg.info() != Eigen::Success && cg.error() > 1e3 * rel_tol)
    throw NumericError("inverse_laplacian: conjugate gradients stalled at relative residual " +
                       std::to_string(cg.error()));
  const double xm = x.mean();
  for (std::size_t k = 0; k < size(); ++k) out[k] = x[static_cast<Eigen::Index>(k)] - xm;
  return out;
}

SchrodingerSolve lowest_eigenpair(const GridOperator& op, double tol, int max_iter) {
  for (auto s : op.shape())
    if (s < 8) throw InputError("lowest_eigenpair: need at least 8 nodes per axis");
  if (!(tol > 0.0) || max_iter < 1) throw InputError("lowest_eigenpair: bad tolerance or iteration cap");
  const std::size_t N = op.size();
  const auto V = op.potential();
  const double vmax = *std::max_element(V.begin(), V.end());
  double vabs = 0.0;
  for (double v : V) vabs = std::max(vabs, std::abs(v));
  // lambda0 >= -max V, so Delta - V + sigma is positive definite.
  const double sigma = vmax + 0.1 * (1.0 + vabs);
  std::vector<double> diag(N);
  for (std::size_t k = 0; k < N; ++k) diag[k] = sigma - V[k];
  Eigen::SimplicialLDLT<SpMat> solver(assemble(op, diag));
  if (solver.info() != Eigen::Success) throw NumericError("lowest_eigenpair: factorization failed");

  SchrodingerSolve s;
  s.shift = sigma;
  std::vector<double> x(N, 1.0), Ax(N);
  std::vector<double> history;
  for (int it = 0; it <= max_iter; ++it) {
    const double nx = norm2(x);
    for (double& v : x) v /= nx;
    op.apply(x, Ax);
    double lam = 0.0;
    for (std::size_t k = 0; k < N; ++k) lam += x[k] * Ax[k];
    double r = 0.0;
    for (std::size_t k = 0; k < N; ++k) r += (Ax[k] - lam * x[k]) * (Ax[k] - lam * x[k]);
    r = std::sqrt(r);
    history.push_back(r);
    s.lambda0 = lam;
    s.residual = r;
    s.iterations = it;
    if (r <= tol) break;
    if (it == max_iter) {
      std::ostringstream msg;
      msg << "lowest_eigenpair: no convergence in " << max_iter << " iterations; residual history";
      for (std::size_t i = history.size() > 8 ? history.size() - 8 : 0; i < history.size(); ++i)
        msg << ' ' << history[i];
      throw NumericError(msg.str());
    }
    const Vec y = solver.solve(view(x));
    for (std::size_t k = 0; k < N; ++k) x[k] = y[static_cast<Eigen::Index>(k)];
  }
  const double sum = std::accumulate(x.begin(), x.end(), 0.0);
  if (sum < 0.0)
    for (double& v : x) v = -v;
  const double mx = *std::max_element(x.begin(), x.end());
  for (double& v : x) v /= mx;
  if (!(*std::min_element(x.begin(), x.end()) > 0.0))
    throw NumericError("lowest_eigenpair: ground state is not positive");
  s.phi = std::move(x);
  return s;
}

namespace {

double sobolev_quotient(const GridOperator& op, std::span<const double> phi, double pstar) {
  std::vector<double> L(phi.size());
  op.laplacian(phi, L);
  const double num = op.dot(phi, L) + op.dot(phi, phi);
  const double den = op.lp_norm(phi, pstar);
  return num / (den * den);
}

std::vector<std::size_t> random_nodes(const GridOperator& op, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, op.size() - 1);
  std::vector<std::size_t> out(count);
  for (auto& v : out) v = pick(rng);
  return out;
}

std::vector<double> gaussian_bump(const GridOperator& op, std::size_t centre, double width) {
  const Manifold& m = op.manifold();
  const std::size_t n = static_cast<std::size_t>(op.dim());
  std::vector<double> c(n), x(n), out(op.size());
  op.potential_field().node(centre, c);
  for (std::size_t k = 0; k < op.size(); ++k) {
    op.potential_field().node(k, x);
    const double d = m.distance(c, x);
    out[k] = std::exp(-0.5 * d * d / (width * width));
  }
  return out;
}

double min_spacing(const GridOperator& op) {
  double h = op.spacing(0);
  for (std::size_t a = 1; a < static_cast<std::size_t>(op.dim()); ++a) h = std::min(h, op.spacing(a));
  return h;
}

}  // namespace

SobolevEstimate estimate_sobolev_beta(const GridOperator& op, std::uint64_t seed) {
  const int n = op.dim();
  if (n < 3) throw InputError("estimate_sobolev_beta: n must be >= 3");
  const double pstar = 2.0 * n / (n - 2.0);
  SobolevEstimate e;
  e.constant_trial = std::pow(op.volume(), 2.0 / n);
  e.beta = e.constant_trial;
  e.trials = 1;
  std::vector<double> diag(op.size(), 1.0);
  Eigen::SimplicialLDLT<SpMat> solver(assemble(op, diag));
  const double h = min_spacing(op);
  const double L = op.manifold().min_period();
  for (std::size_t c : random_nodes(op, 3, seed)) {
    for (double w = h; w <= 0.25 * L; w *= 1.5) {
      std::vector<double> phi = gaussian_bump(op, c, w);
      e.beta = std::min(e.beta, sobolev_quotient(op, phi, pstar));
      ++e.trials;
      // phi <- (Delta + 1)^{-1} phi^{p*-1}: fixed points are critical points of the quotient.
      for (int it = 0; it < 20; ++it) {
        for (double& v : phi) v = std::pow(v, pstar - 1.0);
        const Vec y = solver.solve(view(phi));
        const double mx = y.maxCoeff();
        for (std::size_t k = 0; k < phi.size(); ++k) phi[k] = y[static_cast<Eigen::Index>(k)] / mx;
        e.beta = std::min(e.beta, sobolev_quotient(op, phi, pstar));
        ++e.trials;
      }
    }
  }
  return e;
}

namespace {

// T x = d Delta^{-1} x, one array per axis.
std::vector<std::vector<double>> apply_T(const GridOperator& op, std::span<const double> x) {
  const auto u = op.inverse_laplacian(x);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(op.dim()), std::vector<double>(op.size()));
  for (std::size_t a = 0; a < out.size(); ++a) op.forward_diff(u, a, out[a]);
  return out;
}

double vector_lp(const GridOperator& op, const std::vector<std::vector<double>>& y, double p) {
  double s = 0.0;
  for (std::size_t k = 0; k < op.size(); ++k) {
    double sq = 0.0;
    for (const auto& c : y) sq += c[k] * c[k];
    s += std::pow(sq, 0.5 * p);
  }
  return std::pow(s * op.cell_volume(), 1.0 / p);
}

void remove_mean(std::vector<double>& x) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  for (double& v : x) v -= m;
}

}  // namespace

OperatorNormEstimate estimate_A(const GridOperator& op, std::uint64_t seed,
                                std::span<const std::vector<double>> extra_trials) {
  const int n = op.dim();
  const double p = 0.5 * n, q = n;
  OperatorNormEstimate e;
  auto ratio = [&](std::vector<double> x) {
    remove_mean(x);
    const double den = op.lp_norm(x, p);
    if (!(den > 0.0)) return 0.0;
    return vector_lp(op, apply_T(op, x), q) / den;
  };
  std::vector<std::vector<double>> starts;
  const std::size_t dim = static_cast<std::size_t>(n);
  std::vector<double> x(dim);
  for (std::size_t a = 0; a < dim; ++a) {
    std::vector<double> t(op.size());
    for (std::size_t k = 0; k < op.size(); ++k) {
      op.potential_field().node(k, x);
      t[k] = std::cos(2.0 * std::numbers::pi * x[a] / op.manifold().periods()[a]);
    }
    starts.push_back(std::move(t));
  }
  const double h = min_spacing(op);
  const double L = op.manifold().min_period();
  for (std::size_t c : random_nodes(op, 2, seed))
    for (double w = h; w <= 0.25 * L; w *= 2.0) starts.push_back(gaussian_bump(op, c, w));
  {
    Rng rng(derive_seed(seed, 17));
    std::normal_distribution<double> g;
    std::vector<double> t(op.size());
    for (double& v : t) v = g(rng);
    starts.push_back(std::move(t));
  }
  for (const auto& t : extra_trials)
    if (t.size() == op.size()) starts.push_back(t);

  for (auto& s : starts) {
    e.A = std::max(e.A, ratio(s));
    ++e.trials;
  }
  if (n < 3) return e;  // dual exponent of L^1 is infinite; trials only
  // Nonlinear power iteration for ||T||_{p -> q}, from the best few starts.
  const double pd = p / (p - 1.0);
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < starts.size(); ++i) ranked.emplace_back(ratio(starts[i]), i);
  std::sort(ranked.rbegin(), ranked.rend());
  for (std::size_t r = 0; r < std::min<std::size_t>(3, ranked.size()); ++r) {
    std::vector<double> xk = starts[ranked[r].second];
    remove_mean(xk);
    for (int it = 0; it < 15; ++it) {
      const auto y = apply_T(op, xk);
      // z = |y|^{q-2} y, then T* z = Delta^{-1} (D+)^T z.
      std::vector<double> div(op.size(), 0.0);
      for (std::size_t k = 0; k < op.size(); ++k) {
        double sq = 0.0;
        for (const auto& c : y) sq += c[k] * c[k];
        const double scale = std::pow(sq, 0.5 * (q - 2.0));
        for (std::size_t a = 0; a < dim; ++a) {
          const double z = scale * y[a][k];
          const double ha = op.spacing(a);
          div[k] -= z / ha;
          div[op.neighbour(k, a, 1)] += z / ha;
        }
      }
      const auto s = op.inverse_laplacian(div);
      for (std::size_t k = 0; k < op.size(); ++k) {
        const double v = s[k];
        xk[k] = (v < 0 ? -1.0 : 1.0) * std::pow(std::abs(v), pd - 1.0);
      }
      remove_mean(xk);
      e.A = std::max(e.A, ratio(xk));
      ++e.trials;
    }
  }
  return e;
}

GsShift gs_shift_c0(const GridOperator& grid, std::span<const double> q, const Point& x0, double r0,
                    double beta, double tol) {
  const int n = grid.dim();
  if (n < 3) throw InputError("gs_shift_c0: n must be >= 3");
  if (q.size() != grid.size()) throw InputError("gs_shift_c0: q size does not match the grid");
  if (!(r0 > 0.0) || !(beta > 0.0) || !(tol > 0.0)) throw InputError("gs_shift_c0: r0, beta and tol must be positive");
  const Manifold& m = grid.manifold();
  m.validate(x0.coords);
  std::vector<char> inside(grid.size());
  std::vector<double> x(static_cast<std::size_t>(n));
  double ball_vol = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    grid.potential_field().node(k, x);
    inside[k] = m.distance(x0, x) <= r0 ? 1 : 0;
    if (inside[k]) ball_vol += grid.cell_volume();
    if (!inside[k] && q[k] != 0.0)
      throw InputError("gs_shift_c0: q is not supported in B(x0, r0) on the grid");
  }
  const double vol_limit = std::pow(0.5 * beta, 0.5 * n);
  if (ball_vol > vol_limit)
    throw InputError("gs_shift_c0: vol B(x0, r0) = " + std::to_string(ball_vol) +
                     " exceeds (beta/2)^{n/2} = " + std::to_string(vol_limit));
  const double qn = grid.lp_norm(q, 0.5 * n);
  if (qn > beta)
    throw InputError("gs_shift_c0: ||q||_{n/2} = " + std::to_string(qn) + " exceeds beta = " + std::to_string(beta));

  GsShift g;
  g.beta = beta;
  double q1 = 0.0;
  for (double v : q) q1 += std::abs(v);
  q1 *= grid.cell_volume();
  g.c_minus = -2.0 / grid.volume() * q1;
  g.c_plus = 2.0 / beta * qn;

  auto lambda = [&](double c) {
    std::vector<double> V(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) V[k] = -q[k] - (inside[k] ? 0.0 : c);
    return lowest_eigenpair(grid.with_potential(std::move(V)), 1e-11, 2000).lambda0;
  };
  g.lambda_minus = lambda(g.c_minus);
  g.lambda_plus = g.c_plus == g.c_minus ? g.lambda_minus : lambda(g.c_plus);
  if (std::abs(g.lambda_minus) <= tol) {
    g.c0 = g.c_minus;
    g.lambda0 = g.lambda_minus;
    return g;
  }
  if (std::abs(g.lambda_plus) <= tol) {
    g.c0 = g.c_plus;
    g.lambda0 = g.lambda_plus;
    return g;
  }
  if (g.lambda_minus > 0.0 || g.lambda_plus < 0.0) {
    std::ostringstream msg;
    msg << "gs_shift_c0: bracket does not straddle zero: lambda0(" << g.c_minus << ") = " << g.lambda_minus
        << ", lambda0(" << g.c_plus << ") = " << g.lambda_plus;
    throw NumericError(msg.str());
  }
  double a = g.c_minus, fa = g.lambda_minus, b = g.c_plus, fb = g.lambda_plus;
  int side = 0;
  for (int it = 1; it <= 200; ++it) {
    const double c = (a * fb - b * fa) / (fb - fa);
    const double fc = lambda(c);
    g.iterations = it;
    g.c0 = c;
    g.lambda0 = fc;
    if (std::abs(fc) <= tol || b - a <= 1e-15 * (std::abs(a) + std::abs(b))) return g;
    if (fc < 0.0) {
      a = c;
      fa = fc;
      if (side == -1) fb *= 0.5;
      side = -1;
    } else {
      b = c;
      fb = fc;
      if (side == 1) fa *= 0.5;
      side = 1;
    }
  }
  throw NumericError("gs_shift_c0: no convergence; |lambda0| = " + std::to_string(std::abs(g.lambda0)));
}

void log_gradient_term(const GridOperator& op, std::span<const double> v, std::span<double> out) {
  const std::size_t n = static_cast<std::size_t>(op.dim());
  for (std::size_t k = 0; k < op.size(); ++k) {
    out[k] = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      const double h2 = op.spacing(a) * op.spacing(a);
      for (int step : {-1, 1}) {
        const double d = v[op.neighbour(k, a, step)] - v[k];
        out[k] += (std::expm1(d) - d) / h2;
      }
    }
  }
}

FixedPoint log_gradient_fixedpoint(const GridOperator& op, double tol, int max_iter, double A,
                                   std::uint64_t seed) {
  if (!(tol > 0.0) || max_iter < 1) throw InputError("log_gradient_fixedpoint: bad tolerance or iteration cap");
  const int n = op.dim();
  const auto Vs = op.potential();
  const std::vector<double> V(Vs.begin(), Vs.end());
  FixedPoint fp;
  if (!(A > 0.0)) {
    const std::vector<double> extra[] = {V};
    A = estimate_A(op, seed, extra).A;
  }
  fp.A = A;
  fp.rho = 1.0 / (4.0 * A);
  fp.threshold = 1.0 / (8.0 * A * A);
  fp.V_norm = op.lp_norm(V, 0.5 * n);
  if (fp.V_norm >= fp.threshold)
    throw InputError("log_gradient_fixedpoint: ||V||_{n/2} = " + std::to_string(fp.V_norm) +
                     " is not below 1/(8A^2) = " + std::to_string(fp.threshold));
  const std::size_t N = op.size();
  std::vector<double> v(N, 0.0), gamma(N), g(N), diff(N);
  for (int it = 1; it <= max_iter; ++it) {
    log_gradient_term(op, v, gamma);
    for (std::size_t k = 0; k < N; ++k) g[k] = V[k] + gamma[k];
    std::vector<double> next = op.inverse_laplacian(g);
    for (std::size_t k = 0; k < N; ++k) diff[k] = next[k] - v[k];
    fp.step = op.grad_norm(diff, n);
    const double norm = op.grad_norm(next, n);
    fp.history.push_back(norm);
    fp.iterations = it;
    if (norm > fp.rho)
      throw NumericError("log_gradient_fixedpoint: iterate " + std::to_string(it) + " has ||v||_perp = " +
                         std::to_string(norm) + " > rho = 1/(4A) = " + std::to_string(fp.rho));
    v = std::move(next);
    if (fp.step <= tol) break;
    if (it == max_iter)
      throw NumericError("log_gradient_fixedpoint: no convergence; last step " + std::to_string(fp.step));
  }
  log_gradient_term(op, v, gamma);
  fp.c = -op.mean(V) - op.mean(gamma);
  std::vector<double> lap(N), r(N);
  op.laplacian(v, lap);
  for (std::size_t k = 0; k < N; ++k) r[k] = lap[k] - gamma[k] - V[k] - fp.c;
  fp.residual = op.lp_norm(r, 0.5 * n);
  fp.grad_norm = op.grad_norm(v, n);
  fp.v = std::move(v);
  return fp;
}

namespace {

// C^2 bump: 1 on [0, 1/2], quintic down to 0 at 3/4.
double bump(double s) {
  if (s <= 0.5) return 1.0;
  if (s >= 0.75) return 0.0;
  const double t = (s - 0.5) / 0.25;
  return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

}  // namespace

Decomposition decompose_ground_state(const GridOperator& op, double rho, std::span<const double> phi,
                                     const DecompositionOptions& opt) {
  const int n = op.dim();
  const std::size_t dim = static_cast<std::size_t>(n);
  const std::size_t N = op.size();
  if (n < 3) throw InputError("decompose_ground_state: n must be >= 3");
  if (phi.size() != N) throw InputError("decompose_ground_state: phi size does not match the grid");
  for (double v : phi)
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError("decompose_ground_state: phi must be positive");
  const Manifold& m = op.manifold();
  const double h = min_spacing(op);
  if (!(rho >= 2.0 * h)) throw InputError("decompose_ground_state: rho must be at least two grid spacings");
  {
    std::vector<double> r(N);
    op.apply(phi, r);
    const double rel = norm2(r) / norm2(phi);
    if (rel > 1e-6)
      throw InputError("decompose_ground_state: phi does not solve Delta phi = V phi (relative residual " +
                       std::to_string(rel) + ")");
  }

  // Cover by B(x_i, rho/2) on a product lattice; B(x_i, rho/4) pairwise disjoint.
  std::vector<std::size_t> counts(dim);
  std::vector<double> steps(dim);
  double min_sep = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < dim; ++a) {
    const double P = m.periods()[a];
    counts[a] = static_cast<std::size_t>(std::ceil(P * std::sqrt(static_cast<double>(n)) / rho - 1e-12));
    steps[a] = P / static_cast<double>(counts[a]);
    min_sep = std::min(min_sep, counts[a] > 1 ? steps[a] : P);
  }
  if (min_sep < 0.5 * rho * (1.0 - 1e-12))
    throw InputError("decompose_ground_state: cannot build a cover with disjoint quarter balls for rho = " +
                     std::to_string(rho));
  Decomposition d;
  d.rho = rho;
  d.alpha = opt.alpha;
  {
    std::size_t total = 1;
    for (auto c : counts) total *= c;
    std::vector<std::size_t> idx(dim, 0);
    for (std::size_t t = 0; t < total; ++t) {
      Point c;
      c.coords.resize(dim);
      for (std::size_t a = 0; a < dim; ++a) c.coords[a] = (static_cast<double>(idx[a]) + 0.5) * steps[a];
      d.centers.push_back(std::move(c));
      for (std::size_t a = dim; a-- > 0;) {
        if (++idx[a] < counts[a]) break;
        idx[a] = 0;
      }
    }
  }

  // Node coordinates and I = sup_x ||V||_{L^{n/2}(B(x, rho))} over nodes x.
  std::vector<double> coords(N * dim);
  for (std::size_t k = 0; k < N; ++k) op.potential_field().node(k, std::span(coords.data() + k * dim, dim));
  auto node = [&](std::size_t k) { return std::span<const double>(coords.data() + k * dim, dim); };
  const auto V = op.potential();
  {
    std::vector<double> Vp(N);
    for (std::size_t k = 0; k < N; ++k) Vp[k] = std::pow(std::abs(V[k]), 0.5 * n);
    std::vector<double> local(N);
    parallel_for(N, [&](std::size_t k) {
      double s = 0.0;
      for (std::size_t j = 0; j < N; ++j)
        if (Vp[j] != 0.0 && m.distance(node(k), node(j)) <= rho) s += Vp[j];
      local[k] = std::pow(s * op.cell_volume(), 2.0 / n);
    });
    d.I = *std::max_element(local.begin(), local.end());
  }
  d.beta = opt.beta > 0.0 ? opt.beta : estimate_sobolev_beta(op, opt.seed).beta;
  if (opt.A > 0.0) {
    d.A = opt.A;
  } else {
    const std::vector<double> extra[] = {std::vector<double>(V.begin(), V.end())};
    d.A = estimate_A(op, opt.seed, extra).A;
  }
  if (d.I > 0.5 * d.beta)
    throw InputError("decompose_ground_state: I = " + std::to_string(d.I) + " exceeds beta/2 = " +
                     std::to_string(0.5 * d.beta));

  struct Local {
    std::vector<std::size_t> nodes;  // within 3 rho / 4
    std::vector<double> chi, f, w;
    double fbar = 0.0;
  };
  std::vector<Local> locals(d.centers.size());
  d.shifts.assign(d.centers.size(), 0.0);
  std::vector<double> chi_sum(N, 0.0);
  parallel_for(d.centers.size(), [&](std::size_t i) {
    const Point& c = d.centers[i];
    std::vector<double> dist(N);
    for (std::size_t k = 0; k < N; ++k) dist[k] = m.distance(c, node(k));
    std::vector<double> q(N, 0.0);
    for (std::size_t k = 0; k < N; ++k)
      if (dist[k] <= rho) q[k] = -V[k];
    const GsShift gs = gs_shift_c0(op, q, c, rho, d.beta, 1e-11);
    d.shifts[i] = gs.c0;
    std::vector<double> Vi(N);
    for (std::size_t k = 0; k < N; ++k) Vi[k] = dist[k] <= rho ? V[k] : -gs.c0;
    const FixedPoint fp = log_gradient_fixedpoint(op.with_potential(std::move(Vi)), opt.tol, 500, d.A, opt.seed);
    Local& L = locals[i];
    double delta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < N; ++k)
      if (dist[k] < 0.75 * rho) {
        L.nodes.push_back(k);
        L.chi.push_back(bump(dist[k] / rho));
        delta = std::min(delta, phi[k] / std::exp(fp.v[k]));
      }
    for (std::size_t j = 0; j < L.nodes.size(); ++j) {
      const std::size_t k = L.nodes[j];
      const double psi = phi[k] / std::exp(fp.v[k]);
      L.w.push_back(std::log(psi / delta));
      L.f.push_back(fp.v[k] + std::log(delta));
      L.fbar += L.f.back();
    }
    L.fbar /= static_cast<double>(std::max<std::size_t>(1, L.nodes.size()));
  });
  for (const auto& L : locals)
    for (std::size_t j = 0; j < L.nodes.size(); ++j) chi_sum[L.nodes[j]] += L.chi[j];
  for (double s : chi_sum)
    if (!(s > 0.0)) throw InputError("decompose_ground_state: cover leaves grid nodes uncovered");
  d.f.assign(N, 0.0);
  d.w.assign(N, 0.0);
  for (const auto& L : locals)
    for (std::size_t j = 0; j < L.nodes.size(); ++j) {
      const std::size_t k = L.nodes[j];
      const double chi = L.chi[j] / chi_sum[k];
      d.f[k] += chi * (L.f[j] - L.fbar);
      d.w[k] += chi * (L.w[j] + L.fbar);
    }

  for (std::size_t k = 0; k < N; ++k)
    d.reconstruction = std::max(d.reconstruction, std::abs(std::exp(d.f[k] + d.w[k]) / phi[k] - 1.0));
  d.df_Ln = op.grad_norm(d.f, n);
  {
    std::vector<double> lap(N);
    op.laplacian(d.f, lap);
    d.lap_f = op.lp_norm(lap, 0.5 * n);
  }
  auto holder = [&](std::size_t a, std::size_t b) {
    const double r = m.distance(node(a), node(b));
    return r > 0.0 ? std::abs(d.w[a] - d.w[b]) / std::pow(r, opt.alpha) : 0.0;
  };
  for (std::size_t k = 0; k < N; ++k)
    for (std::size_t a = 0; a < dim; ++a) d.holder_w = std::max(d.holder_w, holder(k, op.neighbour(k, a, 1)));
  Rng rng(derive_seed(opt.seed, 0x401));
  std::uniform_int_distribution<std::size_t> pick(0, N - 1);
  for (std::size_t s = 0; s < opt.holder_pairs; ++s) d.holder_w = std::max(d.holder_w, holder(pick(rng), pick(rng)));
  return d;
}

nlohmann::json to_json(const SchrodingerSolve& s) {
  return {{"lambda0", s.lambda0},
          {"residual", s.residual},
          {"iterations", s.iterations},
          {"shift", s.shift},
          {"phi_min", s.phi.empty() ? 0.0 : *std::min_element(s.phi.begin(), s.phi.end())}};
}

nlohmann::json to_json(const GsShift& s) {
  return {{"c0", s.c0},
          {"lambda0", s.lambda0},
          {"c_minus", s.c_minus},
          {"c_plus", s.c_plus},
          {"lambda_minus", s.lambda_minus},
          {"lambda_plus", s.lambda_plus},
          {"beta", s.beta},
          {"iterations", s.iterations}};
}

nlohmann::json to_json(const FixedPoint& s) {
  return {{"c", s.c},
          {"residual", s.residual},
          {"step", s.step},
          {"grad_norm", s.grad_norm},
          {"V_norm", s.V_norm},
          {"A", s.A},
          {"rho", s.rho},
          {"threshold", s.threshold},
          {"iterations", s.iterations},
          {"history", s.history}};
}

nlohmann::json to_json(const Decomposition& d) {
  return {{"balls", d.centers.size()},
          {"shifts", d.shifts},
          {"df_Ln", d.df_Ln},
          {"lap_f_Ln2", d.lap_f},
          {"holder_w", d.holder_w},
          {"alpha", d.alpha},
          {"reconstruction", d.reconstruction},
          {"I", d.I},
          {"beta", d.beta},
          {"A", d.A},
          {"rho", d.rho}};
}

}  // namespace conflab

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "conflab/grid_io.hpp"
#include "conflab/manifold.hpp"

namespace conflab {

/// Delta - V on the node grid of a torus. Delta is the second-order periodic
/// stencil with the geometer's sign, Delta u = -sum_a (u[+e_a] - 2u + u[-e_a]) / h_a^2,
/// so its spectrum is nonnegative and Delta 1 = 0. Inner products and L^p
/// norms are cell sums with weight prod h_a.
class GridOperator {
 public:
  explicit GridOperator(GridField potential);
  GridOperator(const Manifold& m, std::vector<std::size_t> shape, std::vector<double> potential);

  const GridField& potential_field() const noexcept { return V_; }
  std::span<const double> potential() const noexcept { return V_.values(); }
  const Manifold& manifold() const noexcept { return V_.manifold(); }
  const std::vector<std::size_t>& shape() const noexcept { return V_.shape(); }
  std::size_t size() const noexcept { return V_.size(); }
  int dim() const noexcept { return static_cast<int>(V_.dim()); }
  double spacing(std::size_t axis) const { return V_.spacing(axis); }
  double cell_volume() const noexcept { return cell_; }

  /// Same grid, different potential.
  GridOperator with_potential(std::vector<double> potential) const;

  void laplacian(std::span<const double> u, std::span<double> out) const;
  /// (Delta - V) u.
  void apply(std::span<const double> u, std::span<double> out) const;
  /// Forward difference along `axis`.
  void forward_diff(std::span<const double> u, std::size_t axis, std::span<double> out) const;
  /// Neighbour of node k one step along axis (+1 or -1), periodic.
  std::size_t neighbour(std::size_t k, std::size_t axis, int step) const;

  double dot(std::span<const double> a, std::span<const double> b) const;
  double lp_norm(std::span<const double> u, double p) const;
  /// ||du||_{L^p} with |du|^2 = sum_a (forward difference)^2.
  double grad_norm(std::span<const double> u, double p) const;
  double mean(std::span<const double> u) const;
  double volume() const noexcept { return cell_ * static_cast<double>(size()); }

  /// Mean-zero solution of Delta u = g - mean(g) (conjugate gradients).
  std::vector<double> inverse_laplacian(std::span<const double> g, double rel_tol = 1e-13) const;

 private:
  GridField V_;
  std::vector<std::size_t> stride_;
  double cell_ = 1.0;
};

struct SchrodingerSolve {
  double lambda0 = 0.0;
  std::vector<double> phi;  // positive, max-normalized
  double residual = 0.0;    // ||(Delta - V) phi - lambda0 phi||_2 / ||phi||_2
  int iterations = 0;
  double shift = 0.0;
};

/// Shifted inverse iteration from the constant vector. Requires at least 8
/// nodes per axis. NumericError (with the residual history) if `max_iter`
/// steps do not reach `tol`.
SchrodingerSolve lowest_eigenpair(const GridOperator& op, double tol = 1e-10, int max_iter = 500);

/// Empirical Sobolev constant: min over trial functions of
/// (||d phi||_2^2 + ||phi||_2^2) / ||phi||_{2n/(n-2)}^2 (n >= 3).
struct SobolevEstimate {
  double beta = 0.0;
  double constant_trial = 0.0;  // vol^{2/n}
  int trials = 0;
};
SobolevEstimate estimate_sobolev_beta(const GridOperator& op, std::uint64_t seed = 0);

/// Empirical norm of d o Delta^{-1} from L^{n/2} to L^n by a nonlinear power
/// iteration from random and structured starts. Extra trials (for instance
/// the potential itself) are included.
struct OperatorNormEstimate {
  double A = 0.0;
  int trials = 0;
};
OperatorNormEstimate estimate_A(const GridOperator& op, std::uint64_t seed = 0,
                                std::span<const std::vector<double>> extra_trials = {});

struct GsShift {
  double c0 = 0.0;
  double lambda0 = 0.0;  // at c0
  double c_minus = 0.0, c_plus = 0.0;
  double lambda_minus = 0.0, lambda_plus = 0.0;
  double beta = 0.0;
  int iterations = 0;
};

/// c0 with lambda0(Delta + q + c0 1_{M \ B(x0, r0)}) = 0 inside
/// [-(2/vol) int |q|, (2/beta) ||q||_{n/2}], by Illinois regula falsi.
/// Requires n >= 3, supp q in B(x0, r0) on the grid, vol B(x0, r0) <=
/// (beta/2)^{n/2} and ||q||_{n/2} <= beta.
GsShift gs_shift_c0(const GridOperator& grid, std::span<const double> q, const Point& x0, double r0,
                    double beta, double tol = 1e-10);

struct FixedPoint {
  std::vector<double> v;          // mean zero
  double c = 0.0;                 // Delta v - Gamma(v) = V + c
  double residual = 0.0;          // ||Delta v - Gamma(v) - V - c||_{n/2}
  double step = 0.0;              // last ||v_k - v_{k-1}||_perp
  double grad_norm = 0.0;         // ||dv||_{L^n}
  double V_norm = 0.0;            // ||V||_{n/2}
  double A = 0.0;
  double rho = 0.0;               // 1 / (4A)
  double threshold = 0.0;         // 1 / (8A^2)
  int iterations = 0;
  std::vector<double> history;    // ||v_k||_perp
};

/// Gamma_h(v)_i = sum over the 2n neighbours j of (e^{v_j - v_i} - 1 - (v_j - v_i)) / h^2,
/// the grid counterpart of |dv|^2 for which Delta e^v = e^v (Delta v - Gamma_h(v)) exactly.
void log_gradient_term(const GridOperator& op, std::span<const double> v, std::span<double> out);

/// Picard iteration of S(v) = Delta^{-1}(V + Gamma_h(v)) from v = 0. `A` <= 0
/// estimates it. InputError if ||V||_{n/2} >= 1/(8A^2); NumericError if an
/// iterate leaves the ball of radius 1/(4A) or `max_iter` is reached.
FixedPoint log_gradient_fixedpoint(const GridOperator& op, double tol = 1e-12, int max_iter = 200,
                                   double A = 0.0, std::uint64_t seed = 0);

struct DecompositionOptions {
  double alpha = 0.5;               // Hoelder exponent reported for w
  double beta = 0.0;                // <= 0: estimate
  double A = 0.0;                   // <= 0: estimate
  double tol = 1e-12;
  std::size_t holder_pairs = 200'000;
  std::uint64_t seed = 0;
};

struct Decomposition {
  std::vector<double> f, w;
  std::vector<Point> centers;
  std::vector<double> shifts;  // c0 per cover ball
  double df_Ln = 0.0;          // ||df||_{L^n}
  double lap_f = 0.0;          // ||Delta f||_{L^{n/2}}
  double holder_w = 0.0;       // sup |w(x) - w(y)| / d0^alpha
  double reconstruction = 0.0; // max |e^{f+w} / phi - 1|
  double I = 0.0;              // sup_x ||V||_{L^{n/2}(B(x, rho))}
  double beta = 0.0, A = 0.0, alpha = 0.0, rho = 0.0;
};

/// phi = e^{f + w} by local ground states on a cover by balls B(x_i, rho/2)
/// with disjoint B(x_i, rho/4) and a normalized C^2 bump partition of unity.
/// phi must be a positive solution of Delta phi = V phi.
Decomposition decompose_ground_state(const GridOperator& op, double rho, std::span<const double> phi,
                                     const DecompositionOptions& opt = {});

nlohmann::json to_json(const SchrodingerSolve& s);
nlohmann::json to_json(const GsShift& s);
nlohmann::json to_json(const FixedPoint& s);
nlohmann::json to_json(const Decomposition& d);

}  // namespace conflab

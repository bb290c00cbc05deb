#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "conflab/manifold.hpp"
#include "conflab/metric.hpp"
#include "conflab/weight.hpp"

namespace conflab {

/// Balls centers x radii; ball k = (centers[k / radii.size()], radii[k % radii.size()]).
struct BallSampler {
  PointSet centers;
  std::vector<double> radii;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return centers.size() * radii.size(); }
  BallSpec ball(std::size_t k) const;
  std::uint64_t ball_seed(std::size_t k) const;

  /// `count` centers uniform on m.
  static BallSampler random(const Manifold& m, std::size_t count, std::vector<double> radii,
                            std::uint64_t seed);
  /// Throws InputError unless every radius is in (0, eta].
  void validate(double eta) const;
};

/// min(quarter of the smallest period or extent, 1); min(pi R / 4, 1) on the sphere.
double default_eta(const Manifold& m);

/// Sup over sampled balls of a per-ball constant.
struct ConstantEstimate {
  double value = 0.0;
  std::size_t worst_ball = 0;
  std::vector<double> per_ball;
};

/// sup_B (avg_B w^q)^{1/q} / avg_B w with w = e^{nf}.
ConstantEstimate reverse_holder(const Manifold& m, const WeightField& field, double q,
                                const BallSampler& sampler, std::size_t budget);

/// sup_B (avg_B w)(avg_B w^{-1/(p-1)})^{p-1}.
ConstantEstimate ap_product(const Manifold& m, const WeightField& field, double p,
                            const BallSampler& sampler, std::size_t budget);

/// sup mu_f(B(x, 2r)) / mu_f(B(x, r)). Radii should be at most eta / 2.
ConstantEstimate doubling_constant(const Manifold& m, const WeightField& field,
                                   const BallSampler& sampler, std::size_t budget);

struct SubsetExponent {
  double slope = 0.0;  // least-squares slope of log(w(E)/w(B)) on log(mu0(E)/mu0(B))
  double alpha = 1.0;  // max(slope, 1/slope), >= 1
  double C = 1.0;      // smallest C making both power bounds hold at alpha
  std::size_t pairs = 0;
  std::size_t excluded = 0;  // subsets with no sample points
};

/// Two-sided power comparison of w(E)/w(B) with mu0(E)/mu0(B) over concentric
/// sub-balls and random unions of chart cells (`subdivisions` per axis).
SubsetExponent subset_ratio_exponent(const Manifold& m, const WeightField& field,
                                     const BallSampler& sampler, int subdivisions,
                                     std::size_t budget);

struct PairDistance {
  Point x, y;
  double d_f = 0.0;
};

struct StrongRatio {
  double theta_at_x = 1.0;      // sup max(rho, 1/rho), rho = d_f / mu_f(B(x, d0))^{1/n}
  double theta_centered = 1.0;  // same with the ball B(mid, d0 / 2)
  double B = 0.0;               // sup d_f^n / mu_f(B(x, d0))
  std::size_t pairs = 0;
  std::vector<double> rho_at_x, rho_centered;
};

/// Pairs with d0 > eta are rejected (InputError).
StrongRatio strong_ratio(const Manifold& m, const WeightField& field,
                         std::span<const PairDistance> pairs, double eta, std::size_t budget,
                         std::uint64_t seed);

/// Same for node pairs of a distance matrix over `points`.
StrongRatio strong_ratio(const Manifold& m, const WeightField& field, const PointSet& points,
                         const DistanceMatrix& dmat,
                         std::span<const std::pair<std::size_t, std::size_t>> node_pairs,
                         double eta, std::size_t budget, std::uint64_t seed);

struct BiHolderFit {
  double slope = 0.0;       // of log(d_f / M^{1/n}) on log d0
  double intercept = 0.0;
  double alpha_low = 0.0;   // smallest of the global, small-scale and large-scale slopes
  double alpha_high = 0.0;  // largest of them
  double alpha = 0.0;       // slope clipped to [0.01, 1]
  double C = 1.0;           // smallest C with M^{1/n} d0^{1/alpha} / C <= d_f <= C M^{1/n} d0^alpha
  std::size_t pairs = 0;
};

/// Uses the off-diagonal entries with d0 > 0 common to both matrices. At least
/// 10 pairs are required.
BiHolderFit biholder_fit(const DistanceMatrix& d_f, const DistanceMatrix& d_0, double mass_total,
                         int n);

/// sup over quadruples of |D(x,y) - D(x',y')| / (d0(x,x')^alpha + d0(y,y')^alpha),
/// D = d or d - other. Square matrices on one index set. Exhaustive when there
/// are at most `max_quadruples` quadruples, otherwise that many random ones.
double holder_seminorm(const DistanceMatrix& d, const DistanceMatrix& d0, double alpha,
                       const DistanceMatrix* other = nullptr,
                       std::size_t max_quadruples = 4'000'000, std::uint64_t seed = 0);

struct Domain {
  enum class Kind { Ball, Box } kind = Kind::Ball;
  Point center;             // Ball
  double radius = 0.0;      // Ball
  std::vector<double> lo, hi;  // Box, chart coordinates

  static Domain ball(Point c, double r) { return {Kind::Ball, std::move(c), r, {}, {}}; }
  static Domain box(std::vector<double> lo, std::vector<double> hi) {
    return {Kind::Box, {}, 0.0, std::move(lo), std::move(hi)};
  }
};

struct IsoperimetricRow {
  double perimeter = 0.0;  // integral of e^{(n-1) f} over the boundary
  double mass = 0.0;       // mu_f of the domain
  double ratio = 0.0;      // perimeter / mass^{1 - 1/n}
};

struct IsoperimetricReport {
  double inf_ratio = std::numeric_limits<double>::infinity();
  std::vector<IsoperimetricRow> rows;
};

/// Torus and Box only. Domains must carry at most half the total mass.
IsoperimetricReport isoperimetric_ratio(const Manifold& m, const WeightField& field,
                                        std::span<const Domain> domains, std::size_t budget,
                                        std::uint64_t seed);

struct AInftyOptions {
  double q = 2.0;
  double p = 2.0;
  double eta = 0.0;  // 0: default_eta
  std::size_t centers = 16;
  std::vector<double> radius_fractions{0.125, 0.25, 0.5};  // of eta
  int subdivisions = 8;
  std::size_t budget = 4096;
  std::uint64_t seed = 0;
};

struct AInftyReport {
  double q = 0.0, C_rh = 0.0;
  double p = 0.0, C_ap = 0.0;
  double theta_doubling = 0.0;
  double alpha_iv = 0.0, C_iv = 0.0;
  double eta = 0.0;
  double theta_strong = std::numeric_limits<double>::quiet_NaN();
  double theta_strong_centered = std::numeric_limits<double>::quiet_NaN();
  std::size_t balls = 0, budget = 0, subset_pairs = 0, subset_excluded = 0;
  std::uint64_t seed = 0;
};

/// Reverse Hoelder, A_p, doubling and subset exponent on one random ball
/// family. theta_strong needs distances and is filled by the caller.
AInftyReport ainfty_report(const Manifold& m, const WeightField& field, const AInftyOptions& opt);

nlohmann::json to_json(const AInftyReport& r);
nlohmann::json to_json(const StrongRatio& r);
nlohmann::json to_json(const BiHolderFit& r);
nlohmann::json to_json(const IsoperimetricReport& r);

}  // namespace conflab

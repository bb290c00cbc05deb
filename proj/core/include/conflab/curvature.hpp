#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "conflab/manifold.hpp"
#include "conflab/weight.hpp"

namespace conflab {

enum class CurvatureMethod { Exact, FiniteDifference };

struct CurvatureSample {
  Point point;
  double scal = 0.0;
  CurvatureMethod method = CurvatureMethod::Exact;
  double h = 0.0;  // finite-difference step, 0 for exact
};

/// n(n-1) vol(S^n)^{2/n}; n >= 3.
double alpha_n2(int n);
/// (integral over S^n of (n(n-1))^{n/2})^{2/n}, by cap quadrature.
double alpha_n2_quadrature(int n);

/// scal of g_f = e^{2f} g0 from the Yamabe identity
///   scal_f = e^{-2f} (scal_0 + 2(n-1) Lap f - (n-1)(n-2) |df|^2),
/// Lap the geometer's (nonnegative) Laplacian. n = 2 reduces to
/// e^{-2f}(scal_0 + 2 Lap f).
///
/// `h` <= 0 picks a default step: the grid spacing for grid fields, 1e-3
/// otherwise.
CurvatureSample scalar_curvature(const Manifold& m, const WeightField& field,
                                 std::span<const double> x,
                                 CurvatureMethod method = CurvatureMethod::Exact, double h = 0.0);

/// Jet of f by central differences (chart axes on Torus/Box, orthonormal
/// tangent geodesics on the sphere).
FieldJet finite_difference_jet(const Manifold& m, const WeightField& field,
                               std::span<const double> x, double h);

/// scal from a jet; the shared formula behind both methods.
double scal_from_jet(const Manifold& m, const FieldJet& jet);

/// (integral over B of |scal|^p dmu_f)^{1/p}; positive part of scal when
/// `positive_part`.
Measure lp_scal_norm(const Manifold& m, const WeightField& field, const BallSpec& ball, double p,
                     std::size_t budget, std::uint64_t seed, bool positive_part = false,
                     CurvatureMethod method = CurvatureMethod::Exact);

struct PinchingRow {
  std::size_t center = 0;
  double pos = 0.0;  // (int (scal_+)^{n/2} dmu_f)^{2/n}
  double abs = 0.0;  // same with |scal|
};

struct PinchingReport {
  double R0 = 0.0;
  std::size_t centers = 0;
  double sup_pos = 0.0;
  double sup_abs = 0.0;
  double alpha_n2 = std::numeric_limits<double>::quiet_NaN();
  double lambda_margin = 0.0;  // sup of int |scal|^{n/2} dmu_f
  double lambda0 = std::numeric_limits<double>::infinity();
  bool below_alpha = false;    // sup_pos < alpha(n,2)
  bool below_lambda0 = false;  // lambda_margin < lambda0
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  std::vector<PinchingRow> rows;
};

PinchingReport pinching_profile(const Manifold& m, const WeightField& field, double R0,
                                const PointSet& centers, std::size_t budget, std::uint64_t seed,
                                double lambda0 = std::numeric_limits<double>::infinity(),
                                CurvatureMethod method = CurvatureMethod::Exact);

nlohmann::json to_json(const PinchingReport& r);

}  // namespace conflab

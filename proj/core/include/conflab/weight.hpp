#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "conflab/grid_io.hpp"
#include "conflab/manifold.hpp"

namespace conflab {

enum class WeightKind { Constant, BuragoTorus, LogCusp, SphereBubble, Grid, Scaled, Sum };

const char* to_string(WeightKind kind) noexcept;

/// Value, gradient and Hessian trace of f at a point.
///
/// `grad` lives in chart coordinates (Torus/Box) or is an ambient tangent
/// vector (Sphere). `hess_trace` is the analyst's Laplace-Beltrami sum of
/// second derivatives; the geometer's Laplacian is its negative.
struct FieldJet {
  double f = 0.0;
  std::vector<double> grad;
  double hess_trace = 0.0;

  double grad_sq() const noexcept {
    double s = 0.0;
    for (double g : grad) s += g * g;
    return s;
  }
};

/// f depends on x only through the angle to `axis` (Sphere). An axis-free
/// profile is constant.
struct ZonalProfile {
  Point axis;
  bool axis_free = false;
  std::function<double(double angle)> f;
};

/// Log-conformal factor f of g_f = e^{2f} g0. Cheap to copy (shared
/// immutable state) and safe to evaluate concurrently.
class WeightField {
 public:
  static constexpr double kNoCap = std::numeric_limits<double>::infinity();

  static WeightField constant(double c);
  static WeightField burago(int ell);
  /// Cusp sqrt(ln(R0/d)) around x0, C^2-blended to zero on [R0/e, 2 R0] and
  /// saturated at `cap` when it is finite.
  static WeightField log_cusp(Point x0, double R0, double cap = kNoCap);
  static WeightField sphere_bubble(double lambda, Point pole);
  /// order 0: cell-constant, 1: multilinear, 3: tensor cubic convolution.
  static WeightField grid(GridField grid, int order = 1);
  static WeightField scaled(WeightField base, double shift);
  static WeightField sum(std::vector<WeightField> parts);

  WeightKind kind() const noexcept;
  bool has_exact_derivatives() const noexcept;

  /// Throws InputError if the field is not defined on m.
  void check_manifold(const Manifold& m) const;

  /// f(x); +inf on the cusp point of an uncapped LogCusp.
  double eval(const Manifold& m, std::span<const double> x) const;
  /// Exact jet; throws UnsupportedError for finite-difference fields.
  FieldJet jet(const Manifold& m, std::span<const double> x) const;
  /// Zonal structure on the sphere, if any.
  std::optional<ZonalProfile> zonal(const Manifold& m) const;

  /// w = e^{nf}.
  double weight(const Manifold& m, std::span<const double> x) const;

  /// Underlying grid of a Grid field, nullptr otherwise.
  const GridField* grid_field() const noexcept;

  /// Additive shift c of a Scaled field (0 otherwise).
  double shift() const noexcept;

  /// Known pointwise bounds [inf f, sup f] (may be infinite).
  std::pair<double, double> bounds(const Manifold& m) const;

  nlohmann::json to_json() const;
  static WeightField from_json(const nlohmann::json& j, const Manifold& m);

  struct Impl;
  explicit WeightField(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  const Impl& impl() const noexcept { return *impl_; }

 private:
  std::shared_ptr<const Impl> impl_;
};

/// C^2 saturation at level k: identity below k - 1/2, approaching k above.
double cusp_saturation(double t, double k, double* d1 = nullptr, double* d2 = nullptr);

/// Radial cusp profile with its first two derivatives in d.
double cusp_profile(double d, double R0, double* d1 = nullptr, double* d2 = nullptr);

/// mu_f(B) = integral over B of e^{nf} dmu0.
Measure mu_f_ball(const Manifold& m, const WeightField& field, const BallSpec& ball,
                  std::size_t budget, std::uint64_t seed);

/// mu_f(M).
Measure total_mass(const Manifold& m, const WeightField& field, std::size_t budget,
                   std::uint64_t seed);

/// Integrals of e^{p f} dmu0 over M, one per exponent, on one shared sample.
std::vector<Measure> integrability_profile(const Manifold& m, const WeightField& field,
                                           std::span<const double> exponents,
                                           std::size_t budget, std::uint64_t seed);

}  // namespace conflab

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace conflab {

enum class ManifoldKind { Torus, Box, Sphere };

const char* to_string(ManifoldKind kind) noexcept;

/// Chart coordinates (Torus/Box) or an ambient vector of norm `radius` (Sphere).
struct Point {
  std::vector<double> coords;

  Point() = default;
  explicit Point(std::vector<double> c) : coords(std::move(c)) {}
  Point(std::initializer_list<double> c) : coords(c) {}
  explicit Point(std::span<const double> c) : coords(c.begin(), c.end()) {}

  std::size_t size() const noexcept { return coords.size(); }
  double operator[](std::size_t i) const { return coords[i]; }
  double& operator[](std::size_t i) { return coords[i]; }
  operator std::span<const double>() const noexcept { return coords; }

  friend bool operator==(const Point&, const Point&) = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const noexcept { return hi - lo; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct BallSpec {
  Point center;
  double radius = 0.0;
};

/// A volume or integral together with its Monte Carlo standard error
/// (zero when the value is closed-form or deterministic quadrature).
struct Measure {
  double value = 0.0;
  double std_error = 0.0;
};

/// Points stored contiguously, with a quadrature cell volume per point.
class PointSet {
 public:
  PointSet() = default;
  PointSet(std::size_t coord_dim, double spacing) : dim_(coord_dim), spacing_(spacing) {}

  std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  bool empty() const noexcept { return coords_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  double spacing() const noexcept { return spacing_; }

  std::span<const double> operator[](std::size_t i) const {
    return {coords_.data() + i * dim_, dim_};
  }
  Point point(std::size_t i) const { return Point((*this)[i]); }
  double cell_volume(std::size_t i) const { return cell_volumes_[i]; }
  std::span<const double> cell_volumes() const noexcept { return cell_volumes_; }
  std::span<const double> raw() const noexcept { return coords_; }

  void reserve(std::size_t n) {
    coords_.reserve(n * dim_);
    cell_volumes_.reserve(n);
  }
  std::size_t push_back(std::span<const double> x, double cell_volume = 0.0);

  /// Per-axis spacing for lattice point sets (empty otherwise).
  const std::vector<double>& axis_spacing() const noexcept { return axis_spacing_; }
  void set_axis_spacing(std::vector<double> s) { axis_spacing_ = std::move(s); }

 private:
  std::size_t dim_ = 0;
  double spacing_ = 0.0;
  std::vector<double> coords_;
  std::vector<double> cell_volumes_;
  std::vector<double> axis_spacing_;
};

/// Quadrature sample: points with weights summing to the ball volume.
struct SampleSet {
  std::size_t dim = 0;
  std::vector<double> coords;
  std::vector<double> weights;

  std::size_t size() const noexcept { return weights.size(); }
  std::span<const double> operator[](std::size_t i) const { return {coords.data() + i * dim, dim}; }
  double total_weight() const noexcept;
};

/// Background geometry (M, g0): flat torus, Euclidean box or round sphere.
/// Immutable value type; every member function is safe to call concurrently.
class Manifold {
 public:
  static constexpr std::size_t kDefaultLatticeBudget = 2'000'000;

  static Manifold torus(int dim);
  static Manifold torus(std::vector<double> periods);
  static Manifold box(std::vector<Interval> extents);
  static Manifold sphere(int dim, double radius = 1.0);

  ManifoldKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  /// Length of a coordinate vector: n for Torus/Box, n+1 for Sphere.
  std::size_t coord_dim() const noexcept {
    return static_cast<std::size_t>(kind_ == ManifoldKind::Sphere ? dim_ + 1 : dim_);
  }
  const std::vector<double>& periods() const noexcept { return periods_; }
  const std::vector<Interval>& extents() const noexcept { return extents_; }
  double radius() const noexcept { return radius_; }

  double volume() const noexcept;
  double diameter() const noexcept;
  double min_period() const noexcept;
  /// scal of g0.
  double background_scalar_curvature() const noexcept;
  /// Balls with radius at most this have closed-form volume everywhere.
  double exact_ball_radius() const noexcept;

  /// Throws InputError on dimension mismatch, non-finite entries, or
  /// (Sphere) a vector off the sphere by more than 1e-12 relative.
  void validate(std::span<const double> x) const;
  void canonicalize(std::span<double> x) const;
  Point canonical(std::span<const double> x) const;

  /// d0(x, y).
  double distance(std::span<const double> x, std::span<const double> y) const;
  /// Point at fraction t of the minimizing geodesic from x to y.
  void geodesic_point(std::span<const double> x, std::span<const double> y, double t,
                      std::span<double> out) const;
  Point midpoint(std::span<const double> x, std::span<const double> y) const;
  /// Minimal-image displacement y - x (Torus/Box only).
  void displacement(std::span<const double> x, std::span<const double> y,
                    std::span<double> out) const;

  /// mu0(B(center, radius)).
  Measure ball_volume(const BallSpec& ball) const;

  PointSet lattice(double spacing, std::size_t budget = kDefaultLatticeBudget) const;

  /// i.i.d. mu0-uniform points in the ball; weights sum to ball_volume(ball).
  SampleSet sample_ball(const BallSpec& ball, std::size_t count, std::uint64_t seed) const;
  /// i.i.d. mu0-uniform points on the whole manifold; weights sum to volume().
  SampleSet sample_uniform(std::size_t count, std::uint64_t seed) const;

  friend bool operator==(const Manifold&, const Manifold&) = default;

 private:
  Manifold() = default;

  double sphere_distance(std::span<const double> x, std::span<const double> y) const;
  Measure monte_carlo_ball_volume(const BallSpec& ball) const;
  SampleSet sample_cap(const BallSpec& ball, std::size_t count, std::uint64_t seed) const;

  ManifoldKind kind_ = ManifoldKind::Torus;
  int dim_ = 0;
  std::vector<double> periods_;
  std::vector<Interval> extents_;
  double radius_ = 1.0;
};

/// omega_n: Lebesgue volume of the unit ball in R^n.
double unit_ball_volume(int n);
/// vol(S^n) for the unit sphere, 2 pi^{(n+1)/2} / Gamma((n+1)/2).
double unit_sphere_volume(int n);
/// Volume of a geodesic cap of angular radius `angle` on S^n of radius R,
/// by adaptive quadrature of sin^{n-1}.
double sphere_cap_volume(int n, double radius, double angle);

void to_json(nlohmann::json& j, const Manifold& m);
Manifold manifold_from_json(const nlohmann::json& j);

}  // namespace conflab

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "conflab/manifold.hpp"
#include "conflab/weight.hpp"

namespace conflab {

enum class EstimatorKind { ChainBall, RiemannLine };

const char* to_string(EstimatorKind kind) noexcept;
EstimatorKind estimator_from_string(const std::string& s);

/// Edge-weight estimator.
///
/// RiemannLine: d0 times a `quad_points`-point Gauss average of e^f along the
/// segment. ChainBall: (mu_f(B_xy)/omega_n)^{1/n} with B_xy the ball on the
/// segment as diameter, by Monte Carlo with `chain_samples` points seeded from
/// the edge's endpoint indices. For f = 0 ChainBall gives d0/2, so chain
/// metrics are half the Riemannian ones; compare 2x ChainBall with
/// RiemannLine.
struct Estimator {
  EstimatorKind kind = EstimatorKind::RiemannLine;
  int quad_points = 3;
  std::size_t chain_samples = 64;
};

/// Gauss-Legendre nodes and weights on [0, 1].
void gauss_legendre01(int k, std::vector<double>& nodes, std::vector<double>& weights);

/// Weight of the edge from x to y. On Torus/Box y is the unwrapped endpoint
/// x + displacement, so the segment may leave the fundamental domain.
class EdgeWeigher {
 public:
  EdgeWeigher(const Manifold& m, const WeightField& field, Estimator est, std::uint64_t seed);
  double operator()(std::span<const double> x, std::span<const double> y, double d0,
                    std::uint64_t edge_key) const;
  /// Lower bound c with weight >= c * d0 for every edge (0 if unknown).
  double lower_slope() const noexcept { return lower_slope_; }

 private:
  Manifold m_;
  WeightField field_;
  Estimator est_;
  std::uint64_t seed_;
  std::vector<double> nodes_, weights_;
  double lower_slope_ = 0.0;
};

/// Undirected eps-proximity graph in CSR form (both directions stored).
class EpsGraph {
 public:
  const PointSet& points() const noexcept { return points_; }
  double eps() const noexcept { return eps_; }
  const Estimator& estimator() const noexcept { return est_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t node_count() const noexcept { return points_.size(); }
  std::size_t edge_count() const noexcept { return targets_.size() / 2; }

  std::span<const std::uint32_t> neighbors(std::size_t i) const {
    return {targets_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::span<const double> weights(std::size_t i) const {
    return {weights_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::span<const float> lengths(std::size_t i) const {
    return {d0_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  /// Connected components (labels per node) and their number.
  std::size_t components(std::vector<std::uint32_t>* labels = nullptr) const;

 private:
  friend EpsGraph build_graph(const Manifold&, PointSet, double, const WeightField&,
                              const Estimator&, std::uint64_t, bool);
  PointSet points_;
  double eps_ = 0.0;
  Estimator est_;
  std::uint64_t seed_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> targets_;
  std::vector<double> weights_;
  std::vector<float> d0_;
};

/// Builds the graph with all pairs at d0 <= eps. Requires eps >= 3 * spacing
/// (for point sets with a spacing) and, unless `allow_disconnected`, a
/// connected result (ConstructionError otherwise).
EpsGraph build_graph(const Manifold& m, PointSet points, double eps, const WeightField& field,
                     const Estimator& est, std::uint64_t seed, bool allow_disconnected = false);

/// Pairwise distances; rows are sources, columns targets.
struct DistanceMatrix {
  std::vector<std::size_t> sources;
  std::vector<std::size_t> targets;
  std::vector<double> values;
  double eps = 0.0;
  EstimatorKind estimator = EstimatorKind::RiemannLine;
  std::uint64_t seed = 0;

  std::size_t rows() const noexcept { return sources.size(); }
  std::size_t cols() const noexcept { return targets.size(); }
  double operator()(std::size_t r, std::size_t c) const { return values[r * targets.size() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values[r * targets.size() + c]; }
  /// Value for node indices (not row/column positions); throws InputError if absent.
  double between(std::size_t source_node, std::size_t target_node) const;
  std::size_t row_of(std::size_t source_node) const;
  std::size_t col_of(std::size_t target_node) const;
};

/// Dijkstra from each source. `targets` empty means all nodes.
DistanceMatrix shortest_paths(const EpsGraph& g, std::span<const std::size_t> sources,
                              std::span<const std::size_t> targets = {});

/// d0 between the same index sets, for comparisons.
DistanceMatrix background_distances(const Manifold& m, const PointSet& points,
                                    std::span<const std::size_t> sources,
                                    std::span<const std::size_t> targets);

/// Shortest paths on the implicit lattice graph of a Torus or Box (no edge
/// storage), with arbitrary extra nodes. Point-to-point queries use A* with
/// the heuristic lower_slope * d0, exact for nonnegative weights because that
/// bound is consistent.
class LatticeGraph {
 public:
  LatticeGraph(const Manifold& m, const WeightField& field, double spacing, double eps,
               const Estimator& est, std::uint64_t seed, std::span<const Point> extras = {},
               std::size_t budget = Manifold::kDefaultLatticeBudget);
  ~LatticeGraph();
  LatticeGraph(LatticeGraph&&) noexcept;
  LatticeGraph& operator=(LatticeGraph&&) noexcept;

  std::size_t lattice_size() const noexcept;
  std::size_t size() const noexcept;
  /// Node index of extra point k.
  std::size_t extra_node(std::size_t k) const noexcept { return lattice_size() + k; }
  /// Node nearest to x among lattice nodes (rounding per axis).
  std::size_t nearest_node(std::span<const double> x) const;
  Point node_point(std::size_t node) const;
  double spacing() const noexcept;
  double eps() const noexcept;

  double distance(std::size_t from, std::size_t to) const;
  /// Dijkstra from one node to many, early exit once all are settled.
  std::vector<double> distances(std::size_t from, std::span<const std::size_t> to) const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

struct RefineOptions {
  Estimator estimator;
  /// eps / spacing on the first schedule entry.
  double base_ratio = 3.0;
  /// ratio_k = base_ratio * (eps_0 / eps_k)^growth. 0 keeps the ratio fixed.
  double growth = 1.0;
  std::size_t budget = Manifold::kDefaultLatticeBudget;
  std::uint64_t seed = 0;
};

struct RefineRow {
  std::vector<double> values;  // one per schedule entry
  double extrapolated = 0.0;
  double q = 0.0;     // fitted rate in a + b eps^q (0 if not fitted)
  bool warning = false;  // non-monotone or unfittable sequence; extrapolated = finest
};

struct RefineResult {
  std::vector<double> eps;
  std::vector<double> spacing;
  std::vector<RefineRow> rows;
};

/// Distances for each pair at every schedule entry, plus Richardson-style
/// extrapolation to eps -> 0.
RefineResult refine_distance(const Manifold& m, const WeightField& field,
                             std::span<const std::pair<Point, Point>> pairs,
                             std::span<const double> eps_schedule, const RefineOptions& opt);

/// Fit of a + b eps^q through (eps_k, values_k); see RefineRow.
RefineRow extrapolate(std::span<const double> eps, std::span<const double> values);

struct FBall {
  std::vector<std::size_t> members;
  double mass = 0.0;
  bool coverage_warning = false;
};

/// Nodes within d_f <= r_f of a source row of `dmat` and their mu_f mass
/// (sum of e^{n f(x_i)} times the node's cell volume).
FBall f_ball(const Manifold& m, const WeightField& field, const EpsGraph& g,
             const DistanceMatrix& dmat, std::size_t center_node, double r_f);

struct StableNormOptions {
  double spacing = 0.0;  // 0: min period / 64
  double ratio = 3.0;
  double corridor = 0.0;  // 0: max period
  double margin = 0.0;    // 0: 2 eps
  Estimator estimator;
  std::uint64_t seed = 0;
  std::size_t budget = Manifold::kDefaultLatticeBudget;
  bool check_corridor = true;
};

struct StableNormResult {
  std::vector<double> t;
  std::vector<double> ratio;      // dbar(0, t v) / t
  std::vector<double> corrected;  // running minimum
  double estimate = 0.0;          // extrapolated ||v||_*
  double fit_slope = 0.0;         // b in a + b / t
  double corridor_change = 0.0;   // relative change at the last t with doubled corridor
};

/// ||v||_* = lim dbar(0, t v) / t on the periodic cover of a torus.
StableNormResult stable_norm(const Manifold& m, const WeightField& field, std::span<const double> v,
                             std::span<const double> t_list, const StableNormOptions& opt = {});

void write_matrix_csv(const std::filesystem::path& path, const DistanceMatrix& d);
void write_matrix(const std::filesystem::path& manifest, const DistanceMatrix& d);
DistanceMatrix read_matrix(const std::filesystem::path& manifest);

nlohmann::json to_json(const RefineResult& r);
nlohmann::json to_json(const StableNormResult& r);

}  // namespace conflab

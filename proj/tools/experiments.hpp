#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "conflab/conflab.hpp"

namespace conflab::lab {

// ---------------------------------------------------------------- spec

struct GraphParams {
  double spacing = 0.0;
  double eps = 0.0;                // >= 3 spacing
  std::vector<double> schedule;    // strictly decreasing eps values for refinement
  Estimator estimator;
  double ratio = 3.0;              // eps / spacing on the first schedule entry
  double growth = 1.0;             // see RefineOptions
};

struct DiagnosticParams {
  double q = 2.0;
  double p = 2.0;
  double eta = 0.0;
  double R0 = 0.5;
  double lambda0 = std::numeric_limits<double>::infinity();
  std::size_t centers = 16;
};

struct Budgets {
  std::size_t mc = 4096;
  std::size_t points = Manifold::kDefaultLatticeBudget;
};

struct ExperimentSpec {
  std::string name;  // flat-identity | sphere-bubble | log-cusp | burago | schrodinger | custom
  nlohmann::json manifold;
  std::vector<nlohmann::json> weights;  // one field or a sweep
  GraphParams graph;
  DiagnosticParams diagnostics;
  Budgets budgets;
  std::uint64_t seed = 0;
  std::filesystem::path output;
  nlohmann::json params = nlohmann::json::object();  // preset-specific overrides
};

/// Validates and fills preset defaults. InputError names the violated constraint.
ExperimentSpec parse_spec(const nlohmann::json& j);
/// The canonical spec for a preset name, with the given seed.
ExperimentSpec preset_spec(const std::string& name, std::uint64_t seed = 1);
nlohmann::json to_json(const ExperimentSpec& s);

// ---------------------------------------------------------------- report

struct Flag {
  std::string criterion;  // "C1" ... "C11"
  std::string check;
  bool pass = false;
  std::string detail;
};

struct RunReport {
  nlohmann::json spec;
  nlohmann::json stages = nlohmann::json::object();
  std::vector<Flag> flags;
  std::map<std::string, double> timings;  // seconds per stage; kept out of report.json
  std::string error;                      // first stage error, later stages skipped
  ErrorKind error_kind = ErrorKind::Input;

  bool passed() const;
};

nlohmann::json to_json(const RunReport& r);

/// Runs every stage of the spec, writes report.json, timings.json and the
/// stage artifacts under `output` (CONF_LAB_OUT overrides it).
RunReport run(const ExperimentSpec& spec);

/// 0 all flags pass, 1 some flag failed, otherwise the error class code.
int exit_code(const RunReport& r);
/// 2 input/format/unsupported, 3 numeric/geometry/integration/construction, 4 resource.
int exit_code(ErrorKind kind);

// ---------------------------------------------------------------- shared tools

/// Square distance matrix over `points` on the implicit lattice graph.
DistanceMatrix lattice_distances(const Manifold& m, const WeightField& field,
                                 std::span<const Point> points, double spacing, double eps,
                                 const Estimator& est, std::uint64_t seed,
                                 std::size_t budget = Manifold::kDefaultLatticeBudget);

/// Same index set, d0 values.
DistanceMatrix background_matrix(const Manifold& m, std::span<const Point> points);

struct ConvergenceTable {
  std::vector<double> sup_diff;  // sup |d_k - d_{k+1}| per consecutive pair
  std::vector<double> ratios;    // sup_diff[k+1] / sup_diff[k]
  double rate = 0.0;             // geometric mean of the ratios
};

/// InputError unless all matrices share sources and targets.
ConvergenceTable converge_compare(std::span<const DistanceMatrix> matrices);

/// sup |d_k - reference| per matrix.
std::vector<double> sup_difference(std::span<const DistanceMatrix> matrices, const DistanceMatrix& reference);

struct TestFunction {
  enum class Kind { One, Cos, Bump } kind = Kind::One;
  std::vector<double> k;  // Cos: integer frequencies per axis
  Point center;           // Bump
  double radius = 1.0;    // Bump

  /// "1", "cos:1,0", "bump:3.14,3.14:1".
  static TestFunction parse(const std::string& s, const Manifold& m);
  std::string label() const;
  double operator()(const Manifold& m, std::span<const double> x) const;
};

/// integral of phi e^{n f} dmu0 per (field, phi); rows follow `fields`.
std::vector<std::vector<Measure>> weak_star_test(const Manifold& m, std::span<const WeightField> fields,
                                                 std::span<const TestFunction> testfns,
                                                 std::size_t budget, std::uint64_t seed);

// ---------------------------------------------------------------- stages
// Each preset is a sequence of measuring stages. run() turns their results
// into flags; the acceptance binary checks them against its own references.

struct FlatParams {
  double spacing = 0.05, eps = 0.15;
  std::vector<double> schedule{0.3, 0.15, 0.075};
  double growth = 1.0;
  std::size_t pairs = 50;
  double min_pair = 0.5;  // below this d0 the snapping to lattice nodes dominates
  std::vector<double> disc_radii{0.5, 1.0, 1.5};
  std::size_t disc_centers = 4;
  double constant = 0.3;
  std::size_t budget = 4096;
  std::uint64_t seed = 1;
};

struct FlatDistances {
  std::vector<std::pair<Point, Point>> pairs;
  std::vector<double> d0, d_f;
  double max_rel_err = 0.0;
  RefineResult refine;
  double max_rel_err_extrapolated = 0.0;
  double seconds = 0.0;
};
FlatDistances flat_distances(const FlatParams& p);

/// Discs in the flat torus.
IsoperimetricReport flat_isoperimetry(const FlatParams& p);

struct ConstantWeightCheck {
  double C_rh = 0.0, C_ap = 0.0;
};
/// Constant(p.constant) on the flat torus, radii up to the default eta.
ConstantWeightCheck flat_constants(const FlatParams& p);

struct BubbleParams {
  std::vector<double> lambdas{1.0, 2.0, 10.0, 100.0};
  double R0 = 0.5;
  std::size_t samples = 1000;
  std::size_t budget = 4096;
  std::uint64_t seed = 1;
};

struct BubbleRow {
  double lambda = 0.0;
  double max_rel_scal_err = 0.0;
  double total_mass = 0.0;
  PinchingReport pinching;
};
/// n = 3; pinching centers are the concentration point and two others.
std::vector<BubbleRow> sphere_bubble(const BubbleParams& p);

struct CuspParams {
  std::size_t nodes = 128;  // per axis
  double ratio = 3.0;
  std::vector<double> caps{2.0, 4.0, 8.0};
  double R0 = 1.0;
  std::size_t random_points = 20;
  std::vector<double> near_radii{0.01, 0.05, 0.2, 0.5};
  std::uint64_t seed = 1;
};

struct CuspResult {
  std::vector<Point> points;
  std::vector<double> caps;  // the finite caps, then infinity
  std::vector<DistanceMatrix> matrices;
  std::vector<double> sup_diff_to_limit;  // one per finite cap
  std::vector<BiHolderFit> fits;          // one per matrix
  double flat_diameter = 0.0;
};
/// Cusp at the torus center.
CuspResult log_cusp(const CuspParams& p);

struct BuragoParams {
  std::vector<double> t_list{4.0 * std::numbers::pi, 8.0 * std::numbers::pi, 16.0 * std::numbers::pi};
  double stable_ratio = 3.0;

  std::size_t conv_nodes = 256;
  double conv_ratio = 6.0;
  std::size_t conv_columns = 32;
  std::vector<int> conv_ells{1, 2, 4, 8};
  std::size_t weak_budget = 200'000;

  std::vector<int> ap_ells{1, 2, 4, 8};
  std::vector<int> strong_ells{1, 2, 4, 8, 16};
  double eta = 3.1;
  std::size_t strong_nodes = 128;
  double strong_ratio = 6.0;
  std::size_t strong_random = 16;
  std::size_t strong_columns = 8;
  std::size_t budget = 4096;
  std::size_t full_budget = 65536;

  std::vector<int> iso_ells{1, 2, 4, 8};
  std::vector<double> disc_radii{0.5, 1.0, 1.5};
  std::size_t disc_centers = 4;

  int scale_ell = 2;
  double scale_shift = 0.7;
  std::uint64_t seed = 1;
};

struct StableStage {
  StableNormResult e1, e2;
  double seconds = 0.0;
};
StableStage burago_stable_norm(const BuragoParams& p);

struct ConvergenceStage {
  std::vector<Point> points;  // vertical pairs (2i, 2i + 1) of length pi
  std::vector<int> ells;
  std::vector<DistanceMatrix> matrices;
  ConvergenceTable table;
  std::vector<TestFunction> testfns;
  std::vector<std::vector<Measure>> weak;  // per ell
};
ConvergenceStage burago_convergence(const BuragoParams& p);

struct StrongRow {
  int ell = 0;
  StrongRatio ratio;
};

struct AInftyStage {
  std::vector<AInftyReport> reports;  // per ap ell
  std::vector<StrongRow> strong;      // per strong ell
  double full_C_rh = 0.0, full_C_ap = 0.0;  // l = 1, the whole torus as one ball
};
AInftyStage burago_ainfty(const BuragoParams& p);

/// Discs per iso ell.
std::vector<IsoperimetricReport> burago_isoperimetry(const BuragoParams& p);

struct ScalingSide {
  std::vector<double> distances;
  AInftyReport ainfty;
  StrongRatio strong;
  IsoperimetricReport iso;
};
struct ScalingStage {
  ScalingSide base, scaled;
  double shift = 0.0;
};
/// Burago(scale_ell) against Scaled(Burago(scale_ell), scale_shift), shared seeds.
ScalingStage burago_scaling(const BuragoParams& p);

struct SchrodingerParams {
  double period = 2.0;  // 3-torus
  std::size_t nodes = 12;
  double amplitude = 0.2;
  double shift = 0.37;
  std::size_t dense_nodes = 16;  // 2-torus of period 2 pi
  double dense_amplitude = 0.05;
  double gs_radius = 0.8;
  double gs_amplitude = 0.5;
  double rho = 0.8;
  std::vector<double> scales{1.0, 0.5, 0.25};
  std::uint64_t seed = 1;
};

/// a cos(2 pi x1 / P) cos(2 pi x2 / P) on the nodes.
std::vector<double> cosine_potential(const Manifold& m, const std::vector<std::size_t>& shape, double a);

struct SpectrumStage {
  double lambda_zero = 0.0;   // V = 0
  double lambda_const = 0.0;  // V = shift
  double shift = 0.0;
  std::size_t dense_nodes = 0;
  std::vector<double> dense_potential;
  double dense_lambda = 0.0;  // lowest_eigenpair on the dense-check grid
};
SpectrumStage schrodinger_spectrum(const SchrodingerParams& p);

struct ShiftStage {
  SobolevEstimate beta;
  GsShift positive, negative;  // q = +bump, -bump
  double q_norm = 0.0;
};
ShiftStage schrodinger_shift(const SchrodingerParams& p);

struct FixedPointStage {
  OperatorNormEstimate A;
  FixedPoint fixed;
  SchrodingerSolve ground;
  double ratio_spread = 0.0;  // max / min of e^v / phi, minus 1
};
FixedPointStage schrodinger_fixed_point(const SchrodingerParams& p);

struct DecompositionStage {
  std::vector<double> scales;
  std::vector<Decomposition> rows;
};
/// Potentials t V - lambda0(t V) so that the ground state has eigenvalue 0.
DecompositionStage schrodinger_decomposition(const SchrodingerParams& p);

}  // namespace conflab::lab

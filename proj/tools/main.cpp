#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "experiments.hpp"

using nlohmann::json;
using namespace conflab;

namespace {

struct GeometryArgs {
  std::string manifold = "torus";
  int dim = 2;
  std::vector<double> periods;
  double radius = 1.0;
  std::vector<double> lo, hi;
  std::string weight = R"({"kind":"constant","c":0})";

  void add(CLI::App* app) {
    app->add_option("--manifold", manifold, "torus, box or sphere")->check(CLI::IsMember({"torus", "box", "sphere"}));
    app->add_option("--dim", dim, "intrinsic dimension");
    app->add_option("--periods", periods, "torus periods (default 2 pi each)")->delimiter(',');
    app->add_option("--radius", radius, "sphere radius");
    app->add_option("--lo", lo, "box lower corner")->delimiter(',');
    app->add_option("--hi", hi, "box upper corner")->delimiter(',');
    app->add_option("--weight", weight, "weight field as JSON, or @file.json");
  }

  Manifold build() const {
    json j{{"kind", manifold}, {"dim", dim}};
    if (manifold == "torus" && !periods.empty()) j["periods"] = periods;
    if (manifold == "sphere") j["radius"] = radius;
    if (manifold == "box") {
      if (lo.size() != hi.size() || lo.empty()) throw InputError("--lo and --hi must have the same nonzero length");
      json ext = json::array();
      for (std::size_t i = 0; i < lo.size(); ++i) ext.push_back({lo[i], hi[i]});
      j["extents"] = ext;
    }
    return manifold_from_json(j);
  }

  WeightField field(const Manifold& m) const { return WeightField::from_json(load_json(weight), m); }

  static json load_json(const std::string& s) {
    try {
      if (!s.empty() && s[0] == '@') {
        std::ifstream in(s.substr(1));
        if (!in) throw InputError("cannot read " + s.substr(1));
        return json::parse(in);
      }
      return json::parse(s);
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what());
    }
  }
};

std::filesystem::path output_dir(const std::string& flag, const std::string& fallback) {
  if (const char* env = std::getenv("CONF_LAB_OUT"); env && *env) return env;
  return flag.empty() ? std::filesystem::path("conflab-out") / fallback : std::filesystem::path(flag);
}

void emit(const std::filesystem::path& dir, const std::string& file, const json& j) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / file);
  if (!out) throw ResourceError("cannot write " + (dir / file).string());
  out << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
}

std::vector<Point> parse_points(const std::vector<std::string>& raw, const Manifold& m) {
  std::vector<Point> pts;
  for (const auto& s : raw) {
    std::vector<double> c;
    std::stringstream ss(s);
    std::string item;
    try {
      while (std::getline(ss, item, ',')) c.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw InputError("point '" + s + "': expected comma-separated coordinates");
    }
    m.validate(c);
    pts.emplace_back(std::move(c));
  }
  return pts;
}

int report_flags(const lab::RunReport& r) {
  for (const auto& f : r.flags)
    std::cout << (f.pass ? "PASS " : "FAIL ") << f.criterion << "  " << f.check << "  (" << f.detail << ")\n";
  if (!r.error.empty()) std::cerr << "error [" << to_string(r.error_kind) << "]: " << r.error << '\n';
  std::cout << (r.passed() ? "all flags pass" : "run failed") << '\n';
  return lab::exit_code(r);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conflab: conformal metric-measure geometry laboratory"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run an experiment spec (or a preset)");
  std::string spec_path, preset, output;
  std::uint64_t seed = 1;
  run->add_option("spec", spec_path, "experiment spec JSON");
  run->add_option("--preset", preset, "flat-identity, sphere-bubble, log-cusp, burago or schrodinger");
  run->add_option("--seed", seed, "seed for --preset");
  run->add_option("--output", output, "output directory (CONF_LAB_OUT overrides)");

  // dist
  auto* dist = app.add_subcommand("dist", "conformal distances between points");
  GeometryArgs dg;
  dg.add(dist);
  double spacing = 0.05, eps = 0.0;
  std::string estimator = "RiemannLine";
  std::vector<std::string> points;
  std::size_t random_points = 0;
  std::vector<double> schedule;
  dist->add_option("--spacing", spacing, "lattice spacing");
  dist->add_option("--eps", eps, "neighbourhood radius (default 3 spacing)");
  dist->add_option("--estimator", estimator)->check(CLI::IsMember({"RiemannLine", "ChainBall"}));
  dist->add_option("--point", points, "point as x1,...,xn (repeatable)");
  dist->add_option("--random", random_points, "add this many uniform random points");
  dist->add_option("--schedule", schedule, "eps schedule for refinement of consecutive point pairs")->delimiter(',');
  dist->add_option("--seed", seed);
  dist->add_option("--output", output);

  // ainfty
  auto* ainfty = app.add_subcommand("ainfty", "A-infinity diagnostics of a weight");
  GeometryArgs ag;
  ag.add(ainfty);
  AInftyOptions ao;
  ainfty->add_option("--q", ao.q, "reverse Hoelder exponent");
  ainfty->add_option("--p", ao.p, "A_p exponent");
  ainfty->add_option("--eta", ao.eta, "largest ball radius (0: default)");
  ainfty->add_option("--centers", ao.centers);
  ainfty->add_option("--radius-fractions", ao.radius_fractions)->delimiter(',');
  ainfty->add_option("--mc", ao.budget, "Monte Carlo budget per ball");
  ainfty->add_option("--seed", seed);
  ainfty->add_option("--output", output);

  // curv
  auto* curv = app.add_subcommand("curv", "scalar curvature and pinching profile");
  GeometryArgs cg;
  cg.manifold = "sphere";
  cg.dim = 3;
  cg.add(curv);
  double R0 = 0.5, lambda0 = WeightField::kNoCap;
  std::size_t mc = 4096;
  std::vector<std::string> centers;
  bool finite_diff = false;
  curv->add_option("--point", points, "evaluation point (repeatable)");
  curv->add_option("--center", centers, "pinching center (repeatable)");
  curv->add_option("--R0", R0, "pinching radius");
  curv->add_option("--lambda0", lambda0, "pinching threshold");
  curv->add_option("--mc", mc, "Monte Carlo budget");
  curv->add_flag("--finite-difference", finite_diff, "use finite differences");
  curv->add_option("--seed", seed);
  curv->add_option("--output", output);

  // stablenorm
  auto* sn = app.add_subcommand("stablenorm", "stable norm of a periodic conformal metric");
  GeometryArgs sg;
  sg.weight = R"({"kind":"burago","ell":1})";
  sg.add(sn);
  std::vector<double> direction{1.0, 0.0};
  std::vector<double> t_list{4.0 * std::numbers::pi, 8.0 * std::numbers::pi, 16.0 * std::numbers::pi};
  StableNormOptions so;
  sn->add_option("--direction", direction)->delimiter(',');
  sn->add_option("--t-list", t_list)->delimiter(',');
  sn->add_option("--spacing", so.spacing, "0: min period / 64");
  sn->add_option("--ratio", so.ratio, "eps / spacing");
  sn->add_option("--seed", seed);
  sn->add_option("--output", output);

  // schrod
  auto* sch = app.add_subcommand("schrod", "Schroedinger operators on a periodic grid");
  std::vector<double> speriods{2.0, 2.0, 2.0};
  std::size_t nodes = 12;
  double amplitude = 0.2, rho = 0.0;
  std::string potential_grid;
  bool fixed = false;
  sch->add_option("--periods", speriods, "torus periods")->delimiter(',');
  sch->add_option("--nodes", nodes, "nodes per axis");
  sch->add_option("--amplitude", amplitude, "V = a cos(2 pi x1/P) cos(2 pi x2/P)");
  sch->add_option("--potential-grid", potential_grid, "potential from a grid manifest instead");
  sch->add_flag("--fixed-point", fixed, "also solve the log-gradient fixed point");
  sch->add_option("--rho", rho, "also decompose the ground state at this radius (n >= 3)");
  sch->add_option("--seed", seed);
  sch->add_option("--output", output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      if (spec_path.empty() == preset.empty()) throw InputError("run: give a spec file or --preset, not both");
      lab::ExperimentSpec spec;
      if (!preset.empty()) {
        spec = lab::preset_spec(preset, seed);
      } else {
        std::ifstream in(spec_path);
        if (!in) throw InputError("cannot read " + spec_path);
        json j;
        try {
          j = json::parse(in);
        } catch (const json::parse_error& e) {
          throw FormatError(std::string("spec: ") + e.what());
        }
        spec = lab::parse_spec(j);
      }
      if (!output.empty()) spec.output = output;
      return report_flags(lab::run(spec));
    }
    if (*dist) {
      const Manifold m = dg.build();
      const WeightField f = dg.field(m);
      std::vector<Point> pts = parse_points(points, m);
      if (random_points > 0) {
        const SampleSet s = m.sample_uniform(random_points, seed);
        for (std::size_t i = 0; i < s.size(); ++i) pts.emplace_back(s[i]);
      }
      if (pts.size() < 2) throw InputError("dist: need at least two points");
      if (eps == 0.0) eps = 3.0 * spacing;
      if (eps < 3.0 * spacing * (1.0 - 1e-12)) throw InputError("--eps must be >= 3 * --spacing");
      const Estimator est{estimator_from_string(estimator)};
      const auto dir = output_dir(output, "dist");
      json j{{"points", json::array()}};
      for (const auto& p : pts) j["points"].push_back(p.coords);
      if (m.kind() == ManifoldKind::Sphere) {
        PointSet ps = m.lattice(spacing);
        std::vector<std::size_t> idx;
        for (const auto& p : pts) idx.push_back(ps.push_back(p));
        const EpsGraph g = build_graph(m, std::move(ps), eps, f, est, seed);
        const DistanceMatrix d = shortest_paths(g, idx, idx);
        std::filesystem::create_directories(dir);
        write_matrix(dir / "distances.json", d);
        write_matrix_csv(dir / "distances.csv", d);
        j["d_f"] = d.values;
      } else {
        const DistanceMatrix d = lab::lattice_distances(m, f, pts, spacing, eps, est, seed);
        std::filesystem::create_directories(dir);
        write_matrix(dir / "distances.json", d);
        write_matrix_csv(dir / "distances.csv", d);
        j["d_f"] = d.values;
      }
      if (!schedule.empty()) {
        std::vector<std::pair<Point, Point>> pairs;
        for (std::size_t i = 0; i + 1 < pts.size(); i += 2) pairs.emplace_back(pts[i], pts[i + 1]);
        RefineOptions ro;
        ro.estimator = est;
        ro.seed = seed;
        j["refine"] = to_json(refine_distance(m, f, pairs, schedule, ro));
      }
      emit(dir, "dist.json", j);
      return 0;
    }
    if (*ainfty) {
      const Manifold m = ag.build();
      ao.seed = seed;
      emit(output_dir(output, "ainfty"), "ainfty.json", to_json(ainfty_report(m, ag.field(m), ao)));
      return 0;
    }
    if (*curv) {
      const Manifold m = cg.build();
      const WeightField f = cg.field(m);
      const auto method = finite_diff ? CurvatureMethod::FiniteDifference : CurvatureMethod::Exact;
      json j{{"samples", json::array()}};
      for (const auto& p : parse_points(points, m)) {
        const auto c = scalar_curvature(m, f, p, method);
        j["samples"].push_back({{"point", p.coords}, {"scal", c.scal}});
      }
      if (!centers.empty()) {
        PointSet cs(m.coord_dim(), 0.0);
        for (const auto& p : parse_points(centers, m)) cs.push_back(p);
        j["pinching"] = to_json(pinching_profile(m, f, R0, cs, mc, seed, lambda0, method));
      }
      emit(output_dir(output, "curv"), "curv.json", j);
      return 0;
    }
    if (*sn) {
      const Manifold m = sg.build();
      so.seed = seed;
      emit(output_dir(output, "stablenorm"), "stablenorm.json",
           to_json(stable_norm(m, sg.field(m), direction, t_list, so)));
      return 0;
    }
    if (*sch) {
      GridOperator op = [&] {
        if (!potential_grid.empty()) return GridOperator(read_grid(potential_grid));
        const Manifold m = Manifold::torus(speriods);
        const std::vector<std::size_t> shape(speriods.size(), nodes);
        return GridOperator(m, shape, lab::cosine_potential(m, shape, amplitude));
      }();
      const auto dir = output_dir(output, "schrod");
      const SchrodingerSolve g = lowest_eigenpair(op, 1e-11);
      std::filesystem::create_directories(dir);
      write_grid(dir / "ground_state.json", GridField(op.manifold(), op.shape(), g.phi));
      json j{{"ground", to_json(g)}, {"ground_state", "ground_state.json"}};
      if (fixed) j["fixed_point"] = to_json(log_gradient_fixedpoint(op, 1e-12, 200, 0.0, seed));
      if (rho > 0.0) {
        std::vector<double> V(op.potential().begin(), op.potential().end());
        for (double& v : V) v += g.lambda0;
        const GridOperator shifted = op.with_potential(std::move(V));
        DecompositionOptions o;
        o.seed = seed;
        j["decomposition"] = to_json(decompose_ground_state(shifted, rho, lowest_eigenpair(shifted, 1e-12).phi, o));
      }
      emit(dir, "schrod.json", j);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return lab::exit_code(e.kind());
  } catch (const std::bad_alloc&) {
    std::cerr << "error [resource]: out of memory\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

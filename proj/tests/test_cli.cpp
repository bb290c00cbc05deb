#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "experiments.hpp"

using namespace conflab;
using namespace conflab::lab;
using nlohmann::json;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

std::string input_error(const json& j) {
  try {
    parse_spec(j);
  } catch (const InputError& e) {
    return e.what();
  }
  return {};
}

json small_custom(const fs::path& out) {
  return json{{"name", "custom"},
              {"seed", 5},
              {"manifold", {{"kind", "torus"}, {"dim", 2}}},
              {"weight", {{"kind", "burago"}, {"ell", 2}}},
              {"graph", {{"spacing", 2 * pi / 32}, {"eps", 3 * 2 * pi / 32}}},
              {"diagnostics", {{"centers", 4}}},
              {"budgets", {{"mc", 512}}},
              {"output", out.string()}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DistanceMatrix square(std::vector<double> v, std::size_t n) {
  DistanceMatrix d;
  for (std::size_t i = 0; i < n; ++i) {
    d.sources.push_back(i);
    d.targets.push_back(i);
  }
  d.values = std::move(v);
  return d;
}

}  // namespace

TEST_CASE("spec validation names the violated constraint") {
  const json base{{"name", "flat-identity"}, {"seed", 1}};
  CHECK_NOTHROW(parse_spec(base));

  json j = base;
  j["graph"] = {{"spacing", 0.1}, {"eps", 0.2}};
  CHECK(input_error(j).find("eps must be >= 3 * graph.spacing") != std::string::npos);

  CHECK(input_error(json{{"name", "burago"}}).find("seed") != std::string::npos);
  CHECK(input_error(json{{"name", "burago"}, {"seed", -1}}).find("seed") != std::string::npos);

  j = base;
  j["colour"] = 1;
  CHECK(input_error(j).find("unknown key 'colour'") != std::string::npos);

  j = base;
  j["graph"] = {{"schedule", {0.1, 0.2, 0.05}}};
  CHECK(input_error(j).find("strictly decreasing") != std::string::npos);

  j = base;
  j["budgets"] = {{"mc", 10}};
  CHECK(input_error(j).find("budgets.mc") != std::string::npos);

  CHECK(input_error(json{{"name", "nope"}, {"seed", 1}}).find("unknown experiment") != std::string::npos);
  CHECK(input_error(json{{"name", "custom"}, {"seed", 1}}).find("manifold") != std::string::npos);
}

TEST_CASE("preset specs round trip through json") {
  for (const char* name : {"flat-identity", "sphere-bubble", "log-cusp", "burago", "schrodinger"}) {
    const ExperimentSpec s = preset_spec(name, 7);
    CHECK(s.seed == 7);
    const ExperimentSpec r = parse_spec(to_json(s));
    CHECK(to_json(r) == to_json(s));
  }
  CHECK_THROWS_AS(preset_spec("custom"), InputError);
}

TEST_CASE("convergence comparison") {
  const DistanceMatrix a = square({0, 1, 1, 0}, 2);
  const DistanceMatrix b = square({0, 1.5, 1.5, 0}, 2);
  const DistanceMatrix c = square({0, 1.75, 1.75, 0}, 2);
  const DistanceMatrix same[] = {a, a, a};
  for (double v : converge_compare(same).sup_diff) CHECK(v == 0.0);
  const DistanceMatrix seq[] = {a, b, c};
  const ConvergenceTable t = converge_compare(seq);
  REQUIRE(t.sup_diff.size() == 2);
  CHECK(t.sup_diff[0] == doctest::Approx(0.5));
  CHECK(t.ratios[0] == doctest::Approx(0.5));
  CHECK(sup_difference(seq, c)[0] == doctest::Approx(0.75));

  DistanceMatrix bad = b;
  bad.targets[1] = 9;
  const DistanceMatrix mixed[] = {a, bad};
  CHECK_THROWS_AS(converge_compare(mixed), InputError);
}

TEST_CASE("weak-* test integrals") {
  const Manifold t = Manifold::torus(2);
  const WeightField fields[] = {WeightField::constant(0), WeightField::burago(1), WeightField::burago(4)};
  const TestFunction fns[] = {TestFunction::parse("1", t), TestFunction::parse("cos:1,0", t)};
  const auto rows = weak_star_test(t, fields, fns, 40000, 3);
  REQUIRE(rows.size() == 3);
  auto near = [](const Measure& m, double ref) { return std::abs(m.value - ref) <= 3 * m.std_error + 1e-9; };
  for (const auto& r : rows) CHECK(near(r[0], 4 * pi * pi));
  CHECK(near(rows[0][1], 0.0));
  // cos(x1) (1 - cos(x1) / 2) integrates to -pi^2
  CHECK(near(rows[1][1], -pi * pi));
  CHECK(near(rows[2][1], 0.0));
  CHECK(TestFunction::parse("bump:1,2:0.5", t).label() == "bump:1,2:0.5");
  CHECK_THROWS_AS(TestFunction::parse("sin:1", t), InputError);
}

TEST_CASE("exit codes follow the error class") {
  CHECK(exit_code(ErrorKind::Input) == 2);
  CHECK(exit_code(ErrorKind::Format) == 2);
  CHECK(exit_code(ErrorKind::Unsupported) == 2);
  CHECK(exit_code(ErrorKind::Numeric) == 3);
  CHECK(exit_code(ErrorKind::Geometry) == 3);
  CHECK(exit_code(ErrorKind::Integration) == 3);
  CHECK(exit_code(ErrorKind::Construction) == 3);
  CHECK(exit_code(ErrorKind::Resource) == 4);
  RunReport r;
  CHECK(exit_code(r) == 0);
  r.flags.push_back({"C1", "x", false, ""});
  CHECK(exit_code(r) == 1);
  r.error = "boom";
  r.error_kind = ErrorKind::Resource;
  CHECK(exit_code(r) == 4);
}

TEST_CASE("report.json is deterministic for a fixed seed") {
  const fs::path root = fs::temp_directory_path() / "conflab-tests";
  const fs::path a = root / "det-a", b = root / "det-b";
  fs::remove_all(a);
  fs::remove_all(b);
  const RunReport ra = run(parse_spec(small_custom(a)));
  const RunReport rb = run(parse_spec(small_custom(b)));
  CHECK(ra.error.empty());
  CHECK(fs::exists(a / "timings.json"));
  json ja = json::parse(slurp(a / "report.json")), jb = json::parse(slurp(b / "report.json"));
  ja["spec"].erase("output");
  jb["spec"].erase("output");
  CHECK(ja == jb);
  CHECK(slurp(a / "distances_0.json") == slurp(b / "distances_0.json"));
}

TEST_CASE("burago stable norm in the vertical direction") {
  BuragoParams p;
  p.t_list = {4 * pi, 8 * pi};
  const StableStage s = burago_stable_norm(p);
  CHECK(s.e2.estimate == doctest::Approx(1 / std::sqrt(2.0)).epsilon(0.01));
  CHECK(s.e1.estimate > s.e2.estimate);
}

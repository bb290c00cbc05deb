#include "experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace conflab::lab {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

const std::vector<std::string> kPresets{"flat-identity", "sphere-bubble", "log-cusp", "burago", "schrodinger",
                                        "custom"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

json weight_list(std::initializer_list<json> w) { return json(std::vector<json>(w)); }

// Full default document per preset; user documents are merged over it.
json preset_document(const std::string& name) {
  const double two_pi = 2.0 * kPi;
  json j{{"name", name},
         {"diagnostics", {{"q", 2.0}, {"p", 2.0}, {"eta", 0.0}, {"R0", 0.5}, {"lambda0", nullptr}, {"centers", 16}}},
         {"budgets", {{"mc", 4096}, {"points", Manifold::kDefaultLatticeBudget}}},
         {"params", json::object()}};
  if (name == "flat-identity") {
    j["manifold"] = {{"kind", "torus"}, {"dim", 2}};
    j["weights"] = weight_list({{{"kind", "constant"}, {"c", 0.0}}});
    j["graph"] = {{"spacing", 0.05}, {"eps", 0.15}, {"schedule", {0.3, 0.15, 0.075}}, {"estimator", "RiemannLine"},
                  {"ratio", 3.0}, {"growth", 1.0}};
  } else if (name == "sphere-bubble") {
    j["manifold"] = {{"kind", "sphere"}, {"dim", 3}};
    json ws = json::array();
    for (double l : {1.0, 2.0, 10.0, 100.0}) ws.push_back({{"kind", "sphere_bubble"}, {"lambda", l}});
    j["weights"] = ws;
    j["graph"] = {{"spacing", 0.0}, {"eps", 0.0}, {"schedule", json::array()}, {"estimator", "RiemannLine"}};
  } else if (name == "log-cusp") {
    j["manifold"] = {{"kind", "torus"}, {"dim", 2}};
    json ws = json::array();
    for (json cap : {json(2.0), json(4.0), json(8.0), json(nullptr)})
      ws.push_back({{"kind", "log_cusp"}, {"x0", {kPi, kPi}}, {"R0", 1.0}, {"cap", cap}});
    j["weights"] = ws;
    j["graph"] = {{"spacing", two_pi / 128.0}, {"eps", 3.0 * two_pi / 128.0}, {"schedule", json::array()},
                  {"estimator", "RiemannLine"}};
  } else if (name == "burago") {
    j["manifold"] = {{"kind", "torus"}, {"dim", 2}};
    json ws = json::array();
    for (int l : {1, 2, 4, 8}) ws.push_back({{"kind", "burago"}, {"ell", l}});
    j["weights"] = ws;
    j["graph"] = {{"spacing", two_pi / 256.0}, {"eps", 6.0 * two_pi / 256.0}, {"schedule", json::array()},
                  {"estimator", "RiemannLine"}, {"ratio", 3.0}};
    j["diagnostics"]["eta"] = 3.1;
  } else if (name == "schrodinger") {
    j["manifold"] = {{"kind", "torus"}, {"periods", {2.0, 2.0, 2.0}}};
    j["weights"] = json::array();
    j["graph"] = {{"spacing", 2.0 / 12.0}, {"eps", 0.5}, {"schedule", json::array()}, {"estimator", "RiemannLine"}};
  } else if (name == "custom") {
    j["graph"] = {{"spacing", 0.0}, {"eps", 0.0}, {"schedule", json::array()}, {"estimator", "RiemannLine"}};
  }
  return j;
}

void merge_into(json& base, const json& over) {
  for (const auto& [k, v] : over.items()) {
    if (v.is_object() && base.contains(k) && base[k].is_object() && k != "manifold")
      merge_into(base[k], v);
    else
      base[k] = v;
  }
}

template <typename T>
T field(const json& j, const char* key, const char* where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string(where) + "." + key + ": missing or wrong type");
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : j.items())
    if (!allowed.contains(k)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw InputError(where + ": unknown key '" + k + "' (expected " + list + ")");
    }
}

void require_preset_geometry(const ExperimentSpec& s, const Manifold& m) {
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) throw InputError("preset '" + s.name + "' requires " + what);
  };
  auto kinds_are = [&](const char* kind) {
    return std::all_of(s.weights.begin(), s.weights.end(),
                       [&](const json& w) { return w.value("kind", "") == kind; });
  };
  if (s.name == "flat-identity") {
    need(m.kind() == ManifoldKind::Torus && m.dim() == 2, "a 2-torus");
  } else if (s.name == "sphere-bubble") {
    need(m.kind() == ManifoldKind::Sphere && m.dim() == 3, "the 3-sphere");
    need(!s.weights.empty() && kinds_are("sphere_bubble"), "sphere_bubble weights");
  } else if (s.name == "log-cusp") {
    need(m.kind() == ManifoldKind::Torus && m.dim() == 2, "a 2-torus");
    need(s.weights.size() >= 2 && kinds_are("log_cusp"), "at least two log_cusp weights");
  } else if (s.name == "burago") {
    need(m.kind() == ManifoldKind::Torus && m.dim() == 2 && m.periods()[0] == 2.0 * kPi &&
             m.periods()[1] == 2.0 * kPi,
         "the 2-torus of period 2 pi");
    need(s.weights.size() >= 3 && kinds_are("burago"), "at least three burago weights");
  } else if (s.name == "schrodinger") {
    need(m.kind() == ManifoldKind::Torus && m.dim() == 3, "a 3-torus");
  } else if (s.name == "custom") {
    need(!s.weights.empty(), "at least one weight");
  }
}

}  // namespace

// ---------------------------------------------------------------- spec

ExperimentSpec parse_spec(const json& in) {
  if (!in.is_object()) throw InputError("spec: expected a JSON object");
  check_keys(in, {"name", "manifold", "weight", "weights", "graph", "diagnostics", "budgets", "seed", "output", "params"},
             "spec");
  const auto name = field<std::string>(in, "name", "spec");
  if (std::find(kPresets.begin(), kPresets.end(), name) == kPresets.end())
    throw InputError("spec.name: unknown experiment '" + name +
                     "' (expected flat-identity, sphere-bubble, log-cusp, burago, schrodinger, custom)");
  if (!in.contains("seed") || !in.at("seed").is_number_integer() || in.at("seed").get<std::int64_t>() < 0)
    throw InputError("spec.seed: an explicit nonnegative integer seed is required");
  if (in.contains("weight") && in.contains("weights")) throw InputError("spec: give either weight or weights, not both");

  json j = preset_document(name);
  json over = in;
  if (over.contains("weight")) {
    over["weights"] = json::array({over["weight"]});
    over.erase("weight");
  }
  merge_into(j, over);

  ExperimentSpec s;
  s.name = name;
  s.seed = j.at("seed").get<std::uint64_t>();
  if (!j.contains("manifold")) throw InputError("spec.manifold: required for custom experiments");
  s.manifold = j.at("manifold");
  const Manifold m = manifold_from_json(s.manifold);
  if (!j.contains("weights") || !j.at("weights").is_array())
    throw InputError("spec.weights: required (an object under weight or a list under weights)");
  for (const auto& w : j.at("weights")) {
    WeightField::from_json(w, m).check_manifold(m);
    s.weights.push_back(w);
  }

  const json& g = j.at("graph");
  check_keys(g, {"spacing", "eps", "schedule", "estimator", "ratio", "growth"}, "spec.graph");
  s.graph.spacing = g.value("spacing", 0.0);
  s.graph.eps = g.value("eps", 0.0);
  s.graph.schedule = g.value("schedule", std::vector<double>{});
  s.graph.estimator.kind = estimator_from_string(g.value("estimator", std::string("RiemannLine")));
  s.graph.ratio = g.value("ratio", 3.0);
  s.graph.growth = g.value("growth", 1.0);
  if (s.graph.spacing < 0.0 || !std::isfinite(s.graph.spacing)) throw InputError("graph.spacing must be >= 0");
  if (s.graph.spacing > 0.0 && !(s.graph.eps >= 3.0 * s.graph.spacing * (1.0 - 1e-12)))
    throw InputError("graph.eps must be >= 3 * graph.spacing (eps = " + fmt(s.graph.eps) +
                     ", spacing = " + fmt(s.graph.spacing) + ")");
  for (std::size_t k = 1; k < s.graph.schedule.size(); ++k)
    if (!(s.graph.schedule[k] < s.graph.schedule[k - 1]))
      throw InputError("graph.schedule must be strictly decreasing");
  for (double e : s.graph.schedule)
    if (!(e > 0.0)) throw InputError("graph.schedule entries must be positive");
  if (!(s.graph.ratio >= 3.0)) throw InputError("graph.ratio must be >= 3");

  const json& d = j.at("diagnostics");
  check_keys(d, {"q", "p", "eta", "R0", "lambda0", "centers"}, "spec.diagnostics");
  s.diagnostics.q = d.value("q", 2.0);
  s.diagnostics.p = d.value("p", 2.0);
  s.diagnostics.eta = d.value("eta", 0.0);
  s.diagnostics.R0 = d.value("R0", 0.5);
  s.diagnostics.lambda0 = d.contains("lambda0") && !d.at("lambda0").is_null() ? d.at("lambda0").get<double>()
                                                                                : WeightField::kNoCap;
  s.diagnostics.centers = d.value("centers", std::size_t{16});
  if (!(s.diagnostics.q > 1.0)) throw InputError("diagnostics.q must be > 1");
  if (!(s.diagnostics.p > 1.0)) throw InputError("diagnostics.p must be > 1");
  if (s.diagnostics.eta < 0.0) throw InputError("diagnostics.eta must be >= 0 (0 picks the default)");
  if (!(s.diagnostics.R0 > 0.0)) throw InputError("diagnostics.R0 must be > 0");
  if (s.diagnostics.centers == 0) throw InputError("diagnostics.centers must be positive");

  const json& b = j.at("budgets");
  check_keys(b, {"mc", "points"}, "spec.budgets");
  s.budgets.mc = b.value("mc", std::size_t{4096});
  s.budgets.points = b.value("points", Manifold::kDefaultLatticeBudget);
  if (s.budgets.mc < 100) throw InputError("budgets.mc must be >= 100");

  s.output = j.contains("output") ? std::filesystem::path(j.at("output").get<std::string>())
                                  : std::filesystem::path("conflab-out") / name;
  s.params = j.at("params");
  if (!s.params.is_object()) throw InputError("spec.params must be an object");
  require_preset_geometry(s, m);
  return s;
}

ExperimentSpec preset_spec(const std::string& name, std::uint64_t seed) {
  if (name == "custom") throw InputError("the custom experiment has no preset; write a spec file");
  return parse_spec(json{{"name", name}, {"seed", seed}});
}

json to_json(const ExperimentSpec& s) {
  return {{"name", s.name},
          {"manifold", s.manifold},
          {"weights", s.weights},
          {"graph",
           {{"spacing", s.graph.spacing},
            {"eps", s.graph.eps},
            {"schedule", s.graph.schedule},
            {"estimator", to_string(s.graph.estimator.kind)},
            {"ratio", s.graph.ratio},
            {"growth", s.graph.growth}}},
          {"diagnostics",
           {{"q", s.diagnostics.q},
            {"p", s.diagnostics.p},
            {"eta", s.diagnostics.eta},
            {"R0", s.diagnostics.R0},
            {"lambda0", std::isfinite(s.diagnostics.lambda0) ? json(s.diagnostics.lambda0) : json(nullptr)},
            {"centers", s.diagnostics.centers}}},
          {"budgets", {{"mc", s.budgets.mc}, {"points", s.budgets.points}}},
          {"seed", s.seed},
          {"output", s.output.string()},
          {"params", s.params}};
}

// ---------------------------------------------------------------- report

bool RunReport::passed() const {
  return error.empty() && std::all_of(flags.begin(), flags.end(), [](const Flag& f) { return f.pass; });
}

json to_json(const RunReport& r) {
  json flags = json::array();
  for (const auto& f : r.flags)
    flags.push_back({{"criterion", f.criterion}, {"check", f.check}, {"pass", f.pass}, {"detail", f.detail}});
  json j{{"spec", r.spec}, {"stages", r.stages}, {"flags", flags}, {"passed", r.passed()}};
  if (!r.error.empty()) j["error"] = {{"kind", to_string(r.error_kind)}, {"message", r.error}};
  return j;
}

namespace {

// Reads preset overrides from spec.params; leftovers are rejected.
class Params {
 public:
  explicit Params(const json& j) : j_(j) {}
  template <typename T>
  void take(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw InputError(std::string("params.") + key + ": wrong type");
    }
  }
  void finish(const std::string& preset) const {
    for (const auto& [k, v] : j_.items())
      if (!used_.contains(k)) throw InputError("params." + k + ": not a parameter of preset '" + preset + "'");
  }

 private:
  const json& j_;
  std::set<std::string> used_;
};

std::size_t nodes_for(double period, double spacing) {
  return static_cast<std::size_t>(std::llround(period / spacing));
}

FlatParams flat_params(const ExperimentSpec& s) {
  FlatParams p;
  p.spacing = s.graph.spacing;
  p.eps = s.graph.eps;
  p.schedule = s.graph.schedule;
  p.growth = s.graph.growth;
  p.budget = s.budgets.mc;
  p.seed = s.seed;
  Params q(s.params);
  q.take("pairs", p.pairs);
  q.take("min_pair", p.min_pair);
  q.take("disc_radii", p.disc_radii);
  q.take("disc_centers", p.disc_centers);
  q.take("constant", p.constant);
  q.finish(s.name);
  if (p.schedule.size() < 3) throw InputError("flat-identity: graph.schedule needs at least three entries");
  return p;
}

BubbleParams bubble_params(const ExperimentSpec& s) {
  BubbleParams p;
  p.lambdas.clear();
  for (const auto& w : s.weights) p.lambdas.push_back(w.at("lambda").get<double>());
  p.R0 = s.diagnostics.R0;
  p.budget = s.budgets.mc;
  p.seed = s.seed;
  Params q(s.params);
  q.take("samples", p.samples);
  q.finish(s.name);
  return p;
}

CuspParams cusp_params(const ExperimentSpec& s) {
  CuspParams p;
  p.caps.clear();
  bool has_limit = false;
  for (const auto& w : s.weights) {
    if (w.contains("cap") && !w.at("cap").is_null())
      p.caps.push_back(w.at("cap").get<double>());
    else
      has_limit = true;
    p.R0 = w.value("R0", 1.0);
  }
  if (!has_limit) throw InputError("log-cusp: one weight must be uncapped (cap null)");
  std::sort(p.caps.begin(), p.caps.end());
  p.nodes = nodes_for(2.0 * kPi, s.graph.spacing);
  p.ratio = s.graph.eps / s.graph.spacing;
  p.seed = s.seed;
  Params q(s.params);
  q.take("random_points", p.random_points);
  q.take("near_radii", p.near_radii);
  q.finish(s.name);
  return p;
}

BuragoParams burago_params(const ExperimentSpec& s) {
  BuragoParams p;
  p.conv_ells.clear();
  for (const auto& w : s.weights) p.conv_ells.push_back(w.at("ell").get<int>());
  p.conv_nodes = nodes_for(2.0 * kPi, s.graph.spacing);
  p.conv_ratio = s.graph.eps / s.graph.spacing;
  p.stable_ratio = s.graph.ratio;
  if (s.diagnostics.eta > 0.0) p.eta = s.diagnostics.eta;
  p.budget = s.budgets.mc;
  p.seed = s.seed;
  Params q(s.params);
  q.take("t_list", p.t_list);
  q.take("conv_columns", p.conv_columns);
  q.take("weak_budget", p.weak_budget);
  q.take("ap_ells", p.ap_ells);
  q.take("strong_ells", p.strong_ells);
  q.take("strong_nodes", p.strong_nodes);
  q.take("strong_ratio", p.strong_ratio);
  q.take("strong_random", p.strong_random);
  q.take("strong_columns", p.strong_columns);
  q.take("full_budget", p.full_budget);
  q.take("iso_ells", p.iso_ells);
  q.take("disc_radii", p.disc_radii);
  q.take("disc_centers", p.disc_centers);
  q.take("scale_ell", p.scale_ell);
  q.take("scale_shift", p.scale_shift);
  q.finish(s.name);
  return p;
}

SchrodingerParams schrodinger_params(const ExperimentSpec& s) {
  SchrodingerParams p;
  const Manifold m = manifold_from_json(s.manifold);
  const auto& P = m.periods();
  if (P[0] != P[1] || P[1] != P[2]) throw InputError("schrodinger: the 3-torus must have equal periods");
  p.period = P[0];
  p.nodes = nodes_for(p.period, s.graph.spacing);
  p.seed = s.seed;
  Params q(s.params);
  q.take("amplitude", p.amplitude);
  q.take("shift", p.shift);
  q.take("dense_nodes", p.dense_nodes);
  q.take("dense_amplitude", p.dense_amplitude);
  q.take("gs_radius", p.gs_radius);
  q.take("gs_amplitude", p.gs_amplitude);
  q.take("rho", p.rho);
  q.take("scales", p.scales);
  q.finish(s.name);
  return p;
}

// ---------------------------------------------------------------- oracles used by the flags

double burago_e1_norm() {
  auto g = [](double t) { return std::sqrt(1.0 - 0.5 * std::cos(t)); };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, 0.0, 2.0 * kPi, 15, 1e-14) /
         (2.0 * kPi);
}

// Lowest eigenvalue of the 5-point Laplacian minus V on an n x n periodic grid, dense.
double dense_lowest(std::size_t n, double h, const std::vector<double>& V) {
  const std::size_t N = n * n;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto k = static_cast<Eigen::Index>(i * n + j);
      A(k, k) = 4.0 / (h * h) - V[i * n + j];
      const std::size_t steps[4][2] = {{1, 0}, {n - 1, 0}, {0, 1}, {0, n - 1}};
      for (const auto& [di, dj] : steps) {
        const auto l = static_cast<Eigen::Index>(((i + di) % n) * n + (j + dj) % n);
        A(k, l) -= 1.0 / (h * h);
      }
    }
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// ---------------------------------------------------------------- artifacts

class Csv {
 public:
  Csv(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw ResourceError("cannot write " + path.string());
    out_.precision(17);
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }
  template <typename... T>
  void row(const T&... v) {
    std::size_t i = 0;
    ((out_ << (i++ ? "," : "") << v), ...);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ResourceError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct Runner {
  RunReport& report;
  std::filesystem::path dir;

  void stage(const std::string& name, const std::function<json()>& fn) {
    if (!report.error.empty()) {
      report.stages[name] = {{"skipped", true}};
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      report.stages[name] = fn();
    } catch (const Error& e) {
      fail(name, e.kind(), e.what());
    } catch (const json::exception& e) {
      fail(name, ErrorKind::Format, e.what());
    } catch (const std::bad_alloc&) {
      fail(name, ErrorKind::Resource, "out of memory");
    } catch (const std::exception& e) {
      fail(name, ErrorKind::Numeric, e.what());
    }
    report.timings[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  void flag(std::string criterion, std::string check, bool pass, std::string detail) {
    report.flags.push_back({std::move(criterion), std::move(check), pass, std::move(detail)});
  }

 private:
  void fail(const std::string& name, ErrorKind kind, const std::string& what) {
    report.error = name + ": " + what;
    report.error_kind = kind;
    report.stages[name] = {{"error", {{"kind", to_string(kind)}, {"message", what}}}};
  }
};

// ---------------------------------------------------------------- presets

void run_flat(const ExperimentSpec& spec, Runner& r) {
  const FlatParams p = flat_params(spec);
  r.stage("distances", [&] {
    const FlatDistances d = flat_distances(p);
    r.report.timings["distances.measured"] = d.seconds;
    Csv csv(r.dir / "flat_pairs.csv", {"x1", "x2", "y1", "y2", "d0", "d_f", "extrapolated"});
    for (std::size_t i = 0; i < d.pairs.size(); ++i)
      csv.row(d.pairs[i].first[0], d.pairs[i].first[1], d.pairs[i].second[0], d.pairs[i].second[1], d.d0[i],
              d.d_f[i], d.refine.rows[i].extrapolated);
    r.flag("C1", "max relative error at eps " + fmt(p.eps), d.max_rel_err <= 0.03,
           fmt(d.max_rel_err) + " <= 0.03");
    r.flag("C1", "max relative error extrapolated", d.max_rel_err_extrapolated <= 0.005,
           fmt(d.max_rel_err_extrapolated) + " <= 0.005");
    r.flag("C1", "runtime", d.seconds <= 120.0, "<= 120 s (see timings.json)");
    return json{{"pairs", d.pairs.size()},
                {"max_rel_err", d.max_rel_err},
                {"max_rel_err_extrapolated", d.max_rel_err_extrapolated},
                {"refine", to_json(d.refine)},
                {"table", "flat_pairs.csv"}};
  });
  r.stage("isoperimetry", [&] {
    const IsoperimetricReport iso = flat_isoperimetry(p);
    const double ref = 2.0 * std::sqrt(kPi);
    double worst = 0.0;
    for (const auto& row : iso.rows) worst = std::max(worst, rel(row.ratio, ref));
    r.flag("C10", "flat discs ratio 2 sqrt(pi)", worst <= 0.02, "max rel dev " + fmt(worst) + " <= 0.02");
    return to_json(iso);
  });
  r.stage("constant-weight", [&] {
    const ConstantWeightCheck c = flat_constants(p);
    r.flag("C11", "constant weight C_rh = C_ap = 1",
           std::abs(c.C_rh - 1.0) <= 0.02 && std::abs(c.C_ap - 1.0) <= 0.02,
           "C_rh " + fmt(c.C_rh) + ", C_ap " + fmt(c.C_ap));
    return json{{"c", p.constant}, {"C_rh", c.C_rh}, {"C_ap", c.C_ap}};
  });
}

void run_bubble(const ExperimentSpec& spec, Runner& r) {
  const BubbleParams p = bubble_params(spec);
  r.stage("bubble", [&] {
    const auto rows = sphere_bubble(p);
    json out = json::array();
    Csv csv(r.dir / "bubble.csv", {"lambda", "max_rel_scal_err", "total_mass", "sup_pos", "sup_abs"});
    double worst_scal = 0.0, worst_mass = 0.0;
    bool increasing = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& b = rows[i];
      csv.row(b.lambda, b.max_rel_scal_err, b.total_mass, b.pinching.sup_pos, b.pinching.sup_abs);
      out.push_back({{"lambda", b.lambda},
                     {"max_rel_scal_err", b.max_rel_scal_err},
                     {"total_mass", b.total_mass},
                     {"pinching", to_json(b.pinching)}});
      worst_scal = std::max(worst_scal, b.max_rel_scal_err);
      worst_mass = std::max(worst_mass, rel(b.total_mass, rows[0].total_mass));
      if (i > 0 && !(b.pinching.sup_pos > rows[i - 1].pinching.sup_pos)) increasing = false;
    }
    r.flag("C3", "scal = 6 at sample points", worst_scal <= 1e-6, fmt(worst_scal) + " <= 1e-6");
    r.flag("C3", "total mass independent of lambda", worst_mass <= 0.01, fmt(worst_mass) + " <= 0.01");
    const auto top = std::max_element(rows.begin(), rows.end(),
                                      [](const BubbleRow& a, const BubbleRow& b) { return a.lambda < b.lambda; });
    const double a = alpha_n2(3);
    const double q = top->pinching.sup_pos / a;
    r.flag("C4", "sup_pos at largest lambda in [0.95, 1.01] alpha(3,2)", q >= 0.95 && q <= 1.01,
           "sup_pos / alpha = " + fmt(q));
    r.flag("C4", "sup_pos increasing in lambda", increasing, "over " + std::to_string(rows.size()) + " values");
    return json{{"rows", out}, {"alpha_n2", a}, {"table", "bubble.csv"}};
  });
}

void run_cusp(const ExperimentSpec& spec, Runner& r) {
  const CuspParams p = cusp_params(spec);
  r.stage("cusp", [&] {
    const CuspResult c = log_cusp(p);
    json mats = json::array(), fits = json::array();
    for (std::size_t k = 0; k < c.matrices.size(); ++k) {
      const std::string stem = std::isfinite(c.caps[k]) ? "cusp_k" + fmt(c.caps[k]) : "cusp_kinf";
      write_matrix(r.dir / (stem + ".json"), c.matrices[k]);
      mats.push_back(stem + ".json");
      fits.push_back(to_json(c.fits[k]));
    }
    Csv csv(r.dir / "cusp_convergence.csv", {"cap", "sup_diff_to_limit", "alpha_low"});
    bool monotone = true;
    double alpha_low = 1.0;
    for (std::size_t k = 0; k < c.sup_diff_to_limit.size(); ++k) {
      csv.row(c.caps[k], c.sup_diff_to_limit[k], c.fits[k].alpha_low);
      if (k > 0 && c.sup_diff_to_limit[k] > c.sup_diff_to_limit[k - 1]) monotone = false;
    }
    for (const auto& f : c.fits) alpha_low = std::min(alpha_low, f.alpha_low);
    const double final_frac = c.sup_diff_to_limit.back() / c.flat_diameter;
    r.flag("C8", "sup differences to the uncapped limit non-increasing in k", monotone, "caps in increasing order");
    r.flag("C8", "final sup difference <= 2% of flat diameter", final_frac <= 0.02, fmt(final_frac) + " <= 0.02");
    r.flag("C8", "alpha_low >= 0.5 across k", alpha_low >= 0.5, "min alpha_low " + fmt(alpha_low));
    return json{{"caps", c.caps},
                {"sup_diff_to_limit", c.sup_diff_to_limit},
                {"flat_diameter", c.flat_diameter},
                {"fits", fits},
                {"matrices", mats},
                {"table", "cusp_convergence.csv"}};
  });
}

void run_burago(const ExperimentSpec& spec, Runner& r) {
  const BuragoParams p = burago_params(spec);
  r.stage("stable-norm", [&] {
    const StableStage s = burago_stable_norm(p);
    r.report.timings["stable-norm.measured"] = s.seconds;
    Csv csv(r.dir / "stable_norm.csv", {"t", "e1_ratio", "e2_ratio"});
    for (std::size_t i = 0; i < s.e1.t.size(); ++i) csv.row(s.e1.t[i], s.e1.ratio[i], s.e2.ratio[i]);
    const double e1 = burago_e1_norm(), e2 = 1.0 / std::sqrt(2.0);
    r.flag("C5", "||e2||* = 2^{-1/2}", rel(s.e2.estimate, e2) <= 0.01, fmt(s.e2.estimate) + " vs " + fmt(e2));
    r.flag("C5", "||e1||* = quadrature value", rel(s.e1.estimate, e1) <= 0.01, fmt(s.e1.estimate) + " vs " + fmt(e1));
    r.flag("C5", "runtime", s.seconds <= 300.0, "<= 300 s (see timings.json)");
    return json{{"e1", to_json(s.e1)}, {"e2", to_json(s.e2)}, {"e1_reference", e1}, {"table", "stable_norm.csv"}};
  });
  r.stage("convergence", [&] {
    const ConvergenceStage c = burago_convergence(p);
    json mats = json::array();
    for (std::size_t k = 0; k < c.matrices.size(); ++k) {
      const std::string file = "burago_ell" + std::to_string(c.ells[k]) + ".json";
      write_matrix(r.dir / file, c.matrices[k]);
      mats.push_back(file);
    }
    Csv csv(r.dir / "burago_convergence.csv", {"ell", "two_ell", "sup_diff"});
    for (std::size_t k = 0; k < c.table.sup_diff.size(); ++k) csv.row(c.ells[k], c.ells[k + 1], c.table.sup_diff[k]);
    Csv weak(r.dir / "weak_star.csv", {"ell", "testfn", "value", "std_error"});
    json weak_json = json::array();
    bool weak_ok = true;
    std::string weak_detail;
    for (std::size_t k = 0; k < c.ells.size(); ++k)
      for (std::size_t t = 0; t < c.testfns.size(); ++t) {
        const Measure& v = c.weak[k][t];
        weak.row(c.ells[k], c.testfns[t].label(), v.value, v.std_error);
        weak_json.push_back({{"ell", c.ells[k]}, {"testfn", c.testfns[t].label()}, {"value", v.value},
                             {"std_error", v.std_error}});
        std::optional<double> ref;
        if (c.testfns[t].kind == TestFunction::Kind::One) ref = 4.0 * kPi * kPi;
        if (c.testfns[t].label() == "cos:1,0") ref = c.ells[k] == 1 ? -kPi * kPi : 0.0;
        if (ref && std::abs(v.value - *ref) > 3.0 * v.std_error) {
          weak_ok = false;
          weak_detail += "ell " + std::to_string(c.ells[k]) + " " + c.testfns[t].label() + " = " + fmt(v.value) + "; ";
        }
      }
    // ratio of |d_4 - d_8| to |d_2 - d_4|
    double ratio = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k + 2 < c.ells.size(); ++k)
      if (c.ells[k] == 2 && c.ells[k + 1] == 4 && c.ells[k + 2] == 8) ratio = c.table.ratios[k];
    r.flag("C6", "|d_4 - d_8| / |d_2 - d_4| <= 0.65", ratio <= 0.65, "ratio " + fmt(ratio));
    r.flag("C6", "weak-* integrals within 3 sigma", weak_ok, weak_ok ? "1 -> 4 pi^2, cos x1 -> -pi^2 or 0" : weak_detail);
    return json{{"ells", c.ells},
                {"sup_diff", c.table.sup_diff},
                {"ratios", c.table.ratios},
                {"rate", c.table.rate},
                {"matrices", mats},
                {"weak_star", weak_json},
                {"tables", {"burago_convergence.csv", "weak_star.csv"}}};
  });
  r.stage("ainfty", [&] {
    const AInftyStage a = burago_ainfty(p);
    json reports = json::array(), strong = json::array();
    Csv csv(r.dir / "ainfty.csv", {"ell", "C_rh", "C_ap", "theta_doubling", "alpha_iv"});
    double ap_lo = 1e300, ap_hi = 0.0, th_lo = 1e300, th_hi = 0.0;
    for (std::size_t k = 0; k < a.reports.size(); ++k) {
      const auto& rep = a.reports[k];
      csv.row(p.ap_ells[k], rep.C_rh, rep.C_ap, rep.theta_doubling, rep.alpha_iv);
      json j = to_json(rep);
      j["ell"] = p.ap_ells[k];
      reports.push_back(j);
      ap_lo = std::min(ap_lo, rep.C_ap);
      ap_hi = std::max(ap_hi, rep.C_ap);
    }
    Csv scsv(r.dir / "strong.csv", {"ell", "theta_at_x", "theta_centered", "B"});
    for (const auto& s : a.strong) {
      scsv.row(s.ell, s.ratio.theta_at_x, s.ratio.theta_centered, s.ratio.B);
      json j = to_json(s.ratio);
      j["ell"] = s.ell;
      strong.push_back(j);
      th_lo = std::min(th_lo, s.ratio.theta_at_x);
      th_hi = std::max(th_hi, s.ratio.theta_at_x);
    }
    const double ap_var = ap_hi / ap_lo - 1.0, th_var = th_hi / th_lo - 1.0;
    r.flag("C7", "C_ap(2) within 5% across ell", ap_var <= 0.05, "max/min - 1 = " + fmt(ap_var));
    r.flag("C7", "theta_strong within 10% across ell", th_var <= 0.10, "max/min - 1 = " + fmt(th_var));
    const double rh_ref = 3.0 / (2.0 * std::sqrt(2.0)), ap_ref = 2.0 / std::sqrt(3.0);
    r.flag("C11", "full-torus C_rh(2) = 1.06066", rel(a.full_C_rh, rh_ref) <= 0.02, fmt(a.full_C_rh));
    r.flag("C11", "full-torus C_ap(2) = 1.1547", rel(a.full_C_ap, ap_ref) <= 0.02, fmt(a.full_C_ap));
    return json{{"reports", reports},
                {"strong", strong},
                {"full_C_rh", a.full_C_rh},
                {"full_C_ap", a.full_C_ap},
                {"tables", {"ainfty.csv", "strong.csv"}}};
  });
  r.stage("isoperimetry", [&] {
    const auto reps = burago_isoperimetry(p);
    const double flat = 2.0 * std::sqrt(kPi), envelope = flat / std::sqrt(3.0);
    json out = json::array();
    double inf_all = 1e300, inf_one = 1e300;
    for (std::size_t k = 0; k < reps.size(); ++k) {
      json j = to_json(reps[k]);
      j["ell"] = p.iso_ells[k];
      out.push_back(j);
      inf_all = std::min(inf_all, reps[k].inf_ratio);
      if (p.iso_ells[k] == 1) inf_one = reps[k].inf_ratio;
    }
    r.flag("C10", "Burago ell = 1 discs above 2 sqrt(pi) / sqrt(3)", inf_one >= envelope,
           fmt(inf_one) + " >= " + fmt(envelope));
    r.flag("C10", "all ratios >= 50% of 2 sqrt(pi)", inf_all > 0.0 && inf_all >= 0.5 * flat,
           "min " + fmt(inf_all));
    return out;
  });
  r.stage("scaling", [&] {
    const ScalingStage s = burago_scaling(p);
    const double k = std::exp(s.shift);
    double dist = 0.0;
    for (std::size_t i = 0; i < s.base.distances.size(); ++i)
      if (s.base.distances[i] > 0.0) dist = std::max(dist, rel(s.scaled.distances[i], k * s.base.distances[i]));
    r.flag("C2", "scaled distances = e^c x baseline", dist <= 1e-10, "max rel " + fmt(dist));
    double diag = 0.0;
    auto cmp = [&](double a, double b) { diag = std::max(diag, rel(a, b)); };
    cmp(s.scaled.ainfty.C_rh, s.base.ainfty.C_rh);
    cmp(s.scaled.ainfty.C_ap, s.base.ainfty.C_ap);
    cmp(s.scaled.ainfty.theta_doubling, s.base.ainfty.theta_doubling);
    cmp(s.scaled.ainfty.C_iv, s.base.ainfty.C_iv);
    cmp(s.scaled.strong.theta_at_x, s.base.strong.theta_at_x);
    cmp(s.scaled.strong.theta_centered, s.base.strong.theta_centered);
    for (std::size_t i = 0; i < s.base.iso.rows.size(); ++i) cmp(s.scaled.iso.rows[i].ratio, s.base.iso.rows[i].ratio);
    r.flag("C2", "diagnostics invariant under scaling", diag <= 1e-10, "max rel " + fmt(diag));
    return json{{"shift", s.shift},
                {"distance_rel_err", dist},
                {"diagnostic_rel_err", diag},
                {"base", {{"ainfty", to_json(s.base.ainfty)}, {"strong", to_json(s.base.strong)}, {"iso", to_json(s.base.iso)}}},
                {"scaled",
                 {{"ainfty", to_json(s.scaled.ainfty)}, {"strong", to_json(s.scaled.strong)}, {"iso", to_json(s.scaled.iso)}}}};
  });
}

void run_schrodinger(const ExperimentSpec& spec, Runner& r) {
  const SchrodingerParams p = schrodinger_params(spec);
  r.stage("spectrum", [&] {
    const SpectrumStage s = schrodinger_spectrum(p);
    const double dense = dense_lowest(s.dense_nodes, 2.0 * kPi / static_cast<double>(s.dense_nodes), s.dense_potential);
    r.flag("C9", "lambda0(0) = 0", std::abs(s.lambda_zero) <= 1e-10, fmt(s.lambda_zero));
    r.flag("C9", "lambda0(c) = -c", std::abs(s.lambda_const + s.shift) <= 1e-8, fmt(s.lambda_const));
    r.flag("C9", "dense eigensolver agreement", std::abs(s.dense_lambda - dense) <= 1e-8,
           "diff " + fmt(s.dense_lambda - dense));
    return json{{"lambda_zero", s.lambda_zero},
                {"lambda_const", s.lambda_const},
                {"shift", s.shift},
                {"dense_lambda", s.dense_lambda},
                {"dense_reference", dense}};
  });
  r.stage("gs-shift", [&] {
    const ShiftStage s = schrodinger_shift(p);
    bool ok = true;
    for (const GsShift* g : {&s.positive, &s.negative})
      ok = ok && g->c0 >= g->c_minus && g->c0 <= g->c_plus && std::abs(g->lambda0) <= 1e-8;
    r.flag("C9", "gs_shift_c0 inside bracket with |lambda0| <= 1e-8", ok,
           "c0 = " + fmt(s.positive.c0) + ", " + fmt(s.negative.c0));
    return json{{"beta", s.beta.beta},
                {"beta_constant_trial", s.beta.constant_trial},
                {"q_norm", s.q_norm},
                {"positive", to_json(s.positive)},
                {"negative", to_json(s.negative)}};
  });
  r.stage("fixed-point", [&] {
    const FixedPointStage s = schrodinger_fixed_point(p);
    const Manifold m = manifold_from_json(spec.manifold);
    write_grid(r.dir / "ground_state.json", GridField(m, {p.nodes, p.nodes, p.nodes}, s.ground.phi));
    r.flag("C9", "fixed point residual <= 1e-6", s.fixed.residual <= 1e-6, fmt(s.fixed.residual));
    r.flag("C9", "||dv||_n <= 2 A ||V||_{n/2}", s.fixed.grad_norm <= 2.0 * s.A.A * s.fixed.V_norm,
           fmt(s.fixed.grad_norm) + " <= " + fmt(2.0 * s.A.A * s.fixed.V_norm));
    r.flag("C9", "e^v proportional to ground state", s.ratio_spread <= 1e-6, "spread " + fmt(s.ratio_spread));
    return json{{"A", s.A.A}, {"fixed", to_json(s.fixed)}, {"ground", to_json(s.ground)},
                {"ratio_spread", s.ratio_spread}, {"ground_state", "ground_state.json"}};
  });
  r.stage("decomposition", [&] {
    const DecompositionStage d = schrodinger_decomposition(p);
    json rows = json::array();
    double worst = 0.0;
    for (std::size_t k = 0; k < d.rows.size(); ++k) {
      json j = to_json(d.rows[k]);
      j["scale"] = d.scales[k];
      rows.push_back(j);
      worst = std::max(worst, d.rows[k].reconstruction);
    }
    r.flag("C9", "e^{f+w} = phi", worst <= 1e-8, "max " + fmt(worst));
    return rows;
  });
}

void run_custom(const ExperimentSpec& spec, Runner& r) {
  Params(spec.params).finish(spec.name);
  const Manifold m = manifold_from_json(spec.manifold);
  std::vector<WeightField> fields;
  for (const auto& w : spec.weights) fields.push_back(WeightField::from_json(w, m));
  r.stage("mass", [&] {
    json out = json::array();
    for (const auto& f : fields) {
      const Measure v = total_mass(m, f, spec.budgets.mc, spec.seed);
      out.push_back({{"weight", f.to_json()}, {"mass", v.value}, {"std_error", v.std_error}});
    }
    return out;
  });
  r.stage("ainfty", [&] {
    AInftyOptions o;
    o.q = spec.diagnostics.q;
    o.p = spec.diagnostics.p;
    o.eta = spec.diagnostics.eta;
    o.centers = spec.diagnostics.centers;
    o.budget = spec.budgets.mc;
    o.seed = spec.seed;
    json out = json::array();
    for (const auto& f : fields) out.push_back(to_json(ainfty_report(m, f, o)));
    return out;
  });
  if (spec.graph.spacing > 0.0)
    r.stage("distances", [&] {
      const SampleSet s = m.sample_uniform(16, derive_seed(spec.seed, 0xD15));
      std::vector<Point> pts;
      for (std::size_t i = 0; i < s.size(); ++i) pts.emplace_back(s[i]);
      json out = json::array();
      for (std::size_t k = 0; k < fields.size(); ++k) {
        DistanceMatrix d;
        if (m.kind() == ManifoldKind::Sphere) {
          PointSet nodes = m.lattice(spec.graph.spacing, spec.budgets.points);
          std::vector<std::size_t> idx;
          for (const auto& x : pts) idx.push_back(nodes.push_back(x));
          const EpsGraph g = build_graph(m, std::move(nodes), spec.graph.eps, fields[k], spec.graph.estimator, spec.seed);
          d = shortest_paths(g, idx, idx);
        } else {
          d = lattice_distances(m, fields[k], pts, spec.graph.spacing, spec.graph.eps, spec.graph.estimator, spec.seed,
                                spec.budgets.points);
        }
        const std::string file = "distances_" + std::to_string(k) + ".json";
        write_matrix(r.dir / file, d);
        out.push_back(file);
      }
      return out;
    });
}

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Input:
    case ErrorKind::Format:
    case ErrorKind::Unsupported: return 2;
    case ErrorKind::Resource: return 4;
    default: return 3;
  }
}

}  // namespace

int exit_code(const RunReport& r) {
  if (!r.error.empty()) return exit_code_for(r.error_kind);
  return r.passed() ? 0 : 1;
}

int exit_code(ErrorKind k) { return exit_code_for(k); }

RunReport run(const ExperimentSpec& spec) {
  RunReport report;
  report.spec = to_json(spec);
  std::filesystem::path dir = spec.output;
  if (const char* env = std::getenv("CONF_LAB_OUT"); env && *env) dir = env;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ResourceError("cannot create output directory " + dir.string() + ": " + ec.message());

  Runner r{report, dir};
  try {
    if (spec.name == "flat-identity") run_flat(spec, r);
    else if (spec.name == "sphere-bubble") run_bubble(spec, r);
    else if (spec.name == "log-cusp") run_cusp(spec, r);
    else if (spec.name == "burago") run_burago(spec, r);
    else if (spec.name == "schrodinger") run_schrodinger(spec, r);
    else run_custom(spec, r);
  } catch (const Error& e) {
    // parameter errors raised before any stage ran
    report.error = std::string("spec: ") + e.what();
    report.error_kind = e.kind();
  }

  write_json(dir / "report.json", to_json(report));
  json t = json::object();
  for (const auto& [k, v] : report.timings) t[k] = v;
  write_json(dir / "timings.json", t);
  return report;
}

}  // namespace conflab::lab

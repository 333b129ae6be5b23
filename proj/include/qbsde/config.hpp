#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "qbsde/bsde.hpp"
#include "qbsde/compare.hpp"
#include "qbsde/driver.hpp"
#include "qbsde/error.hpp"
#include "qbsde/io.hpp"
#include "qbsde/lattice.hpp"
#include "qbsde/pde.hpp"
#include "qbsde/stopping.hpp"
#include "qbsde/transform.hpp"

namespace qbsde::cli {

using json = nlohmann::json;

[[noreturn]] inline void invalid(const std::string& msg) {
  throw Error("cli", ErrorCode::ConfigInvalid, msg);
}

inline const std::vector<std::string>& problem_kinds() {
  static const std::vector<std::string> k = {"bsde",  "rbsde",     "quadratic-bsde", "quadratic-rbsde",
                                             "snell", "pde-cross", "compare-sweep"};
  return k;
}

namespace detail {

inline void only_keys(const json& obj, std::initializer_list<const char*> allowed,
                      const std::string& where) {
  if (!obj.is_object()) invalid(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) invalid("unknown key '" + key + "' in " + where);
  }
}

inline double number(const json& obj, const char* key, const std::string& where,
                     std::optional<double> fallback = std::nullopt) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    invalid(where + "." + key + " is required");
  }
  const json& v = obj.at(key);
  if (!v.is_number()) invalid(where + "." + key + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) invalid(where + "." + key + " must be finite");
  return d;
}

inline long integer(const json& obj, const char* key, const std::string& where,
                    std::optional<long> fallback = std::nullopt) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    invalid(where + "." + key + " is required");
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer()) invalid(where + "." + key + " must be an integer");
  return v.get<long>();
}

inline std::string text(const json& obj, const char* key, const std::string& where,
                        std::optional<std::string> fallback = std::nullopt) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    invalid(where + "." + key + " is required");
  }
  if (!obj.at(key).is_string()) invalid(where + "." + key + " must be a string");
  return obj.at(key).get<std::string>();
}

// [lo, hi] where null stands for -inf / +inf.
inline std::pair<double, double> pair_of(const json& v, const std::string& where, bool allow_inf) {
  if (!v.is_array() || v.size() != 2) invalid(where + " must be a two-element array");
  double out[2];
  for (int k = 0; k < 2; ++k) {
    if (v[k].is_null() && allow_inf) {
      out[k] = k == 0 ? -kInf : kInf;
    } else if (v[k].is_number() && std::isfinite(v[k].get<double>())) {
      out[k] = v[k].get<double>();
    } else {
      invalid(where + " entries must be finite numbers" + (allow_inf ? " or null" : ""));
    }
  }
  if (!(out[0] < out[1])) invalid(where + " must satisfy lo < hi");
  return {out[0], out[1]};
}

}  // namespace detail

/// Built-in terminal/obstacle functions of (t, x).
using Callable = std::function<double(double, double)>;

struct CallableInfo {
  const char* name;
  const char* formula;
  std::vector<const char*> params;
};

inline const std::vector<CallableInfo>& callable_registry() {
  static const std::vector<CallableInfo> r = {
      {"constant", "c", {"c"}},
      {"affine", "c + a x", {"c", "a"}},
      {"linear-in-time", "c0 + c1 t", {"c0", "c1"}},
      {"put-payoff", "c + max(K - x, 0)", {"K", "c"}},
      {"call-payoff", "c + max(x - K, 0)", {"K", "c"}},
      {"log-moneyness", "c + ln(x / K)", {"K", "c"}},
      {"minus-infinity", "-inf (never binds)", {}},
  };
  return r;
}

inline Callable make_callable(const json& spec, const std::string& where) {
  detail::only_keys(spec, {"name", "params"}, where);
  const std::string name = detail::text(spec, "name", where);
  const json params = spec.value("params", json::object());
  const CallableInfo* info = nullptr;
  for (const auto& c : callable_registry()) {
    if (name == c.name) info = &c;
  }
  if (!info) invalid(where + ".name '" + name + "' is not a registered callable");
  if (!params.is_object()) invalid(where + ".params must be an object");
  for (const auto& [key, _] : params.items()) {
    bool ok = false;
    for (const char* p : info->params) ok = ok || key == p;
    if (!ok) invalid("unknown parameter '" + key + "' for callable '" + name + "'");
  }
  const std::string pw = where + ".params";
  auto num = [&](const char* k, std::optional<double> d = std::nullopt) {
    return detail::number(params, k, pw, d);
  };
  if (name == "constant") {
    const double c = num("c");
    return [c](double, double) { return c; };
  }
  if (name == "affine") {
    const double c = num("c", 0.0), a = num("a");
    return [c, a](double, double x) { return c + a * x; };
  }
  if (name == "linear-in-time") {
    const double c0 = num("c0"), c1 = num("c1");
    return [c0, c1](double t, double) { return c0 + c1 * t; };
  }
  if (name == "put-payoff") {
    const double k = num("K"), c = num("c", 0.0);
    return [k, c](double, double x) { return c + std::max(k - x, 0.0); };
  }
  if (name == "call-payoff") {
    const double k = num("K"), c = num("c", 0.0);
    return [k, c](double, double x) { return c + std::max(x - k, 0.0); };
  }
  if (name == "log-moneyness") {
    const double k = num("K"), c = num("c", 0.0);
    if (!(k > 0.0)) invalid(pw + ".K must be > 0");
    return [k, c](double, double x) {
      if (!(x > 0.0)) {
        throw Error("cli", ErrorCode::OutOfDomain, "log-moneyness needs x > 0");
      }
      return c + std::log(x / k);
    };
  }
  return [](double, double) { return -std::numeric_limits<double>::infinity(); };
}

/// Built-in coefficients f for the tabulated kind.
inline std::function<double(double)> make_tabulated(const std::string& fn, double amplitude,
                                                    const std::string& where) {
  if (fn == "sine") return [amplitude](double y) { return amplitude * std::sin(y); };
  if (fn == "bump") return [amplitude](double y) { return amplitude / (1.0 + y * y); };
  invalid(where + ".function '" + fn + "' is not a registered coefficient");
}

struct CoefficientSpec {
  Coefficient coefficient = Coefficient::zero(0.0);
  TransformOptions options;
};

inline CoefficientSpec make_coefficient(const json& spec) {
  const std::string w = "coefficient";
  detail::only_keys(spec, {"kind", "beta", "alpha", "domain", "working", "function", "amplitude", "tol"},
                    w);
  const std::string kind = detail::text(spec, "kind", w);
  const bool on_positive = kind == "power-over-y" || kind == "neg-half-over-y";
  const double alpha = detail::number(spec, "alpha", w, on_positive ? 1.0 : 0.0);
  Interval domain = on_positive ? Interval::positive() : Interval::real_line();
  if (spec.contains("domain")) {
    auto [lo, hi] = detail::pair_of(spec["domain"], w + ".domain", true);
    domain = Interval(lo, hi);
  }
  CoefficientSpec out;
  out.options.tol = detail::number(spec, "tol", w, 1e-10);
  if (!(out.options.tol > 0.0)) invalid(w + ".tol must be > 0");
  if (spec.contains("working")) {
    auto [lo, hi] = detail::pair_of(spec["working"], w + ".working", false);
    out.options.working = ClosedRange{lo, hi};
  }
  try {
    if (kind == "zero") {
      out.coefficient = Coefficient::zero(alpha, domain);
    } else if (kind == "constant") {
      out.coefficient = Coefficient::constant(detail::number(spec, "beta", w), alpha, domain);
    } else if (kind == "power-over-y") {
      out.coefficient = Coefficient::power_over_y(detail::number(spec, "beta", w), alpha, domain);
    } else if (kind == "neg-half-over-y") {
      out.coefficient = Coefficient::neg_half_over_y(alpha, domain);
    } else if (kind == "tabulated") {
      auto f = make_tabulated(detail::text(spec, "function", w),
                              detail::number(spec, "amplitude", w, 1.0), w);
      if (!out.options.working) invalid(w + ".working is required for tabulated coefficients");
      out.coefficient = Coefficient::tabulated(std::move(f), alpha, domain);
    } else {
      invalid(w + ".kind '" + kind + "' is unknown");
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid) throw;
    invalid(w + ": " + e.what());
  }
  return out;
}

inline Driver make_driver(const json& spec) {
  const std::string w = "driver";
  detail::only_keys(spec, {"form", "delta", "gamma", "kappa"}, w);
  const std::string form = detail::text(spec, "form", w);
  if (form == "zero") return Driver::zero();
  if (form == "affine") {
    return Driver::affine(detail::number(spec, "delta", w, 0.0), detail::number(spec, "gamma", w, 0.0),
                          detail::number(spec, "kappa", w, 0.0));
  }
  if (form == "abs-z") return Driver::abs_z(detail::number(spec, "kappa", w));
  invalid(w + ".form '" + form + "' is unknown");
}

/// A validated experiment, ready to run.
struct Plan {
  std::string name;
  std::string kind;
  double T = 1.0;
  int N = 0;
  double x0 = 0.0;
  double b = 0.0;
  double sigma = 1.0;
  std::optional<CoefficientSpec> coefficient;
  Driver driver = Driver::zero();
  Callable terminal;
  Callable obstacle;
  int M = 0;
  int K = 0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  std::string family;
  int count = 0;
  std::uint64_t first_seed = 1;
  double tolerance = -1.0;
  std::uint64_t seed = 0;
  std::string output_dir = "qbsde-out";
  std::optional<std::string> expect_error;
};

inline Plan make_plan(const json& cfg) {
  detail::only_keys(cfg,
                    {"name", "description", "kind", "grid", "state", "coefficient", "driver",
                     "terminal", "obstacle", "pde", "compare", "seed", "output", "expect_error",
                     "sweep"},
                    "config");
  Plan p;
  p.name = detail::text(cfg, "name", "config");
  if (p.name.empty() || p.name.find_first_of("/\\") != std::string::npos) {
    invalid("config.name must be a non-empty file-name-safe string");
  }
  p.kind = detail::text(cfg, "kind", "config");
  if (std::find(problem_kinds().begin(), problem_kinds().end(), p.kind) == problem_kinds().end()) {
    invalid("config.kind '" + p.kind + "' is unknown");
  }
  if (cfg.contains("description") && !cfg["description"].is_string()) {
    invalid("config.description must be a string");
  }

  if (!cfg.contains("grid")) invalid("config.grid is required");
  detail::only_keys(cfg["grid"], {"T", "N"}, "grid");
  p.T = detail::number(cfg["grid"], "T", "grid", 1.0);
  p.N = int(detail::integer(cfg["grid"], "N", "grid"));
  if (!(p.T > 0.0)) invalid("grid.T must be > 0");
  if (p.N < 1 || p.N > 1 << 16) invalid("grid.N must be in [1, 65536]");

  if (cfg.contains("state")) {
    detail::only_keys(cfg["state"], {"x0", "b", "sigma"}, "state");
    p.x0 = detail::number(cfg["state"], "x0", "state", 0.0);
    p.b = detail::number(cfg["state"], "b", "state", 0.0);
    p.sigma = detail::number(cfg["state"], "sigma", "state", 1.0);
    if (!(p.sigma >= 0.0)) invalid("state.sigma must be >= 0");
  }
  p.seed = std::uint64_t(detail::integer(cfg, "seed", "config", 0));
  if (cfg.contains("output")) {
    detail::only_keys(cfg["output"], {"dir"}, "output");
    p.output_dir = detail::text(cfg["output"], "dir", "output");
  }
  if (cfg.contains("expect_error")) p.expect_error = detail::text(cfg, "expect_error", "config");

  const bool lipschitz = p.kind == "bsde" || p.kind == "rbsde";
  const bool needs_obstacle = p.kind == "rbsde" || p.kind == "quadratic-rbsde" || p.kind == "snell";
  const bool forbids_obstacle = p.kind == "bsde" || p.kind == "quadratic-bsde";

  if (p.kind == "compare-sweep") {
    for (const char* k : {"coefficient", "driver", "terminal", "obstacle", "pde", "state"}) {
      if (cfg.contains(k)) invalid(std::string("config.") + k + " is not used by compare-sweep");
    }
    if (!cfg.contains("compare")) invalid("config.compare is required for compare-sweep");
    const json& c = cfg["compare"];
    detail::only_keys(c, {"family", "count", "first_seed", "tolerance"}, "compare");
    p.family = detail::text(c, "family", "compare");
    const auto& fams = sweep_families();
    if (std::find(fams.begin(), fams.end(), p.family) == fams.end()) {
      invalid("compare.family '" + p.family + "' is unknown");
    }
    p.count = int(detail::integer(c, "count", "compare", 100));
    if (p.count < 1) invalid("compare.count must be >= 1");
    p.first_seed = std::uint64_t(detail::integer(c, "first_seed", "compare", 1));
    p.tolerance = detail::number(c, "tolerance", "compare", -1.0);
    return p;
  }

  if (lipschitz && cfg.contains("coefficient")) {
    invalid("config.coefficient is not used by kind " + p.kind);
  }
  if (!lipschitz) {
    if (!cfg.contains("coefficient")) invalid("config.coefficient is required for kind " + p.kind);
    p.coefficient = make_coefficient(cfg["coefficient"]);
  }
  if (cfg.contains("driver")) {
    try {
      p.driver = make_driver(cfg["driver"]);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigInvalid) throw;
      invalid(std::string("driver: ") + e.what());
    }
  }
  if (p.kind == "snell" && !p.driver.is_zero()) invalid("snell experiments need driver form zero");
  if (p.kind == "pde-cross" && !(p.driver.is_zero() || p.driver.form() == DriverForm::AbsZ)) {
    invalid("pde-cross supports driver forms zero and abs-z");
  }

  if (!cfg.contains("terminal")) invalid("config.terminal is required");
  p.terminal = make_callable(cfg["terminal"], "terminal");
  const bool has_obstacle = cfg.contains("obstacle") && !cfg["obstacle"].is_null() &&
                            !(cfg["obstacle"].is_object() && cfg["obstacle"].empty());
  if (needs_obstacle && !has_obstacle) invalid("kind " + p.kind + " needs a non-empty obstacle");
  if (forbids_obstacle && cfg.contains("obstacle")) invalid("kind " + p.kind + " takes no obstacle");
  if (has_obstacle) p.obstacle = make_callable(cfg["obstacle"], "obstacle");

  if (p.kind == "pde-cross") {
    if (!cfg.contains("pde")) invalid("config.pde is required for pde-cross");
    const json& d = cfg["pde"];
    detail::only_keys(d, {"M", "K", "window"}, "pde");
    p.M = int(detail::integer(d, "M", "pde"));
    p.K = int(detail::integer(d, "K", "pde"));
    if (p.M < 2 || p.K < 1) invalid("pde.M must be >= 2 and pde.K >= 1");
    if (!d.contains("window")) invalid("pde.window is required");
    std::tie(p.window_lo, p.window_hi) = detail::pair_of(d["window"], "pde.window", false);
    if (!(p.window_lo < p.x0 && p.x0 < p.window_hi)) invalid("state.x0 must lie inside pde.window");
    if (!(p.sigma > 0.0)) invalid("pde-cross needs state.sigma > 0");
  } else if (cfg.contains("pde")) {
    invalid("config.pde is only used by pde-cross");
  }
  if (cfg.contains("compare")) invalid("config.compare is only used by compare-sweep");
  return p;
}

/// Expands the optional sweep directive {"parameter": <json pointer>, "values": [...]}
/// into one config per value, named <name>-<k>.
inline std::vector<json> expand(const json& cfg) {
  if (!cfg.is_object()) invalid("config must be a JSON object");
  if (!cfg.contains("sweep")) return {cfg};
  const json& s = cfg["sweep"];
  detail::only_keys(s, {"parameter", "values"}, "sweep");
  const std::string ptr = detail::text(s, "parameter", "sweep");
  if (!s.contains("values") || !s["values"].is_array() || s["values"].empty()) {
    invalid("sweep.values must be a non-empty array");
  }
  json base = cfg;
  base.erase("sweep");
  json::json_pointer jp;
  try {
    jp = json::json_pointer(ptr);
  } catch (const json::exception&) {
    invalid("sweep.parameter '" + ptr + "' is not a JSON pointer");
  }
  if (!base.contains(jp)) invalid("sweep.parameter '" + ptr + "' does not name an existing field");
  std::vector<json> out;
  int k = 0;
  for (const auto& v : s["values"]) {
    json c = base;
    c[jp] = v;
    c["name"] = base.value("name", std::string("experiment")) + "-" + std::to_string(k++);
    out.push_back(std::move(c));
  }
  return out;
}

inline json load_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) invalid("cannot read config file " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    invalid("malformed JSON in " + path.string() + ": " + e.what());
  }
}

/// Parses and checks every variant of a config without solving.
inline std::vector<Plan> validate(const json& cfg) {
  std::vector<Plan> plans;
  for (const auto& c : expand(cfg)) plans.push_back(make_plan(c));
  return plans;
}

struct RunReport {
  std::string name;
  std::string summary;
  json details;
  std::vector<std::filesystem::path> artifacts;
};

namespace detail {

inline std::string output_dir(const Plan& p) {
  if (const char* env = std::getenv("QBSDE_OUTPUT_DIR"); env && *env) return env;
  return p.output_dir;
}

inline Transform transform_of(const Plan& p) {
  return Transform::build(p.coefficient->coefficient, p.coefficient->options);
}

inline TerminalData terminal_of(const Plan& p, const BinomialTree& tree) {
  const NodeField x = forward_state(tree, p.b, p.sigma, p.x0);
  auto xi = [&](double xx) { return p.terminal(p.T, xx); };
  if (p.obstacle) return TerminalData::from_state(tree, x, xi, p.obstacle);
  return TerminalData::from_state(tree, x, xi);
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline void add_surface_artifacts(RunReport& r, const std::filesystem::path& dir,
                                  const BinomialTree& tree, const SolutionSurface& s) {
  const auto csv = dir / (r.name + ".surface.csv");
  atomic_write(csv, [&](std::ostream& os) { write_surface_csv(os, tree, s); });
  r.artifacts.push_back(csv);
  r.details = surface_summary(s);
  const auto [down, up] = s.terminal_K_extremes();
  r.summary = r.name + ": Y0=" + fmt("%.12g", s.y0()) + " Z0=" + fmt("%.12g", s.z0()) +
              " K_T=" + fmt("%.12g", down) + "/" + fmt("%.12g", up) +
              " iters=" + std::to_string(s.diagnostics.fixed_point_iters) +
              " margin=" + fmt("%.3g", s.diagnostics.domain_margin) +
              " skorokhod=" + fmt("%.3g", s.diagnostics.skorokhod_sum);
}

}  // namespace detail

/// Executes one validated plan and writes its artifacts.
inline RunReport execute(const Plan& p, int threads = 1) {
  namespace fs = std::filesystem;
  RunReport r;
  r.name = p.name;
  const fs::path dir = detail::output_dir(p);
  const BinomialTree tree(p.T, p.N);

  if (p.kind == "bsde" || p.kind == "rbsde") {
    const TerminalData term = detail::terminal_of(p, tree);
    const SolutionSurface s = p.kind == "bsde" ? solve_bsde_lipschitz(tree, p.driver, term)
                                               : solve_rbsde_lipschitz(tree, p.driver, term);
    detail::add_surface_artifacts(r, dir, tree, s);
  } else if (p.kind == "quadratic-bsde" || p.kind == "quadratic-rbsde") {
    const QuadraticGenerator q(detail::transform_of(p), p.driver);
    const TerminalData term = detail::terminal_of(p, tree);
    const SolutionSurface s = p.kind == "quadratic-bsde" ? solve_quadratic_bsde(tree, q, term)
                                                         : solve_quadratic_rbsde(tree, q, term);
    detail::add_surface_artifacts(r, dir, tree, s);
  } else if (p.kind == "snell") {
    const Transform tf = detail::transform_of(p);
    const QuadraticGenerator q(tf, Driver::zero());
    const Payoff pay = Payoff::from_terminal(detail::terminal_of(p, tree));
    const NodeField y = snell_envelope(tree, tf, pay);
    const StoppingRule rule = optimal_stop(tree, y, tf, pay, 0);
    const InvarianceReport inv = verify_invariance(tree, q, pay);
    const auto f_snell = dir / (r.name + ".snell.csv");
    const auto f_stop = dir / (r.name + ".stop.csv");
    const auto f_bnd = dir / (r.name + ".boundary.csv");
    atomic_write(f_snell, [&](std::ostream& os) { y.write_csv(os); });
    atomic_write(f_stop, [&](std::ostream& os) { rule.write_csv(os); });
    atomic_write(f_bnd, [&](std::ostream& os) { rule.write_boundary_csv(os); });
    r.artifacts = {f_snell, f_stop, f_bnd};
    const double y0 = tf.inverse(y(0, 0));
    r.details = {{"Y0", y0},
                 {"snell_root", y(0, 0)},
                 {"stop_nodes", rule.count()},
                 {"max_rel_diff", inv.max_rel_diff},
                 {"values_match", inv.values_match},
                 {"stop_sets_identical", inv.stop_sets_identical},
                 {"mismatched_nodes", inv.mismatched_nodes}};
    r.summary = r.name + ": Y0=" + detail::fmt("%.12g", y0) +
                " stop_nodes=" + std::to_string(rule.count()) +
                " invariance=" + (inv.values_match && inv.stop_sets_identical ? "ok" : "broken") +
                " max_rel_diff=" + detail::fmt("%.3g", inv.max_rel_diff);
    if (!(inv.values_match && inv.stop_sets_identical)) {
      throw Error("stopping", ErrorCode::NonConvergence, "invariance check failed");
    }
  } else if (p.kind == "pde-cross") {
    ObstacleProblem op;
    op.T = p.T;
    op.x_lo = p.window_lo;
    op.x_hi = p.window_hi;
    op.b = p.b;
    op.sigma = p.sigma;
    op.kappa = std::abs(p.driver.kappa1());
    op.coefficient = p.coefficient->coefficient;
    op.working = p.coefficient->options.working;
    const Callable term = p.terminal;
    const double T = p.T;
    op.psi = [term, T](double x) { return term(T, x); };
    if (p.obstacle) op.h = p.obstacle;
    PdeSolution grid;
    const CrossValidation cv = cross_validate(op, p.x0, p.N, p.M, p.K, &grid);
    const auto f_grid = dir / (r.name + ".grid.csv");
    const auto f_fb = dir / (r.name + ".free_boundary.csv");
    const int stride = std::max(1, p.K / 40);
    atomic_write(f_grid, [&](std::ostream& os) { grid.write_grid_csv(os, stride); });
    atomic_write(f_fb, [&](std::ostream& os) { grid.write_free_boundary_csv(os); });
    r.artifacts = {f_grid, f_fb};
    r.details = {{"v0", cv.v0},         {"Y0", cv.y0},   {"abs_gap", cv.abs_gap},
                 {"rel_gap", cv.rel_gap}, {"cfl", cv.cfl}, {"projections", grid.projections},
                 {"complementarity", grid.complementarity}};
    r.summary = r.name + ": v0=" + detail::fmt("%.10g", cv.v0) + " Y0=" + detail::fmt("%.10g", cv.y0) +
                " rel_gap=" + detail::fmt("%.3g", cv.rel_gap) + " cfl=" + detail::fmt("%.3g", cv.cfl);
  } else {
    const SweepSummary s = sweep(p.family, p.first_seed, p.count, p.N, p.tolerance, threads);
    r.details = sweep_json(s);
    r.summary = r.name + ": family=" + s.family + " pass=" + std::to_string(s.pass) +
                " fail=" + std::to_string(s.fail) + " skip=" + std::to_string(s.skip) +
                " worst=" + detail::fmt("%.3g", s.worst_violation);
    if (s.fail > 0) {
      const auto f = dir / (r.name + ".compare.json");
      atomic_write(f, [&](std::ostream& os) { os << r.details.dump(2) << '\n'; });
      throw Error("compare", ErrorCode::HypothesisFailed,
                  std::to_string(s.fail) + " comparison conclusions failed");
    }
  }

  const auto f_json = dir / (r.name + (p.kind == "compare-sweep" ? ".compare.json" : ".summary.json"));
  json doc = r.details;
  doc["name"] = r.name;
  doc["kind"] = p.kind;
  atomic_write(f_json, [&](std::ostream& os) { os << doc.dump(2) << '\n'; });
  r.artifacts.push_back(f_json);
  return r;
}

inline int env_threads() {
  if (const char* env = std::getenv("QBSDE_THREADS"); env && *env) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

/// Runs every variant of a config. Variants are independent and may run on
/// `threads` workers; reports come back in variant order.
inline std::vector<RunReport> run(const json& cfg, int threads = 1) {
  const std::vector<Plan> plans = validate(cfg);
  std::vector<RunReport> out(plans.size());
  if (threads <= 1 || plans.size() == 1) {
    for (std::size_t k = 0; k < plans.size(); ++k) out[k] = execute(plans[k], threads);
    return out;
  }
  std::vector<std::exception_ptr> errs(plans.size());
  std::vector<std::thread> pool;
  const std::size_t w = std::min<std::size_t>(std::size_t(threads), plans.size());
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t k = t; k < plans.size(); k += w) {
        try {
          out[k] = execute(plans[k]);
        } catch (...) {
          errs[k] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errs) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

inline std::vector<RunReport> run_file(const std::filesystem::path& path, int threads = 1) {
  return run(load_json(path), threads);
}

struct CatalogEntry {
  const char* name;
  const char* file;
  const char* description;
  const char* expected_error;  // empty when the run is expected to succeed
};

inline const std::vector<CatalogEntry>& catalog() {
  static const std::vector<CatalogEntry> c = {
      {"sine-coefficient-abs-z", "sine_coefficient_absz.json",
       "f(y) = 0.25 sin(y) tabulated numerically, F = |kappa z|, reflected", ""},
      {"zero-coefficient", "zero_coefficient.json", "f = 0, affine driver: u(y) = y - alpha", ""},
      {"power-coefficient", "power_coefficient.json", "f = beta / y, affine driver, put obstacle", ""},
      {"log-utility", "log_utility.json", "f = -1 / (2y), affine driver: u = alpha ln(y / alpha)", ""},
      {"exponential-utility", "exponential_utility.json", "f = beta / 2, affine driver: exponential transform", ""},
      {"linear-obstacle", "linear_obstacle.json", "F = 1, xi = 1, L = 3 - 3t: Y0 = 3, K_T = 1", ""},
      {"linear-obstacle-sweep", "linear_obstacle_sweep.json", "the same problem at N = 8, 64, 512", ""},
      {"domain-escape", "domain_escape.json",
       "bounded xi without a solution: transformed value leaves V", "bsde::DomainEscape"},
      {"pde-cross-log-utility", "pde_cross_log.json",
       "obstacle PDE vs quadratic RBSDE, log utility, binding obstacle", ""},
      {"snell-invariance", "snell_invariance.json",
       "optimal stopping under log utility: invariance of the stop-set", ""},
      {"compare-lipschitz-affine", "compare_lipschitz.json",
       "comparison sweep over 100 seeded Lipschitz problems", ""},
  };
  return c;
}

}  // namespace qbsde::cli

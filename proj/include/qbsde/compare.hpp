#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "qbsde/bsde.hpp"
#include "qbsde/driver.hpp"
#include "qbsde/error.hpp"
#include "qbsde/lattice.hpp"
#include "qbsde/random.hpp"
#include "qbsde/transform.hpp"

namespace qbsde {

/// One side of a comparison: generator g = G + f(y) z^2 (f = 0 gives the
/// Lipschitz equation with driver F) with terminal data and optional obstacle.
struct Problem {
  QuadraticGenerator generator;
  TerminalData data;

  SolutionSurface solve(const BinomialTree& tree) const {
    return data.reflected() ? solve_quadratic_rbsde(tree, generator, data)
                            : solve_quadratic_bsde(tree, generator, data);
  }
};

/// Identity transform (f = 0, alpha = 0): u(x) = x.
inline Transform identity_transform() { return Transform::build(Coefficient::zero(0.0)); }

inline Problem lipschitz_problem(Driver F, TerminalData data) {
  return Problem{QuadraticGenerator(identity_transform(), std::move(F)), std::move(data)};
}

/// Problem 1 is claimed to dominate problem 2.
struct ComparisonCase {
  Problem first;
  Problem second;
  std::string label;
};

enum class VerdictStatus { Pass, Fail, Skip };

inline const char* to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Pass: return "pass";
    case VerdictStatus::Fail: return "fail";
    case VerdictStatus::Skip: return "skip";
  }
  return "?";
}

struct Verdict {
  VerdictStatus status = VerdictStatus::Skip;
  std::string reason;
  double tolerance = 0.0;
  /// max over nodes of (Y2 - Y1), and of (dK1 - dK2) when that check applies.
  double worst_violation = 0.0;
  double worst_dk_violation = 0.0;
  bool dk_checked = false;
  int strict_nodes = 0;
  int strict_failures = 0;
  double min_strict_gap = 0.0;
};

namespace detail {

inline double field_scale(const NodeField& a, const NodeField& b) {
  double s = 1.0;
  for (double v : a.raw()) s = std::max(s, std::abs(v));
  for (double v : b.raw()) s = std::max(s, std::abs(v));
  return s;
}

inline bool dominates(const std::vector<double>& a, const std::vector<double>& b) {
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j] < b[j] - 1e-12 * std::max(1.0, std::abs(b[j]))) return false;
  }
  return true;
}

inline bool obstacles_ordered(const TerminalData& a, const TerminalData& b) {
  if (!a.obstacle || !b.obstacle) return a.reflected() == b.reflected();
  const auto& la = a.obstacle->raw();
  const auto& lb = b.obstacle->raw();
  return la.size() == lb.size() && dominates(la, lb);
}

// g1 >= g2 at the nodes of a solution (i < N).
inline bool generator_dominates(const BinomialTree& tree, const QuadraticGenerator& g1,
                                const QuadraticGenerator& g2, const SolutionSurface& at) {
  for (int i = 0; i < tree.steps(); ++i) {
    for (int j = 0; j <= i; ++j) {
      const double y = at.Y(i, j), z = at.Z(i, j);
      const double a = g1(tree.t(i), y, z);
      const double b = g2(tree.t(i), y, z);
      if (a < b - 1e-12 * std::max(1.0, std::abs(b))) return false;
    }
  }
  return true;
}

inline Verdict skipped(std::string why) {
  Verdict v;
  v.status = VerdictStatus::Skip;
  v.reason = std::move(why);
  return v;
}

struct Solved {
  std::optional<SolutionSurface> s1, s2;
  std::optional<Verdict> skip;
};

inline Solved solve_pair(const BinomialTree& tree, const ComparisonCase& c) {
  Solved out;
  try {
    out.s1 = c.first.solve(tree);
    out.s2 = c.second.solve(tree);
  } catch (const Error& e) {
    out.skip = skipped(e.qualified_name());
    return out;
  }
  if (!dominates(c.first.data.xi, c.second.data.xi)) {
    out.skip = skipped("compare::HypothesisFailed: xi1 >= xi2 violated");
  } else if (!obstacles_ordered(c.first.data, c.second.data)) {
    out.skip = skipped("compare::HypothesisFailed: L1 >= L2 violated");
  } else {
    try {
      if (!generator_dominates(tree, c.first.generator, c.second.generator, *out.s1)) {
        out.skip = skipped("compare::HypothesisFailed: g1 >= g2 violated at solution 1");
      }
    } catch (const Error& e) {
      out.skip = skipped(e.qualified_name());
    }
  }
  return out;
}

inline double ordering_violation(const SolutionSurface& s1, const SolutionSurface& s2) {
  double worst = 0.0;
  for (std::size_t k = 0; k < s1.Y.raw().size(); ++k) {
    worst = std::max(worst, s2.Y.raw()[k] - s1.Y.raw()[k]);
  }
  return worst;
}

}  // namespace detail

/// Default tolerance 10 * scale / N.
inline double comparison_tolerance(const BinomialTree& tree, double scale) {
  return 10.0 * scale / tree.steps();
}

/// Reflected comparison: Y1 >= Y2 - tol at every node; when also L1 <= Y2
/// nodewise, dK1 <= dK2 + tol at every node. Cases whose hypotheses
/// (xi1 >= xi2, L1 >= L2, g1 >= g2 at solution 1) fail numerically, or that
/// cannot be solved, are skipped. A negative `tol` selects the default.
inline Verdict check_rbsde_comparison(const BinomialTree& tree, const ComparisonCase& c,
                                      double tol = -1.0) {
  detail::Solved s = detail::solve_pair(tree, c);
  if (s.skip) return *s.skip;
  Verdict v;
  v.tolerance = tol >= 0.0 ? tol : comparison_tolerance(tree, detail::field_scale(s.s1->Y, s.s2->Y));
  v.worst_violation = detail::ordering_violation(*s.s1, *s.s2);
  bool ok = v.worst_violation <= v.tolerance;

  if (c.first.data.obstacle && c.second.data.obstacle) {
    const NodeField& l1 = *c.first.data.obstacle;
    bool below = true;
    for (int i = 0; i < tree.steps() && below; ++i) {
      for (int j = 0; j <= i; ++j) {
        if (l1(i, j) > s.s2->Y(i, j) + 1e-12 * std::max(1.0, std::abs(s.s2->Y(i, j)))) {
          below = false;
          break;
        }
      }
    }
    if (below) {
      v.dk_checked = true;
      const auto& k1 = s.s1->dK.raw();
      const auto& k2 = s.s2->dK.raw();
      for (std::size_t k = 0; k < k1.size(); ++k) {
        v.worst_dk_violation = std::max(v.worst_dk_violation, k1[k] - k2[k]);
      }
      ok = ok && v.worst_dk_violation <= v.tolerance;
    }
  }
  v.status = ok ? VerdictStatus::Pass : VerdictStatus::Fail;
  return v;
}

/// Unreflected comparison with the strict part: at nodes where
/// g1 - g2 >= margin at solution 2's values, Y1 > Y2 is counted; only the
/// ordering itself decides the verdict, strict counts are reported.
inline Verdict check_bsde_comparison(const BinomialTree& tree, const ComparisonCase& c,
                                     double tol = -1.0, double margin = 1e-3) {
  detail::Solved s = detail::solve_pair(tree, c);
  if (s.skip) return *s.skip;
  Verdict v;
  v.tolerance = tol >= 0.0 ? tol : comparison_tolerance(tree, detail::field_scale(s.s1->Y, s.s2->Y));
  v.worst_violation = detail::ordering_violation(*s.s1, *s.s2);
  v.min_strict_gap = std::numeric_limits<double>::infinity();
  try {
    for (int i = 0; i < tree.steps(); ++i) {
      for (int j = 0; j <= i; ++j) {
        const double y = s.s2->Y(i, j), z = s.s2->Z(i, j);
        const double gap = c.first.generator(tree.t(i), y, z) - c.second.generator(tree.t(i), y, z);
        if (gap < margin) continue;
        ++v.strict_nodes;
        const double d = s.s1->Y(i, j) - s.s2->Y(i, j);
        v.min_strict_gap = std::min(v.min_strict_gap, d);
        if (!(d > 0.0)) ++v.strict_failures;
      }
    }
  } catch (const Error& e) {
    return detail::skipped(e.qualified_name());
  }
  if (v.strict_nodes == 0) v.min_strict_gap = 0.0;
  v.status = v.worst_violation <= v.tolerance ? VerdictStatus::Pass : VerdictStatus::Fail;
  return v;
}

inline const std::vector<std::string>& sweep_families() {
  static const std::vector<std::string> names = {"lipschitz-affine", "reflected-affine",
                                                 "quadratic-log-utility", "quadratic-exponential"};
  return names;
}

namespace detail {

// xi(B) = c + a Bc + d max(Bc - k, 0) on the terminal level, Bc = B clamped to [-3, 3].
inline std::vector<double> random_terminal(const BinomialTree& tree, Rng& rng, double c_lo,
                                           double c_hi, double amp) {
  const double c = rng.uniform(c_lo, c_hi);
  const double a = rng.uniform(-amp, amp);
  const double d = rng.uniform(-amp, amp);
  const double k = rng.uniform(-1.0, 1.0);
  const int n = tree.steps();
  std::vector<double> xi(std::size_t(n) + 1);
  for (int j = 0; j <= n; ++j) {
    const double b = std::clamp(tree.brownian(n, j), -3.0, 3.0);
    xi[j] = c + a * b + d * std::max(b - k, 0.0);
  }
  return xi;
}

// L(t, B) = l0 + l1 Bc - l2 t, capped by xi at level N.
inline NodeField random_obstacle(const BinomialTree& tree, Rng& rng, const std::vector<double>& xi,
                                 double l0_lo, double l0_hi, double amp, double drift) {
  const double l0 = rng.uniform(l0_lo, l0_hi);
  const double l1 = rng.uniform(-amp, amp);
  const double l2 = rng.uniform(0.0, drift);
  const int n = tree.steps();
  NodeField l(n, 0.0, "L");
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= i; ++j) {
      l(i, j) = l0 + l1 * std::clamp(tree.brownian(i, j), -3.0, 3.0) - l2 * tree.t(i);
    }
  }
  for (int j = 0; j <= n; ++j) l(n, j) = std::min(l(n, j), xi[j]);
  return l;
}

inline std::vector<double> shifted(const std::vector<double>& v, double by) {
  std::vector<double> out(v);
  for (double& x : out) x += by;
  return out;
}

// L + by, re-capped by xi at level N.
inline NodeField shifted(NodeField l, double by, const std::vector<double>& xi) {
  const int n = l.depth();
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= i; ++j) l(i, j) += by;
  }
  for (int j = 0; j <= n; ++j) l(n, j) = std::min(l(n, j), xi[j]);
  return l;
}

}  // namespace detail

/// A randomized case of one of the shipped families.
inline ComparisonCase make_family_case(const std::string& family, const BinomialTree& tree,
                                       std::uint64_t seed) {
  Rng rng(seed);
  if (family == "lipschitz-affine" || family == "reflected-affine") {
    const double d2 = rng.uniform(-1.0, 1.0);
    const double g = rng.uniform(-1.0, 1.0);
    const double k = rng.uniform(0.0, 1.0);
    const double extra = rng.uniform(0.0, 0.5);
    const double lift = rng.uniform(0.0, 0.5);
    const auto xi2 = detail::random_terminal(tree, rng, -1.0, 1.0, 0.3);
    const auto xi1 = detail::shifted(xi2, lift);
    TerminalData t1{xi1, std::nullopt}, t2{xi2, std::nullopt};
    if (family == "reflected-affine") {
      const NodeField l2 = detail::random_obstacle(tree, rng, xi2, -0.5, 1.0, 0.3, 1.0);
      t2.obstacle = l2;
      t1.obstacle = detail::shifted(l2, rng.uniform(0.0, 0.3), xi1);
    }
    return ComparisonCase{lipschitz_problem(Driver::affine(d2 + extra, g, k), std::move(t1)),
                          lipschitz_problem(Driver::affine(d2, g, k), std::move(t2)),
                          family + "#" + std::to_string(seed)};
  }
  if (family == "quadratic-log-utility") {
    // f1 = -1/(2y) >= f2 = beta2 / y on (0, inf), shared kappa|z| driver.
    const double beta2 = rng.uniform(-1.2, -0.5);
    const double k = rng.uniform(0.0, 0.5);
    const double lift = rng.uniform(0.0, 0.3);
    const auto xi2 = detail::random_terminal(tree, rng, 1.0, 2.0, 0.1);
    const auto xi1 = detail::shifted(xi2, lift);
    const NodeField l2 = detail::random_obstacle(tree, rng, xi2, 0.8, 2.0, 0.1, 0.3);
    TerminalData t1{xi1, detail::shifted(l2, 0.0, xi1)}, t2{xi2, l2};
    Transform u1 = Transform::build(Coefficient::neg_half_over_y(1.0));
    Transform u2 = Transform::build(Coefficient::power_over_y(beta2, 1.0));
    return ComparisonCase{Problem{QuadraticGenerator(std::move(u1), Driver::abs_z(k)), std::move(t1)},
                          Problem{QuadraticGenerator(std::move(u2), Driver::abs_z(k)), std::move(t2)},
                          family + "#" + std::to_string(seed)};
  }
  if (family == "quadratic-exponential") {
    // Shared f = beta / 2; F1 = F2 + extra constant, so g1 - g2 = extra / u'.
    const double beta = rng.uniform(0.5, 2.0);
    const double d2 = rng.uniform(-0.5, 0.5);
    const double g = rng.uniform(-1.0, 1.0);
    const double k = rng.uniform(0.0, 0.5);
    const double extra = rng.uniform(0.0, 0.5);
    const double lift = rng.uniform(0.0, 0.3);
    const auto xi2 = detail::random_terminal(tree, rng, -0.5, 1.0, 0.3);
    const auto xi1 = detail::shifted(xi2, lift);
    TerminalData t1{xi1, std::nullopt}, t2{xi2, std::nullopt};
    const NodeField l2 = detail::random_obstacle(tree, rng, xi2, -0.5, 1.0, 0.3, 1.0);
    t2.obstacle = l2;
    t1.obstacle = detail::shifted(l2, 0.0, xi1);
    auto tf = [&] { return Transform::build(Coefficient::constant(beta, 0.0)); };
    return ComparisonCase{
        Problem{QuadraticGenerator(tf(), Driver::affine(d2 + extra, g, k)), std::move(t1)},
        Problem{QuadraticGenerator(tf(), Driver::affine(d2, g, k)), std::move(t2)},
        family + "#" + std::to_string(seed)};
  }
  throw Error("compare", ErrorCode::InvalidArgument, "unknown family '" + family + "'");
}

struct SweepCase {
  std::string label;
  Verdict verdict;
};

struct SweepSummary {
  std::string family;
  int steps = 0;
  int pass = 0;
  int fail = 0;
  int skip = 0;
  double worst_violation = 0.0;
  std::vector<SweepCase> cases;

  double skip_rate() const { return cases.empty() ? 0.0 : double(skip) / cases.size(); }
};

/// Runs the family's comparison check over seeds first_seed .. first_seed+count-1
/// on a tree with N steps, T = 1. A negative `tol` selects 10 * scale / N.
/// Cases are independent and spread over `threads` workers; results are
/// stored in seed order.
inline SweepSummary sweep(const std::string& family, std::uint64_t first_seed, int count, int N,
                          double tol = -1.0, int threads = 1) {
  if (std::find(sweep_families().begin(), sweep_families().end(), family) ==
      sweep_families().end()) {
    throw Error("compare", ErrorCode::InvalidArgument, "unknown family '" + family + "'");
  }
  const BinomialTree tree(1.0, N);
  SweepSummary out;
  out.family = family;
  out.steps = N;
  out.cases.resize(std::size_t(std::max(count, 0)));
  auto run = [&](int k) {
    const ComparisonCase c = make_family_case(family, tree, first_seed + std::uint64_t(k));
    const bool reflected = c.first.data.reflected();
    out.cases[k] = {c.label, reflected ? check_rbsde_comparison(tree, c, tol)
                                       : check_bsde_comparison(tree, c, tol)};
  };
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int k = 0; k < count; ++k) run(k);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (int k = w; k < count; k += threads) run(k);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& c : out.cases) {
    switch (c.verdict.status) {
      case VerdictStatus::Pass: ++out.pass; break;
      case VerdictStatus::Fail: ++out.fail; break;
      case VerdictStatus::Skip: ++out.skip; break;
    }
    if (c.verdict.status != VerdictStatus::Skip) {
      out.worst_violation = std::max(
          {out.worst_violation, c.verdict.worst_violation, c.verdict.worst_dk_violation});
    }
  }
  return out;
}

}  // namespace qbsde

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "qbsde/bsde.hpp"
#include "qbsde/driver.hpp"
#include "qbsde/error.hpp"
#include "qbsde/lattice.hpp"
#include "qbsde/transform.hpp"

namespace qbsde {

/// eta(i, j) = L(i, j) for i < N and eta(N, j) = xi(j).
struct Payoff {
  NodeField eta;

  int steps() const noexcept { return eta.depth(); }

  static Payoff from_terminal(const TerminalData& term) {
    if (!term.obstacle) {
      throw Error("stopping", ErrorCode::InvalidArgument, "payoff needs an obstacle");
    }
    Payoff p{*term.obstacle};
    const int n = p.steps();
    for (int j = 0; j <= n; ++j) p.eta(n, j) = term.xi[j];
    p.eta.set_name("eta");
    return p;
  }

  /// xi at level N and L = eta on every level.
  TerminalData terminal_data() const {
    TerminalData d;
    const auto last = eta.level(steps());
    d.xi.assign(last.begin(), last.end());
    d.obstacle = eta;
    return d;
  }
};

/// First-hitting rule of a node set. Level N always belongs to the set; nodes
/// at levels <= from_level are never in it.
class StoppingRule {
 public:
  StoppingRule() = default;
  StoppingRule(int steps, int from_level)
      : steps_(steps), from_(from_level), flags_(std::size_t(steps + 1) * (steps + 2) / 2, 0) {
    for (int j = 0; j <= steps; ++j) set(steps, j, true);
  }

  int steps() const noexcept { return steps_; }
  int from_level() const noexcept { return from_; }

  bool operator()(int i, int j) const { return flags_[offset(i) + j] != 0; }
  void set(int i, int j, bool v) { flags_[offset(i) + j] = v ? 1 : 0; }

  /// Flags reachable before an earlier stop, i.e. the nodes where paths
  /// started at the root actually stop.
  StoppingRule effective() const {
    StoppingRule r(steps_, from_);
    std::vector<char> alive(1, 1);
    for (int i = 0; i <= steps_; ++i) {
      std::vector<char> next(std::size_t(i) + 2, 0);
      for (int j = 0; j <= i; ++j) {
        const bool stop = alive[j] && (*this)(i, j);
        r.set(i, j, stop);
        if (alive[j] && !stop) next[j] = next[j + 1] = 1;
      }
      alive = std::move(next);
    }
    return r;
  }

  int count() const {
    return int(std::count(flags_.begin(), flags_.end(), char(1)));
  }

  friend bool operator==(const StoppingRule& a, const StoppingRule& b) {
    return a.steps_ == b.steps_ && a.flags_ == b.flags_;
  }

  /// CSV "level,index,stop".
  void write_csv(std::ostream& os) const {
    os << "level,index,stop\n";
    for (int i = 0; i <= steps_; ++i) {
      for (int j = 0; j <= i; ++j) os << i << ',' << j << ',' << int((*this)(i, j)) << '\n';
    }
  }

  /// Per level: number of stop nodes and the lowest/highest stop index
  /// (-1 when the level has none).
  void write_boundary_csv(std::ostream& os) const {
    os << "level,count,lowest,highest\n";
    for (int i = 0; i <= steps_; ++i) {
      int c = 0, lo = -1, hi = -1;
      for (int j = 0; j <= i; ++j) {
        if (!(*this)(i, j)) continue;
        ++c;
        if (lo < 0) lo = j;
        hi = j;
      }
      os << i << ',' << c << ',' << lo << ',' << hi << '\n';
    }
  }

 private:
  static std::size_t offset(int i) { return std::size_t(i) * (i + 1) / 2; }

  int steps_ = 0;
  int from_ = -1;
  std::vector<char> flags_;
};

/// u(eta) nodewise.
inline NodeField transformed_payoff(const Transform& t, const Payoff& p) {
  const int n = p.steps();
  NodeField out(n, 0.0, "u_eta");
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= i; ++j) out(i, j) = t.u(p.eta(i, j));
  }
  return out;
}

/// Snell envelope of u(eta): y(N) = u(xi), y(i, j) = max(u(eta(i, j)), E[y_{i+1}]).
inline NodeField snell_envelope(const BinomialTree& tree, const Transform& t, const Payoff& p) {
  const int n = tree.steps();
  if (p.steps() != n) {
    throw Error("stopping", ErrorCode::InvalidArgument, "payoff depth differs from tree");
  }
  NodeField y = transformed_payoff(t, p);
  y.set_name("snell");
  for (int i = n - 1; i >= 0; --i) {
    for (int j = 0; j <= i; ++j) {
      const double cont = 0.5 * (y(i + 1, j + 1) + y(i + 1, j));
      y(i, j) = std::max(y(i, j), cont);
    }
  }
  return y;
}

inline constexpr double kStopTolerance = 1e-10;

/// First-hitting rule of {(i', j) : i' > from_level, value == reward within
/// kStopTolerance relative}, capped at level N.
inline StoppingRule stop_rule(const NodeField& value, const NodeField& reward, int from_level) {
  const int n = value.depth();
  if (reward.depth() != n) {
    throw Error("stopping", ErrorCode::InvalidArgument, "value and reward depths differ");
  }
  StoppingRule r(n, from_level);
  for (int i = std::max(0, from_level + 1); i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = value(i, j);
      const double w = reward(i, j);
      const double scale = std::max({1.0, std::abs(v), std::abs(w)});
      r.set(i, j, std::abs(v - w) <= kStopTolerance * scale);
    }
  }
  return r;
}

namespace detail {

// Tie test of y against u(eta) measured in the units of eta: the gap is
// divided by u'(eta), so the set agrees with stop_rule on u^{-1}(y) up to
// second-order terms.
inline StoppingRule stop_rule_natural(const NodeField& y, const Transform& t, const NodeField& eta,
                                      int from_level) {
  const int n = y.depth();
  if (eta.depth() != n) {
    throw Error("stopping", ErrorCode::InvalidArgument, "value and reward depths differ");
  }
  StoppingRule r(n, from_level);
  for (int i = std::max(0, from_level + 1); i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double w = eta(i, j);
      const double gap = std::abs(y(i, j) - t.u(w)) / t.u_prime(w);
      r.set(i, j, gap <= kStopTolerance * std::max(1.0, std::abs(w)));
    }
  }
  return r;
}

}  // namespace detail

/// sigma*: first time after level `from_level` where the envelope touches u(eta).
inline StoppingRule optimal_stop(const BinomialTree& tree, const NodeField& y, const Transform& t,
                                 const Payoff& p, int from_level) {
  if (y.depth() != tree.steps()) {
    throw Error("stopping", ErrorCode::InvalidArgument, "envelope depth differs from tree");
  }
  return detail::stop_rule_natural(y, t, p.eta, from_level);
}

/// rho* for a general Lipschitz driver F: optimal_stop applied to the
/// RBSDE(F, u(xi), u(eta)) surface in transformed coordinates.
inline StoppingRule rho_star(const BinomialTree& tree, const QuadraticGenerator& q,
                             const Payoff& p, int from_level) {
  const NodeField ueta = transformed_payoff(q.transform(), p);
  const auto last = ueta.level(tree.steps());
  const std::vector<double> xi(last.begin(), last.end());
  const SolutionSurface s = detail::backward_sweep(tree, q.driver(), xi, &ueta);
  return detail::stop_rule_natural(s.Y, q.transform(), p.eta, from_level);
}

/// Root value E[u(eta_tau)] of a rule, by backward induction with the same
/// operation order as snell_envelope.
inline double rule_value(const StoppingRule& r, const NodeField& ueta) {
  const int n = r.steps();
  std::vector<double> v(ueta.level(n).begin(), ueta.level(n).end());
  for (int i = n - 1; i >= 0; --i) {
    for (int j = 0; j <= i; ++j) {
      v[j] = r(i, j) ? ueta(i, j) : 0.5 * (v[j + 1] + v[j]);
    }
    v.pop_back();
  }
  return v[0];
}

struct EvaluatedRule {
  StoppingRule rule;
  double value;
};

/// Every distinct first-hitting rule from the root on a tree with N <= 3,
/// each with E[u(eta_tau)].
inline std::vector<EvaluatedRule> enumerate_stopping_rules(const BinomialTree& tree,
                                                           const Transform& t,
                                                           const Payoff& p) {
  const int n = tree.steps();
  if (n > 3) {
    throw Error("stopping", ErrorCode::TreeTooLarge,
                "enumeration limited to N <= 3, got N = " + std::to_string(n));
  }
  if (p.steps() != n) {
    throw Error("stopping", ErrorCode::InvalidArgument, "payoff depth differs from tree");
  }
  const NodeField ueta = transformed_payoff(t, p);
  const int free_nodes = n * (n + 1) / 2;
  std::vector<EvaluatedRule> out;
  for (std::uint32_t mask = 0; mask < (1u << free_nodes); ++mask) {
    StoppingRule r(n, -1);
    int bit = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= i; ++j, ++bit) r.set(i, j, (mask >> bit) & 1u);
    }
    r = r.effective();
    if (std::any_of(out.begin(), out.end(), [&](const EvaluatedRule& e) { return e.rule == r; })) {
      continue;
    }
    const double v = rule_value(r, ueta);
    out.push_back({std::move(r), v});
  }
  return out;
}

struct InvarianceReport {
  double max_rel_diff = 0.0;
  bool values_match = false;
  bool stop_sets_identical = false;
  int mismatched_nodes = 0;
  StoppingRule transformed_rule;
  StoppingRule quadratic_rule;
};

/// With F == 0: u^{-1}(snell of u(eta)) against the quadratic RBSDE Y, and the
/// stop-sets computed in both coordinate systems.
inline InvarianceReport verify_invariance(const BinomialTree& tree, const QuadraticGenerator& q,
                                          const Payoff& p, double rel_tol = 1e-9) {
  if (!q.driver().is_zero()) {
    throw Error("stopping", ErrorCode::InvalidArgument, "invariance check needs F == 0");
  }
  const Transform& tf = q.transform();
  const NodeField y = snell_envelope(tree, tf, p);
  const SolutionSurface s = solve_quadratic_rbsde(tree, q, p.terminal_data());

  InvarianceReport r;
  const int n = tree.steps();
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double a = tf.inverse(y(i, j));
      const double b = s.Y(i, j);
      const double d = std::abs(a - b) / std::max(1.0, std::abs(b));
      r.max_rel_diff = std::max(r.max_rel_diff, d);
    }
  }
  r.values_match = r.max_rel_diff <= rel_tol;
  r.transformed_rule = optimal_stop(tree, y, tf, p, 0);
  r.quadratic_rule = stop_rule(s.Y, p.eta, 0);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= i; ++j) {
      if (r.transformed_rule(i, j) != r.quadratic_rule(i, j)) ++r.mismatched_nodes;
    }
  }
  r.stop_sets_identical = r.mismatched_nodes == 0;
  return r;
}

}  // namespace qbsde

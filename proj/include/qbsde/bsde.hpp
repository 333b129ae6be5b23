#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qbsde/driver.hpp"
#include "qbsde/error.hpp"
#include "qbsde/lattice.hpp"
#include "qbsde/transform.hpp"

namespace qbsde {

/// Terminal variable xi (one value per level-N node) and an optional
/// obstacle L on every level.
struct TerminalData {
  std::vector<double> xi;
  std::optional<NodeField> obstacle;

  bool reflected() const noexcept { return obstacle.has_value(); }

  /// Builds xi(j) = terminal(X(N, j)) and, when given, L(i, j) = barrier(t_i, X(i, j)).
  template <typename Terminal>
  static TerminalData from_state(const BinomialTree& tree, const NodeField& x,
                                 Terminal&& terminal) {
    TerminalData d;
    const int n = tree.steps();
    d.xi.resize(std::size_t(n) + 1);
    for (int j = 0; j <= n; ++j) d.xi[j] = terminal(x(n, j));
    return d;
  }

  template <typename Terminal, typename Barrier>
  static TerminalData from_state(const BinomialTree& tree, const NodeField& x,
                                 Terminal&& terminal, Barrier&& barrier) {
    TerminalData d = from_state(tree, x, terminal);
    const int n = tree.steps();
    NodeField l(n, 0.0, "L");
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= i; ++j) l(i, j) = barrier(tree.t(i), x(i, j));
    }
    d.obstacle = std::move(l);
    return d;
  }
};

struct SolveDiagnostics {
  /// sum_{i<N, j} P(i, j) (Y - L) dK; zero up to rounding for a valid solve.
  double skorokhod_sum = 0.0;
  /// Smallest distance of a transformed value to the edge of the range of u
  /// (infinite for Lipschitz solves).
  double domain_margin = std::numeric_limits<double>::infinity();
  int fixed_point_iters = 0;
  /// max |Y - E[Y'] - g(t, Y, Z) dt - dK| over nodes (quadratic solves).
  double quadratic_residual = 0.0;
};

/// Node-indexed solution (Y, Z, dK) of a (reflected) backward equation.
/// Z and dK live on levels 0..N-1.
struct SolutionSurface {
  NodeField Y;
  NodeField Z;
  NodeField dK;
  bool reflected = false;
  std::optional<NodeField> obstacle;
  /// Lipschitz-stage values y = u(Y) for quadratic solves.
  std::optional<NodeField> transformed;
  SolveDiagnostics diagnostics;

  int steps() const noexcept { return Y.depth(); }
  double y0() const { return Y(0, 0); }
  double z0() const { return Z.depth() >= 0 ? Z(0, 0) : 0.0; }

  /// K_T along the all-down path (j = 0) and the all-up path (j = i).
  std::pair<double, double> terminal_K_extremes() const {
    double down = 0.0, up = 0.0;
    for (int i = 0; i < steps(); ++i) {
      down += dK(i, 0);
      up += dK(i, i);
    }
    return {down, up};
  }
};

namespace detail {

inline double skorokhod_sum(const NodeField& y, const NodeField& l, const NodeField& dk) {
  double s = 0.0;
  for (int i = 0; i <= dk.depth(); ++i) {
    for (int j = 0; j <= i; ++j) {
      if (dk(i, j) != 0.0) s += node_probability(i, j) * (y(i, j) - l(i, j)) * dk(i, j);
    }
  }
  return s;
}

// Backward recursion shared by every solver:
//   z = (y'+ - y'-) / (2 sqrt dt),  E = (y'+ + y'-) / 2,
//   y~ = E + F(t, y~, z) dt  (fixed point),  y = max(y~, L),  dK = y - y~.
inline SolutionSurface backward_sweep(const BinomialTree& tree, const Driver& F,
                                      const std::vector<double>& terminal,
                                      const NodeField* obstacle) {
  const int n = tree.steps();
  const double dt = tree.dt();
  if (int(terminal.size()) != n + 1) {
    throw Error("bsde", ErrorCode::InvalidArgument, "terminal needs N+1 values");
  }
  if (!(F.certificates().gamma * dt < 0.5)) {
    throw Error("bsde", ErrorCode::StepTooCoarse,
                "gamma * dt must be < 1/2 (gamma * dt = " +
                    std::to_string(F.certificates().gamma * dt) + ")");
  }
  if (obstacle) {
    if (obstacle->depth() != n) {
      throw Error("bsde", ErrorCode::InvalidArgument, "obstacle must cover levels 0..N");
    }
    for (int j = 0; j <= n; ++j) {
      const double l = (*obstacle)(n, j);
      if (l > terminal[j] + 1e-12 * std::max(1.0, std::abs(terminal[j]))) {
        throw Error("bsde", ErrorCode::ObstacleAboveTerminal,
                    "L_T > xi at terminal node " + std::to_string(j));
      }
    }
  }

  SolutionSurface s;
  s.Y = NodeField(n, 0.0, "Y");
  s.Z = NodeField(n - 1, 0.0, "Z");
  s.dK = NodeField(n - 1, 0.0, "dK");
  s.reflected = obstacle != nullptr;
  for (int j = 0; j <= n; ++j) s.Y(n, j) = terminal[j];

  int max_iters = 0;
  for (int i = n - 1; i >= 0; --i) {
    const double t = tree.t(i);
    const auto e = cond_expect(tree, s.Y, i);
    const auto z = martingale_increment(tree, s.Y, i);
    for (int j = 0; j <= i; ++j) {
      double y = e[j];
      int it = 0;
      for (;;) {
        const double next = e[j] + F(t, y, z[j]) * dt;
        ++it;
        if (!std::isfinite(next)) {
          throw Error("bsde", ErrorCode::FixedPointDiverged,
                      "non-finite iterate at node (" + std::to_string(i) + "," +
                          std::to_string(j) + ")");
        }
        const bool done = std::abs(next - y) <= 1e-12 * std::max(1.0, std::abs(next));
        y = next;
        if (done) break;
        if (it >= 50) {
          throw Error("bsde", ErrorCode::FixedPointDiverged,
                      "no convergence in 50 iterations at node (" + std::to_string(i) +
                          "," + std::to_string(j) + ")");
        }
      }
      max_iters = std::max(max_iters, it);
      s.Z(i, j) = z[j];
      if (obstacle) {
        const double l = (*obstacle)(i, j);
        if (l > y) {
          s.dK(i, j) = l - y;
          y = l;
        }
      }
      s.Y(i, j) = y;
    }
  }
  s.diagnostics.fixed_point_iters = max_iters;
  if (obstacle) {
    s.obstacle = *obstacle;
    s.diagnostics.skorokhod_sum = skorokhod_sum(s.Y, *obstacle, s.dK);
  }
  return s;
}

inline double u_or_minus_inf(const Transform& t, double x) {
  if (x == -std::numeric_limits<double>::infinity()) return x;
  return t.u(x);
}

inline SolutionSurface quadratic_pipeline(const BinomialTree& tree,
                                          const QuadraticGenerator& q,
                                          const TerminalData& term) {
  const Transform& tf = q.transform();
  const int n = tree.steps();
  if (int(term.xi.size()) != n + 1) {
    throw Error("bsde", ErrorCode::InvalidArgument, "terminal needs N+1 values");
  }
  std::vector<double> ut(term.xi.size());
  for (std::size_t j = 0; j < ut.size(); ++j) ut[j] = tf.u(term.xi[j]);

  std::optional<NodeField> ul;
  if (term.obstacle) {
    ul = NodeField(n, 0.0, "uL");
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= i; ++j) (*ul)(i, j) = u_or_minus_inf(tf, (*term.obstacle)(i, j));
    }
  }

  SolutionSurface lip = backward_sweep(tree, q.driver(), ut, ul ? &*ul : nullptr);

  // Admissibility of the Lipschitz stage: every node strictly inside the
  // range of u, away from its edges by the escape margin.
  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double y = lip.Y(i, j);
      const double slack = tf.range_slack(y);
      if (!(slack > 0.0)) {
        throw Error("bsde", ErrorCode::DomainEscape,
                    "transformed value " + std::to_string(y) + " at node (" +
                        std::to_string(i) + "," + std::to_string(j) +
                        ") leaves the admissible range of u");
      }
      margin = std::min(margin, slack + tf.escape_margin());
    }
  }

  SolutionSurface s;
  s.Y = NodeField(n, 0.0, "Y");
  s.Z = NodeField(n - 1, 0.0, "Z");
  s.dK = NodeField(n - 1, 0.0, "dK");
  s.reflected = term.reflected();
  for (int j = 0; j <= n; ++j) s.Y(n, j) = term.xi[j];
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double y = tf.inverse(lip.Y(i, j));
      const double up = tf.u_prime(y);
      s.Y(i, j) = y;
      s.Z(i, j) = lip.Z(i, j) / up;
      s.dK(i, j) = lip.dK(i, j) / up;
    }
  }

  // One-step self-consistency of the quadratic equation.
  double resid = 0.0;
  const double dt = tree.dt();
  for (int i = 0; i < n; ++i) {
    const auto e = cond_expect(tree, s.Y, i);
    for (int j = 0; j <= i; ++j) {
      const double g = q(tree.t(i), s.Y(i, j), s.Z(i, j));
      resid = std::max(resid, std::abs(s.Y(i, j) - e[j] - g * dt - s.dK(i, j)));
    }
  }

  s.diagnostics.fixed_point_iters = lip.diagnostics.fixed_point_iters;
  s.diagnostics.domain_margin = margin;
  s.diagnostics.quadratic_residual = resid;
  if (term.obstacle) {
    s.obstacle = *term.obstacle;
    s.diagnostics.skorokhod_sum = skorokhod_sum(s.Y, *term.obstacle, s.dK);
  }
  s.transformed = std::move(lip.Y);
  return s;
}

}  // namespace detail

/// Lipschitz BSDE(F, xi) by implicit backward recursion on the lattice.
inline SolutionSurface solve_bsde_lipschitz(const BinomialTree& tree, const Driver& F,
                                            const TerminalData& term) {
  if (term.reflected()) {
    throw Error("bsde", ErrorCode::InvalidArgument,
                "unreflected solve given an obstacle; use solve_rbsde_lipschitz");
  }
  return detail::backward_sweep(tree, F, term.xi, nullptr);
}

/// Reflected BSDE(F, xi, L): implicit step, then projection onto {y >= L}.
inline SolutionSurface solve_rbsde_lipschitz(const BinomialTree& tree, const Driver& F,
                                             const TerminalData& term) {
  if (!term.reflected()) {
    throw Error("bsde", ErrorCode::InvalidArgument, "reflected solve needs an obstacle");
  }
  return detail::backward_sweep(tree, F, term.xi, &*term.obstacle);
}

/// BSDE(G + f(y)|z|^2, xi): solve BSDE(F, u(xi)) and map back through
/// Y = u^{-1}(y), Z = z / u'(Y). Throws DomainEscape when the Lipschitz stage
/// leaves the range of u.
inline SolutionSurface solve_quadratic_bsde(const BinomialTree& tree,
                                            const QuadraticGenerator& q,
                                            const TerminalData& term) {
  if (term.reflected()) {
    throw Error("bsde", ErrorCode::InvalidArgument,
                "unreflected solve given an obstacle; use solve_quadratic_rbsde");
  }
  return detail::quadratic_pipeline(tree, q, term);
}

/// RBSDE(G + f(y)|z|^2, xi, L): solve RBSDE(F, u(xi), u(L)) and map back,
/// including dK = dk / u'(Y). Obstacle values of -inf never bind.
inline SolutionSurface solve_quadratic_rbsde(const BinomialTree& tree,
                                             const QuadraticGenerator& q,
                                             const TerminalData& term) {
  if (!term.reflected()) {
    throw Error("bsde", ErrorCode::InvalidArgument, "reflected solve needs an obstacle");
  }
  return detail::quadratic_pipeline(tree, q, term);
}

struct NecessaryConditionReport {
  double u_y0 = 0.0;
  double expected_u_xi = 0.0;
  double inf_u = 0.0;
  bool holds = false;
  bool strict = false;
};

/// Checks u(Y_0) >= E[u(xi)] >= inf of u over the tree values.
inline NecessaryConditionReport check_necessary_condition(const SolutionSurface& s,
                                                          const Transform& t) {
  const int n = s.steps();
  NodeField terminal(n, 0.0);
  double inf_u = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= i; ++j) inf_u = std::min(inf_u, t.u(s.Y(i, j)));
  }
  for (int j = 0; j <= n; ++j) terminal(n, j) = t.u(s.Y(n, j));
  NecessaryConditionReport r;
  r.u_y0 = t.u(s.Y(0, 0));
  r.expected_u_xi = tree_expectation(terminal, n);
  r.inf_u = inf_u;
  const double tol = 1e-10 * std::max({1.0, std::abs(r.u_y0), std::abs(r.expected_u_xi)});
  r.holds = r.u_y0 >= r.expected_u_xi - tol && r.expected_u_xi >= r.inf_u - tol;
  r.strict = r.u_y0 > r.expected_u_xi + tol;
  return r;
}

}  // namespace qbsde

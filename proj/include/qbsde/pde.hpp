#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qbsde/bsde.hpp"
#include "qbsde/driver.hpp"
#include "qbsde/error.hpp"
#include "qbsde/lattice.hpp"
#include "qbsde/quadrature.hpp"
#include "qbsde/transform.hpp"

namespace qbsde {

/// min{v - h, -v_t - (sigma^2/2) v_xx - b v_x - G(v, sigma v_x)} = 0 on
/// [0, T) x [x_lo, x_hi], v(T, .) = psi, with
/// G(v, s) = kappa |s| + f(v) s^2.
struct ObstacleProblem {
  double T = 1.0;
  double x_lo = -1.0;
  double x_hi = 1.0;
  double b = 0.0;
  double sigma = 1.0;
  double kappa = 0.0;
  Coefficient coefficient = Coefficient::zero(0.0);
  std::function<double(double)> psi;
  /// Obstacle h(t, x); may return -inf where it never binds.
  std::function<double(double, double)> h;
  /// Optional closed sub-interval of D that v must stay in.
  std::optional<ClosedRange> working;

  double obstacle(double t, double x) const {
    return h ? h(t, x) : -std::numeric_limits<double>::infinity();
  }
};

struct PdeSolution {
  std::vector<double> t;  // t_k, k = 0..K
  std::vector<double> x;  // x_m, m = 0..M
  std::vector<double> v;  // row-major (k, m)
  std::vector<char> binding;
  /// Edge of the lowest binding run of interior nodes per time level (NaN if none).
  std::vector<double> free_boundary;
  double cfl = 0.0;
  long projections = 0;
  /// max over interior nodes of |min(v - h, dt * A v)|, A the discrete operator.
  double complementarity = 0.0;

  int M() const noexcept { return int(x.size()) - 1; }
  int K() const noexcept { return int(t.size()) - 1; }
  double operator()(int k, int m) const { return v[std::size_t(k) * x.size() + m]; }
  bool bound(int k, int m) const { return binding[std::size_t(k) * x.size() + m] != 0; }

  /// v(0, x) by linear interpolation between grid nodes.
  double value_at(double xq) const {
    if (!(x.front() <= xq && xq <= x.back())) {
      throw Error("pde", ErrorCode::OutOfRange, "query point outside the window");
    }
    const double dx = x[1] - x[0];
    const int m = std::min(M() - 1, int(std::floor((xq - x.front()) / dx)));
    const double w = (xq - x[m]) / dx;
    if (w == 0.0) return (*this)(0, m);
    return (1.0 - w) * (*this)(0, m) + w * (*this)(0, m + 1);
  }

  /// CSV "t,x,v,binding" for every `stride`-th time level.
  void write_grid_csv(std::ostream& os, int stride = 1) const {
    os << "t,x,v,binding\n";
    char buf[128];
    for (int k = 0; k <= K(); k += stride) {
      for (int m = 0; m <= M(); ++m) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%d\n", t[k], x[m], (*this)(k, m),
                      int(bound(k, m)));
        os << buf;
      }
    }
  }

  /// CSV "t,x_boundary"; levels without a binding region are skipped.
  void write_free_boundary_csv(std::ostream& os) const {
    os << "t,x_boundary\n";
    char buf[96];
    for (int k = 0; k <= K(); ++k) {
      if (std::isnan(free_boundary[k])) continue;
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", t[k], free_boundary[k]);
      os << buf;
    }
  }
};

/// Obstacle-free value u^{-1}(E[u(psi(x + b tau + sigma sqrt(tau) Z))]), Z ~ N(0, 1).
/// The kappa term is ignored here.
inline double certainty_equivalent(const ObstacleProblem& p, const Transform& tf, double x,
                                   double tau) {
  if (tau <= 0.0) return p.psi(x);
  const double mean = x + p.b * tau;
  const double sd = p.sigma * std::sqrt(tau);
  if (sd == 0.0) return p.psi(mean);
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  auto integrand = [&](double z) { return c * std::exp(-0.5 * z * z) * tf.u(p.psi(mean + sd * z)); };
  static constexpr double kBreaks[] = {-10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0};
  double e = 0.0;
  for (int i = 0; i + 1 < 7; ++i) {
    e += numeric::integrate(integrand, kBreaks[i], kBreaks[i + 1], 1e-13, "pde");
  }
  return tf.inverse(e);
}

namespace detail {

inline Transform pde_transform(const ObstacleProblem& p) {
  TransformOptions opt;
  opt.working = p.working;
  opt.tol = 1e-12;
  return Transform::build(p.coefficient, opt);
}

inline void check_pde_domain(const ObstacleProblem& p, double v, double t, double x) {
  const bool in_d = p.coefficient.domain().contains(v);
  const bool in_w = !p.working || p.working->contains(v);
  if (!in_d || !in_w) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "v = %.6g at (t, x) = (%.6g, %.6g) leaves the working domain", v,
                  t, x);
    throw Error("pde", ErrorCode::DomainEscape, buf);
  }
}

// Thomas algorithm for a_m v_{m-1} + d_m v_m + c_m v_{m+1} = r_m.
inline std::vector<double> thomas(const std::vector<double>& a, std::vector<double> d,
                                  const std::vector<double>& c, std::vector<double> r) {
  const std::size_t n = d.size();
  for (std::size_t i = 1; i < n; ++i) {
    if (!(std::abs(d[i - 1]) > 1e-300)) {
      throw Error("pde", ErrorCode::NonConvergence, "zero pivot in tridiagonal solve");
    }
    const double w = a[i] / d[i - 1];
    d[i] -= w * c[i - 1];
    r[i] -= w * r[i - 1];
  }
  std::vector<double> sol(n);
  sol[n - 1] = r[n - 1] / d[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) sol[i] = (r[i] - c[i] * sol[i + 1]) / d[i];
  for (double s : sol) {
    if (!std::isfinite(s)) {
      throw Error("pde", ErrorCode::NonConvergence, "non-finite tridiagonal solution");
    }
  }
  return sol;
}

}  // namespace detail

/// Backward time stepping with implicit diffusion and drift (central
/// differences), the nonlinearity G taken explicitly from the previous level,
/// then projection v <- max(v, h). Dirichlet values at both window edges come
/// from the obstacle-free certainty equivalent, raised to h where needed.
inline PdeSolution solve_obstacle_fd(const ObstacleProblem& p, int M, int K) {
  if (M < 2 || K < 1) {
    throw Error("pde", ErrorCode::InvalidArgument, "need M >= 2 and K >= 1");
  }
  if (!(p.sigma > 0.0) || !(p.x_lo < p.x_hi) || !(p.T > 0.0) || !(p.kappa >= 0.0)) {
    throw Error("pde", ErrorCode::InvalidArgument, "invalid problem parameters");
  }
  if (!p.psi) throw Error("pde", ErrorCode::InvalidArgument, "terminal function missing");
  const double dx = (p.x_hi - p.x_lo) / M;
  const double dt = p.T / K;
  PdeSolution s;
  s.cfl = p.sigma * p.sigma * dt / (dx * dx);
  if (s.cfl > 0.5) {
    throw Error("pde", ErrorCode::CflViolation,
                "sigma^2 dt / dx^2 = " + std::to_string(s.cfl) + " exceeds 1/2");
  }
  const Transform tf = detail::pde_transform(p);

  const std::size_t w = std::size_t(M) + 1;
  s.x.resize(w);
  for (int m = 0; m <= M; ++m) s.x[m] = m == M ? p.x_hi : p.x_lo + m * dx;
  s.t.resize(std::size_t(K) + 1);
  for (int k = 0; k <= K; ++k) s.t[k] = k == K ? p.T : p.T * k / K;
  s.v.assign(w * (K + 1), 0.0);
  s.binding.assign(w * (K + 1), 0);
  s.free_boundary.assign(std::size_t(K) + 1, std::numeric_limits<double>::quiet_NaN());

  auto at = [&](int k, int m) -> double& { return s.v[std::size_t(k) * w + m]; };

  for (int m = 0; m <= M; ++m) {
    const double v = p.psi(s.x[m]);
    const double h = p.obstacle(p.T, s.x[m]);
    if (h > v + 1e-12 * std::max(1.0, std::abs(v))) {
      throw Error("pde", ErrorCode::ObstacleAboveTerminal,
                  "h(T, x) > psi(x) at x = " + std::to_string(s.x[m]));
    }
    detail::check_pde_domain(p, v, p.T, s.x[m]);
    at(K, m) = v;
    s.binding[std::size_t(K) * w + m] = h >= v;
  }

  const double s2 = 0.5 * p.sigma * p.sigma / (dx * dx);
  const double bd = p.b / (2.0 * dx);
  const double lower = -(s2 - bd);
  const double upper = -(s2 + bd);
  const double diag = 1.0 / dt + 2.0 * s2;
  const std::size_t n = std::size_t(M) - 1;
  std::vector<double> a(n, lower), d(n, diag), c(n, upper), r(n), g(w, 0.0);

  for (int k = K - 1; k >= 0; --k) {
    const double tk = s.t[k];
    double scale = 1.0;
    for (int m = 0; m <= M; ++m) scale = std::max(scale, std::abs(at(k + 1, m)));
    const double eps = 1e-8 * scale;
    for (int m = 1; m < M; ++m) {
      const double vm = at(k + 1, m);
      const double sx = p.sigma * (at(k + 1, m + 1) - at(k + 1, m - 1)) / (2.0 * dx);
      g[m] = p.kappa * std::sqrt(sx * sx + eps * eps) + p.coefficient(vm) * sx * sx;
    }
    const double left = std::max(certainty_equivalent(p, tf, p.x_lo, p.T - tk), p.obstacle(tk, p.x_lo));
    const double right = std::max(certainty_equivalent(p, tf, p.x_hi, p.T - tk), p.obstacle(tk, p.x_hi));
    for (int m = 1; m < M; ++m) r[m - 1] = at(k + 1, m) / dt + g[m];
    r[0] -= lower * left;
    r[n - 1] -= upper * right;
    const std::vector<double> sol = detail::thomas(a, d, c, r);

    // Residual of the linear solve.
    for (std::size_t i = 0; i < n; ++i) {
      double lhs = d[i] * sol[i];
      if (i > 0) lhs += a[i] * sol[i - 1];
      if (i + 1 < n) lhs += c[i] * sol[i + 1];
      if (std::abs(lhs - r[i]) > 1e-9 * std::max(1.0, std::abs(r[i]))) {
        throw Error("pde", ErrorCode::NonConvergence,
                    "tridiagonal residual too large at level " + std::to_string(k));
      }
    }

    at(k, 0) = left;
    at(k, M) = right;
    for (int m = 1; m < M; ++m) at(k, m) = sol[m - 1];
    for (int m = 0; m <= M; ++m) {
      const double h = p.obstacle(tk, s.x[m]);
      double& v = at(k, m);
      if (h >= v) {
        if (h > v) ++s.projections;
        v = h;
        s.binding[std::size_t(k) * w + m] = 1;
      }
      detail::check_pde_domain(p, v, tk, s.x[m]);
    }

    // Complementarity of the projected level against the same discretization.
    for (int m = 1; m < M; ++m) {
      const double av = (at(k, m) - at(k + 1, m)) / dt + lower * at(k, m - 1) +
                        2.0 * s2 * at(k, m) + upper * at(k, m + 1) - g[m];
      const double gap = at(k, m) - p.obstacle(tk, s.x[m]);
      s.complementarity = std::max(s.complementarity, std::abs(std::min(gap, dt * av)));
    }

    for (int m = 1; m < M; ++m) {
      if (s.binding[std::size_t(k) * w + m] && !s.binding[std::size_t(k) * w + m + 1]) {
        s.free_boundary[k] = 0.5 * (s.x[m] + s.x[m + 1]);
        break;
      }
    }
  }
  return s;
}

struct CrossValidation {
  double v0 = 0.0;
  double y0 = 0.0;
  double abs_gap = 0.0;
  double rel_gap = 0.0;
  double cfl = 0.0;
  double domain_margin = 0.0;
};

/// v(0, x0) from the finite-difference scheme against Y_0 of the quadratic
/// RBSDE on the lattice with X = x0 + b t + sigma B, xi = psi(X_T), L = h(t, X_t).
/// The probabilistic value is the reference. The grid is handed back through
/// `grid` when given.
inline CrossValidation cross_validate(const ObstacleProblem& p, double x0, int N, int M, int K,
                                      PdeSolution* grid = nullptr) {
  if (!(p.x_lo < x0 && x0 < p.x_hi)) {
    throw Error("pde", ErrorCode::InvalidArgument, "x0 must be interior to the window");
  }
  PdeSolution sol = solve_obstacle_fd(p, M, K);
  const BinomialTree tree(p.T, N);
  const NodeField x = forward_state(tree, p.b, p.sigma, x0);
  const TerminalData term = TerminalData::from_state(
      tree, x, [&](double xx) { return p.psi(xx); },
      [&](double t, double xx) { return p.obstacle(t, xx); });
  const QuadraticGenerator q(detail::pde_transform(p), Driver::abs_z(p.kappa));
  const SolutionSurface surf = solve_quadratic_rbsde(tree, q, term);

  CrossValidation r;
  r.v0 = sol.value_at(x0);
  r.y0 = surf.y0();
  r.abs_gap = std::abs(r.v0 - r.y0);
  r.rel_gap = r.abs_gap / std::max(std::abs(r.y0), 1e-300);
  r.cfl = sol.cfl;
  r.domain_margin = surf.diagnostics.domain_margin;
  if (grid) *grid = std::move(sol);
  return r;
}

}  // namespace qbsde

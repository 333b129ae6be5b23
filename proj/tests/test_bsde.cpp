#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "gen.hpp"
#include "qbsde/bsde.hpp"
#include "qbsde/compare.hpp"
#include "qbsde/stopping.hpp"

using namespace qbsde;

namespace {

TerminalData constant_terminal(int n, double c) {
  TerminalData d;
  d.xi.assign(std::size_t(n) + 1, c);
  return d;
}

QuadraticGenerator quad(const Coefficient& c, Driver d) {
  return QuadraticGenerator(build_transform(c, 1e-10), std::move(d));
}

NodeField random_field(Gen& g, int n, double lo, double hi) {
  NodeField v(n);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= i; ++j) v(i, j) = g.range(lo, hi);
  }
  return v;
}

// Random problem: smooth terminal in B and an obstacle below it at level N.
TerminalData random_reflected(Gen& g, const BinomialTree& tree) {
  const int n = tree.steps();
  const double a = g.range(-1, 1), b = g.range(-1, 1), c = g.range(0.5, 2);
  TerminalData d;
  d.xi.resize(std::size_t(n) + 1);
  for (int j = 0; j <= n; ++j) d.xi[j] = a + b * std::sin(c * tree.brownian(n, j));
  NodeField l(n);
  const double l0 = g.range(-1, 1.5), s = g.range(-1, 1), k = g.range(-1.5, 0.5);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= i; ++j) l(i, j) = l0 + s * tree.brownian(i, j) + k * tree.t(i);
  }
  for (int j = 0; j <= n; ++j) l(n, j) = std::min(l(n, j), d.xi[j]);
  d.obstacle = std::move(l);
  return d;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST(Lipschitz, ConstantTerminalZeroDriver) {
  const BinomialTree tree(1.0, 16);
  const auto s = solve_bsde_lipschitz(tree, Driver::zero(), constant_terminal(16, 2.5));
  for (double y : s.Y.raw()) EXPECT_EQ(y, 2.5);
  for (double z : s.Z.raw()) EXPECT_EQ(z, 0.0);
}

TEST(Lipschitz, ConstantDriverAddsDeltaT) {
  for (int n : {1, 7, 100}) {
    const BinomialTree tree(2.0, n);
    const auto s = solve_bsde_lipschitz(tree, Driver::affine(0.75, 0.0, 0.0),
                                        constant_terminal(n, -1.0));
    EXPECT_NEAR(s.y0(), -1.0 + 0.75 * 2.0, 1e-12);
  }
}

TEST(Lipschitz, LinearTerminalHasUnitZ) {
  const BinomialTree tree(1.0, 32);
  const auto data = TerminalData::from_state(tree, tree.brownian_field(), [](double b) { return b; });
  const auto s = solve_bsde_lipschitz(tree, Driver::zero(), data);
  for (double z : s.Z.raw()) EXPECT_NEAR(z, 1.0, 1e-12);
  // F = kappa z shifts Y by kappa (T - t) on every node.
  const auto k = solve_bsde_lipschitz(tree, Driver::affine(0.0, 0.0, 0.4), data);
  for (int i = 0; i <= 32; ++i) {
    for (int j = 0; j <= i; ++j) {
      EXPECT_NEAR(k.Y(i, j), tree.brownian(i, j) + 0.4 * (1.0 - tree.t(i)), 1e-12);
    }
  }
}

TEST(Lipschitz, ImplicitAffineRecursion) {
  // Deterministic data: y_i = (y_{i+1} + delta dt) / (1 - gamma dt).
  const double delta = 0.3, gamma = 1.2;
  const int n = 50;
  const BinomialTree tree(1.0, n);
  const auto s = solve_bsde_lipschitz(tree, Driver::affine(delta, gamma, 0.0),
                                      constant_terminal(n, -0.5));
  double y = -0.5;
  const double dt = 1.0 / n;
  for (int i = n - 1; i >= 0; --i) {
    y = (y + delta * dt) / (1 - gamma * dt);
    EXPECT_NEAR(s.Y(i, 0), y, 1e-11);
    EXPECT_NEAR(s.Y(i, i), y, 1e-11);
  }
  const double limit = -(std::exp(1.2) + 1.0) / 4.0;
  EXPECT_NEAR(s.y0(), limit, 0.05);
}

TEST(Lipschitz, ConvergesAtFirstOrder) {
  // F = gamma a, xi = B_T^2: Y_0 = T e^{gamma T}; the tree matches E[B_T^2] exactly.
  const double gamma = 0.8, want = std::exp(gamma);
  std::vector<double> lx, ly;
  for (int n : {64, 128, 256, 512}) {
    const BinomialTree tree(1.0, n);
    const auto data = TerminalData::from_state(tree, tree.brownian_field(),
                                               [](double b) { return b * b; });
    const auto s = solve_bsde_lipschitz(tree, Driver::affine(0.0, gamma, 0.0), data);
    lx.push_back(std::log(1.0 / n));
    ly.push_back(std::log(std::abs(s.y0() - want)));
  }
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) mx += lx[k] / lx.size(), my += ly[k] / ly.size();
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  EXPECT_GE(sxy / sxx, 0.9);
}

TEST(Lipschitz, AprioriBound) {
  // |y_i| <= (max|y_{i+1}| + delta dt) / (1 - gamma dt) while kappa sqrt(dt) <= 1.
  Gen g(31);
  for (int k = 0; k < 30; ++k) {
    const int n = 40;
    const BinomialTree tree(1.0, n);
    const double d = g.range(-1, 1), gm = g.range(-2, 2), kp = g.range(-2, 2);
    const Driver F = Driver::affine(d, gm, kp);
    TerminalData data;
    for (int j = 0; j <= n; ++j) data.xi.push_back(g.range(-3, 3));
    const auto s = solve_bsde_lipschitz(tree, F, data);
    double bound = max_abs(data.xi);
    const double dt = tree.dt();
    for (int i = n - 1; i >= 0; --i) {
      bound = (bound + std::abs(d) * dt) / (1 - std::abs(gm) * dt);
      for (int j = 0; j <= i; ++j) EXPECT_LE(std::abs(s.Y(i, j)), bound * (1 + 1e-12));
    }
  }
}

TEST(Reflected, ObstacleExampleExactOnEveryGrid) {
  // F = 1, xi = 1, L = 3 - 3t: Y = 3 - 3t before 1/2, 2 - t after, K_T = 1.
  for (int n : {8, 64, 512}) {
    const BinomialTree tree(1.0, n);
    TerminalData data = constant_terminal(n, 1.0);
    NodeField l(n);
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= i; ++j) l(i, j) = 3.0 - 3.0 * tree.t(i);
    }
    data.obstacle = l;
    const auto s = solve_rbsde_lipschitz(tree, Driver::affine(1.0, 0.0, 0.0), data);
    for (int i = 0; i <= n; ++i) {
      const double t = tree.t(i);
      const double want = t < 0.5 ? 3.0 - 3.0 * t : 2.0 - t;
      for (int j = 0; j <= i; ++j) EXPECT_NEAR(s.Y(i, j), want, 1e-12) << n << " " << i;
    }
    EXPECT_NEAR(s.Y(n / 2, 0), 1.5, 1e-12);
    const auto [lo, hi] = s.terminal_K_extremes();
    EXPECT_NEAR(lo, 1.0, 1e-12);
    EXPECT_NEAR(hi, 1.0, 1e-12);
    EXPECT_EQ(s.y0(), 3.0);
  }
}

TEST(Reflected, FarObstacleChangesNothing) {
  Gen g(5);
  const BinomialTree tree(1.0, 30);
  TerminalData data;
  for (int j = 0; j <= 30; ++j) data.xi.push_back(g.range(-1, 1));
  const Driver F = Driver::affine(0.2, -0.5, 0.7);
  const auto plain = solve_bsde_lipschitz(tree, F, data);
  data.obstacle = NodeField(30, -100.0);
  const auto refl = solve_rbsde_lipschitz(tree, F, data);
  EXPECT_EQ(plain.Y, refl.Y);
  for (double k : refl.dK.raw()) EXPECT_EQ(k, 0.0);
}

TEST(Reflected, TwoStepEnvelopeEqualsBestRule) {
  Gen g(6);
  for (int k = 0; k < 50; ++k) {
    for (int n : {1, 2, 3}) {
      const BinomialTree tree(1.0, n);
      Payoff p{random_field(g, n, -2, 2)};
      const auto s = solve_rbsde_lipschitz(tree, Driver::zero(), p.terminal_data());
      const auto rules = enumerate_stopping_rules(tree, identity_transform(), p);
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& r : rules) best = std::max(best, r.value);
      EXPECT_EQ(s.y0(), best);
    }
  }
}

TEST(Reflected, SkorokhodAndMonotoneK) {
  Gen g(7);
  for (int k = 0; k < 50; ++k) {
    const BinomialTree tree(1.0, 64);
    const auto data = random_reflected(g, tree);
    const Driver F = Driver::affine(g.range(-1, 1), g.range(-2, 2), g.range(-1, 1));
    const auto s = solve_rbsde_lipschitz(tree, F, data);
    for (double dk : s.dK.raw()) EXPECT_GE(dk, 0.0);
    EXPECT_LE(s.diagnostics.skorokhod_sum, 1e-12);
    for (int i = 0; i <= 64; ++i) {
      for (int j = 0; j <= i; ++j) EXPECT_GE(s.Y(i, j), (*data.obstacle)(i, j));
    }
    TerminalData free = data;
    free.obstacle.reset();
    const auto u = solve_bsde_lipschitz(tree, F, free);
    for (std::size_t m = 0; m < u.Y.raw().size(); ++m) {
      EXPECT_GE(s.Y.raw()[m], u.Y.raw()[m] - 1e-12);
    }
  }
}

TEST(Reflected, StepTooCoarseAndObstacleChecks) {
  const BinomialTree tree(1.0, 4);
  try {
    solve_bsde_lipschitz(tree, Driver::affine(0.0, 2.0, 0.0), constant_terminal(4, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StepTooCoarse);
  }
  TerminalData data = constant_terminal(4, 1.0);
  data.obstacle = NodeField(4, 1.5);
  try {
    solve_rbsde_lipschitz(tree, Driver::zero(), data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ObstacleAboveTerminal);
  }
  EXPECT_THROW(solve_bsde_lipschitz(tree, Driver::zero(), data), Error);
  EXPECT_THROW(solve_rbsde_lipschitz(tree, Driver::zero(), constant_terminal(4, 1.0)), Error);
}

TEST(Reflected, NonFiniteDriverDiverges) {
  const Driver F = Driver::custom(
      [](double, double a, double) {
        return std::abs(a) > 100 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
      },
      Certificates{0.0, 0.0, 0.0});
  const BinomialTree tree(1.0, 3);
  try {
    solve_bsde_lipschitz(tree, F, constant_terminal(3, 1000.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FixedPointDiverged);
  }
}

TEST(Quadratic, ExponentialCertaintyEquivalent) {
  // F = 0, f = beta/2: Y = log E[exp(beta xi) | node] / beta.
  Gen g(8);
  for (int k = 0; k < 20; ++k) {
    const double beta = g.range(0.2, 2.0), a = g.range(-1, 1), c = g.range(0.3, 1.5);
    const int n = 40;
    const BinomialTree tree(1.0, n);
    const auto data = TerminalData::from_state(tree, tree.brownian_field(),
                                               [&](double b) { return a + std::sin(c * b); });
    const auto s = solve_quadratic_bsde(tree, quad(Coefficient::constant(beta, 0.0), Driver::zero()),
                                        data);
    double m = 0.0;
    for (int j = 0; j <= n; ++j) m += node_probability(n, j) * std::exp(beta * data.xi[j]);
    EXPECT_LE(rel_err(s.y0(), std::log(m) / beta), 1e-10);
    EXPECT_EQ(s.diagnostics.skorokhod_sum, 0.0);
  }
}

TEST(Quadratic, CommutesWithTransform) {
  for (const Coefficient& c : {Coefficient::constant(0.7, 0.0), Coefficient::power_over_y(0.5, 1.0),
                               Coefficient::neg_half_over_y(1.0)}) {
    const int n = 64;
    const BinomialTree tree(1.0, n);
    const auto q = quad(c, Driver::affine(0.1, 0.2, 0.3));
    const auto data = TerminalData::from_state(tree, tree.brownian_field(), [&](double b) {
      return 1.5 + 0.5 * std::tanh(b);
    });
    const auto s = solve_quadratic_bsde(tree, q, data);
    TerminalData ud;
    for (double x : data.xi) ud.xi.push_back(q.transform().u(x));
    const auto lip = solve_bsde_lipschitz(tree, q.driver(), ud);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= i; ++j) {
        EXPECT_LE(rel_err(q.transform().u(s.Y(i, j)), lip.Y(i, j)), 1e-9);
        EXPECT_LE(rel_err(s.Z(i, j) * q.transform().u_prime(s.Y(i, j)), lip.Z(i, j)), 1e-9);
      }
    }
    EXPECT_GT(s.diagnostics.domain_margin, 0.0);
    // The quadratic equation holds up to the discretisation error of one step.
    EXPECT_LT(s.diagnostics.quadratic_residual, 0.05);
  }
}

TEST(Quadratic, ResidualShrinksWithStep) {
  const auto q = quad(Coefficient::constant(1.0, 0.0), Driver::affine(0.1, 0.2, 0.3));
  double prev = std::numeric_limits<double>::infinity();
  for (int n : {32, 128, 512}) {
    const BinomialTree tree(1.0, n);
    const auto data = TerminalData::from_state(tree, tree.brownian_field(),
                                               [](double b) { return 0.5 * std::sin(b); });
    const double r = solve_quadratic_bsde(tree, q, data).diagnostics.quadratic_residual;
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(Quadratic, LogUtilityDeterministicPayoff) {
  // u = ln, F = 0, deterministic eta: Y_i = max_{k >= i} eta_k.
  const int n = 60;
  const BinomialTree tree(1.0, n);
  auto eta_t = [](double t) { return 1.0 + std::pow(std::sin(3 * t), 2) + 0.5 * t; };
  Payoff p{NodeField(n)};
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= i; ++j) p.eta(i, j) = eta_t(tree.t(i));
  }
  const auto s = solve_quadratic_rbsde(tree, quad(Coefficient::neg_half_over_y(1.0), Driver::zero()),
                                       p.terminal_data());
  for (int i = 0; i <= n; ++i) {
    double want = 0.0;
    for (int k = i; k <= n; ++k) want = std::max(want, eta_t(tree.t(k)));
    for (int j = 0; j <= i; ++j) EXPECT_LE(rel_err(s.Y(i, j), want), 1e-12);
  }
}

TEST(Quadratic, ReflectedDominatesAndSkorokhod) {
  Gen g(10);
  const auto q = quad(Coefficient::constant(0.8, 0.0), Driver::affine(0.1, 0.3, 0.2));
  for (int k = 0; k < 20; ++k) {
    const BinomialTree tree(1.0, 48);
    const auto data = random_reflected(g, tree);
    const auto s = solve_quadratic_rbsde(tree, q, data);
    TerminalData free = data;
    free.obstacle.reset();
    const auto u = solve_quadratic_bsde(tree, q, free);
    for (std::size_t m = 0; m < u.Y.raw().size(); ++m) EXPECT_GE(s.Y.raw()[m], u.Y.raw()[m] - 1e-12);
    for (double dk : s.dK.raw()) EXPECT_GE(dk, 0.0);
    EXPECT_LE(s.diagnostics.skorokhod_sum, 1e-10);
  }
}

TEST(Quadratic, MinusInfinityObstacleNeverBinds) {
  const int n = 16;
  const BinomialTree tree(1.0, n);
  const auto q = quad(Coefficient::neg_half_over_y(1.0), Driver::affine(0.0, 0.1, 0.0));
  TerminalData data = constant_terminal(n, 2.0);
  const auto plain = solve_quadratic_bsde(tree, q, data);
  data.obstacle = NodeField(n, -std::numeric_limits<double>::infinity());
  const auto refl = solve_quadratic_rbsde(tree, q, data);
  EXPECT_EQ(plain.Y, refl.Y);
}

TEST(Quadratic, DomainEscapeCounterexample) {
  // f = 1/2, F = 0.3 + 1.2 a, xi = ln(1/2): the transformed solution drops below -1.
  const int n = 256;
  const BinomialTree tree(1.0, n);
  const auto q = quad(Coefficient::constant(1.0, 0.0), Driver::affine(0.3, 1.2, 0.0));
  const auto data = constant_terminal(n, std::log(0.5));
  try {
    solve_quadratic_bsde(tree, q, data);
    FAIL() << "expected DomainEscape";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DomainEscape);
    EXPECT_EQ(e.qualified_name(), "bsde::DomainEscape");
  }
  TerminalData ud = constant_terminal(n, q.transform().u(std::log(0.5)));
  const double y0 = solve_bsde_lipschitz(tree, q.driver(), ud).y0();
  EXPECT_LT(y0, -1.0);
  EXPECT_NEAR(y0, -(std::exp(1.2) + 1.0) / 4.0, 0.01);
}

TEST(NecessaryCondition, EqualityWithoutReflection) {
  const int n = 32;
  const BinomialTree tree(1.0, n);
  const auto q = quad(Coefficient::constant(1.0, 0.0), Driver::zero());
  const auto data = TerminalData::from_state(tree, tree.brownian_field(), [](double b) { return std::cos(b); });
  const auto r = check_necessary_condition(solve_quadratic_bsde(tree, q, data), q.transform());
  EXPECT_TRUE(r.holds);
  EXPECT_FALSE(r.strict);
  EXPECT_NEAR(r.u_y0, r.expected_u_xi, 1e-12);
  const auto c = check_necessary_condition(
      solve_quadratic_bsde(tree, q, constant_terminal(n, 0.4)), q.transform());
  EXPECT_EQ(c.u_y0, c.expected_u_xi);
}

TEST(NecessaryCondition, StrictWhenObstacleActs) {
  for (const Coefficient& c : {Coefficient::constant(0.6, 0.0), Coefficient::power_over_y(0.5, 1.0),
                               Coefficient::neg_half_over_y(1.0)}) {
    const int n = 32;
    const BinomialTree tree(1.0, n);
    const auto q = quad(c, Driver::zero());
    TerminalData data = TerminalData::from_state(tree, tree.brownian_field(),
                                                 [](double b) { return 1.0 + 0.3 * std::tanh(b); });
    NodeField l(n);
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= i; ++j) l(i, j) = std::min(1.5 - tree.t(i), data.xi[j] + 1.0);
    }
    for (int j = 0; j <= n; ++j) l(n, j) = std::min(l(n, j), data.xi[j]);
    data.obstacle = l;
    const auto s = solve_quadratic_rbsde(tree, q, data);
    const auto [klo, khi] = s.terminal_K_extremes();
    EXPECT_GT(std::max(klo, khi), 0.0);
    const auto r = check_necessary_condition(s, q.transform());
    EXPECT_TRUE(r.holds);
    EXPECT_TRUE(r.strict);
  }
}

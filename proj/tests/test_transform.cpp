#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "gen.hpp"
#include "qbsde/transform.hpp"

using namespace qbsde;

namespace {

constexpr double kE = std::numbers::e;

Transform closed(const Coefficient& c) { return build_transform(c, 1e-10); }

Transform numeric_transform(const Coefficient& c, double lo, double hi, double tol = 1e-10) {
  return build_transform(c, tol, ClosedRange{lo, hi}, true);
}

void expect_error(ErrorCode code, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << error_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(Interval, OpenMembership) {
  Interval o(0.0, 1.0);
  EXPECT_FALSE(o.contains(0.0));
  EXPECT_TRUE(o.contains(0.5));
  EXPECT_FALSE(o.contains(1.0));
  EXPECT_TRUE(Interval::real_line().contains(-1e300));
  expect_error(ErrorCode::EmptyDomain, [] { Interval(1.0, 1.0); });
}

TEST(Transform, ZeroCoefficientIsShift) {
  const Transform t = closed(Coefficient::zero(1.0));
  EXPECT_DOUBLE_EQ(eval_u(t, 3.0), 2.0);
  for (double x : {-5.0, 0.0, 7.5}) EXPECT_EQ(eval_u_prime(t, x), 1.0);
}

TEST(Transform, PowerFamilyValues) {
  const Transform t = closed(Coefficient::power_over_y(1.0, 1.0));
  EXPECT_NEAR(eval_u(t, 2.0), 7.0 / 3.0, 1e-14);
  EXPECT_NEAR(eval_u_prime(t, 2.0), 4.0, 1e-14);
}

TEST(Transform, ExponentialFamilyValues) {
  EXPECT_NEAR(eval_u(closed(Coefficient::constant(1.0, 0.0)), 1.0), kE - 1.0, 1e-14);
  EXPECT_NEAR(eval_u_prime(closed(Coefficient::constant(2.0, 0.0)), 1.0), kE * kE, 1e-13);
}

TEST(Transform, LogFamilyValues) {
  const Transform t = closed(Coefficient::neg_half_over_y(1.0));
  EXPECT_NEAR(eval_u(t, kE), 1.0, 1e-15);
  EXPECT_NEAR(invert_u(t, 1.0), kE, 1e-14);
}

TEST(Transform, VanishesAtAlpha) {
  const std::vector<Coefficient> cs = {
      Coefficient::zero(0.3), Coefficient::constant(-1.5, 2.0), Coefficient::power_over_y(0.7, 2.0),
      Coefficient::neg_half_over_y(0.5)};
  for (const auto& c : cs) {
    const Transform t = closed(c);
    EXPECT_EQ(eval_u(t, c.alpha()), 0.0);
    EXPECT_EQ(invert_u(t, 0.0), c.alpha());
    EXPECT_TRUE(t.range().contains(0.0));
  }
  const Transform tab = build_transform(
      Coefficient::tabulated([](double y) { return std::cos(y); }, 0.5, Interval::real_line()), 1e-10,
      ClosedRange{-2.0, 3.0});
  EXPECT_EQ(eval_u(tab, 0.5), 0.0);
}

TEST(Transform, RangeOfExponentialFamily) {
  const Transform t = closed(Coefficient::constant(2.0, 0.0));
  EXPECT_DOUBLE_EQ(t.range().lo(), -0.5);
  EXPECT_EQ(t.range().hi(), kInf);
  const Transform neg = closed(Coefficient::constant(-2.0, 0.0));
  EXPECT_EQ(neg.range().lo(), -kInf);
  EXPECT_DOUBLE_EQ(neg.range().hi(), 0.5);
}

TEST(Transform, RoundTripRandom) {
  Gen g(11);
  const std::vector<std::pair<Coefficient, std::pair<double, double>>> cases = {
      {Coefficient::constant(1.0, 0.0), {-5.0, 5.0}},
      {Coefficient::power_over_y(0.8, 1.0), {0.05, 10.0}},
      {Coefficient::power_over_y(-1.3, 1.0), {0.05, 10.0}},
      {Coefficient::neg_half_over_y(2.0), {0.01, 50.0}}};
  for (const auto& [c, w] : cases) {
    const Transform t = closed(c);
    const Transform n = numeric_transform(c, w.first, w.second);
    for (int k = 0; k < 100; ++k) {
      const double x = g.range(w.first, w.second);
      EXPECT_LE(rel_err(invert_u(t, eval_u(t, x)), x), 1e-10);
      EXPECT_LE(rel_err(invert_u(n, eval_u(n, x)), x), 1e-10);
    }
  }
}

TEST(Transform, NumericMatchesClosedForms) {
  struct Case {
    Coefficient c;
    double lo, hi;
  };
  const std::vector<Case> cases = {{Coefficient::zero(0.5), -3.0, 4.0},
                                   {Coefficient::constant(1.0, 0.0), -4.0, 3.0},
                                   {Coefficient::constant(-0.7, 1.0), -2.0, 6.0},
                                   {Coefficient::power_over_y(1.0, 1.0), 0.1, 5.0},
                                   {Coefficient::power_over_y(-0.9, 2.0), 0.2, 8.0},
                                   {Coefficient::neg_half_over_y(1.0), 0.05, 20.0}};
  for (const auto& cs : cases) {
    const Transform t = closed(cs.c);
    const Transform n = numeric_transform(cs.c, cs.lo, cs.hi);
    EXPECT_EQ(n.mode(), TransformMode::Numeric);
    for (double x : linspace(cs.lo, cs.hi, 1000)) {
      EXPECT_LE(rel_err(n.u(x), t.u(x)), 1e-8) << to_string(cs.c.kind()) << " x=" << x;
      EXPECT_LE(rel_err(n.u_prime(x), t.u_prime(x)), 1e-8) << to_string(cs.c.kind()) << " x=" << x;
    }
  }
}

TEST(Transform, OdeResidual) {
  const std::vector<Coefficient> cs = {Coefficient::constant(1.3, 0.0),
                                       Coefficient::power_over_y(0.6, 1.0),
                                       Coefficient::neg_half_over_y(1.0)};
  for (const auto& c : cs) {
    const Transform t = closed(c);
    for (double x : linspace(0.5, 3.0, 1000)) {
      const double h = 1e-5;
      const double second = (t.u_prime(x + h) - t.u_prime(x - h)) / (2 * h);
      EXPECT_LE(std::abs(second - 2.0 * c(x) * t.u_prime(x)), 1e-6 * (1 + std::abs(t.u_prime(x))));
      EXPECT_DOUBLE_EQ(t.u_second(x), 2.0 * c(x) * t.u_prime(x));
    }
  }
}

TEST(Transform, NumericOdeResidualOnTabulated) {
  auto f = [](double y) { return 0.3 * std::sin(2 * y); };
  const Transform t = build_transform(Coefficient::tabulated(f, 0.0, Interval::real_line()), 1e-11,
                                      ClosedRange{-3.0, 3.0});
  for (double x : linspace(-2.9, 2.9, 1000)) {
    const double h = 1e-4;
    const double second = (t.u_prime(x + h) - t.u_prime(x - h)) / (2 * h);
    EXPECT_LE(std::abs(second - 2.0 * f(x) * t.u_prime(x)), 1e-6 * (1 + std::abs(t.u_prime(x))));
  }
}

TEST(Transform, TabulatedAgainstIndependentQuadrature) {
  // f(y) = a / (1 + y^2): inner integral a atan(y), so u' = exp(2 a atan(y)).
  const double a = 0.4;
  const Transform t = build_transform(
      Coefficient::tabulated([a](double y) { return a / (1 + y * y); }, 0.0, Interval::real_line()),
      1e-11, ClosedRange{-4.0, 4.0});
  for (double x : linspace(-4.0, 4.0, 101)) {
    EXPECT_NEAR(t.u_prime(x), std::exp(2 * a * std::atan(x)), 1e-9 * t.u_prime(x));
    // Composite Simpson with 2000 panels as an independent outer integral.
    const int n = 2000;
    const double h = x / n;
    double s = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double w = (k == 0 || k == n) ? 1 : (k % 2 ? 4 : 2);
      s += w * std::exp(2 * a * std::atan(k * h));
    }
    EXPECT_NEAR(t.u(x), s * h / 3, 1e-9 * std::max(1.0, std::abs(s * h / 3)));
  }
}

TEST(Transform, StrictMonotonicity) {
  Gen g(5);
  const Transform t = numeric_transform(Coefficient::power_over_y(0.9, 1.0), 0.1, 10.0);
  const Transform c = closed(Coefficient::constant(-3.0, 0.0));
  for (int k = 0; k < 500; ++k) {
    double x1 = g.range(0.1, 10.0), x2 = g.range(0.1, 10.0);
    if (x1 > x2) std::swap(x1, x2);
    if (x1 == x2) continue;
    EXPECT_LT(t.u(x1), t.u(x2));
    EXPECT_LT(c.u(x1 - 5), c.u(x2 - 5));
  }
  const auto& table = t.table();
  for (std::size_t k = 1; k < table.size(); ++k) {
    EXPECT_LT(table[k - 1].x, table[k].x);
    EXPECT_LT(table[k - 1].u, table[k].u);
  }
}

TEST(Transform, MonotoneDominance) {
  // g <= f pointwise implies u_g <= u_f on both sides of alpha.
  Gen gen(21);
  for (int k = 0; k < 20; ++k) {
    const double bg = gen.range(-1.0, 1.0);
    const double bf = bg + gen.range(0.0, 1.0);
    const Transform ug = closed(Coefficient::constant(bg, 0.0));
    const Transform uf = closed(Coefficient::constant(bf, 0.0));
    for (double x : linspace(-3.0, 3.0, 200)) {
      EXPECT_LE(ug.u(x), uf.u(x) + 1e-9);
    }
  }
  const Transform id = closed(Coefficient::zero(1.0));
  const Transform pos = closed(Coefficient::power_over_y(0.4, 1.0));
  for (double x : linspace(1.0, 9.0, 200)) EXPECT_GE(pos.u(x), id.u(x) - 1e-12);
}

TEST(Transform, Errors) {
  expect_error(ErrorCode::InvalidArgument, [] { Coefficient::zero(2.0, Interval(0.0, 1.0)); });
  expect_error(ErrorCode::InvalidArgument,
               [] { Coefficient::power_over_y(1.0, 1.0, Interval(-1.0, 2.0)); });
  expect_error(ErrorCode::EmptyDomain, [] {
    build_transform(Coefficient::tabulated([](double) { return 0.0; }, 0.0, Interval::real_line()), 1e-8);
  });
  expect_error(ErrorCode::EmptyDomain, [] {
    build_transform(Coefficient::constant(1.0, 0.0), 1e-8, ClosedRange{1.0, 2.0});
  });
  const Transform t = closed(Coefficient::neg_half_over_y(1.0));
  expect_error(ErrorCode::OutOfDomain, [&] { t.u(-1.0); });
  const Transform e = closed(Coefficient::constant(1.0, 0.0));
  expect_error(ErrorCode::OutOfRange, [&] { e.inverse(-2.0); });
  const Transform n = numeric_transform(Coefficient::constant(1.0, 0.0), -1.0, 1.0);
  expect_error(ErrorCode::OutOfDomain, [&] { n.u(1.5); });
  expect_error(ErrorCode::OutOfRange, [&] { n.inverse(100.0); });
  expect_error(ErrorCode::NonIntegrable, [] {
    build_transform(Coefficient::tabulated([](double y) { return y > 0.5 ? NAN : 0.0; }, 0.0,
                                           Interval::real_line()),
                    1e-8, ClosedRange{-1.0, 1.0});
  });
}

TEST(Transform, CsvExport) {
  std::ostringstream os;
  numeric_transform(Coefficient::constant(1.0, 0.0), -1.0, 1.0).write_csv(os);
  EXPECT_EQ(os.str().substr(0, 13), "x,u,uprime\n-1");
  std::ostringstream cs;
  build_transform(Coefficient::constant(1.0, 0.0), 1e-10, ClosedRange{-1.0, 1.0}).write_csv(cs, 11);
  int lines = 0;
  for (char ch : cs.str()) lines += ch == '\n';
  EXPECT_EQ(lines, 12);
}

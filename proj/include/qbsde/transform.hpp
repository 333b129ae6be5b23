#pragma once

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "qbsde/error.hpp"
#include "qbsde/interval.hpp"
#include "qbsde/quadrature.hpp"

namespace qbsde {

enum class CoefficientKind { Zero, Constant, PowerOverY, NegHalfOverY, Tabulated };

inline const char* to_string(CoefficientKind k) {
  switch (k) {
    case CoefficientKind::Zero: return "zero";
    case CoefficientKind::Constant: return "constant";
    case CoefficientKind::PowerOverY: return "power-over-y";
    case CoefficientKind::NegHalfOverY: return "neg-half-over-y";
    case CoefficientKind::Tabulated: return "tabulated";
  }
  return "?";
}

/// The coefficient f of the quadratic term f(y)|z|^2, together with its
/// open domain D and the base point alpha of the change of variable.
///
/// Parametrisations:
///   Zero           f = 0
///   Constant       f = beta / 2
///   PowerOverY     f = beta / y          (D inside (0, inf))
///   NegHalfOverY   f = -1 / (2 y)        (D inside (0, inf))
///   Tabulated      f given as a callable
class Coefficient {
 public:
  static Coefficient zero(double alpha, Interval domain = Interval::real_line()) {
    return Coefficient(CoefficientKind::Zero, 0.0, alpha, domain, {});
  }
  static Coefficient constant(double beta, double alpha,
                              Interval domain = Interval::real_line()) {
    if (beta == 0.0) return zero(alpha, domain);
    return Coefficient(CoefficientKind::Constant, beta, alpha, domain, {});
  }
  static Coefficient power_over_y(double beta, double alpha,
                                  Interval domain = Interval::positive()) {
    if (beta == 0.0) return zero(alpha, domain);
    if (beta == -0.5) return neg_half_over_y(alpha, domain);
    return Coefficient(CoefficientKind::PowerOverY, beta, alpha, domain, {});
  }
  static Coefficient neg_half_over_y(double alpha,
                                     Interval domain = Interval::positive()) {
    return Coefficient(CoefficientKind::NegHalfOverY, -0.5, alpha, domain, {});
  }
  static Coefficient tabulated(std::function<double(double)> f, double alpha,
                               Interval domain) {
    if (!f) {
      throw Error("transform", ErrorCode::InvalidArgument,
                  "tabulated coefficient needs a callable");
    }
    return Coefficient(CoefficientKind::Tabulated, 0.0, alpha, domain,
                       std::move(f));
  }

  CoefficientKind kind() const noexcept { return kind_; }
  double beta() const noexcept { return beta_; }
  double alpha() const noexcept { return alpha_; }
  const Interval& domain() const noexcept { return domain_; }
  bool has_closed_form() const noexcept {
    return kind_ != CoefficientKind::Tabulated;
  }

  double operator()(double y) const {
    switch (kind_) {
      case CoefficientKind::Zero: return 0.0;
      case CoefficientKind::Constant: return 0.5 * beta_;
      case CoefficientKind::PowerOverY: return beta_ / y;
      case CoefficientKind::NegHalfOverY: return -0.5 / y;
      case CoefficientKind::Tabulated: return tabulated_(y);
    }
    return 0.0;
  }

 private:
  Coefficient(CoefficientKind kind, double beta, double alpha, Interval domain,
              std::function<double(double)> f)
      : kind_(kind),
        beta_(beta),
        alpha_(alpha),
        domain_(domain),
        tabulated_(std::move(f)) {
    if (!domain_.contains(alpha_)) {
      throw Error("transform", ErrorCode::InvalidArgument,
                  "alpha must lie in the domain D");
    }
    if ((kind_ == CoefficientKind::PowerOverY ||
         kind_ == CoefficientKind::NegHalfOverY) &&
        domain_.lo() < 0.0) {
      throw Error("transform", ErrorCode::InvalidArgument,
                  "f = beta/y requires D inside (0, inf)");
    }
  }

  CoefficientKind kind_;
  double beta_;
  double alpha_;
  Interval domain_;
  std::function<double(double)> tabulated_;
};

enum class TransformMode { ClosedForm, Numeric };

struct TransformOptions {
  double tol = 1e-10;
  /// Closed sub-interval [d1, d2] of D containing alpha. Required for
  /// Numeric mode; optional otherwise (used for export).
  std::optional<ClosedRange> working;
  bool force_numeric = false;
};

/// The change of variable u(x) = int_alpha^x exp(2 int_alpha^y f) dy.
///
/// Closed-form families use analytic expressions. Any other coefficient (or
/// a forced numeric build) tabulates x, I(x) = int_alpha^x f and u(x) on an
/// adaptively graded grid; u is read back through a monotone cubic Hermite
/// interpolant and u' = exp(2 I) through a Hermite interpolant of I.
///
/// Immutable after construction.
class Transform {
 public:
  struct TableRow {
    double x;
    double inner;  // int_alpha^x f
    double u;
    double f;
  };

  static Transform build(const Coefficient& c, const TransformOptions& opt = {}) {
    if (!(opt.tol > 0.0)) {
      throw Error("transform", ErrorCode::InvalidArgument, "tol must be > 0");
    }
    Transform t(c, opt);
    if (opt.working) {
      const auto& w = *opt.working;
      if (!(w.lo < w.hi) || !c.domain().contains(w.lo) ||
          !c.domain().contains(w.hi)) {
        throw Error("transform", ErrorCode::EmptyDomain,
                    "working sub-interval must be a non-empty closed subset of D");
      }
      if (!w.contains(c.alpha())) {
        throw Error("transform", ErrorCode::EmptyDomain,
                    "working sub-interval must contain alpha");
      }
    }
    if (c.has_closed_form() && !opt.force_numeric) {
      t.mode_ = TransformMode::ClosedForm;
      t.range_ = Interval(t.closed_u(c.domain().lo()), t.closed_u(c.domain().hi()));
    } else {
      if (!opt.working) {
        throw Error("transform", ErrorCode::EmptyDomain,
                    "numeric mode requires a working sub-interval");
      }
      t.mode_ = TransformMode::Numeric;
      t.tabulate();
      t.range_ = Interval(t.table_.front().u, t.table_.back().u);
    }
    return t;
  }

  const Coefficient& coefficient() const noexcept { return coef_; }
  TransformMode mode() const noexcept { return mode_; }
  double tol() const noexcept { return opt_.tol; }
  double alpha() const noexcept { return coef_.alpha(); }
  const Interval& domain() const noexcept { return coef_.domain(); }
  /// Image V of u (Numeric mode: image of the working sub-interval).
  const Interval& range() const noexcept { return range_; }
  const std::optional<ClosedRange>& working() const noexcept {
    return opt_.working;
  }
  const std::vector<TableRow>& table() const noexcept { return table_; }

  double f(double x) const { return coef_(x); }

  double u(double x) const {
    check_domain(x);
    if (mode_ == TransformMode::ClosedForm) return closed_u(x);
    const std::size_t k = segment_of_x(x);
    return hermite_u(k, x);
  }

  double u_prime(double x) const {
    check_domain(x);
    if (mode_ == TransformMode::ClosedForm) return closed_u_prime(x);
    const std::size_t k = segment_of_x(x);
    return std::exp(2.0 * hermite_inner(k, x));
  }

  /// u'' = 2 f u' (never tabulated; exists only almost everywhere).
  double u_second(double x) const { return 2.0 * f(x) * u_prime(x); }

  double inverse(double v) const {
    if (mode_ == TransformMode::ClosedForm) {
      if (!range_.contains(v)) {
        throw Error("transform", ErrorCode::OutOfRange,
                    "value " + std::to_string(v) + " outside the range of u");
      }
      return closed_inverse(v);
    }
    const auto& front = table_.front();
    const auto& back = table_.back();
    if (!(front.u <= v && v <= back.u)) {
      throw Error("transform", ErrorCode::OutOfRange,
                  "value " + std::to_string(v) + " outside the tabulated range");
    }
    auto it = std::upper_bound(
        table_.begin(), table_.end(), v,
        [](double val, const TableRow& r) { return val < r.u; });
    std::size_t k = it == table_.begin() ? 0 : std::size_t(it - table_.begin()) - 1;
    k = std::min(k, table_.size() - 2);
    const double a = table_[k].x;
    const double b = table_[k + 1].x;
    auto g = [&](double x) { return hermite_u(k, x) - v; };
    return numeric::bracketed_root(g, a, b, table_[k].u - v,
                                   table_[k + 1].u - v);
  }

  /// Distance from v to the nearest edge of the admissible transformed range,
  /// minus the escape margin. Positive means admissible.
  double range_slack(double v) const {
    const double lo = range_.lo();
    const double hi = range_.hi();
    const double d = std::min(v - lo, hi - v);
    return d - escape_margin();
  }

  /// Escape margin: 1e-6 of the range width when bounded, otherwise 1e-6 of
  /// the magnitude (at least 1) of the finite endpoint.
  double escape_margin() const {
    const double lo = range_.lo();
    const double hi = range_.hi();
    if (std::isfinite(lo) && std::isfinite(hi)) return 1e-6 * (hi - lo);
    double ref = 1.0;
    if (std::isfinite(lo)) ref = std::max(ref, std::abs(lo));
    if (std::isfinite(hi)) ref = std::max(ref, std::abs(hi));
    return 1e-6 * ref;
  }

  /// CSV with header x,u,uprime. Numeric mode writes the table nodes;
  /// closed form samples `points` uniform nodes of the working sub-interval.
  void write_csv(std::ostream& os, int points = 201) const {
    os << "x,u,uprime\n";
    char buf[128];
    auto row = [&](double x, double uu, double up) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", x, uu, up);
      os << buf;
    };
    if (mode_ == TransformMode::Numeric) {
      for (const auto& r : table_) row(r.x, r.u, std::exp(2.0 * r.inner));
      return;
    }
    ClosedRange w;
    if (opt_.working) {
      w = *opt_.working;
    } else if (domain().bounded()) {
      w = {domain().lo(), domain().hi()};
      const double pad = 1e-3 * w.width();
      w.lo += pad;
      w.hi -= pad;
    } else {
      throw Error("transform", ErrorCode::InvalidArgument,
                  "export needs a working sub-interval for unbounded D");
    }
    for (int i = 0; i < points; ++i) {
      const double x = w.lo + (w.hi - w.lo) * i / (points - 1);
      row(x, u(x), u_prime(x));
    }
  }

 private:
  Transform(const Coefficient& c, const TransformOptions& opt)
      : coef_(c), opt_(opt) {}

  void check_domain(double x) const {
    if (mode_ == TransformMode::Numeric) {
      if (!(table_.front().x <= x && x <= table_.back().x)) {
        throw Error("transform", ErrorCode::OutOfDomain,
                    "x = " + std::to_string(x) +
                        " outside the tabulated sub-interval");
      }
    } else if (!coef_.domain().contains(x)) {
      throw Error("transform", ErrorCode::OutOfDomain,
                  "x = " + std::to_string(x) + " outside D");
    }
  }

  // Closed forms. Valid also at the (possibly infinite) ends of D, which is
  // how the range V is obtained.
  double closed_u(double x) const {
    const double a = coef_.alpha();
    const double b = coef_.beta();
    switch (coef_.kind()) {
      case CoefficientKind::Zero: return x - a;
      case CoefficientKind::Constant: return std::expm1(b * (x - a)) / b;
      case CoefficientKind::PowerOverY: {
        const double p = 1.0 + 2.0 * b;
        if (x == 0.0) return p > 0.0 ? -a / p : -kInf;
        if (std::isinf(x)) return p > 0.0 ? kInf : -a / p;
        return a / p * std::expm1(p * std::log(x / a));
      }
      case CoefficientKind::NegHalfOverY:
        if (x == 0.0) return -kInf;
        return a * std::log(x / a);
      case CoefficientKind::Tabulated: break;
    }
    return std::nan("");
  }

  double closed_u_prime(double x) const {
    const double a = coef_.alpha();
    const double b = coef_.beta();
    switch (coef_.kind()) {
      case CoefficientKind::Zero: return 1.0;
      case CoefficientKind::Constant: return std::exp(b * (x - a));
      case CoefficientKind::PowerOverY: return std::pow(x / a, 2.0 * b);
      case CoefficientKind::NegHalfOverY: return a / x;
      case CoefficientKind::Tabulated: break;
    }
    return std::nan("");
  }

  double closed_inverse(double v) const {
    const double a = coef_.alpha();
    const double b = coef_.beta();
    switch (coef_.kind()) {
      case CoefficientKind::Zero: return v + a;
      case CoefficientKind::Constant: return std::log1p(b * v) / b + a;
      case CoefficientKind::PowerOverY: {
        const double p = 1.0 + 2.0 * b;
        return a * std::exp(std::log1p(p * v / a) / p);
      }
      case CoefficientKind::NegHalfOverY: return a * std::exp(v / a);
      case CoefficientKind::Tabulated: break;
    }
    return std::nan("");
  }

  std::size_t segment_of_x(double x) const {
    auto it = std::upper_bound(
        table_.begin(), table_.end(), x,
        [](double val, const TableRow& r) { return val < r.x; });
    std::size_t k = it == table_.begin() ? 0 : std::size_t(it - table_.begin()) - 1;
    return std::min(k, table_.size() - 2);
  }

  // Monotone cubic Hermite on segment k with slopes u' = exp(2 I), limited
  // by the Fritsch-Carlson circle so that the interpolant cannot overshoot.
  double hermite_u(std::size_t k, double x) const {
    const auto& p = table_[k];
    const auto& q = table_[k + 1];
    const double h = q.x - p.x;
    const double s = (x - p.x) / h;
    double m0 = std::exp(2.0 * p.inner);
    double m1 = std::exp(2.0 * q.inner);
    const double secant = (q.u - p.u) / h;
    const double ra = m0 / secant;
    const double rb = m1 / secant;
    const double r2 = ra * ra + rb * rb;
    if (r2 > 9.0) {
      const double tau = 3.0 / std::sqrt(r2);
      m0 *= tau;
      m1 *= tau;
    }
    return hermite(s, h, p.u, m0, q.u, m1);
  }

  double hermite_inner(std::size_t k, double x) const {
    const auto& p = table_[k];
    const auto& q = table_[k + 1];
    const double h = q.x - p.x;
    return hermite((x - p.x) / h, h, p.inner, p.f, q.inner, q.f);
  }

  static double hermite(double s, double h, double y0, double m0, double y1,
                        double m1) {
    const double s2 = s * s;
    const double s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * m0 +
           (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * m1;
  }

  // Builds the table on [d1, alpha] and [alpha, d2], each side marched
  // outward from alpha so that u(alpha) = 0 and I(alpha) = 0 exactly.
  void tabulate() {
    const double a = coef_.alpha();
    const auto w = *opt_.working;
    auto left = tabulate_side(a, w.lo);
    auto right = tabulate_side(a, w.hi);
    table_.clear();
    table_.reserve(left.size() + right.size());
    for (auto it = left.rbegin(); it != left.rend(); ++it) table_.push_back(*it);
    for (std::size_t i = table_.empty() ? 0 : 1; i < right.size(); ++i) {
      table_.push_back(right[i]);
    }
    if (table_.size() < 2) {
      throw Error("transform", ErrorCode::EmptyDomain, "degenerate working interval");
    }
    for (std::size_t i = 1; i < table_.size(); ++i) {
      if (!(table_[i].x > table_[i - 1].x) || !(table_[i].u > table_[i - 1].u)) {
        throw Error("transform", ErrorCode::NonIntegrable,
                    "table lost strict monotonicity near x = " +
                        std::to_string(table_[i].x));
      }
    }
  }

  std::vector<TableRow> tabulate_side(double from, double to) const {
    std::vector<TableRow> rows;
    const double f0 = coef_(from);
    if (!std::isfinite(f0)) {
      throw Error("transform", ErrorCode::NonIntegrable, "f not finite at alpha");
    }
    rows.push_back({from, 0.0, 0.0, f0});
    if (from == to) return rows;

    const double length = std::abs(to - from);
    const double tol = opt_.tol;
    const double min_step = 1e-10 * length;
    constexpr std::size_t kMaxRows = std::size_t(1) << 20;
    constexpr int kInitial = 32;

    // Pending right endpoints, nearest last.
    std::vector<double> pending;
    for (int i = kInitial; i >= 1; --i) {
      pending.push_back(i == kInitial ? to : from + (to - from) * i / kInitial);
    }

    auto f_checked = [&](double y) {
      const double v = coef_(y);
      if (!std::isfinite(v)) {
        throw Error("transform", ErrorCode::NonIntegrable,
                    "f not finite at " + std::to_string(y));
      }
      return v;
    };
    auto inner_increment = [&](double x0, double x1, double abs_tol) {
      const double lo = std::min(x0, x1);
      const double hi = std::max(x0, x1);
      const double v = numeric::integrate(f_checked, lo, hi, abs_tol);
      return x1 >= x0 ? v : -v;
    };

    while (!pending.empty()) {
      const TableRow& p = rows.back();
      const double x1 = pending.back();
      const double h = x1 - p.x;
      const double frac = std::abs(h) / length;
      const double itol = 0.05 * tol * frac;

      const double xq1 = p.x + 0.25 * h;
      const double xm = p.x + 0.5 * h;
      const double xq3 = p.x + 0.75 * h;
      const double iq1 = p.inner + inner_increment(p.x, xq1, itol);
      const double im = iq1 + inner_increment(xq1, xm, itol);
      const double iq3 = im + inner_increment(xm, xq3, itol);
      const double i1 = iq3 + inner_increment(xq3, x1, itol);
      const double f1 = f_checked(x1);

      const double d0 = std::exp(2.0 * p.inner);
      const double dq1 = std::exp(2.0 * iq1);
      const double dm = std::exp(2.0 * im);
      const double dq3 = std::exp(2.0 * iq3);
      const double d1 = std::exp(2.0 * i1);

      const double whole = h / 6.0 * (d0 + 4.0 * dm + d1);
      const double left = h / 12.0 * (d0 + 4.0 * dq1 + dm);
      const double right = h / 12.0 * (dm + 4.0 * dq3 + d1);
      const double halves = left + right;
      const double simpson_err = std::abs(halves - whole) / 15.0;
      const double u1 = p.u + halves + (halves - whole) / 15.0;
      const double um = p.u + left;

      const double scale = std::max({1.0, std::abs(p.u), std::abs(u1)});
      const double um_interp = 0.5 * (p.u + u1) + h * (d0 - d1) / 8.0;
      const double im_interp = 0.5 * (p.inner + i1) + h * (p.f - f1) / 8.0;

      const bool ok = simpson_err <= 0.5 * tol * scale * frac &&
                      std::abs(um_interp - um) <= 0.25 * tol * scale &&
                      std::abs(im_interp - im) <= 0.25 * tol;
      if (ok) {
        rows.push_back({x1, i1, u1, f1});
        pending.pop_back();
        if (rows.size() > kMaxRows) {
          throw Error("transform", ErrorCode::NonIntegrable,
                      "table size limit reached");
        }
      } else {
        if (std::abs(h) < min_step) {
          throw Error("transform", ErrorCode::NonIntegrable,
                      "cannot resolve u near x = " + std::to_string(p.x));
        }
        pending.push_back(xm);
      }
    }
    return rows;
  }

  Coefficient coef_;
  TransformOptions opt_;
  TransformMode mode_ = TransformMode::ClosedForm;
  Interval range_;
  std::vector<TableRow> table_;
};

inline Transform build_transform(const Coefficient& c, double tol,
                                 std::optional<ClosedRange> working = std::nullopt,
                                 bool force_numeric = false) {
  return Transform::build(c, TransformOptions{tol, working, force_numeric});
}

inline double eval_u(const Transform& t, double x) { return t.u(x); }
inline double eval_u_prime(const Transform& t, double x) { return t.u_prime(x); }
inline double invert_u(const Transform& t, double v) { return t.inverse(v); }

}  // namespace qbsde

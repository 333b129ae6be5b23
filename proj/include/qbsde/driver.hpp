#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include "qbsde/error.hpp"
#include "qbsde/interval.hpp"
#include "qbsde/transform.hpp"

namespace qbsde {

enum class DriverForm { Affine, AbsZ, Custom };

/// Lipschitz certificates: |F(t,0,0)| <= delta,
/// |F(t,a,b) - F(t,a',b')| <= gamma |a-a'| + kappa |b-b'|.
struct Certificates {
  double delta = 0.0;
  double gamma = 0.0;
  double kappa = 0.0;
};

/// Lipschitz driver F(t, a, b).
///
///   Affine   F = delta1 + gamma1 a + kappa1 b
///   AbsZ     F = |kappa1 b|
///   Custom   any callable, with user-declared certificates
///
/// Construction spot-checks the certificates on 200 seeded samples and
/// throws CertificateFailed on a violation.
class Driver {
 public:
  using Fn = std::function<double(double, double, double)>;

  static Driver zero() { return affine(0.0, 0.0, 0.0); }

  static Driver affine(double delta1, double gamma1, double kappa1,
                       std::optional<Certificates> certs = std::nullopt) {
    Certificates c = certs.value_or(
        Certificates{std::abs(delta1), std::abs(gamma1), std::abs(kappa1)});
    if (std::abs(delta1) > c.delta || std::abs(gamma1) > c.gamma ||
        std::abs(kappa1) > c.kappa) {
      throw Error("driver", ErrorCode::CertificateFailed,
                  "affine coefficients exceed declared certificates");
    }
    Driver d(DriverForm::Affine, delta1, gamma1, kappa1, c, {});
    d.spot_check(1.0);
    return d;
  }

  static Driver abs_z(double kappa1, std::optional<Certificates> certs = std::nullopt) {
    Certificates c = certs.value_or(Certificates{0.0, 0.0, std::abs(kappa1)});
    if (std::abs(kappa1) > c.kappa) {
      throw Error("driver", ErrorCode::CertificateFailed,
                  "kappa1 exceeds declared certificate");
    }
    Driver d(DriverForm::AbsZ, 0.0, 0.0, kappa1, c, {});
    d.spot_check(1.0);
    return d;
  }

  static Driver custom(Fn fn, Certificates certs, double horizon = 1.0) {
    if (!fn) {
      throw Error("driver", ErrorCode::InvalidArgument, "custom driver needs a callable");
    }
    Driver d(DriverForm::Custom, 0.0, 0.0, 0.0, certs, std::move(fn));
    d.spot_check(horizon);
    return d;
  }

  double operator()(double t, double a, double b) const {
    switch (form_) {
      case DriverForm::Affine: return delta1_ + gamma1_ * a + kappa1_ * b;
      case DriverForm::AbsZ: return std::abs(kappa1_ * b);
      case DriverForm::Custom: return fn_(t, a, b);
    }
    return 0.0;
  }

  DriverForm form() const noexcept { return form_; }
  double delta1() const noexcept { return delta1_; }
  double gamma1() const noexcept { return gamma1_; }
  double kappa1() const noexcept { return kappa1_; }
  const Certificates& certificates() const noexcept { return certs_; }

  /// True when F vanishes identically (structured forms only).
  bool is_zero() const noexcept {
    if (form_ == DriverForm::Custom) return false;
    return delta1_ == 0.0 && gamma1_ == 0.0 && kappa1_ == 0.0;
  }

  /// Randomized certificate check on [0, horizon] x [-10, 10]^2.
  void spot_check(double horizon, int samples = 200,
                  std::uint64_t seed = 0x5eedULL) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ut(0.0, horizon);
    std::uniform_real_distribution<double> uv(-10.0, 10.0);
    for (int k = 0; k < samples; ++k) {
      const double t = ut(rng);
      const double a = uv(rng), b = uv(rng), a2 = uv(rng), b2 = uv(rng);
      const double lhs = std::abs((*this)(t, a, b) - (*this)(t, a2, b2));
      const double rhs =
          certs_.gamma * std::abs(a - a2) + certs_.kappa * std::abs(b - b2) + 1e-9;
      if (!(lhs <= rhs)) {
        throw Error("driver", ErrorCode::CertificateFailed,
                    "Lipschitz certificate violated at sample " + std::to_string(k));
      }
      if (!(std::abs((*this)(t, 0.0, 0.0)) <= certs_.delta + 1e-9)) {
        throw Error("driver", ErrorCode::CertificateFailed,
                    "|F(t,0,0)| exceeds delta at t = " + std::to_string(t));
      }
    }
  }

 private:
  Driver(DriverForm form, double d1, double g1, double k1, Certificates c, Fn fn)
      : form_(form), delta1_(d1), gamma1_(g1), kappa1_(k1), certs_(c), fn_(std::move(fn)) {
    if (c.delta < 0.0 || c.gamma < 0.0 || c.kappa < 0.0) {
      throw Error("driver", ErrorCode::InvalidArgument, "certificates must be >= 0");
    }
  }

  DriverForm form_;
  double delta1_;
  double gamma1_;
  double kappa1_;
  Certificates certs_;
  Fn fn_;
};

/// Quadratic generator g(t,y,z) = G(t,y,z) + f(y) z^2 with
/// G(t,y,z) = F(t, u(y), u'(y) z) / u'(y).
class QuadraticGenerator {
 public:
  QuadraticGenerator(Transform transform, Driver driver)
      : transform_(std::move(transform)), driver_(std::move(driver)) {}

  const Transform& transform() const noexcept { return transform_; }
  const Driver& driver() const noexcept { return driver_; }

  double G(double t, double y, double z) const {
    const double up = transform_.u_prime(y);
    return driver_(t, transform_.u(y), up * z) / up;
  }

  /// H(y) = delta / u'(y) + gamma |u(y)| / u'(y).
  double H(double y) const {
    const auto& c = driver_.certificates();
    const double up = transform_.u_prime(y);
    return c.delta / up + c.gamma * std::abs(transform_.u(y)) / up;
  }

  double operator()(double t, double y, double z) const {
    return G(t, y, z) + transform_.f(y) * z * z;
  }

  /// Constant C with |G(t,y,z)| <= C (1 + |u(y)| + |z|) for y >= c when f >= 0.
  double growth_constant(double c) const {
    const auto& cert = driver_.certificates();
    const double up = transform_.u_prime(c);
    return std::max({cert.delta / up, cert.gamma / up, cert.kappa});
  }

 private:
  Transform transform_;
  Driver driver_;
};

inline double eval_G(const QuadraticGenerator& q, double t, double y, double z) {
  return q.G(t, y, z);
}
inline double eval_H(const QuadraticGenerator& q, double y) { return q.H(y); }

enum class Sign { Plus, Minus };

/// The shrunken interval O^{t,+} = {x in O : e^{gamma t}((x v 0) + delta t) in O}
/// or O^{t,-} = {x in O : e^{gamma t}((x ^ 0) - delta t) in O}.
/// Returns nullopt when the set is empty. The family is only defined for
/// gamma + delta != 0; with gamma = delta = 0 it is O itself.
inline std::optional<Interval> shrink_interval(const Interval& o, double t, Sign sign,
                                               double delta, double gamma) {
  if (gamma == 0.0 && delta == 0.0) return o;
  const double c = std::exp(gamma * t);
  const double dt = delta * t;
  double lo = o.lo();
  double hi = o.hi();
  if (sign == Sign::Plus) {
    // phi(x) = c (max(x,0) + dt), nondecreasing with minimum c*dt.
    if (!(c * dt > o.lo())) lo = std::max(lo, o.lo() / c - dt);
    if (std::isfinite(o.hi())) {
      if (c * dt >= o.hi()) return std::nullopt;
      hi = std::min(hi, o.hi() / c - dt);
    }
  } else {
    // phi(x) = c (min(x,0) - dt), nondecreasing with maximum -c*dt.
    if (!(-c * dt < o.hi())) hi = std::min(hi, o.hi() / c + dt);
    if (std::isfinite(o.lo())) {
      if (-c * dt <= o.lo()) return std::nullopt;
      lo = std::max(lo, o.lo() / c + dt);
    }
  }
  if (!(lo < hi)) return std::nullopt;
  return Interval(lo, hi);
}

}  // namespace qbsde

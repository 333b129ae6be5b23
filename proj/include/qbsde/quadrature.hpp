#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>

#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "qbsde/error.hpp"

namespace qbsde::numeric {

namespace detail {

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
inline constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <typename F>
std::pair<double, double> gk15(F& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kXgk[j];
    const double s = f(c - dx) + f(c + dx);
    kronrod += kWgk[j] * s;
    if (j % 2 == 1) gauss += kWg[j / 2] * s;
  }
  return {kronrod * h, std::abs((kronrod - gauss) * h)};
}

template <typename F>
double gk_adaptive(F& f, double a, double b, double tol, int depth,
                   const char* module) {
  auto [value, err] = gk15(f, a, b);
  if (!std::isfinite(value)) {
    throw Error(module, ErrorCode::NonIntegrable,
                "integrand not finite on [" + std::to_string(a) + ", " +
                    std::to_string(b) + "]");
  }
  if (err <= std::max(tol, 1e-15 * std::abs(value))) return value;
  if (depth >= 40) {
    throw Error(module, ErrorCode::NonIntegrable,
                "quadrature did not converge near " + std::to_string(a));
  }
  const double m = 0.5 * (a + b);
  return gk_adaptive(f, a, m, 0.5 * tol, depth + 1, module) +
         gk_adaptive(f, m, b, 0.5 * tol, depth + 1, module);
}

}  // namespace detail

/// Adaptive Gauss-Kronrod (7/15) integral of `f` over [a, b] to absolute
/// accuracy `abs_tol`. Bisects until the embedded Gauss estimate agrees.
/// Throws NonIntegrable on a non-finite integrand or after 40 bisections.
template <typename F>
double integrate(F&& f, double a, double b, double abs_tol,
                 const char* module = "transform") {
  if (a == b) return 0.0;
  return detail::gk_adaptive(f, a, b, abs_tol, 0, module);
}

/// Root of a monotone function bracketed by [lo, hi] (sign change required).
/// TOMS 748 bracketing iteration with an 80-step cap.
template <typename F>
double bracketed_root(F&& f, double lo, double hi, double flo, double fhi,
                      const char* module = "transform") {
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) {
    throw Error(module, ErrorCode::OutOfRange, "root not bracketed");
  }
  std::uintmax_t iters = 80;
  boost::math::tools::eps_tolerance<double> tol(52);
  auto [a, b] =
      boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  return 0.5 * (a + b);
}

}  // namespace qbsde::numeric

#pragma once

#include <cmath>
#include <limits>
#include <ostream>

#include "qbsde/error.hpp"

namespace qbsde {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Open interval (lo, hi) of the extended real line.
class Interval {
 public:
  Interval() : lo_(-kInf), hi_(kInf) {}

  Interval(double lo, double hi) : lo_(lo), hi_(hi) {
    if (std::isnan(lo) || std::isnan(hi) || !(lo < hi)) {
      throw Error("transform", ErrorCode::EmptyDomain,
                  "interval requires lo < hi");
    }
  }

  static Interval real_line() { return {}; }
  static Interval positive() { return {0.0, kInf}; }

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  bool contains(double x) const noexcept { return lo_ < x && x < hi_; }
  bool contains_closed(double a, double b) const noexcept {
    return contains(a) && contains(b);
  }
  bool is_subset_of(const Interval& o) const noexcept {
    return o.lo_ <= lo_ && hi_ <= o.hi_;
  }
  bool bounded() const noexcept {
    return std::isfinite(lo_) && std::isfinite(hi_);
  }
  double width() const noexcept { return hi_ - lo_; }

  friend bool operator==(const Interval&, const Interval&) = default;

  friend std::ostream& operator<<(std::ostream& os, const Interval& i) {
    return os << '(' << i.lo_ << ", " << i.hi_ << ')';
  }

 private:
  double lo_;
  double hi_;
};

/// Closed sub-interval [lo, hi] used for tabulation and margins.
struct ClosedRange {
  double lo;
  double hi;
  bool contains(double x) const noexcept { return lo <= x && x <= hi; }
  double width() const noexcept { return hi - lo; }
};

}  // namespace qbsde

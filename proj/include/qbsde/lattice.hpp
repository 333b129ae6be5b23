#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qbsde/error.hpp"

namespace qbsde {

/// Uniform grid t_i = i T / N on [0, T], with t_N = T exactly.
class TimeGrid {
 public:
  TimeGrid(double horizon, int steps) : T_(horizon), N_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
      throw Error("lattice", ErrorCode::InvalidArgument, "horizon must be positive");
    }
    if (steps < 1) {
      throw Error("lattice", ErrorCode::InvalidArgument, "need at least one step");
    }
    dt_ = horizon / steps;
  }

  double horizon() const noexcept { return T_; }
  int steps() const noexcept { return N_; }
  double dt() const noexcept { return dt_; }
  double t(int i) const noexcept { return i == N_ ? T_ : T_ * i / N_; }

 private:
  double T_;
  int N_;
  double dt_;
};

/// Values on the nodes (i, j), j = 0..i, of levels 0..depth of a
/// recombining binomial tree. Stored level by level.
class NodeField {
 public:
  NodeField() = default;
  explicit NodeField(int depth, double fill = 0.0, std::string name = {})
      : depth_(depth), values_(offset(depth + 1), fill), name_(std::move(name)) {
    if (depth < 0) {
      throw Error("lattice", ErrorCode::LevelOutOfRange, "negative depth");
    }
  }

  int depth() const noexcept { return depth_; }
  const std::string& name() const noexcept { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

  double& operator()(int i, int j) { return values_[offset(i) + j]; }
  double operator()(int i, int j) const { return values_[offset(i) + j]; }

  std::span<double> level(int i) {
    check_level(i);
    return {values_.data() + offset(i), std::size_t(i) + 1};
  }
  std::span<const double> level(int i) const {
    check_level(i);
    return {values_.data() + offset(i), std::size_t(i) + 1};
  }

  const std::vector<double>& raw() const noexcept { return values_; }

  /// CSV rows "level,index,value" with a header line.
  void write_csv(std::ostream& os) const {
    os << "level,index,value\n";
    char buf[96];
    for (int i = 0; i <= depth_; ++i) {
      for (int j = 0; j <= i; ++j) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g\n", i, j, (*this)(i, j));
        os << buf;
      }
    }
  }

  friend bool operator==(const NodeField& a, const NodeField& b) {
    return a.depth_ == b.depth_ && a.values_ == b.values_;
  }

 private:
  static std::size_t offset(int i) { return std::size_t(i) * (i + 1) / 2; }
  void check_level(int i) const {
    if (i < 0 || i > depth_) {
      throw Error("lattice", ErrorCode::LevelOutOfRange,
                  "level " + std::to_string(i) + " outside field of depth " +
                      std::to_string(depth_));
    }
  }

  int depth_ = -1;
  std::vector<double> values_;
  std::string name_;
};

/// Symmetric binomial approximation of Brownian motion:
/// B(i, j) = (2j - i) sqrt(dt), up/down with probability 1/2.
class BinomialTree {
 public:
  explicit BinomialTree(TimeGrid grid) : grid_(grid), sqrt_dt_(std::sqrt(grid.dt())) {}
  BinomialTree(double horizon, int steps) : BinomialTree(TimeGrid(horizon, steps)) {}

  const TimeGrid& grid() const noexcept { return grid_; }
  int steps() const noexcept { return grid_.steps(); }
  double dt() const noexcept { return grid_.dt(); }
  double sqrt_dt() const noexcept { return sqrt_dt_; }
  double t(int i) const noexcept { return grid_.t(i); }
  double brownian(int i, int j) const noexcept { return (2 * j - i) * sqrt_dt_; }

  NodeField brownian_field() const {
    NodeField b(steps(), 0.0, "B");
    for (int i = 0; i <= steps(); ++i) {
      for (int j = 0; j <= i; ++j) b(i, j) = brownian(i, j);
    }
    return b;
  }

 private:
  TimeGrid grid_;
  double sqrt_dt_;
};

namespace detail {
inline void check_step(const BinomialTree& tree, const NodeField& v, int i) {
  if (i < 0 || i >= tree.steps() || v.depth() < i + 1) {
    throw Error("lattice", ErrorCode::LevelOutOfRange,
                "one-step operator needs level " + std::to_string(i + 1));
  }
}
}  // namespace detail

/// E[v_{i+1} | node (i, j)] = (v(i+1, j+1) + v(i+1, j)) / 2.
inline std::vector<double> cond_expect(const BinomialTree& tree, const NodeField& v, int i) {
  detail::check_step(tree, v, i);
  std::vector<double> out(std::size_t(i) + 1);
  for (int j = 0; j <= i; ++j) out[j] = 0.5 * (v(i + 1, j + 1) + v(i + 1, j));
  return out;
}

/// Z(i, j) = (v(i+1, j+1) - v(i+1, j)) / (2 sqrt(dt)).
inline std::vector<double> martingale_increment(const BinomialTree& tree, const NodeField& v,
                                                int i) {
  detail::check_step(tree, v, i);
  std::vector<double> out(std::size_t(i) + 1);
  const double denom = 2.0 * tree.sqrt_dt();
  for (int j = 0; j <= i; ++j) out[j] = (v(i + 1, j + 1) - v(i + 1, j)) / denom;
  return out;
}

/// X(i, j) = x0 + b t_i + sigma B(i, j).
inline NodeField forward_state(const BinomialTree& tree, double drift, double sigma, double x0) {
  if (!(sigma >= 0.0)) {
    throw Error("lattice", ErrorCode::InvalidArgument, "sigma must be >= 0");
  }
  NodeField x(tree.steps(), 0.0, "X");
  for (int i = 0; i <= tree.steps(); ++i) {
    for (int j = 0; j <= i; ++j) x(i, j) = x0 + drift * tree.t(i) + sigma * tree.brownian(i, j);
  }
  return x;
}

/// Tree expectation at the root of a function of the level-`level` nodes.
inline double tree_expectation(const NodeField& v, int level) {
  std::vector<double> cur(v.level(level).begin(), v.level(level).end());
  for (int i = level - 1; i >= 0; --i) {
    for (int j = 0; j <= i; ++j) cur[j] = 0.5 * (cur[j + 1] + cur[j]);
    cur.pop_back();
  }
  return cur[0];
}

/// Probability of node (i, j): C(i, j) / 2^i, via log-gamma for large i.
inline double node_probability(int i, int j) {
  const double lg = std::lgamma(i + 1.0) - std::lgamma(j + 1.0) - std::lgamma(i - j + 1.0);
  return std::exp(lg - i * std::log(2.0));
}

}  // namespace qbsde

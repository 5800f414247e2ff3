#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hqkd {

/// Raised when a scalar solver cannot bracket or converge on its target.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

/// Closed interval [lo, hi] on the real line.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] bool contains(double x) const { return x >= lo && x <= hi; }
  [[nodiscard]] double width() const { return hi - lo; }
};

/// Finds a root of `f` on [lo, hi] by bisection.
///
/// Requires f(lo) and f(hi) to have opposite signs (or one of them to be
/// exactly zero). Iterates until the bracket is narrower than `abs_tol` or
/// can no longer be split in double precision, and returns the midpoint of
/// the final bracket.
double bisect_root(const std::function<double(double)>& f, double lo, double hi,
                   double abs_tol);

struct ScalarMaximum {
  double x = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

/// Golden-section maximization of `f` on [lo, hi]; stops when the bracket
/// width drops below `abs_tol`. `f` may return -inf for infeasible points.
ScalarMaximum golden_section_maximize(const std::function<double(double)>& f,
                                      double lo, double hi, double abs_tol);

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
std::vector<double> log_grid(double lo, double hi, std::size_t n);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit least_squares_line(std::span<const double> x, std::span<const double> y);

}  // namespace hqkd

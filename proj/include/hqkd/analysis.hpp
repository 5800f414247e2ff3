#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hqkd/keyrate.hpp"
#include "hqkd/numerics.hpp"
#include "hqkd/protocol.hpp"
#include "hqkd/source_detector.hpp"

namespace hqkd {

/// Settings for the one-dimensional search over the pump strength.
struct OptimizerOptions {
  Interval bounds{1e-8, 1.0};
  std::size_t grid_points = 200;
  /// Relative tolerance on lambda for the golden-section refinement.
  double rel_tol = 1e-6;

  void validate() const;
};

struct OptimizationResult {
  double lambda_opt = 0.0;
  KeyRateReport report;
  /// False when the optimum sits on a search bound or nothing was valid.
  bool converged = false;
  int evaluations = 0;
};

/// Maximizes the key rate over lambda: a coarse logarithmic grid, then
/// golden-section search on the bracket around the best grid point.
/// Model-invalid points (including PNS-invalid ones) score -inf. If no
/// point is valid, the report's key_rate is -inf and converged is false.
OptimizationResult optimize_lambda(const ProtocolSpec& spec, const HeraldResponse& r,
                                   const ChannelParams& ch, const OptimizerOptions& opts = {});

/// Key rate with Bob's dark counts neglected:
/// p_sift [T p1 q1 - p2 q2 (I_AE^(2) - 2T)].
double short_distance_key_rate(const ProtocolSpec& spec, const HeraldResponse& r, double t,
                               double lambda);

struct ShortDistanceLambda {
  double lambda = 0.0;
  /// False when I_AE^(2) <= 2T, where the interior optimum does not exist.
  bool regime_valid = true;
};

/// Maximizer of short_distance_key_rate with exact Poisson weights
/// approximated to leading order: T q1 / (T q1 + (I_AE^(2) - 2T) q2).
ShortDistanceLambda short_distance_lambda(const ProtocolSpec& spec, const HeraldResponse& r,
                                          double t);

/// (q1^2/q2) p_sift T^2 / (2 (I_AE^(2) - 2T)). Its ratio to the same
/// quantity for WCPs is exactly short_distance_factor(r).
double short_distance_approx_rate(const ProtocolSpec& spec, const HeraldResponse& r, double t);

/// Minimum transmission of an ideal single-photon source:
/// d_B (1 - 2 Q^th) / Q^th.
double tmin_single_photon(const ProtocolSpec& spec, double dark_b);

struct WcpMinimum {
  double t_min = 0.0;
  double lambda_opt = 0.0;
};

/// Minimum transmission and the matching mean photon number for weak
/// coherent pulses, from the linearized security condition.
WcpMinimum tmin_wcp(const ProtocolSpec& spec, double dark_b);

/// Right-hand side of the linearized bound T > f(lambda) for a heralded
/// source, with p2 q2 terms dropped from p_exp and Q.
double tmin_bound_rhs(const ProtocolSpec& spec, const HeraldResponse& r, double dark_b,
                      double lambda);

/// Minimizer of tmin_bound_rhs. Returns 0 when q0 = 0; throws
/// SingularityError when q2 = 0 (multiphoton generation is harmless and
/// lambda is unbounded).
double lambda_opt_heralded(const ProtocolSpec& spec, const HeraldResponse& r, double dark_b);

/// T_min^(1) + sqrt(q0 q2)/q1 T_min^(C).
double tmin_heralded(const ProtocolSpec& spec, const HeraldResponse& r, double dark_b);

/// Smallest T with a positive optimized key rate, by bisection in log T
/// on [1e-8, 1] to relative tolerance `rel_tol`. Throws SolverError if the
/// optimized key does not change sign on that range.
double tmin_numerical(const ProtocolSpec& spec, const HeraldResponse& r, double dark_b,
                      const OptimizerOptions& opts = {}, double rel_tol = 1e-3);

struct ScanPoint {
  double transmission = 0.0;
  OptimizationResult result;
};

struct ScanSeries {
  Protocol protocol = Protocol::bb84;
  HeraldResponse response;
  double dark_b = 0.0;
  OptimizerOptions options;
  std::vector<ScanPoint> points;
};

/// Optimizes lambda independently at each T. Points are computed on up to
/// `threads` workers; output order always follows `t_grid`.
ScanSeries scan_key_rate(const ProtocolSpec& spec, const HeraldResponse& r, double dark_b,
                         std::span<const double> t_grid, const OptimizerOptions& opts = {},
                         unsigned threads = 1);

class InsufficientDataError : public std::runtime_error {
 public:
  explicit InsufficientDataError(const std::string& what) : std::runtime_error(what) {}
};

struct PowerLawFit {
  double exponent = 0.0;
  /// K ~= prefactor * T^exponent.
  double prefactor = 0.0;
  /// Least-squares c in K ~= c T^2 (exponent pinned to 2).
  double quadratic_prefactor = 0.0;
  std::size_t points = 0;
  Interval window;
};

/// Straight-line fit of log K against log T over the secure points inside
/// `window` (default: the top decade of secure T values). Needs at least
/// three such points.
PowerLawFit fit_power_law(const ScanSeries& series, std::optional<Interval> window = {});

/// Number of tree stages in [0, n_max] that maximizes q1^2/q2; ties go to
/// the smaller N.
int optimal_stage_count(double eta_a, double eta_c, double dark_a, int n_max);

}  // namespace hqkd

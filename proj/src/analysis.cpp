#include "hqkd/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace hqkd {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_dark_b(double dark_b, const char* who) {
  if (!(dark_b >= 0.0 && dark_b < 1.0)) {
    throw std::invalid_argument(std::string(who) + ": dark_b outside [0, 1)");
  }
}

// d_B (1 - 2 Q^th) / Q^th, shared by every minimum-transmission formula.
double dark_floor(const ProtocolSpec& spec, double dark_b) {
  const double q_th = spec.qber_threshold();
  return dark_b * (1.0 - 2.0 * q_th) / q_th;
}

struct Evaluation {
  KeyRateReport report;
  double score = kNegInf;
};

Evaluation evaluate(const ProtocolSpec& spec, const HeraldResponse& r, const ChannelParams& ch,
                    double lambda) {
  Evaluation e;
  try {
    e.report = key_rate(spec, poisson_pair_stats(lambda), r, ch);
  } catch (const UndefinedRateError&) {
    e.report.status = ReportStatus::model_invalid;
    e.report.key_rate = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  if (e.report.status == ReportStatus::ok && e.report.pns_valid) {
    e.score = e.report.key_rate;
  }
  return e;
}

}  // namespace

void OptimizerOptions::validate() const {
  if (!(bounds.lo > 0.0) || !(bounds.hi > bounds.lo) || std::isinf(bounds.hi)) {
    throw std::invalid_argument("optimizer: lambda bounds must satisfy 0 < lo < hi < inf");
  }
  if (grid_points < 3) throw std::invalid_argument("optimizer: need at least 3 grid points");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("optimizer: rel_tol must be > 0");
}

OptimizationResult optimize_lambda(const ProtocolSpec& spec, const HeraldResponse& r,
                                   const ChannelParams& ch, const OptimizerOptions& opts) {
  opts.validate();
  ch.validate();
  const std::vector<double> grid = log_grid(opts.bounds.lo, opts.bounds.hi, opts.grid_points);

  OptimizationResult out;
  std::size_t best = 0;
  Evaluation best_eval;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Evaluation e = evaluate(spec, r, ch, grid[i]);
    if (i == 0 || e.score > best_eval.score) {
      best = i;
      best_eval = e;
    }
  }
  out.evaluations = static_cast<int>(grid.size());

  if (best_eval.score == kNegInf) {
    out.lambda_opt = grid[best];
    out.report = best_eval.report;
    out.report.key_rate = kNegInf;
    out.report.secure = false;
    out.converged = false;
    return out;
  }

  // Refine in log(lambda) so the tolerance is relative.
  const double lo = std::log(grid[best == 0 ? 0 : best - 1]);
  const double hi = std::log(grid[std::min(best + 1, grid.size() - 1)]);
  auto objective = [&](double log_lambda) {
    return evaluate(spec, r, ch, std::exp(log_lambda)).score;
  };
  const ScalarMaximum refined = golden_section_maximize(objective, lo, hi, opts.rel_tol);
  out.evaluations += refined.evaluations;

  out.lambda_opt = grid[best];
  out.report = best_eval.report;
  if (refined.value > best_eval.score) {
    out.lambda_opt = std::clamp(std::exp(refined.x), opts.bounds.lo, opts.bounds.hi);
    out.report = evaluate(spec, r, ch, out.lambda_opt).report;
    ++out.evaluations;
  }
  const double log_tol = 2.0 * opts.rel_tol;
  out.converged = std::log(out.lambda_opt / opts.bounds.lo) > log_tol &&
                  std::log(opts.bounds.hi / out.lambda_opt) > log_tol;
  return out;
}

double short_distance_key_rate(const ProtocolSpec& spec, const HeraldResponse& r, double t,
                               double lambda) {
  const PhotonStatistics s = poisson_pair_stats(lambda);
  return spec.sift_fraction() *
         (t * s.p1 * r.q1 - s.p2 * r.q2 * (spec.eve_info_two() - 2.0 * t));
}

ShortDistanceLambda short_distance_lambda(const ProtocolSpec& spec, const HeraldResponse& r,
                                          double t) {
  if (r.q1 == 0.0 && r.q2 == 0.0) {
    throw std::domain_error("short_distance_lambda: q1 and q2 both vanish");
  }
  const double penalty = spec.eve_info_two() - 2.0 * t;
  ShortDistanceLambda out;
  out.regime_valid = penalty > 0.0;
  out.lambda = t * r.q1 / (t * r.q1 + penalty * r.q2);
  return out;
}

double short_distance_approx_rate(const ProtocolSpec& spec, const HeraldResponse& r, double t) {
  const double penalty = spec.eve_info_two() - 2.0 * t;
  if (penalty == 0.0) {
    throw SingularityError("short_distance_approx_rate: I_AE^(2) = 2T");
  }
  return short_distance_factor(r) * spec.sift_fraction() * t * t / (2.0 * penalty);
}

double tmin_single_photon(const ProtocolSpec& spec, double dark_b) {
  require_dark_b(dark_b, "tmin_single_photon");
  return dark_floor(spec, dark_b);
}

WcpMinimum tmin_wcp(const ProtocolSpec& spec, double dark_b) {
  require_dark_b(dark_b, "tmin_wcp");
  const double floor = dark_floor(spec, dark_b);
  const double xi = spec.xi();
  return WcpMinimum{std::sqrt(2.0 * xi * floor), std::sqrt(2.0 * floor / xi)};
}

double tmin_bound_rhs(const ProtocolSpec& spec, const HeraldResponse& r, double dark_b,
                      double lambda) {
  require_dark_b(dark_b, "tmin_bound_rhs");
  if (r.q1 == 0.0) throw SingularityError("tmin_bound_rhs: q1 = 0");
  const double floor = dark_floor(spec, dark_b);
  return r.q2 * spec.xi() * lambda / (2.0 * r.q1) + floor + floor * r.q0 / (r.q1 * lambda);
}

double lambda_opt_heralded(const ProtocolSpec& spec, const HeraldResponse& r, double dark_b) {
  require_dark_b(dark_b, "lambda_opt_heralded");
  if (r.q2 == 0.0) {
    throw SingularityError(
        "lambda_opt_heralded: q2 = 0, multiphoton generation is harmless (lambda -> inf)");
  }
  if (r.q0 == 0.0) return 0.0;
  return std::sqrt(2.0 * dark_floor(spec, dark_b) * r.q0 / (spec.xi() * r.q2));
}

double tmin_heralded(const ProtocolSpec& spec, const HeraldResponse& r, double dark_b) {
  return tmin_single_photon(spec, dark_b) + distance_factor(r) * tmin_wcp(spec, dark_b).t_min;
}

double tmin_numerical(const ProtocolSpec& spec, const HeraldResponse& r, double dark_b,
                      const OptimizerOptions& opts, double rel_tol) {
  if (!(dark_b > 0.0 && dark_b < 1.0)) {
    throw std::invalid_argument("tmin_numerical: dark_b must lie in (0, 1)");
  }
  auto secure_at = [&](double t) {
    return optimize_lambda(spec, r, ChannelParams{t, dark_b}, opts).report.secure;
  };
  double lo = 1e-8;
  double hi = 1.0;
  if (!secure_at(hi) || secure_at(lo)) {
    throw SolverError("tmin_numerical: optimized key rate does not change sign on [1e-8, 1]");
  }
  while (hi / lo > 1.0 + rel_tol) {
    const double mid = std::sqrt(lo * hi);
    if (secure_at(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

ScanSeries scan_key_rate(const ProtocolSpec& spec, const HeraldResponse& r, double dark_b,
                         std::span<const double> t_grid, const OptimizerOptions& opts,
                         unsigned threads) {
  if (t_grid.empty()) throw std::invalid_argument("scan_key_rate: empty T grid");
  for (double t : t_grid) {
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("scan_key_rate: T outside (0, 1]");
  }
  if (t_grid.size() > 1) {
    const bool up = t_grid[1] > t_grid[0];
    for (std::size_t i = 1; i < t_grid.size(); ++i) {
      if (up ? !(t_grid[i] > t_grid[i - 1]) : !(t_grid[i] < t_grid[i - 1])) {
        throw std::invalid_argument("scan_key_rate: T grid must be strictly monotone");
      }
    }
  }
  require_dark_b(dark_b, "scan_key_rate");
  opts.validate();

  ScanSeries series;
  series.protocol = spec.id();
  series.response = r;
  series.dark_b = dark_b;
  series.options = opts;
  series.points.resize(t_grid.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < t_grid.size(); i = next++) {
      series.points[i].transmission = t_grid[i];
      series.points[i].result = optimize_lambda(spec, r, ChannelParams{t_grid[i], dark_b}, opts);
    }
  };
  const unsigned n_workers =
      std::clamp<unsigned>(threads, 1u, static_cast<unsigned>(t_grid.size()));
  if (n_workers == 1) {
    worker();
  } else {
    // Constants are solved once up front so workers only read them.
    (void)spec.xi();
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  return series;
}

PowerLawFit fit_power_law(const ScanSeries& series, std::optional<Interval> window) {
  if (!window) {
    double top = 0.0;
    for (const auto& p : series.points) {
      if (p.result.report.secure) top = std::max(top, p.transmission);
    }
    if (top == 0.0) throw InsufficientDataError("fit_power_law: no secure points");
    window = Interval{top / 10.0, top};
  }
  std::vector<double> log_t;
  std::vector<double> log_k;
  for (const auto& p : series.points) {
    if (!p.result.report.secure || !window->contains(p.transmission)) continue;
    log_t.push_back(std::log(p.transmission));
    log_k.push_back(std::log(p.result.report.key_rate));
  }
  if (log_t.size() < 3) {
    throw InsufficientDataError("fit_power_law: fewer than 3 secure points in window");
  }
  const LinearFit line = least_squares_line(log_t, log_k);
  double mean_offset = 0.0;
  for (std::size_t i = 0; i < log_t.size(); ++i) mean_offset += log_k[i] - 2.0 * log_t[i];
  mean_offset /= static_cast<double>(log_t.size());

  PowerLawFit fit;
  fit.exponent = line.slope;
  fit.prefactor = std::exp(line.intercept);
  fit.quadratic_prefactor = std::exp(mean_offset);
  fit.points = log_t.size();
  fit.window = *window;
  return fit;
}

int optimal_stage_count(double eta_a, double eta_c, double dark_a, int n_max) {
  if (n_max < 0) throw std::invalid_argument("optimal_stage_count: n_max must be >= 0");
  int best = 0;
  double best_factor = -1.0;
  for (int n = 0; n <= n_max; ++n) {
    const HeraldResponse r = multiplexed_response({n, eta_a, dark_a, eta_c});
    const double factor = short_distance_factor(r);
    if (factor > best_factor) {
      best = n;
      best_factor = factor;
    }
  }
  return best;
}

}  // namespace hqkd

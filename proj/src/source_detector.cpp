#include "hqkd/source_detector.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace hqkd {
namespace {

bool is_probability(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

PhotonStatistics poisson_pair_stats(double lambda) {
  if (!(lambda >= 0.0) || std::isinf(lambda)) {
    throw std::domain_error("poisson_pair_stats: lambda must be finite and >= 0");
  }
  PhotonStatistics s;
  s.p0 = std::exp(-lambda);
  s.p1 = lambda * s.p0;
  // -expm1(-lambda) keeps the complement accurate for lambda << 1.
  s.p2 = std::max(0.0, -std::expm1(-lambda) - s.p1);
  return s;
}

void MultiplexedDetectorParams::validate() const {
  if (stages < 0 || stages > kMaxStages) {
    throw std::invalid_argument("detector: stages must be in [0, " +
                                std::to_string(kMaxStages) + "]");
  }
  if (!is_probability(eta_a)) throw std::invalid_argument("detector: eta_a outside [0, 1]");
  if (!is_probability(dark_a)) throw std::invalid_argument("detector: dark_a outside [0, 1]");
  if (!is_probability(eta_c)) throw std::invalid_argument("detector: eta_c outside [0, 1]");
}

double MultiplexedDetectorParams::effective_efficiency() const {
  return eta_a * std::pow(eta_c, stages);
}

double MultiplexedDetectorParams::output_count() const { return std::ldexp(1.0, stages); }

HeraldResponse HeraldResponse::custom(double q0, double q1, double q2) {
  if (!is_probability(q0) || !is_probability(q1) || !is_probability(q2)) {
    throw std::invalid_argument("herald response: q0, q1, q2 must lie in [0, 1]");
  }
  return HeraldResponse{q0, q1, q2};
}

HeraldResponse multiplexed_response(const MultiplexedDetectorParams& params) {
  params.validate();
  const double eta = params.effective_efficiency();
  const double m = params.output_count();
  const double d = params.dark_a;
  // No other detector may fire.
  const double quiet = std::pow(1.0 - d, m - 1.0);
  HeraldResponse r;
  r.q0 = quiet * m * d;
  r.q1 = quiet * (m * d * (1.0 - eta) + eta);
  r.q2 = quiet * (m * d * (1.0 - eta) * (1.0 - eta) + 2.0 * eta * (1.0 - eta) + eta * eta / m);
  return r;
}

HeraldResponse wcp_response() { return HeraldResponse{1.0, 1.0, 1.0}; }

double brute_force_response(const MultiplexedDetectorParams& params, int n_photons) {
  params.validate();
  if (params.stages > 6) {
    throw std::invalid_argument("brute_force_response: enumeration limited to N <= 6");
  }
  if (n_photons < 0 || n_photons > 2) {
    throw std::invalid_argument("brute_force_response: n_photons must be 0, 1 or 2");
  }
  const int bins = 1 << params.stages;
  const double route = 1.0 / bins;
  const double eta = params.effective_efficiency();
  const double d = params.dark_a;

  // Each photon outcome is either "lost" (-1) or "detected in bin b".
  struct Outcome {
    int bin;
    double prob;
  };
  std::vector<Outcome> single;
  single.push_back({-1, 1.0 - eta});
  for (int b = 0; b < bins; ++b) single.push_back({b, route * eta});

  // Sum over all 2^bins dark-count patterns by sweeping the bins once and
  // tracking how many have clicked so far (0, 1, or 2+).
  auto exactly_one_click = [&](const std::vector<bool>& lit) {
    std::array<double, 3> clicks{1.0, 0.0, 0.0};
    for (int b = 0; b < bins; ++b) {
      std::array<double, 3> next{0.0, 0.0, 0.0};
      for (int k = 0; k < 3; ++k) {
        if (clicks[k] == 0.0) continue;
        const int up = std::min(k + 1, 2);
        if (lit[b]) {
          next[up] += clicks[k];  // dark count on a lit bin changes nothing
        } else {
          next[up] += clicks[k] * d;
          next[k] += clicks[k] * (1.0 - d);
        }
      }
      clicks = next;
    }
    return clicks[1];
  };

  std::vector<bool> lit(bins, false);
  if (n_photons == 0) return exactly_one_click(lit);

  double total = 0.0;
  if (n_photons == 1) {
    for (const auto& a : single) {
      std::fill(lit.begin(), lit.end(), false);
      if (a.bin >= 0) lit[a.bin] = true;
      total += a.prob * exactly_one_click(lit);
    }
    return total;
  }
  for (const auto& a : single) {
    for (const auto& b : single) {
      std::fill(lit.begin(), lit.end(), false);
      if (a.bin >= 0) lit[a.bin] = true;
      if (b.bin >= 0) lit[b.bin] = true;
      total += a.prob * b.prob * exactly_one_click(lit);
    }
  }
  return total;
}

double short_distance_factor(const HeraldResponse& r) {
  if (r.q2 == 0.0) {
    throw SingularityError("short_distance_factor: q2 = 0 (perfect multiphoton rejection)");
  }
  return r.q1 * r.q1 / r.q2;
}

double distance_factor(const HeraldResponse& r) {
  if (r.q1 == 0.0) {
    throw SingularityError("distance_factor: q1 = 0");
  }
  return std::sqrt(r.q0 * r.q2) / r.q1;
}

double approx_distance_factor(const MultiplexedDetectorParams& params) {
  params.validate();
  const double eta = params.effective_efficiency();
  if (eta == 0.0) {
    throw std::domain_error("approx_distance_factor: effective efficiency is zero");
  }
  const double m2 = 2.0 * params.output_count();
  return std::sqrt(params.dark_a) * std::sqrt(1.0 + m2 * (1.0 - eta) / eta);
}

double advantage_threshold(int stages) {
  if (stages < 0) throw std::invalid_argument("advantage_threshold: stages must be >= 0");
  return 2.0 / (3.0 - std::ldexp(1.0, -stages));
}

}  // namespace hqkd

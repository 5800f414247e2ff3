#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "hqkd/protocol.hpp"
#include "hqkd/source_detector.hpp"

namespace hqkd {

/// Channel transmission (including Bob's detector efficiency) and the
/// dark-count probability of each of Bob's two detectors.
struct ChannelParams {
  double transmission = 1.0;
  double dark_b = 0.0;

  /// Above this the d_B << 1 derivation is questionable.
  static constexpr double kDarkAdvisory = 1e-2;

  void validate() const;
  [[nodiscard]] bool dark_count_advisory() const { return dark_b > kDarkAdvisory; }
};

/// Mean number of pairs per pump pulse (mean photon number for WCPs).
struct SourceParams {
  double lambda = 0.0;

  static constexpr double kPerturbativeAdvisory = 1.0;

  void validate() const;
  [[nodiscard]] bool perturbative_advisory() const { return lambda > kPerturbativeAdvisory; }
  [[nodiscard]] PhotonStatistics statistics() const { return poisson_pair_stats(lambda); }
};

/// Raised when no detection events are expected, so Q and y are undefined.
class UndefinedRateError : public std::domain_error {
 public:
  explicit UndefinedRateError(const std::string& what) : std::domain_error(what) {}
};

enum class ReportStatus {
  ok,
  /// Q/y falls outside the single-photon information domain (or y = 0);
  /// the key rate is not a number.
  model_invalid,
};

struct KeyRateReport {
  double p_exp = 0.0;
  double qber = 0.0;
  double y = 0.0;
  /// Secure bits per pulse; negative below threshold, NaN when invalid.
  double key_rate = 0.0;
  bool pns_valid = false;
  bool secure = false;
  ReportStatus status = ReportStatus::ok;
};

double expected_click_prob(const PhotonStatistics& stats, const HeraldResponse& r,
                           const ChannelParams& ch);

/// Half of the dark-count clicks are errors: d_B (sum p_i q_i) / p_exp.
double qber(const PhotonStatistics& stats, const HeraldResponse& r, const ChannelParams& ch);

/// 1 - p2 q2 / p_exp.
double single_photon_fraction(const PhotonStatistics& stats, const HeraldResponse& r,
                              const ChannelParams& ch);

KeyRateReport key_rate(const ProtocolSpec& spec, const PhotonStatistics& stats,
                       const HeraldResponse& r, const ChannelParams& ch);

/// K / p_exp as a function of (Q, y); empty where the eavesdropping model
/// does not apply.
std::optional<double> renormalized_key_rate(const ProtocolSpec& spec, double qber, double y);

}  // namespace hqkd

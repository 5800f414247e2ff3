#pragma once

#include <stdexcept>
#include <string>

namespace hqkd {

/// Probabilities of generating 0, 1 and >= 2 photon pairs in one pulse.
struct PhotonStatistics {
  double p0 = 1.0;
  double p1 = 0.0;
  double p2 = 0.0;
};

/// Poissonian pair statistics with mean `lambda`; p2 is the exact
/// complement 1 - (1 + lambda) e^-lambda.
PhotonStatistics poisson_pair_stats(double lambda);

/// N-stage balanced coupler tree feeding 2^N binary detectors.
/// N = 0 is a single on/off detector.
struct MultiplexedDetectorParams {
  int stages = 0;
  double eta_a = 1.0;   // single detector efficiency
  double dark_a = 0.0;  // dark-count probability per detector and gate
  double eta_c = 1.0;   // transmission of one coupler stage

  static constexpr int kMaxStages = 60;

  /// Throws std::invalid_argument if any field is out of range.
  void validate() const;
  /// eta_a * eta_c^N: lossy couplers fold into the detector efficiency.
  [[nodiscard]] double effective_efficiency() const;
  [[nodiscard]] double output_count() const;
};

/// Conditional probabilities that the herald reports exactly one photon
/// given 0, 1 or 2 photons at its input.
struct HeraldResponse {
  double q0 = 1.0;
  double q1 = 1.0;
  double q2 = 1.0;

  /// Arbitrary detector, range-checked only.
  static HeraldResponse custom(double q0, double q1, double q2);
};

/// Raised where a figure of merit divides by a vanishing q_i.
class SingularityError : public std::domain_error {
 public:
  explicit SingularityError(const std::string& what) : std::domain_error(what) {}
};

HeraldResponse multiplexed_response(const MultiplexedDetectorParams& params);

/// No heralding at all: weak coherent pulses, q0 = q1 = q2 = 1.
HeraldResponse wcp_response();

/// Probability that exactly one of the 2^N detectors clicks when
/// `n_photons` (0, 1 or 2) enter the tree, summed exactly over every photon
/// routing, detection outcome and dark-count pattern. Independent of the
/// closed form; limited to N <= 6.
double brute_force_response(const MultiplexedDetectorParams& params, int n_photons);

/// q1^2 / q2, the short-distance key-rate enhancement over WCPs.
/// Throws SingularityError when q2 = 0 (perfect multiphoton rejection).
double short_distance_factor(const HeraldResponse& r);

/// sqrt(q0 q2) / q1, which sets the minimum secure transmission.
/// Throws SingularityError when q1 = 0.
double distance_factor(const HeraldResponse& r);

/// Small-dark-count approximation of distance_factor for the tree
/// detector, valid for dark_a << eta / (1 - eta).
double approx_distance_factor(const MultiplexedDetectorParams& params);

/// Effective efficiency eta_a eta_c^N above which q1^2/q2 > 1 (no dark
/// counts): 2 / (3 - 2^-N).
double advantage_threshold(int stages);

}  // namespace hqkd

#pragma once

#include <memory>
#include <string_view>

namespace hqkd {

enum class Protocol { bb84, sarg04 };

/// Binary entropy in bits, with 0 log 0 = 0. Throws std::domain_error
/// outside [0, 1].
double binary_entropy(double x);

/// Alice-Bob mutual information 1 - H(Q) for Q in [0, 1/2].
double mutual_info_ab(double qber);

/// Immutable description of a four-state protocol: sifting fraction and
/// the eavesdropper information model. The QBER threshold and the
/// linearization factor xi are solved on first access and shared by all
/// copies of the same spec.
class ProtocolSpec {
 public:
  explicit ProtocolSpec(Protocol id);

  /// Accepts "bb84" / "sarg04" (case-insensitive). Throws
  /// std::invalid_argument for anything else.
  static ProtocolSpec from_name(std::string_view name);

  [[nodiscard]] Protocol id() const { return id_; }
  [[nodiscard]] std::string_view name() const;
  [[nodiscard]] double sift_fraction() const;

  /// Eve's information on single-photon pulses at error rate `qber`.
  [[nodiscard]] double eve_info_single(double qber) const;
  /// Eve's information on (all) multiphoton pulses.
  [[nodiscard]] double eve_info_two() const;
  /// Largest error rate accepted by eve_info_single, and whether it is
  /// itself included.
  [[nodiscard]] double single_domain_limit() const { return 0.5; }
  [[nodiscard]] bool single_domain_closed() const { return id_ == Protocol::bb84; }
  [[nodiscard]] bool in_single_domain(double qber) const;

  [[nodiscard]] double qber_threshold() const;
  [[nodiscard]] double xi() const;

 private:
  struct Constants;
  const Constants& constants() const;

  Protocol id_;
  std::shared_ptr<Constants> constants_;
};

/// I_AB(Q) - y I_AE^(1)(Q/y) - (1-y) I_AE^(2): key bits per sifted
/// detection, before the sifting factor. Caller guarantees Q/y is inside
/// the single-photon information domain and 0 < y <= 1.
double key_information_margin(const ProtocolSpec& spec, double qber, double y);

/// Unique root of I_AB(Q) = I_AE^(1)(Q) on (0, 1/2), by bisection to 1e-9.
double solve_qber_threshold(const ProtocolSpec& spec);

/// First-order slope of the key-positivity contour around (Q^th, y = 1):
/// Q = Q^th [1 - xi (1 - y)]. Extracted from contour solves at
/// y = 1 - 1e-3 and y = 1 - 1e-4 and Richardson-extrapolated.
double compute_xi(const ProtocolSpec& spec, double q_threshold);

/// Exact zero of key_information_margin in Q at fixed y, on (0, Q^th].
double zero_contour_qber(const ProtocolSpec& spec, double y);

/// True when the photon-number-splitting eavesdropping model applies:
/// Q/y lies in the single-photon domain and I_AE^(1)(Q/y) <= I_AE^(2).
bool pns_applicable(const ProtocolSpec& spec, double qber, double y);

/// Largest ratio Q/y for which pns_applicable holds (1/2 for BB84).
double pns_boundary_ratio(const ProtocolSpec& spec);

}  // namespace hqkd

#include "hqkd/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <string>

#include "hqkd/numerics.hpp"

namespace hqkd {
namespace {

// x log2 x with the 0 log 0 = 0 convention taken by branch.
double xlog2x(double x) {
  if (x == 0.0) return 0.0;
  return x * std::log2(x);
}

// Well inside the 1e-9 requirement so the residual also stays below 1e-9.
constexpr double kThresholdTol = 1e-14;
constexpr double kBracketEps = 1e-12;
constexpr double kSargPeakQber = 1.0 / 3.0;

}  // namespace

double binary_entropy(double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::domain_error("binary_entropy: argument outside [0, 1]");
  }
  return -xlog2x(x) - xlog2x(1.0 - x);
}

double mutual_info_ab(double qber) {
  if (!(qber >= 0.0 && qber <= 0.5)) {
    throw std::domain_error("mutual_info_ab: QBER outside [0, 1/2]");
  }
  return 1.0 - binary_entropy(qber);
}

struct ProtocolSpec::Constants {
  std::once_flag once;
  double q_threshold = 0.0;
  double xi = 0.0;
};

ProtocolSpec::ProtocolSpec(Protocol id) : id_(id), constants_(std::make_shared<Constants>()) {}

ProtocolSpec ProtocolSpec::from_name(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "bb84") return ProtocolSpec(Protocol::bb84);
  if (lower == "sarg04") return ProtocolSpec(Protocol::sarg04);
  throw std::invalid_argument("unknown protocol '" + std::string(name) +
                              "' (expected bb84 or sarg04)");
}

std::string_view ProtocolSpec::name() const {
  return id_ == Protocol::bb84 ? "bb84" : "sarg04";
}

double ProtocolSpec::sift_fraction() const { return id_ == Protocol::bb84 ? 0.5 : 0.25; }

bool ProtocolSpec::in_single_domain(double qber) const {
  if (!(qber >= 0.0)) return false;
  return single_domain_closed() ? qber <= 0.5 : qber < 0.5;
}

double ProtocolSpec::eve_info_single(double qber) const {
  if (!in_single_domain(qber)) {
    throw std::domain_error(std::string("eve_info_single: QBER outside the ") +
                            std::string(name()) + " domain");
  }
  if (id_ == Protocol::bb84) return binary_entropy(qber);
  // Collective attack on SARG04 single photons.
  return xlog2x(1.0 - qber) - xlog2x(1.0 - 2.0 * qber) + qber - xlog2x(qber);
}

double ProtocolSpec::eve_info_two() const {
  if (id_ == Protocol::bb84) return 1.0;
  // Holevo bound for two equiprobable states with overlap 1/sqrt(2).
  return binary_entropy((2.0 + std::sqrt(2.0)) / 4.0);
}

const ProtocolSpec::Constants& ProtocolSpec::constants() const {
  std::call_once(constants_->once, [this] {
    const double q_th = solve_qber_threshold(*this);
    constants_->xi = compute_xi(*this, q_th);
    constants_->q_threshold = q_th;
  });
  return *constants_;
}

double ProtocolSpec::qber_threshold() const { return constants().q_threshold; }

double ProtocolSpec::xi() const { return constants().xi; }

double key_information_margin(const ProtocolSpec& spec, double qber, double y) {
  return mutual_info_ab(qber) - y * spec.eve_info_single(qber / y) -
         (1.0 - y) * spec.eve_info_two();
}

double solve_qber_threshold(const ProtocolSpec& spec) {
  auto gap = [&spec](double q) { return mutual_info_ab(q) - spec.eve_info_single(q); };
  try {
    return bisect_root(gap, kBracketEps, 0.5 - kBracketEps, kThresholdTol);
  } catch (const SolverError&) {
    throw SolverError("solve_qber_threshold: no threshold bracketed for " +
                      std::string(spec.name()));
  }
}

namespace {

double contour_qber(const ProtocolSpec& spec, double y, double q_hi) {
  auto margin = [&spec, y](double q) { return key_information_margin(spec, q, y); };
  // Solve to the limit of double precision; xi divides this by a small step.
  return bisect_root(margin, kBracketEps, q_hi, 0.0);
}

}  // namespace

double zero_contour_qber(const ProtocolSpec& spec, double y) {
  if (!(y > 0.0 && y <= 1.0)) {
    throw std::domain_error("zero_contour_qber: y outside (0, 1]");
  }
  // The margin is positive at Q -> 0 and grows with y, so it is negative
  // just above Q^th for every y <= 1.
  return contour_qber(spec, y, spec.qber_threshold() * (1.0 + 1e-6));
}

double compute_xi(const ProtocolSpec& spec, double q_threshold) {
  constexpr double kCoarse = 1e-3;
  constexpr double kFine = 1e-4;
  auto slope = [&](double eps) {
    double q = 0.0;
    try {
      q = contour_qber(spec, 1.0 - eps, q_threshold);
    } catch (const SolverError&) {
      throw SolverError("compute_xi: contour solve failed for " + std::string(spec.name()));
    }
    return (1.0 - q / q_threshold) / eps;
  };
  const double coarse = slope(kCoarse);
  const double fine = slope(kFine);
  // Linear truncation error in eps cancels.
  return (kCoarse * fine - kFine * coarse) / (kCoarse - kFine);
}

bool pns_applicable(const ProtocolSpec& spec, double qber, double y) {
  if (!(y > 0.0) || !(qber >= 0.0)) return false;
  const double ratio = qber / y;
  if (!spec.in_single_domain(ratio)) return false;
  // The SARG04 single-photon information peaks (at 1 bit) at Q = 1/3 and
  // falls back below I_AE^(2) near 1/2; only the low-ratio branch counts.
  if (spec.id() == Protocol::sarg04 && ratio > kSargPeakQber) return false;
  return spec.eve_info_single(ratio) <= spec.eve_info_two();
}

double pns_boundary_ratio(const ProtocolSpec& spec) {
  if (spec.id() == Protocol::bb84) return 0.5;
  const double i2 = spec.eve_info_two();
  auto excess = [&spec, i2](double r) { return spec.eve_info_single(r) - i2; };
  return bisect_root(excess, 0.0, kSargPeakQber, 1e-14);
}

}  // namespace hqkd

#include "hqkd/keyrate.hpp"

#include <cmath>
#include <limits>

namespace hqkd {
namespace {

// Probability that a pulse survives heralding, weighted over pair number.
double heralded_weight(const PhotonStatistics& s, const HeraldResponse& r) {
  return s.p0 * r.q0 + s.p1 * r.q1 + s.p2 * r.q2;
}

double checked_click_prob(const PhotonStatistics& s, const HeraldResponse& r,
                          const ChannelParams& ch) {
  const double p_exp = expected_click_prob(s, r, ch);
  if (!(p_exp > 0.0)) {
    throw UndefinedRateError("no detection events expected (p_exp = 0)");
  }
  return p_exp;
}

}  // namespace

void ChannelParams::validate() const {
  if (!(transmission >= 0.0 && transmission <= 1.0)) {
    throw std::invalid_argument("channel: transmission outside [0, 1]");
  }
  if (!(dark_b >= 0.0 && dark_b < 1.0)) {
    throw std::invalid_argument("channel: dark_b outside [0, 1)");
  }
}

void SourceParams::validate() const {
  if (!(lambda >= 0.0) || std::isinf(lambda)) {
    throw std::invalid_argument("source: lambda must be finite and >= 0");
  }
}

double expected_click_prob(const PhotonStatistics& s, const HeraldResponse& r,
                           const ChannelParams& ch) {
  // Double clicks (order T d_B, T^2, d_B^2) are neglected.
  const double t = ch.transmission;
  return t * s.p1 * r.q1 + 2.0 * t * s.p2 * r.q2 + 2.0 * ch.dark_b * heralded_weight(s, r);
}

double qber(const PhotonStatistics& s, const HeraldResponse& r, const ChannelParams& ch) {
  const double p_exp = checked_click_prob(s, r, ch);
  return ch.dark_b * heralded_weight(s, r) / p_exp;
}

double single_photon_fraction(const PhotonStatistics& s, const HeraldResponse& r,
                              const ChannelParams& ch) {
  const double p_exp = checked_click_prob(s, r, ch);
  // Numerator is p2 q2, not the transmitted 2 T p2 q2.
  return 1.0 - s.p2 * r.q2 / p_exp;
}

KeyRateReport key_rate(const ProtocolSpec& spec, const PhotonStatistics& s,
                       const HeraldResponse& r, const ChannelParams& ch) {
  KeyRateReport rep;
  rep.p_exp = checked_click_prob(s, r, ch);
  rep.qber = ch.dark_b * heralded_weight(s, r) / rep.p_exp;
  rep.y = 1.0 - s.p2 * r.q2 / rep.p_exp;
  rep.pns_valid = pns_applicable(spec, rep.qber, rep.y);

  // y itself may go negative (multiphoton term without the 2T factor); only
  // the ratio Q/y has to stay inside the information domain.
  if (rep.y == 0.0 || !spec.in_single_domain(rep.qber / rep.y)) {
    rep.status = ReportStatus::model_invalid;
    rep.key_rate = std::numeric_limits<double>::quiet_NaN();
    rep.secure = false;
    return rep;
  }
  rep.key_rate =
      rep.p_exp * spec.sift_fraction() * key_information_margin(spec, rep.qber, rep.y);
  rep.secure = rep.key_rate > 0.0 && rep.pns_valid;
  return rep;
}

std::optional<double> renormalized_key_rate(const ProtocolSpec& spec, double q, double y) {
  if (!pns_applicable(spec, q, y) || !(y <= 1.0) || !(q <= 0.5)) return std::nullopt;
  return spec.sift_fraction() * key_information_margin(spec, q, y);
}

}  // namespace hqkd

#include <doctest.h>

#include <cmath>
#include <random>

#include "hqkd/keyrate.hpp"
#include "oracles.hpp"

using namespace hqkd;

namespace {
const ProtocolSpec kBb84{Protocol::bb84};
const ProtocolSpec kSarg{Protocol::sarg04};
const HeraldResponse kIdeal = HeraldResponse::custom(0.0, 1.0, 0.0);
}  // namespace

TEST_SUITE("keyrate") {
  TEST_CASE("expected_click_prob") {
    const auto s = poisson_pair_stats(0.1);
    CHECK(expected_click_prob(s, wcp_response(), {0.0, 0.0}) == 0.0);
    CHECK(expected_click_prob(s, kIdeal, {0.3, 0.0}) == doctest::Approx(0.3 * s.p1));
    const double p = expected_click_prob(s, wcp_response(), {0.1, 1e-5});
    const auto o = oracle::poisson(0.1L);
    const double term = static_cast<double>(0.1L * o.p1 + 2 * 0.1L * o.p2 + 2e-5L);
    CHECK(std::abs(p - term) < 1e-5);
    CHECK(std::abs(p - term) < 1e-15);
    CHECK(std::abs(p - 0.0100041) < 1e-6);
  }

  TEST_CASE("qber") {
    const auto s = poisson_pair_stats(0.1);
    CHECK(qber(s, wcp_response(), {0.1, 0.0}) == 0.0);
    CHECK(qber(s, wcp_response(), {0.0, 1e-4}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(qber(s, multiplexed_response({2, 0.6, 1e-5, 0.98}), {0.0, 1e-3}) ==
          doctest::Approx(0.5).epsilon(1e-15));
    const auto ref = oracle::key_rate(false, 0.1L, {1, 1, 1}, 0.1L, 1e-5L);
    CHECK(std::abs(qber(s, wcp_response(), {0.1, 1e-5}) - static_cast<double>(ref.qber)) < 1e-5);
    CHECK(std::abs(qber(s, wcp_response(), {0.1, 1e-5}) - 1.0014e-3) < 1e-5);
    CHECK_THROWS_AS(qber(s, wcp_response(), {0.0, 0.0}), UndefinedRateError);
  }

  TEST_CASE("single_photon_fraction") {
    const auto s = poisson_pair_stats(0.1);
    CHECK(single_photon_fraction(s, HeraldResponse::custom(0.1, 0.6, 0.0), {0.1, 1e-5}) == 1.0);
    CHECK(single_photon_fraction(poisson_pair_stats(0.0), wcp_response(), {0.1, 1e-5}) == 1.0);
    const auto ref = oracle::key_rate(false, 0.1L, {1, 1, 1}, 0.1L, 1e-5L);
    CHECK(std::abs(single_photon_fraction(s, wcp_response(), {0.1, 1e-5}) -
                   static_cast<double>(ref.y)) < 1e-3);
    CHECK(std::abs(single_photon_fraction(s, wcp_response(), {0.1, 1e-5}) - 0.53231) < 1e-5);
    CHECK_THROWS_AS(single_photon_fraction(s, kIdeal, {0.0, 0.0}), UndefinedRateError);
  }

  TEST_CASE("ideal heralding key rate") {
    for (double lambda : {0.01, 0.3, 1.0}) {
      const double t = 0.2;
      const auto rep = key_rate(kBb84, poisson_pair_stats(lambda), kIdeal, {t, 0.0});
      CHECK(rep.qber == 0.0);
      CHECK(rep.y == 1.0);
      CHECK(rep.key_rate == doctest::Approx(t * lambda * std::exp(-lambda) / 2).epsilon(1e-14));
      CHECK(rep.secure);
      CHECK(rep.status == ReportStatus::ok);
    }
  }

  TEST_CASE("key rate vanishes at the threshold for y = 1") {
    for (const auto* spec : {&kBb84, &kSarg}) {
      const double d = 1e-5;
      const double q_th = spec->qber_threshold();
      const double t = d * (1 - 2 * q_th) / q_th;
      const auto rep = key_rate(*spec, poisson_pair_stats(0.2), kIdeal, {t, d});
      CHECK(rep.y == 1.0);
      CHECK(rep.qber == doctest::Approx(q_th).epsilon(1e-12));
      CHECK(std::abs(rep.key_rate) < 1e-9);
    }
  }

  TEST_CASE("WCP key rate against a spreadsheet evaluation") {
    const auto rep = key_rate(kBb84, poisson_pair_stats(0.1), wcp_response(), {0.1, 1e-5});
    const auto ref = oracle::key_rate(false, 0.1L, {1, 1, 1}, 0.1L, 1e-5L);
    CHECK(std::abs(rep.key_rate - static_cast<double>(ref.k)) < 1e-6);
    CHECK(oracle::rel_err(rep.key_rate, static_cast<double>(ref.k)) < 1e-12);
    CHECK(rep.secure);
    // rounded intermediate values carried by hand
    const double sheet = 0.0100041 * 0.5 *
                         (1 - binary_entropy(0.00099959) - 0.53231 * binary_entropy(0.00099959 / 0.53231) -
                          0.46769);
    CHECK(oracle::rel_err(rep.key_rate, sheet) < 1e-4);
  }

  TEST_CASE("negative key rates are reported raw") {
    const auto rep = key_rate(kBb84, poisson_pair_stats(1e-3), wcp_response(), {1e-3, 1e-5});
    CHECK(rep.status == ReportStatus::ok);
    CHECK(rep.key_rate < 0.0);
    CHECK_FALSE(rep.secure);
  }

  TEST_CASE("negative single-photon fraction") {
    const auto rep = key_rate(kBb84, poisson_pair_stats(0.8), wcp_response(), {1e-3, 1e-5});
    CHECK(rep.y < 0.0);
    CHECK(rep.status == ReportStatus::model_invalid);
    CHECK(std::isnan(rep.key_rate));
    CHECK_FALSE(rep.secure);

    // without dark counts Q/y = 0 stays in the domain and K is just negative
    const auto clean = key_rate(kBb84, poisson_pair_stats(0.8), wcp_response(), {1e-3, 0.0});
    CHECK(clean.y < 0.0);
    CHECK(clean.status == ReportStatus::ok);
    CHECK(clean.key_rate < 0.0);
    CHECK_FALSE(clean.pns_valid);
    CHECK_FALSE(clean.secure);
  }

  TEST_CASE("SARG04 out-of-domain ratio is model-invalid") {
    // T tiny: Q near 1/2, y near 1, so Q/y crosses 1/2
    const auto rep = key_rate(kSarg, poisson_pair_stats(1e-3), wcp_response(), {1e-9, 1e-3});
    CHECK(rep.qber / rep.y >= 0.5);
    CHECK(rep.status == ReportStatus::model_invalid);
    CHECK_FALSE(rep.pns_valid);
    CHECK_FALSE(rep.secure);
  }

  TEST_CASE("PNS-invalid points are never secure") {
    const auto rep = key_rate(kSarg, poisson_pair_stats(0.5), wcp_response(), {2e-4, 1e-5});
    CHECK_FALSE(rep.pns_valid);
    CHECK_FALSE(rep.secure);
  }

  TEST_CASE("key_rate with no clicks") {
    CHECK_THROWS_AS(key_rate(kBb84, poisson_pair_stats(0.1), wcp_response(), {0.0, 0.0}),
                    UndefinedRateError);
  }

  TEST_CASE("renormalized_key_rate") {
    CHECK(*renormalized_key_rate(kBb84, 0.0, 1.0) == 0.5);
    CHECK(std::abs(*renormalized_key_rate(kBb84, kBb84.qber_threshold(), 1.0)) < 1e-9);
    CHECK_FALSE(renormalized_key_rate(kSarg, 0.2, 0.5).has_value());
    CHECK(*renormalized_key_rate(kSarg, 0.0, 1.0) == 0.25);
    CHECK_FALSE(renormalized_key_rate(kBb84, 0.1, 0.0).has_value());
  }

  TEST_CASE("parameter validation and advisories") {
    CHECK_THROWS_AS((ChannelParams{1.5, 0.0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ChannelParams{0.5, 1.0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((SourceParams{-0.1}.validate()), std::invalid_argument);
    CHECK((ChannelParams{0.5, 0.02}.dark_count_advisory()));
    CHECK_FALSE((ChannelParams{0.5, 1e-5}.dark_count_advisory()));
    CHECK((SourceParams{1.5}.perturbative_advisory()));
    CHECK_FALSE((SourceParams{0.1}.perturbative_advisory()));
    CHECK((SourceParams{0.1}.statistics().p1) == poisson_pair_stats(0.1).p1);
  }
}

TEST_SUITE("keyrate properties") {
  TEST_CASE("K equals p_exp times the renormalized rate") {
    auto gen = oracle::rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int compared = 0;
    for (int i = 0; i < 2000; ++i) {
      const ProtocolSpec& spec = i % 2 ? kSarg : kBb84;
      const HeraldResponse r = HeraldResponse::custom(u(gen) * 1e-3, u(gen), u(gen));
      const double lambda = std::pow(10.0, -4.0 + 4.0 * u(gen));
      const ChannelParams ch{std::pow(10.0, -5.0 + 5.0 * u(gen)), std::pow(10.0, -7 + 4 * u(gen))};
      const auto rep = key_rate(spec, poisson_pair_stats(lambda), r, ch);
      const auto norm = renormalized_key_rate(spec, rep.qber, rep.y);
      if (rep.status != ReportStatus::ok || !norm) continue;
      ++compared;
      CHECK(std::abs(rep.key_rate - rep.p_exp * *norm) <= 1e-12 * std::max(1.0, std::abs(rep.key_rate)));
    }
    CHECK(compared > 500);
  }

  TEST_CASE("key rate matches the long-double evaluation") {
    auto gen = oracle::rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
      const bool sarg = i % 2;
      const ProtocolSpec& spec = sarg ? kSarg : kBb84;
      const oracle::Q3 q{u(gen) * 1e-4, 0.2 + 0.8 * u(gen), u(gen)};
      const double lambda = std::pow(10.0, -3.0 + 2.5 * u(gen));
      const double t = std::pow(10.0, -3.0 + 3.0 * u(gen));
      const double d = 1e-6;
      const auto rep = key_rate(spec, poisson_pair_stats(lambda),
                                HeraldResponse::custom(static_cast<double>(q.q0),
                                                       static_cast<double>(q.q1),
                                                       static_cast<double>(q.q2)),
                                {t, d});
      if (rep.status != ReportStatus::ok) continue;
      const auto ref = oracle::key_rate(sarg, lambda, q, t, d);
      CHECK(std::abs(rep.key_rate - static_cast<double>(ref.k)) < 1e-12);
      CHECK(std::abs(rep.qber - static_cast<double>(ref.qber)) < 1e-14);
    }
  }

  TEST_CASE("linearized bound agrees in sign near threshold") {
    for (const auto* spec : {&kBb84, &kSarg}) {
      int checked = 0;
      for (int i = 0; i <= 50; ++i) {
        const double y = 0.95 + 0.05 * i / 50.0;
        const double q_lin = spec->qber_threshold() * (1 - spec->xi() * (1 - y));
        for (int j = 0; j <= 200; ++j) {
          const double q = q_lin * (0.5 + j / 200.0);
          if (std::abs(q - q_lin) <= 0.02 * q_lin) continue;
          const double k = key_information_margin(*spec, q, y);
          CHECK((k > 0.0) == (q < q_lin));
          ++checked;
        }
      }
      CHECK(checked > 9000);
    }
  }

  TEST_CASE("WCP key rate without dark counts is nonnegative and increasing in T") {
    for (double lambda : {1e-3, 1e-2}) {
      double prev = -1.0;
      for (int i = 0; i <= 60; ++i) {
        const double t = std::pow(10.0, -1.0 + i / 60.0);
        const auto rep = key_rate(kBb84, poisson_pair_stats(lambda), wcp_response(), {t, 0.0});
        CHECK(rep.key_rate >= 0.0);
        CHECK(rep.key_rate > prev);
        prev = rep.key_rate;
      }
    }
  }

  TEST_CASE("QBER never exceeds one half") {
    auto gen = oracle::rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 5000; ++i) {
      const HeraldResponse r = HeraldResponse::custom(u(gen), u(gen), u(gen));
      const ChannelParams ch{u(gen), 0.999 * u(gen)};
      const auto s = poisson_pair_stats(3.0 * u(gen));
      if (!(expected_click_prob(s, r, ch) > 0.0)) continue;
      const double q = qber(s, r, ch);
      CHECK(q >= 0.0);
      CHECK(q <= 0.5);
    }
  }
}

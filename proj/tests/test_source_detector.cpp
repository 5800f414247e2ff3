#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "hqkd/source_detector.hpp"
#include "oracles.hpp"

using namespace hqkd;

namespace {

void check_response(const HeraldResponse& r, double q0, double q1, double q2, double tol) {
  CHECK(std::abs(r.q0 - q0) <= tol);
  CHECK(std::abs(r.q1 - q1) <= tol);
  CHECK(std::abs(r.q2 - q2) <= tol);
}

}  // namespace

TEST_SUITE("source_detector") {
  TEST_CASE("poisson_pair_stats") {
    auto s0 = poisson_pair_stats(0.0);
    CHECK(s0.p0 == 1.0);
    CHECK(s0.p1 == 0.0);
    CHECK(s0.p2 == 0.0);

    auto s = poisson_pair_stats(0.1);
    CHECK(std::abs(s.p0 - 0.90484) < 1e-5);
    CHECK(std::abs(s.p1 - 0.09048) < 1e-5);
    CHECK(std::abs(s.p2 - 0.00468) < 1e-5);
    const auto o = oracle::poisson(0.1L);
    CHECK(std::abs(s.p2 - static_cast<double>(o.p2)) < 1e-17);

    CHECK_THROWS_AS(poisson_pair_stats(-1e-3), std::domain_error);
    CHECK_THROWS_AS(poisson_pair_stats(INFINITY), std::domain_error);
  }

  TEST_CASE("p2 keeps relative precision for tiny lambda") {
    const double lambda = 1e-8;
    const auto s = poisson_pair_stats(lambda);
    CHECK(s.p2 / (lambda * lambda / 2.0) == doctest::Approx(1.0).epsilon(1e-7));
  }

  TEST_CASE("ideal binary detector") {
    check_response(multiplexed_response({0, 1.0, 0.0, 1.0}), 0.0, 1.0, 1.0, 0.0);
  }

  TEST_CASE("two-stage tree matches enumeration") {
    const MultiplexedDetectorParams p{2, 0.6, 1e-3, 0.98};
    const auto r = multiplexed_response(p);
    check_response(r, brute_force_response(p, 0), brute_force_response(p, 1),
                   brute_force_response(p, 2), 1e-12);
  }

  TEST_CASE("many stages approach photon-number resolution") {
    for (int n : {5, 10, 20, 40}) {
      const auto r = multiplexed_response({n, 1.0, 0.0, 1.0});
      CHECK(r.q2 == doctest::Approx(std::ldexp(1.0, -n)).epsilon(1e-14));
      CHECK(r.q1 == 1.0);
      CHECK(r.q0 == 0.0);
    }
  }

  TEST_CASE("wcp response") {
    check_response(wcp_response(), 1.0, 1.0, 1.0, 0.0);
    CHECK(short_distance_factor(wcp_response()) == 1.0);
    CHECK(distance_factor(wcp_response()) == 1.0);
  }

  TEST_CASE("custom response validation") {
    CHECK(HeraldResponse::custom(0.1, 0.5, 0.2).q1 == 0.5);
    CHECK_THROWS_AS(HeraldResponse::custom(-0.1, 0.5, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(HeraldResponse::custom(0.1, 1.5, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(HeraldResponse::custom(0.1, 0.5, std::nan("")), std::invalid_argument);
  }

  TEST_CASE("detector parameter validation") {
    CHECK_THROWS_AS(multiplexed_response({-1, 0.5, 0.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(multiplexed_response({0, 1.5, 0.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(multiplexed_response({0, 0.5, -0.1, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(multiplexed_response({0, 0.5, 0.0, 1.1}), std::invalid_argument);
    CHECK_THROWS_AS(multiplexed_response({61, 0.5, 0.0, 1.0}), std::invalid_argument);
    const MultiplexedDetectorParams p{3, 0.6, 1e-6, 0.98};
    CHECK(p.output_count() == 8.0);
    CHECK(p.effective_efficiency() == doctest::Approx(0.6 * std::pow(0.98, 3)).epsilon(1e-15));
  }

  TEST_CASE("brute force examples") {
    for (int n = 0; n <= 3; ++n) {
      for (double d : {0.0, 1e-6, 0.01, 0.3}) {
        const MultiplexedDetectorParams p{n, 0.7, d, 0.95};
        const double m = std::ldexp(1.0, n);
        CHECK(std::abs(brute_force_response(p, 0) - std::pow(1 - d, m - 1) * m * d) < 1e-12);
      }
    }
    CHECK(brute_force_response({0, 1.0, 0.0, 1.0}, 2) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(brute_force_response({1, 1.0, 0.0, 1.0}, 2) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(brute_force_response({7, 0.5, 0.0, 1.0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(brute_force_response({1, 0.5, 0.0, 1.0}, 3), std::invalid_argument);
    CHECK_THROWS_AS(brute_force_response({1, 0.5, 0.0, 1.0}, -1), std::invalid_argument);
  }

  TEST_CASE("brute force agrees with a literal bitmask enumeration") {
    for (int n = 0; n <= 3; ++n) {
      for (double eta : {0.3, 0.9}) {
        for (double d : {0.0, 1e-3, 0.2}) {
          const MultiplexedDetectorParams p{n, eta, d, 0.97};
          const double eff = p.effective_efficiency();
          for (int k = 0; k <= 2; ++k) {
            const double ref =
                static_cast<double>(oracle::enumerate_exactly_one(n, eff, d, k));
            CHECK(std::abs(brute_force_response(p, k) - ref) < 1e-13);
          }
        }
      }
    }
  }

  TEST_CASE("short_distance_factor") {
    CHECK(short_distance_factor(multiplexed_response({0, 1.0, 0.0, 1.0})) == 1.0);
    for (int n = 0; n <= 6; ++n) {
      for (double eta_a : {0.1, 0.4, 0.6, 0.8, 1.0}) {
        for (double eta_c : {0.9, 0.98, 1.0}) {
          const MultiplexedDetectorParams p{n, eta_a, 0.0, eta_c};
          const double eta = p.effective_efficiency();
          const double compact = 1.0 / (2.0 / eta - 2.0 + std::ldexp(1.0, -n));
          CHECK(oracle::rel_err(short_distance_factor(multiplexed_response(p)), compact) < 1e-12);
        }
      }
    }
    CHECK_THROWS_AS(short_distance_factor(HeraldResponse::custom(0.0, 1.0, 0.0)),
                    SingularityError);
  }

  TEST_CASE("distance_factor") {
    CHECK(distance_factor(HeraldResponse::custom(0.0, 0.7, 0.3)) == 0.0);
    const MultiplexedDetectorParams p{3, 0.6, 1e-6, 0.98};
    const double exact = distance_factor(multiplexed_response(p));
    CHECK(oracle::rel_err(approx_distance_factor(p), exact) < 0.05);
    CHECK_THROWS_AS(distance_factor(HeraldResponse::custom(0.1, 0.0, 0.1)), SingularityError);
  }

  TEST_CASE("approx_distance_factor") {
    CHECK(approx_distance_factor({0, 1.0, 4e-6, 1.0}) == doctest::Approx(2e-3).epsilon(1e-14));
    CHECK(approx_distance_factor({3, 0.6, 0.0, 0.98}) == 0.0);
    CHECK_THROWS_AS(approx_distance_factor({2, 0.0, 1e-6, 0.98}), std::domain_error);
  }

  TEST_CASE("advantage_threshold") {
    CHECK(advantage_threshold(0) == 1.0);
    CHECK(advantage_threshold(1) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(std::abs(advantage_threshold(60) - 2.0 / 3.0) < 1e-15);
    CHECK_THROWS_AS(advantage_threshold(-1), std::invalid_argument);
    // the compact factor crosses 1 at the threshold
    const auto below = multiplexed_response({1, 0.8 - 1e-6, 0.0, 1.0});
    const auto above = multiplexed_response({1, 0.8 + 1e-6, 0.0, 1.0});
    CHECK(short_distance_factor(below) < 1.0);
    CHECK(short_distance_factor(above) > 1.0);
  }
}

TEST_SUITE("source_detector properties") {
  TEST_CASE("photon statistics sum to one") {
    for (double lambda : {0.0, 1e-9, 1e-4, 0.01, 0.1, 0.5, 1.0, 3.0, 20.0}) {
      const auto s = poisson_pair_stats(lambda);
      CHECK(std::abs(s.p0 + s.p1 + s.p2 - 1.0) < 1e-14);
      CHECK(s.p2 >= 0.0);
      CHECK(s.p2 <= 1.0);
    }
  }

  TEST_CASE("closed form equals enumeration over the full grid") {
    int cases = 0;
    double worst = 0.0;
    for (int n = 0; n <= 4; ++n) {
      for (double eta_a : {0.2, 0.5, 0.8, 1.0}) {
        for (double d : {0.0, 1e-6, 1e-3, 0.1}) {
          for (double eta_c : {0.9, 0.98, 1.0}) {
            const MultiplexedDetectorParams p{n, eta_a, d, eta_c};
            const auto r = multiplexed_response(p);
            const double q[3] = {r.q0, r.q1, r.q2};
            for (int k = 0; k <= 2; ++k) {
              worst = std::max(worst, std::abs(q[k] - brute_force_response(p, k)));
              ++cases;
            }
          }
        }
      }
    }
    CHECK(cases == 720);
    CHECK(worst < 1e-12);
  }

  TEST_CASE("q0 does not depend on efficiencies") {
    for (int n = 0; n <= 5; ++n) {
      const double ref = multiplexed_response({n, 1.0, 1e-4, 1.0}).q0;
      for (double eta_a : {0.0, 0.3, 0.9}) {
        for (double eta_c : {0.5, 0.99}) {
          CHECK(multiplexed_response({n, eta_a, 1e-4, eta_c}).q0 == ref);
        }
      }
    }
  }

  TEST_CASE("no dark counts means no vacuum heralds") {
    for (int n = 0; n <= 6; ++n) {
      CHECK(multiplexed_response({n, 0.7, 0.0, 0.97}).q0 == 0.0);
    }
  }

  TEST_CASE("N = 0 is the binary detector") {
    for (double eta : {0.1, 0.6, 1.0}) {
      for (double d : {0.0, 1e-6, 0.05}) {
        const auto r = multiplexed_response({0, eta, d, 0.5});
        CHECK(r.q0 == doctest::Approx(d).epsilon(1e-15));
        CHECK(r.q1 == doctest::Approx(1.0 - (1.0 - eta) * (1.0 - d)).epsilon(1e-15));
        CHECK(r.q2 == doctest::Approx(1.0 - (1.0 - eta) * (1.0 - eta) * (1.0 - d)).epsilon(1e-15));
      }
    }
  }

  TEST_CASE("short_distance_factor increases with eta_a") {
    for (int n = 0; n <= 6; ++n) {
      double prev = 0.0;
      for (int i = 1; i <= 100; ++i) {
        const double f = short_distance_factor(multiplexed_response({n, i / 100.0, 0.0, 0.98}));
        CHECK(f > prev);
        prev = f;
      }
    }
  }

  TEST_CASE("closed form matches the long-double closed form") {
    for (int n = 0; n <= 8; ++n) {
      for (double d : {1e-7, 1e-3}) {
        const MultiplexedDetectorParams p{n, 0.55, d, 0.98};
        const auto r = multiplexed_response(p);
        const auto o = oracle::tree_closed_form(n, p.effective_efficiency(), d);
        CHECK(std::abs(r.q0 - static_cast<double>(o.q0)) < 1e-14);
        CHECK(std::abs(r.q1 - static_cast<double>(o.q1)) < 1e-14);
        CHECK(std::abs(r.q2 - static_cast<double>(o.q2)) < 1e-14);
      }
    }
  }
}

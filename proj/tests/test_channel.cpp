// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "qmat/channel.hpp"

using namespace qmat;

namespace {
SimParams base_params() {
  SimParams p;
  p.K = 4;
  p.M = 4;
  p.P = 1e4;
  p.alpha = 0.5;
  p.rounds = 2;
  p.seed = 9;
  return p;
}
}

TEST_CASE("sim params validation") {
  SimParams p = base_params();
  CHECK_NOTHROW(p.validate());
  p.K = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = base_params();
  p.M = 3;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = base_params();
  p.P = 1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = base_params();
  p.alpha = 1.1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = base_params();
  p.rounds = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = base_params();
  p.backoff = 1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("csit error power") {
  CHECK(csit_error_power(0.5, 1e4) == doctest::Approx(1e-2).epsilon(1e-12));
  CHECK(csit_error_power(0.0, 1e4) == 1.0);
  CHECK(csit_error_power(1.0, 1e6) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK_THROWS_AS(csit_error_power(-0.1, 1e4), std::invalid_argument);
  CHECK_THROWS_AS(csit_error_power(0.5, 0.5), std::invalid_argument);
}

TEST_CASE("draw_channel decomposition is exact") {
  SimParams p = base_params();
  Rng rng = make_rng(p.seed);
  for (int t = 0; t < 50; ++t) {
    ChannelSlotState s = draw_channel(p, rng);
    REQUIRE(s.H.rows() == p.K);
    REQUIRE(s.H.cols() == p.M);
    REQUIRE(s.noise.size() == p.K);
    for (int r = 0; r < p.K; ++r) {
      for (int c = 0; c < p.M; ++c) {
        // Bit-exact split, not approximate: H == H_hat + H_tilde.
        CHECK(s.H(r, c) == s.H_hat(r, c) + s.H_tilde(r, c));
      }
    }
  }
}

TEST_CASE("draw_channel statistics") {
  SimParams p = base_params();
  Rng rng = make_rng(31);
  double h2 = 0, e2 = 0, n2 = 0;
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    ChannelSlotState s = draw_channel(p, rng);
    h2 += s.H.squaredNorm() / (p.K * p.M);
    e2 += s.H_tilde.squaredNorm() / (p.K * p.M);
    n2 += s.noise.squaredNorm() / p.K;
  }
  CHECK(h2 / trials == doctest::Approx(1.0).epsilon(0.05));
  CHECK(e2 / trials == doctest::Approx(csit_error_power(p.alpha, p.P)).epsilon(0.05));
  CHECK(n2 / trials == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("draw_channel reproducibility") {
  SimParams p = base_params();
  Rng a = make_rng(77), b = make_rng(77);
  ChannelSlotState s1 = draw_channel(p, a);
  ChannelSlotState s2 = draw_channel(p, b);
  CHECK((s1.H - s2.H).norm() == 0.0);
  CHECK((s1.H_hat - s2.H_hat).norm() == 0.0);
  CHECK((s1.noise - s2.noise).norm() == 0.0);
  Rng c = make_rng(78);
  ChannelSlotState s3 = draw_channel(p, c);
  CHECK((s1.H - s3.H).norm() != 0.0);
}

TEST_CASE("csit ledger access rules") {
  SimParams p = base_params();
  Rng rng = make_rng(5);
  CsitLedger ledger;
  CHECK(ledger.current_slot() == -1);
  ChannelSlotState s0 = draw_channel(p, rng);
  ledger.advance(0, s0);
  CHECK(ledger.current_slot() == 0);
  CHECK(ledger.size() == 1);
  // Current estimate is readable immediately, true CSI is not.
  CHECK((ledger.estimate(0) - s0.H_hat).norm() == 0.0);
  CHECK_THROWS_AS(ledger.delayed_true(0), DelayedCsitViolation);
  ChannelSlotState s1 = draw_channel(p, rng);
  ledger.advance(1, s1);
  CHECK((ledger.delayed_true(0) - s0.H).norm() == 0.0);
  CHECK_THROWS_AS(ledger.delayed_true(1), DelayedCsitViolation);
  CHECK((ledger.state(0).H - s0.H).norm() == 0.0);
  // Slots advance strictly in order; unknown slots are rejected.
  CHECK_THROWS_AS(ledger.advance(5, s1), std::invalid_argument);
  CHECK_THROWS_AS(ledger.estimate(9), std::invalid_argument);
  CHECK_THROWS_AS(ledger.delayed_true(9), std::invalid_argument);
}

// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>
#include <stdexcept>
#include <utility>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "qmat/harness.hpp"
#include "qmat/quantizer.hpp"
#include "qmat/rng.hpp"

using namespace qmat;

namespace {
const std::pair<double, double> kBetaGrid[] = {{1.0, 0.5}, {1.0, 0.0}, {0.75, 0.25},
                                               {0.6, 0.3}};
const double kPowerGrid[] = {1e2, 1e4, 1e6, 1e8};
}

TEST_CASE("codebook construction invariants") {
  for (auto [b1, b2] : kBetaGrid) {
    for (double P : kPowerGrid) {
      const Codebook& book = *cached_codebook(b1, b2, P, 1.0);
      double min_d = std::sqrt(std::log2(P) * std::pow(P, b2));
      CHECK(book.min_distance == doctest::Approx(min_d).epsilon(1e-12));
      REQUIRE_FALSE(book.points.empty());
      for (std::size_t i = 0; i + 1 < book.points.size(); ++i) {
        CHECK(book.points[i + 1] - book.points[i] >= book.min_distance - 1e-9);
      }
      // Index width covers the level count and is minimal.
      std::size_t n = book.points.size();
      CHECK((std::size_t(1) << book.index_width) >= n);
      if (n > 1) CHECK((std::size_t(1) << (book.index_width - 1)) < n);
      if (n == 1) CHECK(book.index_width == 0);
      CHECK(book.degenerate == (n <= 1));
      CHECK(book.boundaries.size() == n - 1);
    }
  }
}

TEST_CASE("codebook build errors") {
  CHECK_THROWS_AS(build_codebook(0.5, 0.6, 1e4, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_codebook(1.0, -0.1, 1e4, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_codebook(1.0, 0.5, 1.5, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_codebook(1.0, 0.5, 1e4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_codebook(1.0, 0.5, 1e4, 1.5), std::invalid_argument);
}

TEST_CASE("quantize basics") {
  const Codebook& book = *cached_codebook(1.0, 0.5, 1e6, 1.0);
  REQUIRE(book.points.size() > 2);
  // Exact level inputs reproduce themselves.
  for (double level : book.points) {
    auto q = book.quantize(level);
    CHECK(q.level == level);
  }
  // Overload clamps to the extreme levels.
  CHECK(book.quantize(1e300).level == book.points.back());
  CHECK(book.quantize(-1e300).level == book.points.front());
  CHECK_THROWS_AS(book.quantize(std::nan("")), std::invalid_argument);
  // Idempotence: requantizing a level is a fixed point.
  Rng rng = make_rng(123);
  for (int t = 0; t < 1000; ++t) {
    double x = complex_gaussian(rng, 2.0 * 1e6).real();
    auto q1 = book.quantize(x);
    auto q2 = book.quantize(q1.level);
    CHECK(q2.level == q1.level);
    CHECK(q2.index == q1.index);
  }
}

TEST_CASE("quantize gaussian distortion") {
  // Monte Carlo distortion against the analytic value and the design bound.
  const double P = std::pow(2.0, 20);
  const Codebook& book = *cached_codebook(1.0, 0.5, P, 1.0);
  Rng rng = make_rng(7);
  double acc = 0;
  const int n = 20000;
  for (int t = 0; t < n; ++t) {
    double x = complex_gaussian(rng, 2.0 * P).real();
    acc += std::pow(x - book.quantize(x).level, 2.0);
  }
  double bound = 4.0 * std::log2(P) * std::pow(P, 0.5);
  CHECK(acc / n <= bound);
  CHECK(acc / n == doctest::Approx(book.gaussian_mse(P)).epsilon(0.1));
}

TEST_CASE("analytic distortion bound on the grid") {
  for (auto [b1, b2] : kBetaGrid) {
    for (double P : kPowerGrid) {
      const Codebook& book = *cached_codebook(b1, b2, P, 1.0);
      CHECK(book.gaussian_mse(std::pow(P, b1)) <= 4.0 * std::log2(P) * std::pow(P, b2));
    }
  }
  // Frozen spot value for the acceptance pair.
  const Codebook& book = *cached_codebook(1.0, 0.5, 1e8, 1.0);
  CHECK(book.points.size() == 19);
  CHECK(book.index_width == 5);
  CHECK(book.gaussian_mse(1e8) == doctest::Approx(685206.571).epsilon(1e-6));
}

TEST_CASE("quantize_complex") {
  const Codebook& book = *cached_codebook(1.0, 0.0, 1e2, 1.0);
  REQUIRE(book.points.size() == 3);
  // Zero is a level of every odd-sized symmetric book.
  auto q0 = book.quantize_complex({0.0, 0.0});
  CHECK(q0.level == std::complex<double>{0.0, 0.0});
  // Both parts at levels reproduce exactly, and bits round-trip.
  std::complex<double> z{book.points.front(), book.points.back()};
  auto q = book.quantize_complex(z);
  CHECK(q.level == z);
  CHECK(q.bits.width == 2 * book.index_width);
  CHECK(book.level_from_bits(q.bits) == q.level);
  CHECK_THROWS_AS(book.level_from_bits(Payload::make(0, 2 * book.index_width + 1)),
                  std::invalid_argument);
  // Complex distortion is bounded by twice the per-dimension bound.
  const Codebook& wide = *cached_codebook(1.0, 0.5, 1e6, 1.0);
  Rng rng = make_rng(17);
  double acc = 0;
  const int n = 5000;
  for (int t = 0; t < n; ++t) {
    std::complex<double> x = complex_gaussian(rng, 2.0 * 1e6);
    acc += std::norm(x - wide.quantize_complex(x).level);
  }
  CHECK(acc / n <= 2.0 * 4.0 * std::log2(1e6) * std::pow(1e6, 0.5));
}

TEST_CASE("agreement probability") {
  // Zero noise always agrees (P^beta2 underflows to exactly 0).
  const Codebook& book = *cached_codebook(1.0, 0.5, 1e8, 1.0);
  Rng rng = make_rng(1);
  CHECK(agreement_probability(book, -400.0, 1e8, 200, rng) == 1.0);
  // Feedback operating point: signal P, noise P^0.5.
  rng = make_rng(derive_seed(99, 3, 0));
  double agree = agreement_probability(book, 0.5, 1e8, 10000, rng);
  CHECK(agree >= 0.9);
  CHECK(agree <= 1.0);
}

TEST_CASE("codebook json dump") {
  const Codebook& book = *cached_codebook(1.0, 0.5, 1e4, 1.0);
  nlohmann::json j = nlohmann::json::parse(book.to_json());
  CHECK(j["beta1"] == 1.0);
  CHECK(j["beta2"] == 0.5);
  CHECK(j["points"].size() == book.points.size());
  CHECK(j["index_width"] == book.index_width);
}

TEST_CASE("uniform quantizer") {
  UniformQuantizer q = UniformQuantizer::over_sigma(2.0, 3);
  CHECK(q.range == 10.0);
  CHECK(q.levels == 8);
  // Levels round-trip and overload clamps.
  for (std::uint64_t i = 0; i < 8; ++i) {
    double level = q.level_from_index(i);
    CHECK(q.quantize(level).index == i);
  }
  CHECK(q.quantize(1e9).index == 7);
  CHECK(q.quantize(-1e9).index == 0);
  CHECK(q.level_from_index(99) == q.level_from_index(7));
  // Zero bits degenerates to the single level 0.
  UniformQuantizer z = UniformQuantizer::over_sigma(3.0, 0);
  CHECK(z.levels == 1);
  CHECK(z.quantize(5.0).level == 0.0);
  CHECK_THROWS_AS(UniformQuantizer::over_sigma(1.0, -1), std::invalid_argument);
  CHECK_THROWS_AS(UniformQuantizer::over_sigma(-1.0, 2), std::invalid_argument);
}

TEST_CASE("two-step quantizer layout") {
  // alpha = 0.25, P = 2^16: coarse book (0.75, 0.25) at 2 bits per dimension.
  TwoStepSpec s = two_step_spec(0.25, 65536.0, 1.0);
  CHECK(s.two_stage);
  CHECK(s.coarse->rate_bits_per_dim == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(s.coarse->index_width == 2);
  CHECK(s.coarse_width == 4);
  CHECK(s.fine_width == 4);
  CHECK(s.combined_width() == 8);
  // Case split: single stage at exactly 1/2 and above.
  CHECK_FALSE(two_step_spec(0.5, 1e6, 1.0).two_stage);
  CHECK(two_step_spec(0.49, 1e6, 1.0).two_stage);
  CHECK_FALSE(two_step_spec(0.75, 1e6, 1.0).two_stage);
  CHECK_THROWS_AS(two_step_spec(-0.1, 1e6, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(two_step_spec(0.25, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("two-step degenerate endpoint") {
  // alpha = 1: interference already at the noise floor; zero bits.
  TwoStepSpec s = two_step_spec(1.0, 1e6, 1.0);
  CHECK(s.combined_width() == 0);
  Rng rng = make_rng(3);
  for (int t = 0; t < 100; ++t) {
    std::complex<double> i = complex_gaussian(rng, 1.0);
    QuantizedInterference q = two_step_quantize(s, i);
    CHECK(q.combined == std::complex<double>{0.0, 0.0});
    CHECK(q.all_bits().width == 0);
  }
}

TEST_CASE("two-step reconstruction round trip") {
  for (double alpha : {0.25, 0.6}) {
    TwoStepSpec s = two_step_spec(alpha, 1e6, 1.0);
    Rng rng = make_rng(11);
    for (int t = 0; t < 500; ++t) {
      std::complex<double> i = complex_gaussian(rng, std::pow(1e6, 1.0 - alpha));
      QuantizedInterference q = two_step_quantize(s, i);
      CHECK(q.all_bits().width == s.combined_width());
      CHECK(interference_from_bits(s, q.coarse_bits, q.fine_bits) == q.combined);
    }
    CHECK_THROWS_AS(interference_from_bits(s, Payload::make(0, s.coarse_width),
                                           Payload::make(0, s.fine_width + 1)),
                    std::invalid_argument);
  }
  // The convenience overload matches the explicit-layout one.
  std::complex<double> i{350.0, -120.0};
  CHECK(two_step_quantize(i, 0.25, 1e6, 1.0).combined ==
        two_step_quantize(two_step_spec(0.25, 1e6, 1.0), i).combined);
}

TEST_CASE("two-step residual stays at the noise floor") {
  // Fitted exponent of E|i - combined|^2 across the power grid; the design
  // target is 0 (no growth), tolerance +-0.1.
  std::vector<std::pair<double, double>> pts;
  for (double P : {1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8}) {
    TwoStepSpec spec = two_step_spec(0.25, P, 1.0);
    Rng rng = make_rng(derive_seed(7, 25, static_cast<std::uint64_t>(std::log10(P))));
    double acc = 0;
    const int n = 2000;
    for (int t = 0; t < n; ++t) {
      std::complex<double> i = complex_gaussian(rng, std::pow(P, 0.75));
      acc += std::norm(i - two_step_quantize(spec, i).combined);
    }
    pts.emplace_back(P, std::log2(acc / n));
  }
  SlopeFit fit = estimate_slope(pts);
  CHECK(std::abs(fit.slope) <= 0.1);
}

TEST_CASE("receiver requantization") {
  TwoStepSpec s = two_step_spec(0.25, 1e8, 1.0);
  Rng rng = make_rng(derive_seed(11, 8, 0));
  int match = 0;
  const int n = 1000;
  for (int t = 0; t < n; ++t) {
    std::complex<double> i = complex_gaussian(rng, std::pow(1e8, 0.75));
    QuantizedInterference tx = two_step_quantize(s, i);
    // Zero residue matches exactly.
    Payload clean = receiver_requantize(s, i);
    CHECK(clean.bits == tx.coarse_bits.bits);
    // An O(P^alpha) residue still matches with high probability.
    std::complex<double> y = i + complex_gaussian(rng, std::pow(1e8, 0.25));
    Payload rx = receiver_requantize(s, y);
    if (rx.bits == tx.coarse_bits.bits && rx.width == tx.coarse_bits.width) ++match;
  }
  CHECK(match >= 900);
  CHECK_THROWS_AS(receiver_requantize(two_step_spec(0.75, 1e6, 1.0), {0, 0}),
                  std::invalid_argument);
}

// SPDX-License-Identifier: Apache-2.0
#include "qmat/schedule.hpp"

#include <stdexcept>

#include "json.hpp"

namespace qmat {

namespace {

void check_k(int K) {
  if (K < 1 || K > 8) throw std::invalid_argument("K must lie in [1, 8]");
}

void check_alpha(const Rational& alpha) {
  if (alpha < Rational(0) || alpha > Rational(1)) {
    throw std::invalid_argument("alpha must lie in [0, 1]");
  }
}

// Size-j subsets of {1..K} in lexicographic order of their element lists.
std::vector<std::uint32_t> subsets_lex(int K, int j) {
  std::vector<std::uint32_t> out;
  std::vector<int> idx(j);
  for (int i = 0; i < j; ++i) idx[i] = i + 1;
  while (true) {
    std::uint32_t mask = 0;
    for (int v : idx) mask |= 1u << (v - 1);
    out.push_back(mask);
    int i = j - 1;
    while (i >= 0 && idx[i] == K - (j - 1 - i)) --i;
    if (i < 0) break;
    ++idx[i];
    for (int t = i + 1; t < j; ++t) idx[t] = idx[t - 1] + 1;
  }
  return out;
}

}  // namespace

std::vector<int> SlotId::users() const {
  std::vector<int> out;
  for (int k = 1; k <= 32; ++k) {
    if ((user_set >> (k - 1)) & 1u) out.push_back(k);
  }
  return out;
}

int SlotId::set_size() const { return __builtin_popcount(user_set); }

long long factorial(int n) {
  if (n < 0) throw std::invalid_argument("factorial of negative argument");
  long long f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

long long binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  long long c = 1;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

Rational harmonic(int K) {
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  Rational h(0);
  for (int k = 1; k <= K; ++k) h += Rational(1, k);
  return h;
}

Rational dof_qmat(int K, const Rational& alpha) {
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  check_alpha(alpha);
  return (Rational(1) - alpha) * Rational(K) / harmonic(K) + alpha * Rational(K);
}

DofBaselines dof_baselines(int K, const Rational& alpha) {
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  check_alpha(alpha);
  DofBaselines d;
  d.mat = Rational(K) / harmonic(K);
  d.zf = Rational(1) + Rational(K - 1) * alpha;
  d.tdma = Rational(1);
  return d;
}

RateExponents rate_exponents(const Rational& alpha) {
  check_alpha(alpha);
  RateExponents e;
  e.qmat = Rational(1) - alpha;
  e.auxiliary = std::min(alpha, Rational(1) - alpha);
  e.zf = alpha;
  return e;
}

PhaseBudget symbol_budget(int K, int j) {
  check_k(K);
  if (j < 1 || j > K) throw std::invalid_argument("phase out of [1, K]");
  PhaseBudget b;
  b.transmitted = (K - j + 1) * binomial(K, j);
  b.generated = static_cast<long long>(j) * binomial(K, j + 1);
  b.aux_per_slot = K - j;
  return b;
}

Schedule build_round_schedule(int K, int rounds) {
  check_k(K);
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  Schedule s;
  s.K = K;
  s.rounds = rounds;
  s.budgets.resize(K);
  s.repetitions.resize(K);
  for (int j = 1; j <= K; ++j) {
    s.budgets[j - 1] = symbol_budget(K, j);
    s.repetitions[j - 1] = factorial(j - 1) * factorial(K - j);
  }
  for (int round = 1; round <= rounds; ++round) {
    for (int j = 1; j <= K; ++j) {
      auto sets = subsets_lex(K, j);
      for (long long rep = 1; rep <= s.repetitions[j - 1]; ++rep) {
        for (std::uint32_t mask : sets) {
          s.slots.push_back(SlotId{round, j, static_cast<int>(rep), mask});
        }
      }
    }
  }
  return s;
}

long long Schedule::phase_slots_per_round(int phase) const {
  if (phase < 1 || phase > K) throw std::invalid_argument("phase out of [1, K]");
  return repetitions[phase - 1] * binomial(K, phase);
}

long long Schedule::slots_per_round() const {
  long long total = 0;
  for (int j = 1; j <= K; ++j) total += phase_slots_per_round(j);
  return total;
}

long long Schedule::order1_per_round() const {
  return repetitions[0] * budgets[0].transmitted;
}

Rational dof_from_schedule(int K, const Rational& alpha) {
  check_alpha(alpha);
  Schedule s = build_round_schedule(K, 1);
  long long slots = static_cast<long long>(s.slots.size());
  Rational order1_bits = Rational(s.order1_per_round()) * (Rational(1) - alpha);
  Rational zf_bits = Rational(slots) * Rational(K) * alpha;
  return (order1_bits + zf_bits) / Rational(slots);
}

std::string Schedule::to_json(const Rational& alpha) const {
  nlohmann::json j;
  j["K"] = K;
  j["rounds"] = rounds;
  auto rational_str = [](const Rational& r) {
    return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
  };
  RateExponents e = rate_exponents(alpha);
  j["rate_exponents"] = {{"qmat", rational_str(e.qmat)},
                         {"auxiliary", rational_str(e.auxiliary)},
                         {"zf", rational_str(e.zf)}};
  j["repetitions"] = repetitions;
  nlohmann::json budgets_json = nlohmann::json::array();
  for (int phase = 1; phase <= K; ++phase) {
    const PhaseBudget& b = budgets[phase - 1];
    budgets_json.push_back({{"phase", phase},
                            {"transmitted", b.transmitted},
                            {"generated", b.generated},
                            {"aux_per_slot", b.aux_per_slot},
                            {"slots_per_round", phase_slots_per_round(phase)}});
  }
  j["budgets"] = budgets_json;
  nlohmann::json slots_json = nlohmann::json::array();
  for (const SlotId& slot : slots) {
    slots_json.push_back({{"round", slot.round},
                          {"phase", slot.phase},
                          {"repetition", slot.repetition},
                          {"users", slot.users()}});
  }
  j["slots"] = slots_json;
  return j.dump(2);
}

}  // namespace qmat

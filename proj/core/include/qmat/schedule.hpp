// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qmat/rational.hpp"

namespace qmat {

enum class SymbolKind { Qmat, Auxiliary, Zf };

// One transmission slot: round-major, phase-major, repetition-major, set in
// lexicographic order. Users are numbered 1..K; user_set is a bitmask with
// bit (k-1) for user k.
struct SlotId {
  int round = 1;       // 1-based
  int phase = 1;       // j in [1, K]
  int repetition = 1;  // 1-based, <= n_j
  std::uint32_t user_set = 0;

  std::vector<int> users() const;
  bool contains(int user) const { return (user_set >> (user - 1)) & 1u; }
  int set_size() const;
};

// Per-execution symbol counts for one phase (an execution spans C(K,j) slots).
struct PhaseBudget {
  long long transmitted = 0;   // order-j symbols sent: (K-j+1)*C(K,j)
  long long generated = 0;     // order-(j+1) symbols created: j*C(K,j+1)
  long long aux_per_slot = 0;  // auxiliary symbols per slot: K-j
};

struct RateExponents {
  Rational qmat;       // 1 - alpha
  Rational auxiliary;  // min(alpha, 1 - alpha)
  Rational zf;         // alpha
};

struct Schedule {
  int K = 1;
  int rounds = 1;
  std::vector<SlotId> slots;            // all rounds, deterministic order
  std::vector<PhaseBudget> budgets;     // indexed by phase-1
  std::vector<long long> repetitions;   // n_j = (j-1)!*(K-j)!, indexed by phase-1

  long long slots_per_round() const;
  long long phase_slots_per_round(int phase) const;  // n_j * C(K,j) = K!/j
  long long order1_per_round() const;                // n_1 * budgets[0].transmitted

  std::string to_json(const Rational& alpha) const;
};

long long binomial(int n, int k);
long long factorial(int n);

Rational harmonic(int K);
Rational dof_qmat(int K, const Rational& alpha);

struct DofBaselines {
  Rational mat;
  Rational zf;
  Rational tdma;
};

DofBaselines dof_baselines(int K, const Rational& alpha);

RateExponents rate_exponents(const Rational& alpha);

Schedule build_round_schedule(int K, int rounds);

// Same DoF recomputed by counting symbols off the materialized schedule;
// must equal dof_qmat exactly.
Rational dof_from_schedule(int K, const Rational& alpha);

PhaseBudget symbol_budget(int K, int j);

}  // namespace qmat

// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "qmat/engine.hpp"

using namespace qmat;

namespace {
SimParams sinr_params(int K, double alpha, double P, int rounds, std::uint64_t seed) {
  SimParams p;
  p.K = K;
  p.M = K;
  p.P = P;
  p.alpha = alpha;
  p.rounds = rounds;
  p.mode = FidelityMode::SinrExponent;
  p.seed = seed;
  return p;
}

std::vector<int> complement_users(const SlotId& sid, int K) {
  std::vector<int> out;
  for (int k = 1; k <= K; ++k) {
    if (!sid.contains(k)) out.push_back(k);
  }
  return out;
}
}

TEST_CASE("payload helpers") {
  Payload a = Payload::make(0b1011, 4);
  Payload b = Payload::make(0b01, 2);
  CHECK(a.width == 4);
  CHECK(a.bits == 0b1011u);
  Payload c = a.concat(b);
  CHECK(c.width == 6);
  CHECK(c.bits == 0b101101u);
  CHECK(c.high(4) == 0b1011u);
  CHECK(c.low(2) == 0b01u);
  CHECK(c.high_payload(4) == a);
  CHECK(c.low_payload(2) == b);
  Payload p = b.padded_to(4);
  CHECK(p.width == 4);
  CHECK(p.bits == 0b01u);
  CHECK((a ^ p).bits == 0b1010u);
  CHECK((a ^ a).bits == 0u);
  CHECK_THROWS_AS(Payload::make(0, 63), std::invalid_argument);
  CHECK_THROWS_AS(Payload::make(0b100, 2), std::invalid_argument);
  CHECK_THROWS_AS(a ^ b, std::invalid_argument);
  CHECK_THROWS_AS(a.padded_to(2), std::invalid_argument);
}

TEST_CASE("xor order symbols") {
  Payload b1 = Payload::make(0b1100, 4);
  Payload b2 = Payload::make(0b0110, 4);
  Payload b3 = Payload::make(0b01, 2);
  auto pair = generate_order_symbols({1, 2}, {b1, b2});
  REQUIRE(pair.size() == 1);
  CHECK(pair[0].bits == (b1.bits ^ b2.bits));
  CHECK(pair[0].width == 4);
  // Uneven widths pad to the widest member; one known member unchains the rest.
  auto triple = generate_order_symbols({1, 2, 3}, {b1, b2, b3});
  REQUIRE(triple.size() == 2);
  CHECK(triple[0].bits == (b1.bits ^ b2.bits));
  CHECK(triple[1].bits == (b2.bits ^ b3.padded_to(4).bits));
  CHECK((triple[1] ^ b3.padded_to(4)).bits == b2.bits);
  CHECK_THROWS_AS(generate_order_symbols({1}, {b1}), std::invalid_argument);
  CHECK_THROWS_AS(generate_order_symbols({1, 2}, {b1}), std::invalid_argument);
  CHECK_THROWS_AS(generate_order_symbols({2, 1}, {b1, b2}), std::invalid_argument);
}

TEST_CASE("assemble phase signal") {
  SlotContext ctx;
  ctx.K = 2;
  ctx.phase = 1;
  ctx.P = 1e4;
  ctx.alpha = 0.5;
  ctx.V = Eigen::MatrixXcd::Identity(2, 2);
  ctx.user_zf = {Eigen::VectorXcd::Unit(2, 0), Eigen::VectorXcd::Unit(2, 1)};

  SymbolRecord q1, q2, aux;
  q1.id = 0;
  q1.kind = SymbolKind::Qmat;
  q1.position = 1;
  q1.power_exponent = 1.0;
  q1.value = {1.0, 0.0};
  q2 = q1;
  q2.id = 1;
  q2.position = 2;
  q2.power_exponent = 0.5;
  q2.value = {0.0, 1.0};
  aux.id = 2;
  aux.kind = SymbolKind::Auxiliary;
  aux.destined_set = 1u << 1;  // user 2
  aux.power_exponent = 1.0;
  aux.value = {-1.0, 0.0};

  ctx.qmat = {&q1, &q2};
  ctx.aux = {&aux};
  AssembledSlot slot = assemble_phase_signal(ctx);
  REQUIRE(slot.parts.size() == 3);
  // x is the value-weighted sum of the parts.
  Eigen::VectorXcd sum = Eigen::VectorXcd::Zero(2);
  sum += slot.parts[0].second * q1.value;
  sum += slot.parts[1].second * q2.value;
  sum += slot.parts[2].second * aux.value;
  CHECK((slot.x - sum).norm() <= 1e-12 * (1.0 + slot.x.norm()));
  // Two power-1 streams (position 1 and the auxiliary): parts carry
  // sqrt(P^e)/sqrt(2) on unit beams.
  CHECK(slot.parts[0].second.norm() == doctest::Approx(std::sqrt(1e4 / 2.0)).epsilon(1e-12));
  CHECK(slot.parts[1].second.norm() == doctest::Approx(std::sqrt(1e2 / 2.0)).epsilon(1e-12));
  CHECK(slot.parts[2].second.norm() == doctest::Approx(std::sqrt(1e4 / 2.0)).epsilon(1e-12));

  ctx.qmat = {&q1};
  CHECK_THROWS_AS(assemble_phase_signal(ctx), std::invalid_argument);
  ctx.qmat = {&q1, &q2};
  ctx.aux = {};
  CHECK_THROWS_AS(assemble_phase_signal(ctx), std::invalid_argument);
  ctx.aux = {&aux};
  ctx.zf = {&q1};  // 0 or K beams, never 1
  CHECK_THROWS_AS(assemble_phase_signal(ctx), std::invalid_argument);
}

TEST_CASE("transcript follows the schedule") {
  const int K = 3, rounds = 3;
  Engine eng(sinr_params(K, 0.5, 1e6, rounds, 5));
  const Transcript& tr = eng.run();
  CHECK(tr.slots.size() == 33);
  CHECK(tr.slots_per_round() == 11);
  for (const SlotRecord& sr : tr.slots) {
    const int j = sr.slot.phase;
    const bool final_round = sr.slot.round == rounds;
    CHECK(sr.qmat_ids.size() == (final_round ? 0u : static_cast<std::size_t>(K - j + 1)));
    CHECK(sr.aux_ids.size() == static_cast<std::size_t>(K - j));
    CHECK(sr.zf_ids.size() == static_cast<std::size_t>(K));
    CHECK(sr.parts.size() == sr.qmat_ids.size() + sr.aux_ids.size() + sr.zf_ids.size());
    CHECK(sr.received.size() == static_cast<std::size_t>(K));
    CHECK(sr.x.size() == K);

    // Auxiliary symbols are destined to the complement users, ascending.
    std::vector<int> victims = complement_users(sr.slot, K);
    REQUIRE(sr.aux_ids.size() == victims.size());
    for (std::size_t i = 0; i < victims.size(); ++i) {
      CHECK(tr.symbol(sr.aux_ids[i]).destined_user() == victims[i]);
    }
    for (std::size_t i = 0; i < sr.zf_ids.size(); ++i) {
      CHECK(tr.symbol(sr.zf_ids[i]).destined_user() == static_cast<int>(i) + 1);
    }
    // Qmat symbols sit in position order with order == |destined set|.
    for (std::size_t i = 0; i < sr.qmat_ids.size(); ++i) {
      const SymbolRecord& sym = tr.symbol(sr.qmat_ids[i]);
      CHECK(sym.position == static_cast<int>(i) + 1);
      CHECK(sym.order == sr.slot.set_size());
      if (i == 0) {
        CHECK(sym.power_exponent == 1.0);
      } else {
        CHECK(sym.power_exponent == doctest::Approx(0.5));
      }
    }
  }
}

TEST_CASE("received samples decompose exactly") {
  for (FidelityMode mode : {FidelityMode::SinrExponent, FidelityMode::BitTrue}) {
    SimParams p = sinr_params(3, 0.5, 1e6, 2, 11);
    p.mode = mode;
    Engine eng(p);
    const Transcript& tr = eng.run();
    for (const SlotRecord& sr : tr.slots) {
      for (const ReceivedSample& rs : sr.received) {
        std::complex<double> sum = rs.noise;
        for (const auto& [id, c] : rs.components) sum += c;
        CHECK(std::abs(rs.y - sum) <= 1e-9 * (1.0 + std::abs(rs.y)));
        CHECK(rs.components.size() == sr.parts.size());
      }
    }
  }
}

TEST_CASE("interference records reconstruct from delayed csit") {
  const int K = 3, rounds = 2;
  Engine eng(sinr_params(K, 0.5, 1e4, rounds, 19));
  const Transcript& tr = eng.run();
  long expected = 0;
  for (const SlotRecord& sr : tr.slots) {
    if (sr.slot.round == rounds) continue;  // final round feeds nothing back
    std::vector<int> victims = complement_users(sr.slot, K);
    expected += static_cast<long>(victims.size());
    const Eigen::MatrixXcd& H = tr.ledger.state(sr.slot_index).H;
    for (int v : victims) {
      const InterferenceRecord& rec = tr.record(sr.slot_index, v);
      CHECK(rec.victim == v);
      // Qmat plus non-victim auxiliary contributions.
      std::complex<double> i{0, 0};
      for (const auto& [id, part] : sr.parts) {
        const SymbolRecord& sym = tr.symbol(id);
        bool counts = sym.kind == SymbolKind::Qmat ||
                      (sym.kind == SymbolKind::Auxiliary && sym.destined_user() != v);
        if (!counts) continue;
        i += stream_gain(H.row(v - 1), part) * sym.value;
      }
      CHECK(std::abs(rec.i - i) <= 1e-12 * (1.0 + std::abs(rec.i)));
      // Recomputing reproduces the stored record bit for bit.
      InterferenceRecord again = eng.compute_interference(sr.slot_index, v);
      CHECK(again.i == rec.i);
    }
  }
  CHECK(tr.interference.size() == static_cast<std::size_t>(expected));
  // The last slot's true CSI never ages out during the run.
  CHECK_THROWS_AS(eng.compute_interference(static_cast<long>(tr.slots.size()) - 1, 1),
                  DelayedCsitViolation);
}

TEST_CASE("auxiliary chain carries the previous round") {
  Engine eng(sinr_params(3, 0.25, 1e6, 3, 23));
  const Transcript& tr = eng.run();
  long spr = tr.slots_per_round();
  REQUIRE(tr.qspec.fine_width > 0);
  for (const auto& [id, sym] : tr.symbols) {
    if (sym.kind != SymbolKind::Auxiliary) continue;
    if (sym.slot.round == 1) {
      // Round-1 auxiliaries carry protocol-known zeros.
      CHECK(sym.payload.bits == 0u);
      CHECK(sym.payload.width == tr.qspec.fine_width);
      CHECK(sym.source_slot_index == -1);
    } else {
      CHECK(sym.source_slot_index == sym.slot_index - spr);
      CHECK(sym.source_victim == sym.destined_user());
      const InterferenceRecord& rec = tr.record(sym.source_slot_index, sym.source_victim);
      Payload expect = generate_auxiliary(rec.quantized, tr.qspec);
      CHECK(sym.payload == expect);
    }
  }
}

TEST_CASE("order symbols xor the source records") {
  Engine eng(sinr_params(3, 0.5, 1e4, 3, 29));
  const Transcript& tr = eng.run();
  int seen = 0;
  for (const auto& [id, sym] : tr.symbols) {
    if (sym.kind != SymbolKind::Qmat || sym.order < 2) continue;
    REQUIRE(sym.xor_sources.size() == 2);
    Payload a = tr.record(sym.xor_sources[0].first, sym.xor_sources[0].second)
                    .quantized.all_bits();
    Payload b = tr.record(sym.xor_sources[1].first, sym.xor_sources[1].second)
                    .quantized.all_bits();
    int w = std::max(a.width, b.width);
    CHECK(sym.payload == (a.padded_to(w) ^ b.padded_to(w)));
    ++seen;
  }
  CHECK(seen > 0);
}

TEST_CASE("engine reproducibility") {
  SimParams p = sinr_params(2, 0.5, 1e4, 2, 100);
  Engine a(p), b(p);
  CHECK(a.run().to_json() == b.run().to_json());
  p.seed = 101;
  Engine c(p);
  CHECK(a.transcript().to_json() != c.run().to_json());
}

TEST_CASE("zf layer can be disabled") {
  Engine eng(sinr_params(3, 0.5, 1e4, 2, 7), Engine::Options{.zf_enabled = false});
  const Transcript& tr = eng.run();
  CHECK_FALSE(tr.zf_enabled);
  for (const SlotRecord& sr : tr.slots) CHECK(sr.zf_ids.empty());
  for (const auto& [id, sym] : tr.symbols) CHECK(sym.kind != SymbolKind::Zf);
}

TEST_CASE("single user degenerates to beamformed streams") {
  Engine eng(sinr_params(1, 0.5, 1e4, 2, 3));
  const Transcript& tr = eng.run();
  CHECK(tr.slots.size() == 2);
  CHECK(tr.slots[0].qmat_ids.size() == 1);
  CHECK(tr.slots[0].aux_ids.empty());
  DecodeState st = decode_user(tr, 1);
  CHECK(st.rate_sum(false, tr.params.rounds) > 0.0);
}

TEST_CASE("measure_sinr matches the received sample") {
  Engine eng(sinr_params(3, 0.5, 1e6, 2, 13));
  const Transcript& tr = eng.run();
  const SlotRecord& sr = tr.slots[0];
  long id = sr.qmat_ids[0];
  // Phase-1 qmat symbols are destined to the slot's single user.
  int user = 0;
  for (int k = 1; k <= 3; ++k) {
    if (tr.symbol(id).destined_set & (1u << (k - 1))) {
      user = k;
      break;
    }
  }
  REQUIRE(user >= 1);
  const ReceivedSample& rs = sr.received[user - 1];
  std::set<long> cancel;
  for (const auto& [other, c] : rs.components) {
    if (other != id) cancel.insert(other);
  }
  double sinr = measure_sinr(tr, id, user, cancel);
  double expect = std::norm(rs.component_of(id)) / std::norm(rs.noise);
  CHECK(sinr == doctest::Approx(expect).epsilon(1e-12));
  // Lowest-destined-user overload lands on the same observation.
  CHECK(measure_sinr(tr, id, cancel) == sinr);
  double partial = measure_sinr(tr, id, user, {});
  CHECK(partial <= sinr);
}

TEST_CASE("sinr decode counts served and zf streams") {
  const int rounds = 3;
  Engine eng(sinr_params(2, 0.5, 1e6, rounds, 41));
  const Transcript& tr = eng.run();
  for (int user = 1; user <= 2; ++user) {
    DecodeState st = decode_user(tr, user);
    int counted = 0;
    for (const SymbolOutcome& o : st.outcomes) {
      if (!o.counted) continue;
      ++counted;
      CHECK(o.attempted);
      CHECK(o.sinr >= 0.0);
      CHECK(std::isfinite(o.rate_bits));
      CHECK(o.rate_bits >= 0.0);
      const SymbolRecord& sym = tr.symbol(o.symbol_id);
      bool eligible = (sym.kind == SymbolKind::Qmat && sym.order == 1) ||
                      sym.kind == SymbolKind::Zf;
      CHECK(eligible);
      CHECK(sym.destined_set == (1u << (user - 1)));
    }
    // Two phase-1 qmat symbols per non-final round plus one zf stream in each
    // of the three slots of every round.
    CHECK(counted == 13);
    CHECK(st.rate_sum(false, rounds) > 0.0);
    CHECK(st.rate_sum(true, rounds) >= st.rate_sum(false, rounds));
  }
}

TEST_CASE("bit-true decoding recovers every payload at alpha 1") {
  for (unsigned seed : {1u, 2u, 3u}) {
    SimParams p = sinr_params(2, 1.0, std::pow(2.0, 40), 4, seed);
    p.mode = FidelityMode::BitTrue;
    p.backoff = 0.2;
    Engine eng(p);
    const Transcript& tr = eng.run();
    for (int user = 1; user <= 2; ++user) {
      DecodeState st = decode_user(tr, user);
      int checked = 0;
      for (const auto& [id, sym] : tr.symbols) {
        if (sym.slot.round >= p.rounds) continue;  // final round feeds nothing back
        if (sym.payload.width == 0) continue;
        if (!(sym.destined_set & (1u << (user - 1)))) continue;
        REQUIRE(st.recovered.count(id) == 1);
        CHECK(st.recovered.at(id) == sym.payload);
        ++checked;
      }
      CHECK(checked > 0);
    }
  }
}

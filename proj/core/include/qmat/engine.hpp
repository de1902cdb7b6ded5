// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <complex>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qmat/channel.hpp"
#include "qmat/modulation.hpp"
#include "qmat/payload.hpp"
#include "qmat/quantizer.hpp"
#include "qmat/rng.hpp"
#include "qmat/schedule.hpp"

namespace qmat {

// One transmitted stream. Qmat symbols occupy positions 1..K-j+1 of the
// common vector (position 1 at power P, the rest at P^{1-alpha}); auxiliary
// symbols ride per-user ZF beams at power P; ZF symbols ride per-user ZF
// beams at power P^alpha.
struct SymbolRecord {
  long id = -1;
  SymbolKind kind = SymbolKind::Qmat;
  std::uint32_t destined_set = 0;  // qmat: destined user set; aux/zf: single user bit
  SlotId slot;
  long slot_index = -1;
  int position = 0;  // 1..K-j+1 within the qmat vector, 0 otherwise
  int order = 0;     // |destined_set| for qmat symbols
  double rate_exponent = 0;
  double power_exponent = 0;
  Payload payload;                    // transported bits
  std::complex<double> value{0, 0};   // unit-average-power baseband value

  // Pipeline provenance. Auxiliary: the interference record it carries.
  // Order >= 2 qmat: the two (slot_index, victim) records XORed together.
  long source_slot_index = -1;
  int source_victim = 0;
  std::vector<std::pair<long, int>> xor_sources;

  int destined_user() const;  // single-user kinds only
};

struct ReceivedSample {
  SlotId slot;
  long slot_index = -1;
  int user = 0;
  std::complex<double> y{0, 0};
  // symbol id -> that stream's realized contribution h^H (part * value);
  // y = sum of components + noise.
  std::vector<std::pair<long, std::complex<double>>> components;
  std::complex<double> noise{0, 0};

  std::complex<double> component_sum() const;
  std::complex<double> component_of(long symbol_id) const;
};

struct InterferenceRecord {
  SlotId slot;
  long slot_index = -1;
  int victim = 0;
  std::complex<double> i{0, 0};  // exact, reconstructed under delayed CSIT
  QuantizedInterference quantized;
};

struct SlotRecord {
  SlotId slot;
  long slot_index = -1;
  Eigen::MatrixXcd V;                        // M x (K-j+1), [v_S | U_j]
  std::vector<Eigen::VectorXcd> user_zf;     // per-user ZF beams, index k-1
  // symbol id -> scaled precoding vector (power and 1/sqrt(c) included,
  // value excluded); x = sum over parts of vector * value.
  std::vector<std::pair<long, Eigen::VectorXcd>> parts;
  std::vector<long> qmat_ids;  // position order
  std::vector<long> aux_ids;   // destined user ascending
  std::vector<long> zf_ids;    // user 1..K
  Eigen::VectorXcd x;
  std::vector<ReceivedSample> received;  // index k-1
};

struct Transcript {
  SimParams params;
  bool zf_enabled = true;
  double rate_scale = 1.0;  // 1 in sinr-exponent mode, 1-backoff in bit-true
  Schedule schedule;
  TwoStepSpec qspec;
  std::map<long, SymbolRecord> symbols;
  std::vector<SlotRecord> slots;  // slot_index == position
  std::map<std::pair<long, int>, InterferenceRecord> interference;  // (slot, victim)
  CsitLedger ledger;

  const SymbolRecord& symbol(long id) const;
  const InterferenceRecord& record(long slot_index, int victim) const;
  long slots_per_round() const { return static_cast<long>(slots.size()) / params.rounds; }
  std::string to_json() const;
};

// Inputs for assembling one slot's transmit vector.
struct SlotContext {
  int K = 1;
  int phase = 1;
  double P = 1;
  double alpha = 0;
  bool final_round = false;
  bool zf_enabled = true;
  Eigen::MatrixXcd V;
  std::vector<Eigen::VectorXcd> user_zf;
  std::vector<const SymbolRecord*> qmat;  // position order; empty in final round
  std::vector<const SymbolRecord*> aux;   // one per victim, ascending
  std::vector<const SymbolRecord*> zf;    // users 1..K when enabled
};

struct AssembledSlot {
  Eigen::VectorXcd x;
  std::vector<std::pair<long, Eigen::VectorXcd>> parts;  // sum * value = x
};

// x = V*(scaled qmat values) + sum v_l a_l + sum v_k s_k, scaled by 1/sqrt(c)
// with c = number of power-exponent-1 streams, so E||x||^2 is order P.
// Throws std::invalid_argument when symbol counts do not match the phase
// budget (K-j+1 qmat, K-j auxiliary, K or 0 zf).
AssembledSlot assemble_phase_signal(const SlotContext& ctx);

// Shared single-stream arithmetic: every gain in the simulator (transmit
// side, receiver side, reconstruction) goes through this helper so repeated
// evaluations are bit-identical.
std::complex<double> stream_gain(const Eigen::RowVectorXcd& h_row,
                                 const Eigen::VectorXcd& part);

ReceivedSample receive(const Eigen::RowVectorXcd& h_row,
                       const std::vector<std::pair<long, Eigen::VectorXcd>>& parts,
                       std::complex<double> noise);

// XOR chain over the sorted members' quantized-interference bits, padded to
// the widest member: output l = bits[l] ^ bits[l+1].
std::vector<Payload> generate_order_symbols(const std::vector<int>& set_members,
                                            const std::vector<Payload>& member_bits);

// Bits loaded onto the auxiliary symbol for the next round: the second-stage
// bits when two-stage, the whole single-stage payload otherwise.
Payload generate_auxiliary(const QuantizedInterference& quantized, const TwoStepSpec& spec);

// |desired|^2 / (sum of non-cancelled |components|^2 + |noise|^2) at the
// given user's received sample for the symbol's slot.
double measure_sinr(const Transcript& transcript, long symbol_id, int user,
                    const std::set<long>& cancellation_set);
// Measures at the symbol's lowest destined user.
double measure_sinr(const Transcript& transcript, long symbol_id,
                    const std::set<long>& cancellation_set);

class Engine {
 public:
  struct Options {
    bool zf_enabled = true;
  };

  explicit Engine(const SimParams& params) : Engine(params, Options{}) {}
  Engine(const SimParams& params, Options options);

  // Executes rounds 1..params.rounds in order; returns the transcript.
  const Transcript& run();

  // Executes the next scheduled round (must be called in order).
  void run_round(int round);

  // Exact interference seen by `victim` in a completed slot, from delayed
  // CSIT; sums gain*value over qmat streams then non-victim auxiliary
  // streams, ids ascending. Throws DelayedCsitViolation while the slot's
  // true CSI is still current.
  InterferenceRecord compute_interference(long slot_index, int victim) const;

  const Transcript& transcript() const { return transcript_; }
  int next_round() const { return next_round_; }

 private:
  void exec_slot(const SlotId& sid);
  void drain_pending();
  void finish_repetition(int round, int phase, int repetition);
  Payload random_payload(int width);
  SymbolRecord& new_symbol(SymbolRecord proto);
  std::complex<double> symbol_value(const Payload& payload);

  SimParams params_;
  Options options_;
  Transcript transcript_;
  Rng rng_channel_, rng_value_, rng_precoder_;
  long next_symbol_id_ = 0;
  int next_round_ = 1;
  long next_slot_index_ = 0;
  // order-(j+1) payload queues per destined set, with XOR provenance
  std::map<std::uint32_t, std::vector<std::pair<Payload, std::vector<std::pair<long, int>>>>>
      order_queue_;
  std::map<std::uint32_t, std::size_t> order_queue_head_;
  std::vector<long> pending_interference_;
  // (round, phase, repetition) -> slots drained so far
  std::map<std::tuple<int, int, int>, int> drained_in_rep_;
  // (round, phase, repetition, set) -> slot index
  std::map<std::tuple<int, int, int, std::uint32_t>, long> slot_lookup_;
};

// Per-symbol decode outcome. `rate_bits` is log2(1+SINR) in sinr-exponent
// mode and the recovered payload width (0 on failure) in bit-true mode.
struct SymbolOutcome {
  long symbol_id = -1;
  SymbolKind kind = SymbolKind::Qmat;
  int order = 0;
  int round = 0;
  bool counted = false;  // order-1 qmat or zf symbol destined to this user
  int payload_bits = 0;
  double sinr = 0;
  double rate_bits = 0;
  bool predicate = false;  // log2(1+sinr) >= payload_bits
  bool success = false;    // bit-true: recovered == transmitted
  bool attempted = false;
};

struct DecodeState {
  int user = 0;
  std::vector<SymbolOutcome> outcomes;
  // quantized interference known at this user: (slot, victim) -> bits/value
  std::map<std::pair<long, int>, Payload> interference_bits;
  std::map<std::pair<long, int>, std::complex<double>> interference_values;
  // auxiliary contents known at this user, keyed by source record (the
  // round-(N+1) auxiliary for record (s,l) is looked up at key (s,l))
  std::map<std::pair<long, int>, Payload> aux_payloads;
  std::map<long, Payload> recovered;  // symbol id -> recovered bits (bit-true)
  long failures = 0;
  long attempted = 0;

  double rate_sum(bool include_final_round, int rounds) const;
};

// Runs the full inductive receiver for one user over a finished transcript:
// standalone auxiliary demodulation first, then rounds forward with phases
// K down to 1 (XOR unchaining, joint qmat solve, ZF by successive
// cancellation). Never throws on decode failures; they are recorded.
DecodeState decode_user(const Transcript& transcript, int user);

}  // namespace qmat

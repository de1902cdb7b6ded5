// SPDX-License-Identifier: Apache-2.0
#include "qmat/engine.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <tuple>

#include "json.hpp"
#include "qmat/precoding.hpp"

namespace qmat {

namespace {

int bits_for_rate(double rate_exponent, double P, double rate_scale) {
  return static_cast<int>(std::llround(rate_scale * rate_exponent * std::log2(P)));
}

const Eigen::VectorXcd& part_of(const SlotRecord& slot, long symbol_id) {
  for (const auto& [id, vec] : slot.parts) {
    if (id == symbol_id) return vec;
  }
  throw std::invalid_argument("symbol " + std::to_string(symbol_id) + " has no part in slot " +
                              std::to_string(slot.slot_index));
}

// Residual power of the quantized-interference estimate, used only to weight
// observation rows; order P^0 up to log factors.
double quantization_noise_proxy(const TwoStepSpec& spec) {
  auto uniform_mse = [](const UniformQuantizer& q) {
    if (q.bits == 0 || q.range <= 0.0) return 0.0;
    double step = 2.0 * q.range / static_cast<double>(q.levels);
    return step * step / 12.0;
  };
  double proxy = uniform_mse(spec.fine_re) + uniform_mse(spec.fine_im);
  if (proxy == 0.0) {
    if (spec.two_stage) {
      proxy = spec.coarse->gaussian_mse(std::pow(spec.P, 1.0 - spec.alpha));
    } else {
      proxy = std::pow(spec.P, 1.0 - spec.alpha);
    }
  }
  return std::max(1.0, proxy);
}

std::uint32_t complement_mask(std::uint32_t set, int K) {
  return (~set) & ((1u << K) - 1u);
}

}  // namespace

int SymbolRecord::destined_user() const {
  if (kind == SymbolKind::Qmat) {
    throw std::invalid_argument("qmat symbols are destined to a set, not a single user");
  }
  return __builtin_ctz(destined_set) + 1;
}

std::complex<double> ReceivedSample::component_sum() const {
  std::complex<double> sum{0, 0};
  for (const auto& [id, c] : components) sum += c;
  return sum;
}

std::complex<double> ReceivedSample::component_of(long symbol_id) const {
  for (const auto& [id, c] : components) {
    if (id == symbol_id) return c;
  }
  throw std::invalid_argument("symbol " + std::to_string(symbol_id) +
                              " not received in slot " + std::to_string(slot_index));
}

const SymbolRecord& Transcript::symbol(long id) const {
  auto it = symbols.find(id);
  if (it == symbols.end()) {
    throw std::invalid_argument("unknown symbol id " + std::to_string(id));
  }
  return it->second;
}

const InterferenceRecord& Transcript::record(long slot_index, int victim) const {
  auto it = interference.find({slot_index, victim});
  if (it == interference.end()) {
    throw std::invalid_argument("no interference record for slot " +
                                std::to_string(slot_index) + ", victim " +
                                std::to_string(victim));
  }
  return it->second;
}

std::complex<double> stream_gain(const Eigen::RowVectorXcd& h_row,
                                 const Eigen::VectorXcd& part) {
  return (h_row * part)(0, 0);
}

AssembledSlot assemble_phase_signal(const SlotContext& ctx) {
  const int K = ctx.K;
  const int j = ctx.phase;
  const std::size_t want_qmat = ctx.final_round ? 0 : static_cast<std::size_t>(K - j + 1);
  const std::size_t want_aux = static_cast<std::size_t>(K - j);
  if (ctx.qmat.size() != want_qmat) {
    throw std::invalid_argument("qmat symbol count does not match the phase budget");
  }
  if (ctx.aux.size() != want_aux) {
    throw std::invalid_argument("auxiliary symbol count does not match the phase budget");
  }
  if (!ctx.zf.empty() && ctx.zf.size() != static_cast<std::size_t>(K)) {
    throw std::invalid_argument("zf symbol count must be 0 or K");
  }
  if (!ctx.final_round && ctx.V.cols() != K - j + 1) {
    throw std::invalid_argument("qmat precoder must have K-j+1 columns");
  }
  if (ctx.user_zf.size() != static_cast<std::size_t>(K)) {
    throw std::invalid_argument("need one ZF beam per user");
  }

  int full_power_streams = 0;
  for (const SymbolRecord* s : ctx.qmat) {
    if (s->power_exponent == 1.0) ++full_power_streams;
  }
  full_power_streams += static_cast<int>(ctx.aux.size());
  const double inv_sqrt_c = 1.0 / std::sqrt(std::max(full_power_streams, 1));

  AssembledSlot out;
  const long m = ctx.V.rows() > 0 ? ctx.V.rows() : static_cast<long>(ctx.user_zf[0].size());
  out.x = Eigen::VectorXcd::Zero(m);
  auto add = [&](long id, const Eigen::VectorXcd& beam, double power_exponent,
                 std::complex<double> value) {
    Eigen::VectorXcd part = beam * (std::sqrt(std::pow(ctx.P, power_exponent)) * inv_sqrt_c);
    out.x += part * value;
    out.parts.emplace_back(id, std::move(part));
  };
  for (std::size_t pos = 0; pos < ctx.qmat.size(); ++pos) {
    const SymbolRecord* s = ctx.qmat[pos];
    add(s->id, ctx.V.col(static_cast<long>(pos)), s->power_exponent, s->value);
  }
  for (const SymbolRecord* s : ctx.aux) {
    add(s->id, ctx.user_zf[s->destined_user() - 1], s->power_exponent, s->value);
  }
  for (const SymbolRecord* s : ctx.zf) {
    add(s->id, ctx.user_zf[s->destined_user() - 1], s->power_exponent, s->value);
  }
  return out;
}

ReceivedSample receive(const Eigen::RowVectorXcd& h_row,
                       const std::vector<std::pair<long, Eigen::VectorXcd>>& parts,
                       std::complex<double> noise) {
  ReceivedSample r;
  r.noise = noise;
  std::complex<double> y = noise;
  for (const auto& [id, part] : parts) {
    if (h_row.cols() != part.size()) {
      throw std::invalid_argument("channel row and transmit part dimensions disagree");
    }
    std::complex<double> c = stream_gain(h_row, part);
    y += c;
    r.components.emplace_back(id, c);
  }
  r.y = y;
  return r;
}

std::vector<Payload> generate_order_symbols(const std::vector<int>& set_members,
                                            const std::vector<Payload>& member_bits) {
  if (set_members.size() != member_bits.size() || set_members.size() < 2) {
    throw std::invalid_argument("need one bit string per member and at least two members");
  }
  if (!std::is_sorted(set_members.begin(), set_members.end())) {
    throw std::invalid_argument("set members must be sorted ascending");
  }
  int max_width = 0;
  for (const Payload& p : member_bits) max_width = std::max(max_width, p.width);
  std::vector<Payload> padded;
  padded.reserve(member_bits.size());
  for (const Payload& p : member_bits) padded.push_back(p.padded_to(max_width));
  std::vector<Payload> out;
  out.reserve(padded.size() - 1);
  for (std::size_t l = 0; l + 1 < padded.size(); ++l) {
    out.push_back(padded[l] ^ padded[l + 1]);
  }
  return out;
}

Payload generate_auxiliary(const QuantizedInterference& quantized, const TwoStepSpec& spec) {
  if (quantized.fine_bits.width != spec.fine_width) {
    throw std::invalid_argument("quantized interference does not match the quantizer layout");
  }
  return quantized.fine_bits;
}

double measure_sinr(const Transcript& transcript, long symbol_id, int user,
                    const std::set<long>& cancellation_set) {
  const SymbolRecord& sym = transcript.symbol(symbol_id);
  const SlotRecord& slot = transcript.slots.at(static_cast<std::size_t>(sym.slot_index));
  const ReceivedSample& rs = slot.received.at(static_cast<std::size_t>(user - 1));
  double desired = 0.0;
  double interference = std::norm(rs.noise);
  bool found = false;
  for (const auto& [id, c] : rs.components) {
    if (id == symbol_id) {
      desired = std::norm(c);
      found = true;
    } else if (!cancellation_set.count(id)) {
      interference += std::norm(c);
    }
  }
  if (!found) {
    throw std::invalid_argument("symbol " + std::to_string(symbol_id) +
                                " not present in its slot's components");
  }
  return desired / interference;
}

double measure_sinr(const Transcript& transcript, long symbol_id,
                    const std::set<long>& cancellation_set) {
  const SymbolRecord& sym = transcript.symbol(symbol_id);
  int user = sym.kind == SymbolKind::Qmat ? __builtin_ctz(sym.destined_set) + 1
                                          : sym.destined_user();
  return measure_sinr(transcript, symbol_id, user, cancellation_set);
}

Engine::Engine(const SimParams& params, Options options)
    : params_(params), options_(options) {
  params_.validate();
  transcript_.params = params_;
  transcript_.zf_enabled = options_.zf_enabled;
  transcript_.rate_scale =
      params_.mode == FidelityMode::BitTrue ? 1.0 - params_.backoff : 1.0;
  transcript_.schedule = build_round_schedule(params_.K, params_.rounds);
  transcript_.qspec = two_step_spec(params_.alpha, params_.P, transcript_.rate_scale);
  rng_channel_ = make_rng(derive_seed(params_.seed, 1, 0));
  rng_value_ = make_rng(derive_seed(params_.seed, 2, 0));
  rng_precoder_ = make_rng(derive_seed(params_.seed, 3, 0));
}

const Transcript& Engine::run() {
  while (next_round_ <= params_.rounds) run_round(next_round_);
  return transcript_;
}

void Engine::run_round(int round) {
  if (round != next_round_ || round > params_.rounds) {
    throw std::invalid_argument("rounds must be executed in order");
  }
  const long spr = transcript_.schedule.slots_per_round();
  const long begin = static_cast<long>(round - 1) * spr;
  for (long i = begin; i < begin + spr; ++i) {
    exec_slot(transcript_.schedule.slots.at(static_cast<std::size_t>(i)));
  }
  // Every order-symbol payload produced within a round is consumed by the
  // next phase of the same round; a leftover means broken flow balance.
  for (const auto& [set, queue] : order_queue_) {
    if (order_queue_head_[set] != queue.size()) {
      throw std::runtime_error("order-symbol flow imbalance after round " +
                               std::to_string(round));
    }
  }
  ++next_round_;
}

Payload Engine::random_payload(int width) {
  if (width == 0) return Payload::make(0, 0);
  return Payload::make(rng_value_() >> (64 - width), width);
}

std::complex<double> Engine::symbol_value(const Payload& payload) {
  if (params_.mode == FidelityMode::BitTrue) {
    return Constellation::make(payload.width).modulate(payload);
  }
  return complex_gaussian(rng_value_, 1.0);
}

SymbolRecord& Engine::new_symbol(SymbolRecord proto) {
  proto.id = next_symbol_id_++;
  auto [it, inserted] = transcript_.symbols.emplace(proto.id, std::move(proto));
  return it->second;
}

void Engine::exec_slot(const SlotId& sid) {
  const int K = params_.K;
  const int j = sid.phase;
  const double P = params_.P;
  const double alpha = params_.alpha;
  const bool final_round = sid.round == params_.rounds;
  const long s = next_slot_index_++;
  const long spr = transcript_.schedule.slots_per_round();

  transcript_.ledger.advance(s, draw_channel(params_, rng_channel_));
  drain_pending();
  slot_lookup_[{sid.round, sid.phase, sid.repetition, sid.user_set}] = s;

  const ChannelSlotState& state = transcript_.ledger.state(s);
  const Eigen::MatrixXcd& H_hat = state.H_hat;
  const std::uint32_t bar = complement_mask(sid.user_set, K);

  SlotRecord slot;
  slot.slot = sid;
  slot.slot_index = s;

  // Precoders, drawn in a fixed order: the set beam, the common random
  // columns, then the per-user ZF beams.
  std::vector<Eigen::RowVectorXcd> excluded;
  for (int l = 1; l <= K; ++l) {
    if ((bar >> (l - 1)) & 1u) excluded.push_back(H_hat.row(l - 1));
  }
  Eigen::VectorXcd v_set = zf_beamformer(excluded, params_.M, rng_precoder_);
  slot.V.resize(params_.M, K - j + 1);
  slot.V.col(0) = v_set;
  if (K - j > 0) {
    slot.V.rightCols(K - j) = random_isotropic_columns(params_.M, K - j, rng_precoder_);
  }
  slot.user_zf.resize(K);
  for (int k = 1; k <= K; ++k) {
    excluded.clear();
    for (int l = 1; l <= K; ++l) {
      if (l != k) excluded.push_back(H_hat.row(l - 1));
    }
    slot.user_zf[k - 1] = zf_beamformer(excluded, params_.M, rng_precoder_);
  }

  SlotContext ctx;
  ctx.K = K;
  ctx.phase = j;
  ctx.P = P;
  ctx.alpha = alpha;
  ctx.final_round = final_round;
  ctx.zf_enabled = options_.zf_enabled;
  ctx.V = slot.V;
  ctx.user_zf = slot.user_zf;

  const double scale = transcript_.rate_scale;

  if (!final_round) {
    if (j == 1) {
      const int w1 = bits_for_rate(1.0 - alpha, P, scale);
      for (int pos = 1; pos <= K; ++pos) {
        SymbolRecord proto;
        proto.kind = SymbolKind::Qmat;
        proto.destined_set = sid.user_set;
        proto.slot = sid;
        proto.slot_index = s;
        proto.position = pos;
        proto.order = 1;
        proto.rate_exponent = 1.0 - alpha;
        proto.power_exponent = pos == 1 ? 1.0 : 1.0 - alpha;
        proto.payload = random_payload(w1);
        proto.value = symbol_value(proto.payload);
        slot.qmat_ids.push_back(new_symbol(std::move(proto)).id);
      }
    } else {
      auto& queue = order_queue_[sid.user_set];
      std::size_t& head = order_queue_head_[sid.user_set];
      for (int pos = 1; pos <= K - j + 1; ++pos) {
        if (head >= queue.size()) {
          throw std::runtime_error("sequencing error: no order-" + std::to_string(j) +
                                   " payload available for slot " + std::to_string(s));
        }
        auto [payload, sources] = queue[head++];
        SymbolRecord proto;
        proto.kind = SymbolKind::Qmat;
        proto.destined_set = sid.user_set;
        proto.slot = sid;
        proto.slot_index = s;
        proto.position = pos;
        proto.order = j;
        proto.rate_exponent = 1.0 - alpha;
        proto.power_exponent = pos == 1 ? 1.0 : 1.0 - alpha;
        proto.payload = payload;
        proto.value = symbol_value(proto.payload);
        proto.xor_sources = std::move(sources);
        slot.qmat_ids.push_back(new_symbol(std::move(proto)).id);
      }
    }
  }

  for (int l = 1; l <= K; ++l) {
    if (!((bar >> (l - 1)) & 1u)) continue;
    SymbolRecord proto;
    proto.kind = SymbolKind::Auxiliary;
    proto.destined_set = 1u << (l - 1);
    proto.slot = sid;
    proto.slot_index = s;
    proto.rate_exponent = std::min(alpha, 1.0 - alpha);
    proto.power_exponent = 1.0;
    if (sid.round == 1) {
      proto.payload = Payload::make(0, transcript_.qspec.fine_width);
    } else {
      proto.source_slot_index = s - spr;
      proto.source_victim = l;
      proto.payload =
          generate_auxiliary(transcript_.record(s - spr, l).quantized, transcript_.qspec);
    }
    proto.value = symbol_value(proto.payload);
    slot.aux_ids.push_back(new_symbol(std::move(proto)).id);
  }

  if (options_.zf_enabled) {
    const int wz = bits_for_rate(alpha, P, scale);
    for (int k = 1; k <= K; ++k) {
      SymbolRecord proto;
      proto.kind = SymbolKind::Zf;
      proto.destined_set = 1u << (k - 1);
      proto.slot = sid;
      proto.slot_index = s;
      proto.rate_exponent = alpha;
      proto.power_exponent = alpha;
      proto.payload = random_payload(wz);
      proto.value = symbol_value(proto.payload);
      slot.zf_ids.push_back(new_symbol(std::move(proto)).id);
    }
  }

  for (long id : slot.qmat_ids) ctx.qmat.push_back(&transcript_.symbols.at(id));
  for (long id : slot.aux_ids) ctx.aux.push_back(&transcript_.symbols.at(id));
  for (long id : slot.zf_ids) ctx.zf.push_back(&transcript_.symbols.at(id));

  AssembledSlot assembled = assemble_phase_signal(ctx);
  slot.x = std::move(assembled.x);
  slot.parts = std::move(assembled.parts);

  // Fold each stream's value into its part so received components carry the
  // realized contribution gain*value and y is exactly h*x + noise.
  std::vector<std::pair<long, Eigen::VectorXcd>> emitted;
  emitted.reserve(slot.parts.size());
  for (const auto& [id, part] : slot.parts) {
    emitted.emplace_back(id, part * transcript_.symbols.at(id).value);
  }
  slot.received.reserve(K);
  for (int k = 1; k <= K; ++k) {
    ReceivedSample rs = receive(state.H.row(k - 1), emitted, state.noise(k - 1));
    rs.slot = sid;
    rs.slot_index = s;
    rs.user = k;
    slot.received.push_back(std::move(rs));
  }

  transcript_.slots.push_back(std::move(slot));
  if (!final_round && j < K) pending_interference_.push_back(s);
}

void Engine::drain_pending() {
  const long horizon = transcript_.ledger.current_slot();
  std::vector<long> still_pending;
  for (long p : pending_interference_) {
    if (p >= horizon) {
      still_pending.push_back(p);
      continue;
    }
    const SlotRecord& sr = transcript_.slots.at(static_cast<std::size_t>(p));
    const std::uint32_t bar = complement_mask(sr.slot.user_set, params_.K);
    for (int l = 1; l <= params_.K; ++l) {
      if (!((bar >> (l - 1)) & 1u)) continue;
      transcript_.interference.insert({{p, l}, compute_interference(p, l)});
    }
    auto key = std::make_tuple(sr.slot.round, sr.slot.phase, sr.slot.repetition);
    int done = ++drained_in_rep_[key];
    if (done == binomial(params_.K, sr.slot.phase)) {
      finish_repetition(sr.slot.round, sr.slot.phase, sr.slot.repetition);
    }
  }
  pending_interference_ = std::move(still_pending);
}

void Engine::finish_repetition(int round, int phase, int repetition) {
  const int K = params_.K;
  if (phase >= K) return;
  // Every (phase+1)-subset turns the repetition's interference records into
  // an XOR chain of order-(phase+1) payloads.
  std::vector<int> idx(phase + 1);
  for (int i = 0; i <= phase; ++i) idx[i] = i + 1;
  while (true) {
    std::uint32_t t_mask = 0;
    for (int v : idx) t_mask |= 1u << (v - 1);
    std::vector<Payload> bits;
    std::vector<std::pair<long, int>> nodes;  // (slot, victim) per member
    for (int v : idx) {
      std::uint32_t without = t_mask & ~(1u << (v - 1));
      long slot_index = slot_lookup_.at({round, phase, repetition, without});
      bits.push_back(transcript_.record(slot_index, v).quantized.all_bits());
      nodes.emplace_back(slot_index, v);
    }
    std::vector<Payload> payloads = generate_order_symbols(idx, bits);
    auto& queue = order_queue_[t_mask];
    for (std::size_t l = 0; l < payloads.size(); ++l) {
      queue.emplace_back(payloads[l],
                         std::vector<std::pair<long, int>>{nodes[l], nodes[l + 1]});
    }
    int i = phase;
    while (i >= 0 && idx[i] == K - (phase - i)) --i;
    if (i < 0) break;
    ++idx[i];
    for (int t = i + 1; t <= phase; ++t) idx[t] = idx[t - 1] + 1;
  }
}

InterferenceRecord Engine::compute_interference(long slot_index, int victim) const {
  const SlotRecord& sr = transcript_.slots.at(static_cast<std::size_t>(slot_index));
  Eigen::RowVectorXcd h_row = transcript_.ledger.delayed_true(slot_index).row(victim - 1);
  std::complex<double> i{0, 0};
  for (long id : sr.qmat_ids) {
    i += stream_gain(h_row, part_of(sr, id)) * transcript_.symbol(id).value;
  }
  for (long id : sr.aux_ids) {
    const SymbolRecord& sym = transcript_.symbol(id);
    if (sym.destined_user() == victim) continue;
    i += stream_gain(h_row, part_of(sr, id)) * sym.value;
  }
  InterferenceRecord rec;
  rec.slot = sr.slot;
  rec.slot_index = slot_index;
  rec.victim = victim;
  rec.i = i;
  rec.quantized = two_step_quantize(transcript_.qspec, i);
  return rec;
}

std::string Transcript::to_json() const {
  nlohmann::json j;
  j["K"] = params.K;
  j["M"] = params.M;
  j["P"] = params.P;
  j["alpha"] = params.alpha;
  j["rounds"] = params.rounds;
  j["mode"] = params.mode == FidelityMode::BitTrue ? "bit-true" : "sinr-exponent";
  j["rate_scale"] = rate_scale;
  j["zf_enabled"] = zf_enabled;
  nlohmann::json slots_json = nlohmann::json::array();
  for (const SlotRecord& sr : slots) {
    nlohmann::json sj;
    sj["slot_index"] = sr.slot_index;
    sj["round"] = sr.slot.round;
    sj["phase"] = sr.slot.phase;
    sj["repetition"] = sr.slot.repetition;
    sj["users"] = sr.slot.users();
    nlohmann::json rx = nlohmann::json::array();
    for (const ReceivedSample& r : sr.received) {
      nlohmann::json rj;
      rj["user"] = r.user;
      rj["noise_power"] = std::norm(r.noise);
      nlohmann::json comps = nlohmann::json::array();
      for (const auto& [id, c] : r.components) {
        const SymbolRecord& sym = symbols.at(id);
        comps.push_back({{"symbol", id},
                         {"kind", sym.kind == SymbolKind::Qmat
                                      ? "qmat"
                                      : (sym.kind == SymbolKind::Auxiliary ? "aux" : "zf")},
                         {"power", std::norm(c)}});
      }
      rj["components"] = comps;
      rx.push_back(rj);
    }
    sj["received"] = rx;
    slots_json.push_back(sj);
  }
  j["slots"] = slots_json;
  return j.dump();
}

double DecodeState::rate_sum(bool include_final_round, int rounds) const {
  double sum = 0.0;
  for (const SymbolOutcome& o : outcomes) {
    if (!o.counted) continue;
    if (!include_final_round && o.round == rounds) continue;
    sum += o.rate_bits;
  }
  return sum;
}

namespace {

// Shared reconstruction arithmetic: mirrors Engine::compute_interference with
// caller-supplied symbol values so a receiver working from decoded bits lands
// on the exact same floating-point result as the transmitter.
std::complex<double> interference_from_values(
    const Transcript& t, const SlotRecord& sr, int victim,
    const std::function<std::complex<double>(long)>& value_of) {
  Eigen::RowVectorXcd h_row = t.ledger.state(sr.slot_index).H.row(victim - 1);
  std::complex<double> i{0, 0};
  for (long id : sr.qmat_ids) {
    i += stream_gain(h_row, part_of(sr, id)) * value_of(id);
  }
  for (long id : sr.aux_ids) {
    const SymbolRecord& sym = t.symbol(id);
    if (sym.destined_user() == victim) continue;
    i += stream_gain(h_row, part_of(sr, id)) * value_of(id);
  }
  return i;
}

struct UserDecoder {
  const Transcript& t;
  const int user;
  const int K;
  const int R;
  const long spr;
  const TwoStepSpec& spec;
  const bool bit_true;
  const double B;
  DecodeState st;
  double qnoise_proxy;

  UserDecoder(const Transcript& transcript, int k)
      : t(transcript),
        user(k),
        K(transcript.params.K),
        R(transcript.params.rounds),
        spr(transcript.slots_per_round()),
        spec(transcript.qspec),
        bit_true(transcript.params.mode == FidelityMode::BitTrue),
        B(std::log2(transcript.params.P)) {
    st.user = k;
    // The two-step pipeline is designed to leave the interference residual
    // at the noise floor for every alpha. Slope experiments whiten with that
    // design exponent; bit-true decoding whitens with the realized quantizer
    // distortion since actual errors enter the solve.
    qnoise_proxy = bit_true ? quantization_noise_proxy(spec) : 1.0;
  }

  std::complex<double> gain_at(const SlotRecord& sr, int at_user, long id) const {
    Eigen::RowVectorXcd h_row = t.ledger.state(sr.slot_index).H.row(at_user - 1);
    return stream_gain(h_row, part_of(sr, id));
  }

  // Value of the auxiliary symbol `id` as known at this user, or nullopt.
  std::optional<std::complex<double>> known_aux_value(const SymbolRecord& sym) const {
    if (sym.slot.round == 1) {
      if (!bit_true) return t.symbol(sym.id).value;  // protocol-known zeros
      return Constellation::make(spec.fine_width)
          .modulate(Payload::make(0, spec.fine_width));
    }
    if (!bit_true) return t.symbol(sym.id).value;  // oracle cancellation
    auto it = st.aux_payloads.find({sym.source_slot_index, sym.source_victim});
    if (it == st.aux_payloads.end()) return std::nullopt;
    return Constellation::make(spec.fine_width).modulate(it->second);
  }

  SymbolOutcome base_outcome(const SymbolRecord& sym) const {
    SymbolOutcome o;
    o.symbol_id = sym.id;
    o.kind = sym.kind;
    o.order = sym.order;
    o.round = sym.slot.round;
    o.counted = (sym.kind == SymbolKind::Qmat && sym.order == 1) ||
                sym.kind == SymbolKind::Zf;
    o.payload_bits = sym.payload.width;
    return o;
  }

  void note(SymbolOutcome o) {
    if (o.attempted) ++st.attempted;
    if (o.attempted && !o.success) ++st.failures;
    st.outcomes.push_back(o);
  }

  // Standalone demodulation of every auxiliary symbol destined to this user;
  // everything else in the slot is treated as noise.
  void aux_prepass() {
    for (const SlotRecord& sr : t.slots) {
      for (long id : sr.aux_ids) {
        const SymbolRecord& sym = t.symbol(id);
        if (sym.destined_user() != user) continue;
        SymbolOutcome o = base_outcome(sym);
        o.sinr = measure_sinr(t, id, user, {});
        o.predicate = std::log2(1.0 + o.sinr) >= static_cast<double>(o.payload_bits);
        if (sym.slot.round == 1) {
          // Round-1 auxiliaries are protocol-known zeros; no demodulation, the
          // receiver reconstructs the all-zero payload directly.
          o.success = true;
          o.rate_bits = 0;
          st.recovered[id] = Payload::make(0, sym.payload.width);
          note(o);
          continue;
        }
        o.attempted = true;
        if (bit_true) {
          const ReceivedSample& rs = sr.received[user - 1];
          std::complex<double> g = gain_at(sr, user, id);
          Payload hat = Constellation::make(sym.payload.width).demodulate(rs.y / g);
          st.aux_payloads[{sym.source_slot_index, sym.source_victim}] = hat;
          st.recovered[id] = hat;
          o.success = hat == sym.payload;
          o.rate_bits = 0;  // auxiliaries are overhead, never counted
        } else {
          o.success = o.predicate;
        }
        note(o);
      }
    }
  }

  // Forms own quantized interference at every non-final-round slot where this
  // user is a victim: second-stage bits from the round-(N+1) auxiliary, the
  // coarse part by requantizing the own-aux-cleaned received signal.
  void victim_interference_pass() {
    for (const SlotRecord& sr : t.slots) {
      if (sr.slot.round == R) continue;
      if (sr.slot.contains(user)) continue;
      if (sr.slot.phase == K) continue;  // no victims in phase K
      if (!bit_true) {
        const InterferenceRecord& rec = t.record(sr.slot_index, user);
        st.interference_bits[{sr.slot_index, user}] = rec.quantized.all_bits();
        st.interference_values[{sr.slot_index, user}] = rec.quantized.combined;
        continue;
      }
      auto fine_it = st.aux_payloads.find({sr.slot_index, user});
      if (fine_it == st.aux_payloads.end()) continue;  // round N+1 aux missing
      Payload coarse = Payload::make(0, 0);
      if (spec.two_stage) {
        const ReceivedSample& rs = sr.received[user - 1];
        long own_aux_id = -1;
        for (long id : sr.aux_ids) {
          if (t.symbol(id).destined_user() == user) own_aux_id = id;
        }
        std::optional<std::complex<double>> aux_val =
            known_aux_value(t.symbol(own_aux_id));
        if (!aux_val) continue;
        std::complex<double> y_clean = rs.y - gain_at(sr, user, own_aux_id) * *aux_val;
        coarse = receiver_requantize(spec, y_clean);
      }
      Payload bits = coarse.concat(fine_it->second);
      st.interference_bits[{sr.slot_index, user}] = bits;
      st.interference_values[{sr.slot_index, user}] =
          interference_from_bits(spec, coarse, fine_it->second);
    }
  }

  // XOR unchaining: edges from decoded order-j payloads connect (slot,victim)
  // nodes; own nodes are known from victim_interference_pass.
  void unchain(const std::vector<std::tuple<long, int, long, int, Payload>>& edges) {
    bool progress = true;
    while (progress) {
      progress = false;
      for (const auto& [sa, va, sb, vb, payload] : edges) {
        auto a = st.interference_bits.find({sa, va});
        auto b = st.interference_bits.find({sb, vb});
        if ((a != st.interference_bits.end()) == (b != st.interference_bits.end())) continue;
        if (a != st.interference_bits.end()) {
          Payload bits = a->second.padded_to(payload.width) ^ payload;
          st.interference_bits[{sb, vb}] = bits;
          st.interference_values[{sb, vb}] =
              interference_from_bits(spec, bits.high_payload(spec.coarse_width),
                                     bits.low_payload(spec.fine_width));
        } else {
          Payload bits = b->second.padded_to(payload.width) ^ payload;
          st.interference_bits[{sa, va}] = bits;
          st.interference_values[{sa, va}] =
              interference_from_bits(spec, bits.high_payload(spec.coarse_width),
                                     bits.low_payload(spec.fine_width));
        }
        progress = true;
      }
    }
  }

  void decode_served_slot(const SlotRecord& sr,
                          std::vector<std::tuple<long, int, long, int, Payload>>* edges) {
    const int j = sr.slot.phase;
    const int n = K - j + 1;
    const std::uint32_t bar = complement_mask(sr.slot.user_set, K);
    const ReceivedSample& rs = sr.received[user - 1];

    // Cross-auxiliary cancellation on the own observation.
    std::complex<double> y0 = rs.y;
    bool aux_complete = true;
    std::map<long, std::complex<double>> aux_vals;
    for (long id : sr.aux_ids) {
      const SymbolRecord& sym = t.symbol(id);
      auto val = known_aux_value(sym);
      if (!val) {
        aux_complete = false;
        continue;
      }
      aux_vals[id] = *val;
      if (bit_true) {
        y0 -= gain_at(sr, user, id) * *val;
      } else {
        y0 -= rs.component_of(id);
      }
    }

    // Observation rows: own received signal, then the quantized interference
    // of each victim with that victim's cross-auxiliary part removed.
    std::vector<int> victims;
    for (int l = 1; l <= K; ++l) {
      if ((bar >> (l - 1)) & 1u) victims.push_back(l);
    }
    int rows_avail = 1;
    std::vector<bool> have_victim(victims.size(), false);
    for (std::size_t vi = 0; vi < victims.size(); ++vi) {
      if (st.interference_values.count({sr.slot_index, victims[vi]})) {
        have_victim[vi] = true;
        ++rows_avail;
      }
    }

    Eigen::MatrixXcd A(rows_avail, n);
    Eigen::VectorXcd b(rows_avail);
    Eigen::VectorXd sigma2(rows_avail);
    double own_noise = std::norm(rs.noise);
    double uncancelled = 0.0;
    for (long id : sr.zf_ids) uncancelled += std::norm(rs.component_of(id));
    if (!aux_complete) {
      for (long id : sr.aux_ids) {
        if (!aux_vals.count(id)) uncancelled += std::norm(rs.component_of(id));
      }
    }
    // Own-row coefficients: recomputed gains in bit-true mode (the receiver
    // works from CSIR), stored components with the unit-power value divided
    // out in sinr-exponent mode.
    for (int pos = 0; pos < n; ++pos) {
      A(0, pos) = bit_true ? gain_at(sr, user, sr.qmat_ids[pos])
                           : rs.component_of(sr.qmat_ids[pos]) /
                                 t.symbol(sr.qmat_ids[pos]).value;
    }
    b(0) = y0;
    sigma2(0) = own_noise + uncancelled + 1e-12;
    int row = 1;
    for (std::size_t vi = 0; vi < victims.size(); ++vi) {
      if (!have_victim[vi]) continue;
      const int l = victims[vi];
      std::complex<double> obs = st.interference_values.at({sr.slot_index, l});
      for (long id : sr.aux_ids) {
        const SymbolRecord& sym = t.symbol(id);
        if (sym.destined_user() == l) continue;
        auto it = aux_vals.find(id);
        if (it != aux_vals.end()) {
          obs -= gain_at(sr, l, id) * it->second;
        }
      }
      for (int pos = 0; pos < n; ++pos) {
        A(row, pos) = gain_at(sr, l, sr.qmat_ids[pos]);
      }
      b(row) = obs;
      sigma2(row) = qnoise_proxy;
      ++row;
    }

    // Whitened solve; with all victims present the system is square.
    Eigen::MatrixXcd Aw = A;
    Eigen::VectorXcd bw = b;
    for (int r = 0; r < rows_avail; ++r) {
      double w = 1.0 / std::sqrt(sigma2(r));
      Aw.row(r) *= w;
      bw(r) *= w;
    }
    // Zero-forcing equalizer on the whitened system; the per-position error
    // variance is the diagonal of the estimator covariance (A^H S^-1 A)^-1.
    Eigen::VectorXcd m_hat = Eigen::VectorXcd::Zero(n);
    Eigen::VectorXd err_var = Eigen::VectorXd::Constant(n, 1.0);
    const bool solvable = rows_avail >= n;
    if (solvable) {
      Eigen::MatrixXcd cov = (Aw.adjoint() * Aw).inverse();
      m_hat = cov * Aw.adjoint() * bw;
      for (int pos = 0; pos < n; ++pos) err_var(pos) = std::real(cov(pos, pos));
    }

    std::map<long, std::complex<double>> decoded_values;
    for (int pos = 0; pos < n; ++pos) {
      const SymbolRecord& sym = t.symbol(sr.qmat_ids[pos]);
      SymbolOutcome o = base_outcome(sym);
      o.attempted = solvable;
      o.sinr = (solvable && err_var(pos) > 0 && std::isfinite(err_var(pos)))
                   ? 1.0 / err_var(pos)
                   : 0.0;
      double rate = std::log2(1.0 + o.sinr);
      o.predicate = rate >= static_cast<double>(o.payload_bits);
      if (bit_true) {
        if (solvable) {
          Payload hat = Constellation::make(sym.payload.width).demodulate(m_hat(pos));
          o.success = hat == sym.payload;
          st.recovered[sym.id] = hat;
          decoded_values[sym.id] = Constellation::make(sym.payload.width).modulate(hat);
          if (sym.order >= 2) {
            edges->emplace_back(sym.xor_sources[0].first, sym.xor_sources[0].second,
                                sym.xor_sources[1].first, sym.xor_sources[1].second, hat);
          }
        }
        o.rate_bits = o.success ? static_cast<double>(sym.payload.width) : 0.0;
      } else {
        o.success = o.predicate;
        o.rate_bits = rate;
        decoded_values[sym.id] = sym.value;  // oracle for downstream cancellation
        if (sym.order >= 2) {
          edges->emplace_back(sym.xor_sources[0].first, sym.xor_sources[0].second,
                              sym.xor_sources[1].first, sym.xor_sources[1].second,
                              sym.payload);
        }
      }
      note(o);
    }

    // Own ZF symbol by successive cancellation of everything decoded above.
    decode_own_zf_served(sr, aux_vals, decoded_values);

    // Reconstruct next round's auxiliary contents for every victim of this
    // slot, mirroring the transmitter's arithmetic on the decoded values.
    // Requires every qmat and auxiliary value; without them the next round's
    // cross-aux cancellation simply stays unavailable.
    if (sr.slot.round < R && bit_true && solvable && aux_complete) {
      auto value_of = [&](long id) -> std::complex<double> {
        auto it = decoded_values.find(id);
        if (it != decoded_values.end()) return it->second;
        return aux_vals.at(id);
      };
      for (int l : victims) {
        std::complex<double> i_rec = interference_from_values(t, sr, l, value_of);
        QuantizedInterference q = two_step_quantize(spec, i_rec);
        st.aux_payloads[{sr.slot_index, l}] = generate_auxiliary(q, spec);
      }
    }
  }

  void decode_own_zf_served(const SlotRecord& sr,
                            const std::map<long, std::complex<double>>& aux_vals,
                            const std::map<long, std::complex<double>>& decoded_values) {
    long own_zf = -1;
    for (long id : sr.zf_ids) {
      if (t.symbol(id).destined_user() == user) own_zf = id;
    }
    if (own_zf < 0) return;
    const SymbolRecord& sym = t.symbol(own_zf);
    const ReceivedSample& rs = sr.received[user - 1];
    SymbolOutcome o = base_outcome(sym);
    o.attempted = true;
    std::set<long> cancel;
    for (long id : sr.qmat_ids) cancel.insert(id);
    for (long id : sr.aux_ids) cancel.insert(id);
    o.sinr = measure_sinr(t, own_zf, user, cancel);
    double rate = std::log2(1.0 + o.sinr);
    o.predicate = rate >= static_cast<double>(o.payload_bits);
    if (bit_true) {
      std::complex<double> y_res = rs.y;
      for (long id : sr.qmat_ids) {
        auto it = decoded_values.find(id);
        if (it != decoded_values.end()) y_res -= gain_at(sr, user, id) * it->second;
      }
      for (long id : sr.aux_ids) {
        auto it = aux_vals.find(id);
        if (it != aux_vals.end()) y_res -= gain_at(sr, user, id) * it->second;
      }
      std::complex<double> g = gain_at(sr, user, own_zf);
      Payload hat = Constellation::make(sym.payload.width).demodulate(y_res / g);
      st.recovered[own_zf] = hat;
      o.success = hat == sym.payload;
      o.rate_bits = o.success ? static_cast<double>(sym.payload.width) : 0.0;
    } else {
      o.success = o.predicate;
      o.rate_bits = rate;
    }
    note(o);
  }

  void decode_victim_slot(const SlotRecord& sr) {
    const ReceivedSample& rs = sr.received[user - 1];
    long own_zf = -1;
    long own_aux = -1;
    for (long id : sr.zf_ids) {
      if (t.symbol(id).destined_user() == user) own_zf = id;
    }
    for (long id : sr.aux_ids) {
      if (t.symbol(id).destined_user() == user) own_aux = id;
    }
    if (own_zf < 0) return;
    const SymbolRecord& sym = t.symbol(own_zf);
    SymbolOutcome o = base_outcome(sym);
    o.attempted = true;
    const bool final_round = sr.slot.round == R;
    std::set<long> cancel;
    if (own_aux >= 0) cancel.insert(own_aux);
    if (!final_round) {
      // The quantized interference estimate removes qmat and cross-aux terms
      // down to the noise floor.
      for (long id : sr.qmat_ids) cancel.insert(id);
      for (long id : sr.aux_ids) cancel.insert(id);
    }
    o.sinr = measure_sinr(t, own_zf, user, cancel);
    double rate = std::log2(1.0 + o.sinr);
    o.predicate = rate >= static_cast<double>(o.payload_bits);
    if (bit_true) {
      std::complex<double> y_res = rs.y;
      if (own_aux >= 0) {
        auto val = known_aux_value(t.symbol(own_aux));
        if (val) y_res -= gain_at(sr, user, own_aux) * *val;
      }
      if (!final_round) {
        auto it = st.interference_values.find({sr.slot_index, user});
        if (it != st.interference_values.end()) y_res -= it->second;
      }
      std::complex<double> g = gain_at(sr, user, own_zf);
      Payload hat = Constellation::make(sym.payload.width).demodulate(y_res / g);
      st.recovered[own_zf] = hat;
      o.success = hat == sym.payload;
      o.rate_bits = o.success ? static_cast<double>(sym.payload.width) : 0.0;
    } else {
      o.success = o.predicate;
      o.rate_bits = rate;
    }
    note(o);
  }

  DecodeState run() {
    aux_prepass();
    victim_interference_pass();
    for (int round = 1; round <= R; ++round) {
      const long begin = static_cast<long>(round - 1) * spr;
      for (int phase = K; phase >= 1; --phase) {
        std::vector<std::tuple<long, int, long, int, Payload>> edges;
        for (long s = begin; s < begin + spr; ++s) {
          const SlotRecord& sr = t.slots.at(static_cast<std::size_t>(s));
          if (sr.slot.phase != phase) continue;
          if (sr.slot.contains(user)) {
            if (round < R) {
              decode_served_slot(sr, &edges);
            } else {
              decode_final_round_served(sr);
            }
          } else {
            decode_victim_slot(sr);
          }
        }
        unchain(edges);
      }
    }
    return std::move(st);
  }

  void decode_final_round_served(const SlotRecord& sr) {
    // Final round: no qmat payload; cancel the cross-auxiliaries and take the
    // own ZF symbol.
    std::map<long, std::complex<double>> aux_vals;
    for (long id : sr.aux_ids) {
      auto val = known_aux_value(t.symbol(id));
      if (val) aux_vals[id] = *val;
    }
    decode_own_zf_served(sr, aux_vals, {});
  }
};

}  // namespace

DecodeState decode_user(const Transcript& transcript, int user) {
  if (user < 1 || user > transcript.params.K) {
    throw std::invalid_argument("user index out of range");
  }
  if (transcript.slots.size() !=
      transcript.schedule.slots.size()) {
    throw std::invalid_argument("decoding requires a completed transcript");
  }
  UserDecoder dec(transcript, user);
  return dec.run();
}

}  // namespace qmat

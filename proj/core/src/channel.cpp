// SPDX-License-Identifier: Apache-2.0
#include "qmat/channel.hpp"

#include <cmath>

namespace qmat {

void SimParams::validate() const {
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  if (M < K) throw std::invalid_argument("M must be >= K");
  if (!(P > 1.0)) throw std::invalid_argument("P must be > 1");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (backoff < 0.0 || backoff >= 1.0) {
    throw std::invalid_argument("backoff must lie in [0, 1)");
  }
}

double csit_error_power(double alpha, double P) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(P > 1.0)) throw std::invalid_argument("P must be > 1");
  return std::pow(P, -alpha);
}

namespace {

// Rounds one (truth, error) pair so that hat = truth - error and
// truth = hat + error both hold exactly in double arithmetic. The error is
// re-derived from the rounded difference; the truth is nudged by at most a
// few ulps when the naive identities disagree.
void exact_decompose(double& truth, double& error, double& hat) {
  for (int iter = 0; iter < 64; ++iter) {
    hat = truth - error;
    double e2 = truth - hat;
    if (hat + e2 == truth) {
      error = e2;
      return;
    }
    truth = hat + e2;
    error = e2;
  }
  throw std::runtime_error("channel decomposition failed to stabilize");
}

}  // namespace

ChannelSlotState draw_channel(const SimParams& params, Rng& rng) {
  params.validate();
  const int K = params.K;
  const int M = params.M;
  const double err_var = csit_error_power(params.alpha, params.P);

  ChannelSlotState s;
  s.H.resize(K, M);
  s.H_hat.resize(K, M);
  s.H_tilde.resize(K, M);
  s.noise.resize(K);

  for (int k = 0; k < K; ++k) {
    for (int m = 0; m < M; ++m) {
      std::complex<double> h = complex_gaussian(rng, 1.0);
      std::complex<double> e = complex_gaussian(rng, err_var);
      double hre = h.real(), him = h.imag();
      double ere = e.real(), eim = e.imag();
      double hat_re = 0.0, hat_im = 0.0;
      exact_decompose(hre, ere, hat_re);
      exact_decompose(him, eim, hat_im);
      s.H(k, m) = {hre, him};
      s.H_tilde(k, m) = {ere, eim};
      s.H_hat(k, m) = {hat_re, hat_im};
    }
    s.noise(k) = complex_gaussian(rng, 1.0);
  }
  return s;
}

void CsitLedger::advance(long slot_index, const ChannelSlotState& state) {
  if (slot_index != current_ + 1) {
    throw std::invalid_argument("ledger slots must advance in order; expected " +
                                std::to_string(current_ + 1) + ", got " +
                                std::to_string(slot_index));
  }
  states_.emplace(slot_index, state);
  current_ = slot_index;
}

const Eigen::MatrixXcd& CsitLedger::delayed_true(long slot_index) const {
  auto it = states_.find(slot_index);
  if (it == states_.end()) {
    throw std::invalid_argument("unknown slot index " + std::to_string(slot_index));
  }
  if (slot_index >= current_) {
    throw DelayedCsitViolation("true CSI of slot " + std::to_string(slot_index) +
                               " is not yet available at slot " + std::to_string(current_));
  }
  return it->second.H;
}

const Eigen::MatrixXcd& CsitLedger::estimate(long slot_index) const {
  auto it = states_.find(slot_index);
  if (it == states_.end()) {
    throw std::invalid_argument("unknown slot index " + std::to_string(slot_index));
  }
  return it->second.H_hat;
}

const ChannelSlotState& CsitLedger::state(long slot_index) const {
  auto it = states_.find(slot_index);
  if (it == states_.end()) {
    throw std::invalid_argument("unknown slot index " + std::to_string(slot_index));
  }
  return it->second;
}

}  // namespace qmat

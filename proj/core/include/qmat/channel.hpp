// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "qmat/rng.hpp"

namespace qmat {

enum class FidelityMode { SinrExponent, BitTrue };

struct SimParams {
  int K = 2;                // users
  int M = 2;                // transmit antennas, M >= K
  double P = 100.0;         // nominal transmit power ("SNR")
  double alpha = 0.0;       // current-CSIT quality exponent in [0, 1]
  int rounds = 2;           // Q-MAT rounds
  FidelityMode mode = FidelityMode::SinrExponent;
  double backoff = 0.2;     // bit-true rate backoff epsilon; payload bits = round((1-eps)*rate)
  std::uint64_t seed = 1;

  void validate() const;
};

// True channel, current estimate and estimation error for one slot.
// Row k of H is the conjugated channel row h_k^H.
struct ChannelSlotState {
  Eigen::MatrixXcd H;        // K x M true channel
  Eigen::MatrixXcd H_hat;    // K x M current estimate
  Eigen::MatrixXcd H_tilde;  // K x M estimation error, H = H_hat + H_tilde
  Eigen::VectorXcd noise;    // length-K receiver noise
};

// Thrown when the transmitter reads true CSI of a slot that has not aged
// past the delayed-CSIT horizon.
class DelayedCsitViolation : public std::runtime_error {
 public:
  explicit DelayedCsitViolation(const std::string& what) : std::runtime_error(what) {}
};

// Enforces the delayed-CSIT access rule: the true channel of slot t becomes
// readable only once some slot index > t has been recorded; the current
// estimate is readable immediately.
class CsitLedger {
 public:
  void advance(long slot_index, const ChannelSlotState& state);

  // True channel of a past slot; reader must be at a strictly later slot.
  const Eigen::MatrixXcd& delayed_true(long slot_index) const;
  // Current estimate of the given slot (current or past).
  const Eigen::MatrixXcd& estimate(long slot_index) const;
  // Full state for receiver-side processing after all transmissions ended.
  const ChannelSlotState& state(long slot_index) const;

  long current_slot() const { return current_; }
  std::size_t size() const { return states_.size(); }

 private:
  std::map<long, ChannelSlotState> states_;
  long current_ = -1;
};

double csit_error_power(double alpha, double P);

// Draws H with unit-variance i.i.d. circularly-symmetric complex Gaussian
// entries, H_tilde with entry variance P^-alpha, and sets H_hat = H - H_tilde
// such that H == H_hat + H_tilde holds bit-exactly.
ChannelSlotState draw_channel(const SimParams& params, Rng& rng);

}  // namespace qmat

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>

#include "qmat/payload.hpp"

namespace qmat {

// Square-grid constellation with unit average power. Real axis carries
// ceil(b/2) bits, imaginary floor(b/2); indices map to amplitudes in natural
// binary order. Zero-bit symbols are the fixed point 1+0i, which receivers
// know and can cancel.
struct Constellation {
  int bits = 0;
  int bits_re = 0;
  int bits_im = 0;
  double delta = 0;  // half the grid spacing scale: amplitudes (2i - L + 1) * delta

  static Constellation make(int bits);

  std::complex<double> modulate(const Payload& p) const;
  Payload demodulate(std::complex<double> y) const;  // nearest grid point
};

}  // namespace qmat

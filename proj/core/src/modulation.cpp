// SPDX-License-Identifier: Apache-2.0
#include "qmat/modulation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qmat {

namespace {

double pam_amplitude(std::uint64_t index, int levels, double delta) {
  return (2.0 * static_cast<double>(index) - static_cast<double>(levels) + 1.0) * delta;
}

std::uint64_t pam_nearest(double x, int levels, double delta) {
  double idx = std::round((x / delta + static_cast<double>(levels) - 1.0) / 2.0);
  idx = std::clamp(idx, 0.0, static_cast<double>(levels - 1));
  return static_cast<std::uint64_t>(idx);
}

}  // namespace

Constellation Constellation::make(int bits) {
  if (bits < 0 || bits > 62) throw std::invalid_argument("constellation bits out of range");
  Constellation c;
  c.bits = bits;
  c.bits_re = (bits + 1) / 2;
  c.bits_im = bits / 2;
  if (bits == 0) return c;
  double l_re = std::ldexp(1.0, c.bits_re);
  double l_im = std::ldexp(1.0, c.bits_im);
  double energy_scale = (l_re * l_re - 1.0 + l_im * l_im - 1.0) / 3.0;
  c.delta = std::sqrt(1.0 / energy_scale);
  return c;
}

std::complex<double> Constellation::modulate(const Payload& p) const {
  if (p.width != bits) throw std::invalid_argument("payload width does not match constellation");
  if (bits == 0) return {1.0, 0.0};
  std::uint64_t re = p.high(bits_re);
  std::uint64_t im = p.low(bits_im);
  return {pam_amplitude(re, 1 << bits_re, delta), pam_amplitude(im, 1 << bits_im, delta)};
}

Payload Constellation::demodulate(std::complex<double> y) const {
  if (bits == 0) return Payload::make(0, 0);
  std::uint64_t re = pam_nearest(y.real(), 1 << bits_re, delta);
  std::uint64_t im = pam_nearest(y.imag(), 1 << bits_im, delta);
  return Payload::make(re, bits_re).concat(Payload::make(im, bits_im));
}

}  // namespace qmat

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qmat {

// Fixed-width bit string, MSB-first semantics, width <= 62 bits.
struct Payload {
  std::uint64_t bits = 0;
  int width = 0;

  static Payload make(std::uint64_t bits, int width) {
    if (width < 0 || width > 62) {
      throw std::invalid_argument("payload width out of range: " + std::to_string(width));
    }
    if (width < 64 && (bits >> width) != 0) {
      throw std::invalid_argument("payload bits exceed declared width");
    }
    return Payload{bits, width};
  }

  // Appends `other` as the least-significant part.
  Payload concat(const Payload& other) const {
    return make((bits << other.width) | other.bits, width + other.width);
  }

  // Zero-extends on the most-significant side.
  Payload padded_to(int new_width) const {
    if (new_width < width) throw std::invalid_argument("cannot pad to a smaller width");
    return make(bits, new_width);
  }

  Payload operator^(const Payload& other) const {
    if (width != other.width) {
      throw std::invalid_argument("width mismatch in payload xor: " + std::to_string(width) +
                                  " vs " + std::to_string(other.width));
    }
    return make(bits ^ other.bits, width);
  }

  bool operator==(const Payload& other) const = default;

  // Most-significant `n` bits.
  std::uint64_t high(int n) const {
    if (n < 0 || n > width) throw std::invalid_argument("invalid high-bit count");
    return n == 0 ? 0 : (bits >> (width - n));
  }

  // Least-significant `n` bits.
  std::uint64_t low(int n) const {
    if (n < 0 || n > width) throw std::invalid_argument("invalid low-bit count");
    return n == 0 ? 0 : (bits & ((n >= 64) ? ~0ULL : ((1ULL << n) - 1)));
  }

  Payload high_payload(int n) const { return make(high(n), n); }
  Payload low_payload(int n) const { return make(low(n), n); }
};

}  // namespace qmat

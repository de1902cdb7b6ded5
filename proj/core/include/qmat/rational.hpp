// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <boost/rational.hpp>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace qmat {

using Rational = boost::rational<long long>;

inline double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

// Converts common experiment alphas (multiples of small powers of two and
// decimal grids) to an exact rational; rejects values outside [0, 1].
inline Rational alpha_to_rational(double alpha, long long max_denominator = 10000) {
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::invalid_argument("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  long long best_num = 0;
  long long best_den = 1;
  double best_err = 1.0;
  for (long long den = 1; den <= max_denominator; ++den) {
    long long num = static_cast<long long>(alpha * static_cast<double>(den) + 0.5);
    double err = std::abs(alpha - static_cast<double>(num) / static_cast<double>(den));
    if (err < best_err) {
      best_err = err;
      best_num = num;
      best_den = den;
      if (err == 0.0) break;
    }
  }
  if (best_err > 1e-9) {
    throw std::invalid_argument("alpha is not representable as a small rational: " +
                                std::to_string(alpha));
  }
  return {best_num, best_den};
}

}  // namespace qmat

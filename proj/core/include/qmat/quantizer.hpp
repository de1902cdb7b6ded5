// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "qmat/payload.hpp"
#include "qmat/rng.hpp"

namespace qmat {

// Gap-enforced scalar quantizer for one (beta1, beta2, P) triple. Levels are
// an MSE-optimal codebook for a zero-mean Gaussian of variance P^beta1,
// pruned so consecutive levels are at least min_distance apart.
struct Codebook {
  double beta1 = 0;
  double beta2 = 0;
  double P = 0;
  double rate_scale = 1.0;          // fraction of the nominal bit budget used
  double rate_bits_per_dim = 0;     // budget per real dimension (may be <= 0)
  double min_distance = 0;          // sqrt(log2(P) * P^beta2)
  double guard_width = 0;           // sqrt(log2(log2(P)) * P^beta2)
  bool degenerate = false;          // single-point codebook
  int index_width = 0;              // ceil(log2 |points|)
  std::vector<double> points;       // sorted reconstruction levels
  std::vector<double> boundaries;   // cell edges (midpoints), size = |points|-1

  struct Quantized {
    std::uint64_t index = 0;
    double level = 0;
  };

  // Nearest level; ties on a cell edge resolve to the lower level.
  Quantized quantize(double x) const;

  struct QuantizedComplex {
    Payload bits;                        // real index then imaginary index
    std::complex<double> level{0.0, 0.0};
  };

  QuantizedComplex quantize_complex(std::complex<double> z) const;
  std::complex<double> level_from_bits(const Payload& bits) const;

  // Analytic E[(x - quantize(x).level)^2] for x ~ N(0, sigma2).
  double gaussian_mse(double sigma2) const;

  std::string to_json() const;
};

// rate_scale < 1 shrinks the bit budget proportionally (used by the bit-true
// engine mode so quantizer payloads track the backed-off symbol rates).
Codebook build_codebook(double beta1, double beta2, double P, double rate_scale = 1.0);

// Process-wide cache; codebooks are immutable and shareable across threads.
std::shared_ptr<const Codebook> cached_codebook(double beta1, double beta2, double P,
                                                double rate_scale = 1.0);

// Empirical probability that quantizing signal+noise matches quantizing the
// signal alone, with signal sqrt(P^beta1)*y and noise sqrt(P^beta2)*n for
// unit-variance Gaussian y, n.
double agreement_probability(const Codebook& book, double beta2, double P, int trials,
                             Rng& rng);

// Uniform mid-rise quantizer over +-range with 2^bits levels; the "standard"
// quantizer used for residuals and for the single-step branch.
struct UniformQuantizer {
  double range = 0;  // half-width
  int bits = 0;      // index width
  int levels = 1;

  static UniformQuantizer over_sigma(double sigma, int bits, double spread = 5.0);

  Codebook::Quantized quantize(double x) const;
  double level_from_index(std::uint64_t index) const;
};

// Static description of the interference quantization pipeline for one
// (alpha, P, rate_scale); shared by transmitter and receivers so bit layouts
// and reconstruction levels match exactly.
struct TwoStepSpec {
  double alpha = 0;
  double P = 0;
  double rate_scale = 1.0;
  bool two_stage = false;                     // alpha < 1/2: coarse + fine
  std::shared_ptr<const Codebook> coarse;     // two-stage branch only
  UniformQuantizer fine_re, fine_im;          // per-dimension second stage
  int coarse_width = 0;                       // total coarse bits (both dims)
  int fine_width = 0;                         // total fine bits (both dims)

  int combined_width() const { return coarse_width + fine_width; }
};

TwoStepSpec two_step_spec(double alpha, double P, double rate_scale = 1.0);

// One quantized interference sample: coarse index bits, second-stage bits,
// and the complex reconstruction (coarse level + fine level).
struct QuantizedInterference {
  Payload coarse_bits;
  Payload fine_bits;
  std::complex<double> coarse_level{0.0, 0.0};
  std::complex<double> combined{0.0, 0.0};

  Payload all_bits() const { return coarse_bits.concat(fine_bits); }
};

QuantizedInterference two_step_quantize(const TwoStepSpec& spec, std::complex<double> i);
QuantizedInterference two_step_quantize(std::complex<double> i, double alpha, double P,
                                        double rate_scale = 1.0);

// Reconstructs the complex estimate from transported bits.
std::complex<double> interference_from_bits(const TwoStepSpec& spec, const Payload& coarse,
                                            const Payload& fine);

// Applies the coarse quantizer to a received sample; matches the transmitter
// coarse bits with probability -> 1 as P grows. Two-stage branch only.
Payload receiver_requantize(const TwoStepSpec& spec, std::complex<double> y);

}  // namespace qmat

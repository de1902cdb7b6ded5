// SPDX-License-Identifier: Apache-2.0
#include "qmat/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "json.hpp"

namespace qmat {

namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) * 0.3989422804014326779; }
double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

// Acklam's rational approximation of the standard normal quantile, refined
// with two Newton steps; accurate to ~1e-15 over (0, 1).
double probit(double p) {
  if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("probit argument out of (0,1)");
  if (p == 0.5) return 0.0;
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int i = 0; i < 2; ++i) {
    double err = normal_cdf(x) - p;
    double den = normal_pdf(x);
    if (den <= 0.0) break;
    x -= err / den;
  }
  return x;
}

// Lloyd-Max levels for a unit-variance Gaussian; 64 iterations or 1e-10
// relative movement, whichever comes first.
std::vector<double> lloyd_max_unit_gaussian(std::size_t n) {
  // Panter-Dite companding init: optimal level density is proportional to
  // pdf^(1/3), i.e. quantiles of a sqrt(3)-stretched Gaussian. Plain source
  // quantiles leave the outer levels too close in, and the resulting
  // overload distortion would dominate the granular term.
  const double stretch = std::sqrt(3.0);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = stretch * probit((static_cast<double>(i) + 0.5) / static_cast<double>(n));
  }
  if (n == 1) return {0.0};
  std::vector<double> b(n + 1);
  for (int iter = 0; iter < 64; ++iter) {
    b[0] = -std::numeric_limits<double>::infinity();
    b[n] = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < n; ++i) b[i] = 0.5 * (c[i - 1] + c[i]);
    double moved = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double lo = b[i], hi = b[i + 1];
      double mass = normal_cdf(hi) - normal_cdf(lo);
      if (mass <= 1e-300) continue;
      double pdf_lo = std::isinf(lo) ? 0.0 : normal_pdf(lo);
      double pdf_hi = std::isinf(hi) ? 0.0 : normal_pdf(hi);
      double next = (pdf_lo - pdf_hi) / mass;
      moved = std::max(moved, std::abs(next - c[i]) / (1.0 + std::abs(next)));
      c[i] = next;
    }
    if (moved < 1e-10) break;
  }
  return c;
}

int width_for_count(std::size_t n) {
  int w = 0;
  while ((1ULL << w) < n) ++w;
  return w;
}

}  // namespace

Codebook build_codebook(double beta1, double beta2, double P, double rate_scale) {
  if (!(beta2 >= 0.0) || beta2 > beta1) {
    throw std::invalid_argument("need 0 <= beta2 <= beta1");
  }
  if (!(P > 2.0)) throw std::invalid_argument("P must exceed 2");
  if (!(rate_scale > 0.0) || rate_scale > 1.0) {
    throw std::invalid_argument("rate_scale must lie in (0, 1]");
  }
  Codebook book;
  book.beta1 = beta1;
  book.beta2 = beta2;
  book.P = P;
  book.rate_scale = rate_scale;
  const double log2P = std::log2(P);
  book.min_distance = std::sqrt(log2P * std::pow(P, beta2));
  book.guard_width = std::sqrt(std::log2(log2P) * std::pow(P, beta2));
  book.rate_bits_per_dim =
      rate_scale * (0.5 * (beta1 - beta2) * log2P - 0.5 * std::log2(log2P));

  if (book.rate_bits_per_dim <= 0.0) {
    book.points = {0.0};
    book.degenerate = true;
    book.index_width = 0;
    return book;
  }
  if (book.rate_bits_per_dim > 26.0) {
    throw std::invalid_argument("codebook would exceed 2^26 levels; P too large");
  }
  std::size_t n = static_cast<std::size_t>(std::pow(2.0, book.rate_bits_per_dim));
  if (n < 1) n = 1;

  std::vector<double> levels = lloyd_max_unit_gaussian(n);
  const double scale = std::sqrt(std::pow(P, beta1));
  for (double& x : levels) x *= scale;

  // Ascending prune: drop any level closer than min_distance to the last
  // kept one.
  book.points.clear();
  for (double x : levels) {
    if (book.points.empty() || x - book.points.back() >= book.min_distance) {
      book.points.push_back(x);
    }
  }
  book.boundaries.resize(book.points.size() - 1);
  for (std::size_t i = 0; i + 1 < book.points.size(); ++i) {
    book.boundaries[i] = 0.5 * (book.points[i] + book.points[i + 1]);
  }
  book.degenerate = book.points.size() <= 1;
  book.index_width = width_for_count(book.points.size());
  return book;
}

std::shared_ptr<const Codebook> cached_codebook(double beta1, double beta2, double P,
                                                double rate_scale) {
  using Key = std::tuple<double, double, double, double>;
  static std::map<Key, std::shared_ptr<const Codebook>> cache;
  static std::mutex mu;
  Key key{beta1, beta2, P, rate_scale};
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  auto book = std::make_shared<const Codebook>(build_codebook(beta1, beta2, P, rate_scale));
  std::lock_guard<std::mutex> lock(mu);
  return cache.emplace(key, std::move(book)).first->second;
}

Codebook::Quantized Codebook::quantize(double x) const {
  if (!std::isfinite(x)) throw std::invalid_argument("quantizer input must be finite");
  auto it = std::lower_bound(boundaries.begin(), boundaries.end(), x);
  std::size_t idx = static_cast<std::size_t>(it - boundaries.begin());
  return {idx, points[idx]};
}

Codebook::QuantizedComplex Codebook::quantize_complex(std::complex<double> z) const {
  Quantized re = quantize(z.real());
  Quantized im = quantize(z.imag());
  QuantizedComplex out;
  out.bits = Payload::make(re.index, index_width).concat(Payload::make(im.index, index_width));
  out.level = {re.level, im.level};
  return out;
}

std::complex<double> Codebook::level_from_bits(const Payload& bits) const {
  if (bits.width != 2 * index_width) {
    throw std::invalid_argument("coarse payload width mismatch");
  }
  // Indices decoded from corrupted payloads can exceed the level count when
  // it is not a power of two; clamp to the extreme level.
  std::uint64_t max_idx = points.size() - 1;
  std::uint64_t re = std::min(bits.high(index_width), max_idx);
  std::uint64_t im = std::min(bits.low(index_width), max_idx);
  return {points[re], points[im]};
}

double Codebook::gaussian_mse(double sigma2) const {
  const double sigma = std::sqrt(sigma2);
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double lo = (i == 0) ? -std::numeric_limits<double>::infinity() : boundaries[i - 1];
    double hi = (i + 1 == points.size()) ? std::numeric_limits<double>::infinity()
                                         : boundaries[i];
    double a = lo / sigma, b2 = hi / sigma;
    double d = points[i] / sigma;
    double cdf_a = std::isinf(a) ? 0.0 : normal_cdf(a);
    double cdf_b = std::isinf(b2) ? 1.0 : normal_cdf(b2);
    double pdf_a = std::isinf(a) ? 0.0 : normal_pdf(a);
    double pdf_b = std::isinf(b2) ? 0.0 : normal_pdf(b2);
    double apdf_a = std::isinf(a) ? 0.0 : a * pdf_a;
    double apdf_b = std::isinf(b2) ? 0.0 : b2 * pdf_b;
    double mass = cdf_b - cdf_a;
    double second = mass - (apdf_b - apdf_a);
    double first = pdf_a - pdf_b;
    total += sigma2 * (second - 2.0 * d * first + d * d * mass);
  }
  return total;
}

std::string Codebook::to_json() const {
  nlohmann::json j;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["P"] = P;
  j["rate_scale"] = rate_scale;
  j["rate_bits_per_dim"] = rate_bits_per_dim;
  j["min_distance"] = min_distance;
  j["guard_width"] = guard_width;
  j["degenerate"] = degenerate;
  j["index_width"] = index_width;
  j["points"] = points;
  j["boundaries"] = boundaries;
  return j.dump(2);
}

double agreement_probability(const Codebook& book, double beta2, double P, int trials,
                             Rng& rng) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  const double sig = std::sqrt(std::pow(P, book.beta1));
  const double noi = std::sqrt(std::pow(P, beta2));
  std::normal_distribution<double> gauss(0.0, 1.0);
  long agree = 0;
  for (int t = 0; t < trials; ++t) {
    double y = sig * gauss(rng);
    double n = noi * gauss(rng);
    if (book.quantize(y).index == book.quantize(y + n).index) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(trials);
}

UniformQuantizer UniformQuantizer::over_sigma(double sigma, int bits, double spread) {
  if (bits < 0 || bits > 30) throw std::invalid_argument("uniform quantizer bits out of range");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be nonnegative");
  UniformQuantizer q;
  q.bits = bits;
  q.levels = 1 << bits;
  q.range = spread * sigma;
  return q;
}

Codebook::Quantized UniformQuantizer::quantize(double x) const {
  if (levels == 1 || range <= 0.0) return {0, level_from_index(0)};
  double step = 2.0 * range / static_cast<double>(levels);
  double idx = std::floor((x + range) / step);
  long i = static_cast<long>(std::clamp(idx, 0.0, static_cast<double>(levels - 1)));
  return {static_cast<std::uint64_t>(i), level_from_index(static_cast<std::uint64_t>(i))};
}

double UniformQuantizer::level_from_index(std::uint64_t index) const {
  if (index >= static_cast<std::uint64_t>(levels)) {
    index = static_cast<std::uint64_t>(levels) - 1;
  }
  double step = 2.0 * range / static_cast<double>(levels);
  return -range + (static_cast<double>(index) + 0.5) * step;
}

TwoStepSpec two_step_spec(double alpha, double P, double rate_scale) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(P > 2.0)) throw std::invalid_argument("P must exceed 2");
  TwoStepSpec spec;
  spec.alpha = alpha;
  spec.P = P;
  spec.rate_scale = rate_scale;
  spec.two_stage = alpha < 0.5;
  const double B = std::log2(P);
  const int second_total =
      static_cast<int>(std::llround(rate_scale * std::min(alpha, 1.0 - alpha) * B));
  const int re_bits = (second_total + 1) / 2;
  const int im_bits = second_total - re_bits;
  if (spec.two_stage) {
    spec.coarse = cached_codebook(1.0 - alpha, alpha, P, rate_scale);
    spec.coarse_width = 2 * spec.coarse->index_width;
    // Per-dimension residual deviation, from the analytic distortion of the
    // coarse book at its design variance.
    double sigma_n = std::sqrt(std::max(spec.coarse->gaussian_mse(std::pow(P, 1.0 - alpha)), 0.0));
    spec.fine_re = UniformQuantizer::over_sigma(sigma_n, re_bits);
    spec.fine_im = UniformQuantizer::over_sigma(sigma_n, im_bits);
  } else {
    double sigma_dim = std::sqrt(std::pow(P, 1.0 - alpha) / 2.0);
    spec.fine_re = UniformQuantizer::over_sigma(sigma_dim, re_bits);
    spec.fine_im = UniformQuantizer::over_sigma(sigma_dim, im_bits);
  }
  spec.fine_width = second_total;
  return spec;
}

QuantizedInterference two_step_quantize(const TwoStepSpec& spec, std::complex<double> i) {
  QuantizedInterference out;
  if (spec.two_stage) {
    auto qc = spec.coarse->quantize_complex(i);
    out.coarse_bits = qc.bits;
    out.coarse_level = qc.level;
    std::complex<double> residual = i - qc.level;
    auto fr = spec.fine_re.quantize(residual.real());
    auto fi = spec.fine_im.quantize(residual.imag());
    out.fine_bits = Payload::make(fr.index, spec.fine_re.bits)
                        .concat(Payload::make(fi.index, spec.fine_im.bits));
    out.combined = qc.level + std::complex<double>{fr.level, fi.level};
  } else {
    auto fr = spec.fine_re.quantize(i.real());
    auto fi = spec.fine_im.quantize(i.imag());
    out.fine_bits = Payload::make(fr.index, spec.fine_re.bits)
                        .concat(Payload::make(fi.index, spec.fine_im.bits));
    out.combined = {fr.level, fi.level};
  }
  return out;
}

QuantizedInterference two_step_quantize(std::complex<double> i, double alpha, double P,
                                        double rate_scale) {
  return two_step_quantize(two_step_spec(alpha, P, rate_scale), i);
}

std::complex<double> interference_from_bits(const TwoStepSpec& spec, const Payload& coarse,
                                            const Payload& fine) {
  if (fine.width != spec.fine_width) {
    throw std::invalid_argument("fine payload width mismatch");
  }
  std::uint64_t fre = fine.high(spec.fine_re.bits);
  std::uint64_t fim = fine.low(spec.fine_im.bits);
  std::complex<double> fine_level{spec.fine_re.level_from_index(fre),
                                  spec.fine_im.level_from_index(fim)};
  if (!spec.two_stage) return fine_level;
  return spec.coarse->level_from_bits(coarse) + fine_level;
}

Payload receiver_requantize(const TwoStepSpec& spec, std::complex<double> y) {
  if (!spec.two_stage) {
    throw std::invalid_argument("coarse recovery applies to the two-stage branch only");
  }
  return spec.coarse->quantize_complex(y).bits;
}

}  // namespace qmat

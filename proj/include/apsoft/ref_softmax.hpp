#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "apsoft/errors.hpp"
#include "apsoft/quant.hpp"

namespace apsoft::refmodel {

using quant::DerivedConstants;
using quant::PrecisionConfig;
using quant::QuantizedVector;

/// Every intermediate of the scalar reference, kept for step-by-step
/// comparison against the bit-serial execution.
struct SoftmaxTrace {
  std::vector<int64_t> v_stable;   // non-positive stabilized inputs
  std::vector<int64_t> product;    // |v_stable| * mu
  std::vector<int64_t> q;          // non-negative quotients
  std::vector<int64_t> q_ln2;      // q * v_ln2
  std::vector<int64_t> v_corr;     // remainders in (-v_ln2, 0]
  std::vector<int64_t> corr_plus_b;// v_corr + v_b
  std::vector<int64_t> square;     // (v_corr + v_b)^2
  std::vector<int64_t> poly;       // square + v_c
  std::vector<int64_t> v_approx;   // poly >> q
  int64_t sum_exact = 0;           // untruncated sum of v_approx
  int64_t sum = 0;                 // register value used as divisor
  unsigned __int128 factor = 0;    // round-up reciprocal used by the divider
  int recip_bits = 0;              // reciprocal precision k
  std::vector<int64_t> out_int;    // frac_bits fixed-point probabilities
};

inline std::vector<int64_t> stabilize(std::span<const int64_t> v) {
  if (v.empty()) throw InvalidArgument("stabilize: empty input");
  const int64_t mx = *std::max_element(v.begin(), v.end());
  std::vector<int64_t> out;
  out.reserve(v.size());
  for (int64_t x : v) out.push_back(x - mx);
  return out;
}

/// Quotient/remainder of a non-positive value against v_ln2 using the
/// precomputed reciprocal: q = (|v| * mu) >> 2M, then one correction step
/// so the remainder lands in (-v_ln2, 0].
inline std::pair<int64_t, int64_t> barrett_mod(int64_t v_stable,
                                               const DerivedConstants& k,
                                               int m_bits) {
  if (v_stable > 0) throw InvalidArgument("barrett_mod: positive input");
  const int64_t n = -v_stable;
  int64_t q = static_cast<int64_t>(
      (static_cast<unsigned __int128>(n) * static_cast<unsigned __int128>(k.mu)) >>
      (2 * m_bits));
  int64_t r = v_stable + q * k.v_ln2;
  if (r <= -k.v_ln2) { // reciprocal undershoot; never triggers in M-bit range
    ++q;
    r += k.v_ln2;
  }
  return {q, r};
}

/// Second-order integer exponential: (v_corr + v_b)^2 + v_c, held in w_poly bits.
inline int64_t poly_exp(int64_t v_corr, const DerivedConstants& k,
                        const PrecisionConfig& cfg, bool strict = false) {
  if (v_corr > 0 || v_corr <= -k.v_ln2) {
    throw InvalidArgument("poly_exp: remainder out of (-v_ln2, 0]");
  }
  const int64_t base = v_corr + k.v_b;
  int64_t p = base * base + k.v_c;
  const int64_t cap = (int64_t{1} << cfg.w_poly) - 1;
  if (p > cap) {
    if (strict) throw PrecisionOverflow("poly", "poly_exp: value exceeds w_poly");
    p = cap;
  }
  return p;
}

/// poly >> q with shift-out clamping, held in w_vapprox bits.
inline int64_t shifted_exp(int64_t poly, int64_t q, const PrecisionConfig& cfg,
                           bool strict = false) {
  if (poly < 0 || q < 0) throw InvalidArgument("shifted_exp: negative operand");
  const int64_t sh = std::min<int64_t>(q, cfg.w_poly);
  int64_t v = (sh >= 63) ? 0 : (poly >> sh);
  const int64_t cap = (int64_t{1} << cfg.w_vapprox) - 1;
  if (v > cap) {
    if (strict) throw PrecisionOverflow("v_approx", "shifted_exp: value exceeds w_vapprox");
    v = cap;
  }
  return v;
}

/// Alignment shift applied when the exact sum of `count` addends cannot fit
/// the w_sum-bit register: the register keeps only the top bits.
inline int sum_alignment_shift(const PrecisionConfig& cfg, std::size_t count) {
  if (count < 2) return 0;
  const int need = std::bit_width(count - 1); // ceil(log2(count))
  return std::max(0, need - cfg.sum_extra_bits);
}

/// The exact sum as held by the w_sum-bit register: low bits beyond the
/// register's reach are dropped via the alignment shift, and the register
/// saturates at 2^w_sum - 1 instead of wrapping.
inline int64_t condition_sum(int64_t exact_sum, const PrecisionConfig& cfg,
                             std::size_t count) {
  if (exact_sum < 0) throw InvalidArgument("condition_sum: negative sum");
  const int t = sum_alignment_shift(cfg, count);
  const int64_t s = (exact_sum >> t) << t;
  const int64_t cap = (int64_t{1} << cfg.w_sum) - 1;
  return std::min(s, cap);
}

/// Sum of the exponentials as stored by the accumulator register.
inline int64_t truncated_sum(std::span<const int64_t> v_approx,
                             const PrecisionConfig& cfg) {
  int64_t s = 0;
  for (int64_t v : v_approx) {
    if (v < 0) throw InvalidArgument("truncated_sum: negative addend");
    s += v;
  }
  return condition_sum(s, cfg, v_approx.size());
}

/// Normalizes v_approx into frac_bits fixed point: floor(v * 2^D / sum).
inline std::vector<int64_t> normalize(std::span<const int64_t> v_approx,
                                      int64_t sum, int frac_bits) {
  if (sum < 1) throw DegenerateDistribution("normalize: zero exponential sum");
  std::vector<int64_t> out;
  out.reserve(v_approx.size());
  for (int64_t v : v_approx) {
    const unsigned __int128 num =
        static_cast<unsigned __int128>(v) << frac_bits;
    out.push_back(static_cast<int64_t>(num / static_cast<unsigned __int128>(sum)));
  }
  return out;
}

struct IntSoftmaxResult {
  std::vector<int64_t> out_int;
  SoftmaxTrace trace;
};

/// Full scalar reference pipeline over a quantized vector.
inline IntSoftmaxResult int_softmax(const QuantizedVector& v,
                                    const PrecisionConfig& cfg,
                                    bool strict = false) {
  if (v.values.empty()) throw InvalidArgument("int_softmax: empty input");
  const DerivedConstants k = quant::derive_constants(v.scheme, cfg, strict);
  const int m = v.scheme.m_bits;

  IntSoftmaxResult res;
  SoftmaxTrace& tr = res.trace;
  tr.v_stable = stabilize(v.values);

  const std::size_t n = v.values.size();
  tr.product.reserve(n);
  tr.q.reserve(n);
  tr.q_ln2.reserve(n);
  tr.v_corr.reserve(n);
  tr.corr_plus_b.reserve(n);
  tr.square.reserve(n);
  tr.poly.reserve(n);
  tr.v_approx.reserve(n);
  for (int64_t vs : tr.v_stable) {
    auto [q, r] = barrett_mod(vs, k, m);
    // accumulator view of the modulus multiply: product plus rounding bias
    tr.product.push_back(-vs * k.mu + k.round_bias);
    tr.q.push_back(q);
    tr.q_ln2.push_back(q * k.v_ln2);
    tr.v_corr.push_back(r);
    tr.corr_plus_b.push_back(r + k.v_b);
    tr.square.push_back((r + k.v_b) * (r + k.v_b));
    const int64_t p = poly_exp(r, k, cfg, strict);
    tr.poly.push_back(p);
    tr.v_approx.push_back(shifted_exp(p, q, cfg, strict));
  }

  for (int64_t va : tr.v_approx) tr.sum_exact += va;
  tr.sum = truncated_sum(tr.v_approx, cfg);

  const auto recip = quant::Reciprocal::make(tr.sum, cfg.frac_bits,
                                             cfg.w_vapprox, cfg.w_sum);
  tr.factor = recip.factor;
  tr.recip_bits = recip.recip_bits;
  tr.out_int.reserve(n);
  for (int64_t va : tr.v_approx) {
    tr.out_int.push_back(recip.divide(va));
  }
  res.out_int = tr.out_int;
  return res;
}

/// Numerically stabilized double-precision softmax.
inline std::vector<double> float_softmax(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("float_softmax: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidArgument("float_softmax: non-finite input");
    mx = std::max(mx, v);
  }
  std::vector<double> e;
  e.reserve(x.size());
  double sum = 0.0;
  for (double v : x) {
    const double t = std::exp(v - mx);
    e.push_back(t);
    sum += t;
  }
  for (double& t : e) t /= sum;
  return e;
}

struct ErrorMetrics {
  double max_abs = 0.0;
  double mean_abs = 0.0;
  bool argmax_match = true;
};

inline ErrorMetrics error_metrics(std::span<const double> approx,
                                  std::span<const double> exact) {
  if (approx.size() != exact.size() || approx.empty()) {
    throw InvalidArgument("error_metrics: length mismatch");
  }
  ErrorMetrics m;
  std::size_t arg_a = 0, arg_e = 0;
  for (std::size_t i = 0; i < approx.size(); ++i) {
    const double d = std::abs(approx[i] - exact[i]);
    m.max_abs = std::max(m.max_abs, d);
    m.mean_abs += d;
    if (approx[i] > approx[arg_a]) arg_a = i;
    if (exact[i] > exact[arg_e]) arg_e = i;
  }
  m.mean_abs /= static_cast<double>(approx.size());
  m.argmax_match = arg_a == arg_e;
  return m;
}

}  // namespace apsoft::refmodel

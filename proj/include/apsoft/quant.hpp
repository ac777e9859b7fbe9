#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "apsoft/errors.hpp"

namespace apsoft::quant {

/// Polynomial coefficients of the second-order exponential approximation
/// e^r ~= a * ((r/S + b/S)^2 * S^2 + c/a), r in (-ln2, 0].
inline constexpr double kPolyA = 0.3585;
inline constexpr double kPolyB = 1.353;
inline constexpr double kPolyC = 0.344;

/// Uniform symmetric quantization scheme for softmax inputs.
///
/// Inputs are clipped to [t_clip, 0] after stabilization and mapped onto
/// the signed m_bits grid, so scale = -t_clip / (2^(m_bits-1) - 1).
struct QuantScheme {
  int m_bits = 8;       // quantized input width in bits
  double t_clip = -7.0; // clipping threshold, strictly negative
  double scale = 0.0;   // real step size S

  int64_t qmin() const { return -((int64_t{1} << (m_bits - 1)) - 1); }
};

inline QuantScheme make_scheme(int m_bits, double t_clip) {
  if (m_bits < 3 || m_bits > 16) {
    throw InvalidArgument("make_scheme: m_bits must be in [3, 16], got " +
                          std::to_string(m_bits));
  }
  if (!(t_clip < 0.0) || !std::isfinite(t_clip)) {
    throw InvalidArgument("make_scheme: t_clip must be finite and negative");
  }
  QuantScheme s;
  s.m_bits = m_bits;
  s.t_clip = t_clip;
  s.scale = -t_clip / static_cast<double>((int64_t{1} << (m_bits - 1)) - 1);
  return s;
}

/// Bit widths of every intermediate of the integer softmax dataflow.
///
/// The shipped grid covers m_bits in {4,6,8}, vcorr_extra in {0,1,2}
/// (remainder width m_bits + vcorr_extra) and sum_extra_bits N in
/// {8,12,16,20}.  All widths below follow the closed forms of that grid.
struct PrecisionConfig {
  int m_bits = 8;
  int vcorr_extra = 0;    // 0, 1 or 2 extra remainder bits
  int sum_extra_bits = 16; // N: bits above w_vapprox reserved for the sum

  int w_v = 8;
  int w_vstable = 8;
  int w_vln2 = 4;
  int w_vb = 8;
  int w_vc = 16;
  int w_vcorr = 8;
  int w_poly = 19;    // (v_corr + v_b)^2 + v_c
  int w_vapprox = 14;
  int w_sum = 30;
  int w_out = 28;     // 2M + 12
  int frac_bits = 27; // D: fixed-point fraction of the normalized output

  std::string key() const {
    return "M" + std::to_string(m_bits) + "-vc+" + std::to_string(vcorr_extra) +
           "-N" + std::to_string(sum_extra_bits);
  }
};

/// Builds a configuration from the closed-form width rules. Accepts any
/// m_bits >= 3; use preset() to restrict to the shipped grid.
inline PrecisionConfig make_config(int m_bits, int vcorr_extra, int sum_extra_bits) {
  if (m_bits < 3 || m_bits > 16) {
    throw InvalidArgument("make_config: m_bits out of range");
  }
  if (vcorr_extra < 0 || vcorr_extra > 2) {
    throw InvalidArgument("make_config: vcorr_extra must be 0, 1 or 2");
  }
  if (sum_extra_bits < 1 || sum_extra_bits > 40) {
    throw InvalidArgument("make_config: sum_extra_bits out of range");
  }
  PrecisionConfig c;
  c.m_bits = m_bits;
  c.vcorr_extra = vcorr_extra;
  c.sum_extra_bits = sum_extra_bits;
  c.w_v = m_bits;
  c.w_vstable = m_bits;
  c.w_vln2 = 4;
  c.w_vb = m_bits;
  c.w_vc = 2 * m_bits;
  c.w_vcorr = m_bits + vcorr_extra;
  c.w_poly = 2 * (m_bits + vcorr_extra) + 3;
  c.w_vapprox = m_bits + 6 + 2 * vcorr_extra;
  c.w_sum = c.w_vapprox + sum_extra_bits;
  c.w_out = 2 * m_bits + 12;
  c.frac_bits = 2 * m_bits + 11;
  return c;
}

/// Returns the exact grid cell; anything off-grid is rejected.
inline PrecisionConfig preset(int m_bits, int vcorr_extra, int sum_extra_bits) {
  const bool m_ok = m_bits == 4 || m_bits == 6 || m_bits == 8;
  const bool e_ok = vcorr_extra >= 0 && vcorr_extra <= 2;
  const bool n_ok = sum_extra_bits == 8 || sum_extra_bits == 12 ||
                    sum_extra_bits == 16 || sum_extra_bits == 20;
  if (!m_ok || !e_ok || !n_ok) {
    throw UnknownPreset("preset: no grid cell M" + std::to_string(m_bits) +
                        "-vc+" + std::to_string(vcorr_extra) + "-N" +
                        std::to_string(sum_extra_bits));
  }
  return make_config(m_bits, vcorr_extra, sum_extra_bits);
}

/// Parses a preset key of the form "M8-vc+0-N16".
inline PrecisionConfig parse_preset_key(const std::string& key) {
  int m = 0, e = 0, n = 0;
  char plus = 0;
  if (std::sscanf(key.c_str(), "M%d-vc%c%d-N%d", &m, &plus, &e, &n) != 4 ||
      plus != '+') {
    throw UnknownPreset("parse_preset_key: malformed key '" + key + "'");
  }
  return preset(m, e, n);
}

/// All 36 shipped grid keys, in deterministic sweep order.
inline std::vector<std::string> all_preset_keys() {
  std::vector<std::string> keys;
  for (int m : {4, 6, 8}) {
    for (int e : {0, 1, 2}) {
      for (int n : {8, 12, 16, 20}) {
        keys.push_back(preset(m, e, n).key());
      }
    }
  }
  return keys;
}

/// Offline integer constants of the approximation, derived once per scheme.
struct DerivedConstants {
  int64_t v_ln2 = 0; // floor(ln2 / S)
  int64_t mu = 0;    // floor(2^(2M) / v_ln2), reciprocal for the modulus
  int64_t round_bias = 0; // 2^(M-1), seeds the modulus multiply accumulator
  int64_t v_b = 0;   // floor(b / S)
  int64_t v_c = 0;   // floor(c / (a * S^2))
  double a = kPolyA;
  double b = kPolyB;
  double c = kPolyC;
  double s_sm_real = 0.0;  // a * S^2, the real output scale of the polynomial
  int64_t s_sm_floor = 0;  // floor(a * S^2); zero for every practical scheme
  std::vector<std::string> warnings; // permissive-mode width notes
};

namespace detail {

inline bool fits_unsigned(int64_t v, int width) {
  return width >= 63 || (v >= 0 && v < (int64_t{1} << width));
}

inline void check_width(int64_t v, int width, const char* name, bool strict,
                        std::vector<std::string>& warnings) {
  if (fits_unsigned(v, width)) return;
  const std::string msg = std::string(name) + "=" + std::to_string(v) +
                          " does not fit " + std::to_string(width) + " bits";
  if (strict) throw PrecisionOverflow(name, "derive_constants: " + msg);
  warnings.push_back(msg);
}

}  // namespace detail

inline DerivedConstants derive_constants(const QuantScheme& scheme,
                                         const PrecisionConfig& cfg,
                                         bool strict = false) {
  DerivedConstants k;
  const double s = scheme.scale;
  k.v_ln2 = static_cast<int64_t>(std::floor(std::log(2.0) / s));
  if (k.v_ln2 < 1) {
    throw DegenerateScale("derive_constants: floor(ln2/S) == 0 (S too large)");
  }
  const int m = scheme.m_bits;
  k.mu = (int64_t{1} << (2 * m)) / k.v_ln2;
  k.round_bias = int64_t{1} << (m - 1);
  k.v_b = static_cast<int64_t>(std::floor(kPolyB / s));
  k.v_c = static_cast<int64_t>(std::floor(kPolyC / (kPolyA * s * s)));
  k.s_sm_real = kPolyA * s * s;
  k.s_sm_floor = static_cast<int64_t>(std::floor(k.s_sm_real));

  detail::check_width(k.v_ln2, cfg.w_vln2, "v_ln2", strict, k.warnings);
  detail::check_width(k.v_b, cfg.w_vb, "v_b", strict, k.warnings);
  detail::check_width(k.v_c, cfg.w_vc, "v_c", strict, k.warnings);
  detail::check_width(k.mu, 2 * m + 1, "mu", strict, k.warnings);
  return k;
}

/// Quantized non-positive integer vector plus the scheme that produced it.
struct QuantizedVector {
  std::vector<int64_t> values;
  QuantScheme scheme;
};

/// Stabilizes (subtract max), clips to [t_clip, 0] and rounds to the grid.
/// Rounding is half-away-from-zero; outputs lie in [-(2^(M-1)-1), 0].
inline QuantizedVector quantize(std::span<const double> x, const QuantScheme& scheme) {
  if (x.empty()) throw InvalidArgument("quantize: empty input");
  double max_x = -std::numeric_limits<double>::infinity();
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidArgument("quantize: non-finite input");
    max_x = std::max(max_x, v);
  }
  QuantizedVector out;
  out.scheme = scheme;
  out.values.reserve(x.size());
  const int64_t lo = scheme.qmin();
  for (double v : x) {
    const double shifted = std::clamp(v - max_x, scheme.t_clip, 0.0);
    auto q = static_cast<int64_t>(std::round(shifted / scheme.scale));
    out.values.push_back(std::clamp(q, lo, int64_t{0}));
  }
  return out;
}

/// Round-up reciprocal divider: out = (v * factor) >> (recip_bits - frac_bits)
/// equals floor(v * 2^frac_bits / divisor) exactly for all v < 2^value_bits
/// and divisor < 2^divisor_bits, because the overshoot of the rounded-up
/// factor stays below 1/divisor when recip_bits >= frac_bits + value_bits +
/// divisor_bits.
struct Reciprocal {
  unsigned __int128 factor = 0;
  int recip_bits = 0;
  int frac_bits = 0;

  static Reciprocal make(int64_t divisor, int frac_bits, int value_bits,
                         int divisor_bits) {
    if (divisor < 1) {
      throw DegenerateDistribution("reciprocal: divisor must be >= 1");
    }
    Reciprocal r;
    r.recip_bits = frac_bits + value_bits + divisor_bits;
    r.frac_bits = frac_bits;
    if (r.recip_bits > 126) {
      throw InvalidArgument("reciprocal: precision exceeds 126 bits");
    }
    const unsigned __int128 one = 1;
    r.factor = (one << r.recip_bits) / static_cast<unsigned __int128>(divisor) + 1;
    return r;
  }

  int factor_bits() const { return recip_bits + 1; }

  int64_t divide(int64_t v) const {
    const unsigned __int128 p = static_cast<unsigned __int128>(v) * factor;
    return static_cast<int64_t>(p >> (recip_bits - frac_bits));
  }
};

/// Fixed-point readback of the normalized outputs: out_i / 2^frac_bits.
inline std::vector<double> dequantize_output(std::span<const int64_t> out_int,
                                             int frac_bits) {
  if (frac_bits < 1) throw InvalidArgument("dequantize_output: frac_bits < 1");
  std::vector<double> r;
  r.reserve(out_int.size());
  const double inv = std::ldexp(1.0, -frac_bits);
  for (int64_t v : out_int) r.push_back(static_cast<double>(v) * inv);
  return r;
}

}  // namespace apsoft::quant

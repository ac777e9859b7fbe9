#pragma once

#include <bit>
#include <cstdint>

#include "apsoft/ap_state.hpp"
#include "apsoft/errors.hpp"
#include "apsoft/quant.hpp"

namespace apsoft::kernels {

using ap::ApState;
using ap::Bits;
using ap::ColBit;
using ap::ColumnField;

struct KernelReport {
  uint64_t cycles = 0;
  uint64_t compares = 0;
  uint64_t writes = 0;
  bool uses_extension = false; // true for ops without a published runtime form

  friend KernelReport operator+(KernelReport a, const KernelReport& b) {
    a.cycles += b.cycles;
    a.compares += b.compares;
    a.writes += b.writes;
    a.uses_extension = a.uses_extension || b.uses_extension;
    return a;
  }
};

namespace detail {

inline KernelReport report_since(const ApState& ap, const ap::CycleCounters& before,
                                 bool extension = false) {
  const auto d = ap.counters() - before;
  return {d.total(), d.compares, d.writes, extension};
}

/// In-place full adder R <- A + R with a dedicated carry column. Four
/// passes per bit; pass order keeps rewritten rows from re-matching.
inline const ap::Lut& add_lut() {
  using ap::Trit;
  using ap::WriteOp;
  static const ap::Lut lut{
      {{{Trit::Zero, Trit::Zero, Trit::One}, {WriteOp::Keep, WriteOp::One, WriteOp::Zero}},
       {{Trit::Zero, Trit::One, Trit::One}, {WriteOp::Keep, WriteOp::Zero, WriteOp::Keep}},
       {{Trit::One, Trit::One, Trit::Zero}, {WriteOp::Keep, WriteOp::Zero, WriteOp::One}},
       {{Trit::One, Trit::Zero, Trit::Zero}, {WriteOp::Keep, WriteOp::One, WriteOp::Keep}}},
      /*in_place_safe=*/true};
  return lut;
}

/// R <- A + B (invert_b=false) or A - B (invert_b=true, carry seeded to 1).
/// Schedule: 1 carry init + w result clears + 2w copy + 8w adder passes.
inline KernelReport add_like(ApState& ap, const ColumnField& a,
                             const ColumnField& b, const ColumnField& r,
                             int carry_col, bool invert_b) {
  const int w = a.width;
  if (b.width != w || r.width < w) {
    throw LayoutConflict("add: field widths disagree with operand width");
  }
  const auto before = ap.counters();
  const Bits all(static_cast<std::size_t>(ap.rows()), true);

  ap.masked_write({{carry_col, invert_b}}, all);
  for (int k = 0; k < w; ++k) {
    ap.masked_write({{r.col(k), false}}, all);
  }
  for (int k = 0; k < w; ++k) {
    const Bits tag = ap.compare({{b.col(k), !invert_b}});
    ap.masked_write({{r.col(k), true}}, tag);
  }
  ap::LutBinding bind{{a}, ColumnField{r.offset, w, false}, carry_col};
  run_lut_bitserial(ap, add_lut(), bind, w);
  return report_since(ap, before);
}

}  // namespace detail

/// Per-row sum, low `width` bits of R (two's complement); carry-out is left
/// in the scratch carry column. Runtime: 2M + 8M + M + 1.
inline KernelReport k_add(ApState& ap, const ColumnField& a, const ColumnField& b,
                          const ColumnField& r, int carry_col) {
  return detail::add_like(ap, a, b, r, carry_col, false);
}

/// Per-row difference A - B, costed and scheduled as addition.
inline KernelReport k_sub(ApState& ap, const ColumnField& a, const ColumnField& b,
                          const ColumnField& r, int carry_col) {
  return detail::add_like(ap, a, b, r, carry_col, true);
}

/// Per-row unsigned product into R (2w bits), accumulated on top of
/// `preset_bits` (the clear phase presents that constant instead of zeros,
/// at the same cost). Shift-and-add over the multiplier bits; every partial
/// is gated on the multiplier bit so only contributing rows match.
/// Runtime: 2M + 8M^2 + 2M.
inline KernelReport k_mul(ApState& ap, const ColumnField& a, const ColumnField& b,
                          const ColumnField& r, int carry_col,
                          unsigned __int128 preset_bits = 0) {
  const int w = a.width;
  if (b.width != w || r.width < 2 * w) {
    throw LayoutConflict("k_mul: result field narrower than 2M bits");
  }
  // the partial carry chain assumes the preset stays below one operand
  if (w < 128 && (preset_bits >> w) != 0) {
    throw PrecisionOverflow("preset", "k_mul: accumulator preset exceeds M bits");
  }
  const auto overlaps_r = [&](const ColumnField& f) {
    return !(f.offset + f.width <= r.offset || r.offset + 2 * w <= f.offset);
  };
  if (overlaps_r(a) || overlaps_r(b)) {
    throw LayoutConflict("k_mul: product field overlaps an operand");
  }
  const auto before = ap.counters();
  const Bits all(static_cast<std::size_t>(ap.rows()), true);

  // 2w init cycles presenting the preset; the scratch carry rides along
  // with the first one.
  ap.masked_write({{r.col(0), (preset_bits & 1) != 0}, {carry_col, false}}, all);
  for (int k = 1; k < 2 * w; ++k) {
    ap.masked_write({{r.col(k), ((preset_bits >> k) & 1) != 0}}, all);
  }

  for (int j = 0; j < w; ++j) {
    const ColBit gate{b.col(j), true};
    for (int k = 0; k < w; ++k) {
      const int rc = r.col(j + k);
      const int ac = a.col(k);
      // gated full-adder passes, same order as the plain adder
      {
        const Bits tag = ap.compare({gate, {ac, false}, {rc, false}, {carry_col, true}});
        ap.masked_write({{rc, true}, {carry_col, false}}, tag);
      }
      {
        const Bits tag = ap.compare({gate, {ac, false}, {rc, true}, {carry_col, true}});
        ap.masked_write({{rc, false}}, tag);
      }
      {
        const Bits tag = ap.compare({gate, {ac, true}, {rc, true}, {carry_col, false}});
        ap.masked_write({{rc, false}, {carry_col, true}}, tag);
      }
      {
        const Bits tag = ap.compare({gate, {ac, true}, {rc, false}, {carry_col, false}});
        ap.masked_write({{rc, true}}, tag);
      }
    }
    // store the ripple-out and reset the carry for the next partial
    const Bits tag = ap.compare({{carry_col, true}});
    ap.masked_write({{r.col(j + w), true}, {carry_col, false}}, tag);
  }
  return detail::report_since(ap, before);
}

inline KernelReport k_square(ApState& ap, const ColumnField& a,
                             const ColumnField& r, int carry_col) {
  return k_mul(ap, a, a, r, carry_col);
}

/// Writes the constant into every row, one bit column per cycle.
inline KernelReport k_broadcast(ApState& ap, unsigned __int128 c,
                                const ColumnField& f) {
  if (f.width < 128 && (c >> f.width) != 0) {
    throw PrecisionOverflow("broadcast", "k_broadcast: constant exceeds field width");
  }
  const auto before = ap.counters();
  const Bits all(static_cast<std::size_t>(ap.rows()), true);
  for (int k = 0; k < f.width; ++k) {
    ap.masked_write({{f.col(k), ((c >> k) & 1) != 0}}, all);
  }
  return detail::report_since(ap, before);
}

/// Broadcast the constant then multiply by it. Costed at the widened width.
inline KernelReport k_mul_const(ApState& ap, const ColumnField& a,
                                unsigned __int128 c, const ColumnField& const_field,
                                const ColumnField& r, int carry_col) {
  KernelReport rep = k_broadcast(ap, c, const_field);
  rep = rep + k_mul(ap, a, const_field, r, carry_col);
  return rep;
}

/// Constant right shift: pure column re-addressing, zero cycles.
inline ColumnField k_shr_const(const ColumnField& f, int s) {
  return ap::shifted_view(f, s);
}

/// Per-row variable right shift, in place: A <- A >> Q. Round t tags the
/// rows whose shift bit t is set, then copies every bit of A from position
/// k + 2^t under that tag (tag-driven write, one compare + one write per
/// bit). Bits sourced past the top of A read from the always-zero column.
/// Runtime: q_bits * (1 + 2 * w(A)) — repository extension, no published form.
inline KernelReport k_shr_var(ApState& ap, const ColumnField& a,
                              const ColumnField& q, int zero_col) {
  const auto before = ap.counters();
  for (int t = 0; t < q.width; ++t) {
    const int64_t sh = int64_t{1} << t;
    const Bits round_tag = ap.compare({{q.col(t), true}});
    for (int k = 0; k < a.width; ++k) {
      const int64_t src = k + sh;
      const Bits data_tag =
          (src < a.width) ? ap.compare({{a.col(static_cast<int>(src)), true}})
                          : ap.compare({{zero_col, true}});
      ap.write_from_tag(a.col(k), data_tag, round_tag);
    }
  }
  return detail::report_since(ap, before, /*extension=*/true);
}

struct ReduceResult {
  int64_t sum = 0;
  KernelReport report;
};

/// Sum of the two words of every row, then a row-pair tree over the second
/// dimension; the total is read back from row 0. The partial field must be
/// untouched (all zero) columns of width lane_width + ceil(log2 rows) + 1.
/// Runtime: 2M + 8M + 8*log2(L/2) + 1 for L = 2*rows words.
inline ReduceResult k_reduce_sum(ApState& ap, const ColumnField& lane_a,
                                 const ColumnField& lane_b,
                                 const ColumnField& partial) {
  const int w = lane_a.width;
  if (lane_b.width != w) throw LayoutConflict("k_reduce_sum: lane widths differ");
  const int stages = (ap.rows() <= 1)
                         ? 0
                         : std::bit_width(static_cast<unsigned>(ap.rows() - 1));
  if (partial.width < w + stages + 1) {
    throw LayoutConflict("k_reduce_sum: partial field too narrow for the tree");
  }
  const auto before = ap.counters();

  // in-row pair add: copy lane B, then add lane A in place; the running
  // carry lives in the partial field's bit w and becomes the sum MSB
  for (int k = 0; k < w; ++k) {
    const Bits tag = ap.compare({{lane_b.col(k), true}});
    ap.masked_write({{partial.col(k), true}}, tag);
  }
  ap::LutBinding bind{{lane_a}, ColumnField{partial.offset, w, false}, partial.col(w)};
  run_lut_bitserial(ap, detail::add_lut(), bind, w);

  for (int s = 1; s <= stages; ++s) {
    ap.row_reduce_stage(partial, 1 << (s - 1));
  }
  ap.compare_rows({{0, true}}); // readout strobe selecting the root row

  ReduceResult res;
  res.sum = static_cast<int64_t>(ap.read_word_u(0, partial));
  res.report = detail::report_since(ap, before);
  return res;
}

struct DivResult {
  ColumnField out; // floor(A * 2^frac_bits / divisor), w_out bits
  quant::Reciprocal recip;
  KernelReport report;
};

/// Scalar division via the controller's round-up reciprocal: broadcast the
/// factor, multiply at the widened width, then re-address the product.
/// Exact to the floor quotient for operands within value_bits/divisor_bits.
inline DivResult k_div_scalar(ApState& ap, const ColumnField& a_wide,
                              int64_t divisor, int frac_bits, int value_bits,
                              int divisor_bits, const ColumnField& factor_field,
                              const ColumnField& prod_field, int carry_col,
                              int out_bits) {
  DivResult res;
  res.recip = quant::Reciprocal::make(divisor, frac_bits, value_bits, divisor_bits);
  if (factor_field.width != res.recip.factor_bits() ||
      a_wide.width != factor_field.width) {
    throw LayoutConflict("k_div_scalar: factor field width mismatch");
  }
  res.report = k_mul_const(ap, a_wide, res.recip.factor, factor_field, prod_field,
                           carry_col);
  res.report.uses_extension = true;
  res.out = ap::subfield(prod_field, res.recip.recip_bits - frac_bits, out_bits);
  return res;
}

}  // namespace apsoft::kernels

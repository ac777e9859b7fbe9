#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "apsoft/errors.hpp"

namespace apsoft::ap {

/// Word-packed bit vector used for tag registers and column payloads.
class Bits {
 public:
  Bits() = default;
  explicit Bits(std::size_t n, bool value = false)
      : n_(n), w_((n + 63) / 64, value ? ~uint64_t{0} : 0) {
    trim();
  }

  std::size_t size() const { return n_; }

  bool get(std::size_t i) const { return (w_[i >> 6] >> (i & 63)) & 1; }
  void set(std::size_t i, bool v) {
    const uint64_t m = uint64_t{1} << (i & 63);
    if (v) w_[i >> 6] |= m; else w_[i >> 6] &= ~m;
  }

  void fill(bool v) {
    for (auto& w : w_) w = v ? ~uint64_t{0} : 0;
    trim();
  }

  std::size_t popcount() const {
    std::size_t c = 0;
    for (uint64_t w : w_) c += static_cast<std::size_t>(__builtin_popcountll(w));
    return c;
  }

  bool any() const {
    for (uint64_t w : w_) if (w) return true;
    return false;
  }

  /// this &= (other == bit ? other : ~other), the compare accumulation step.
  void and_match(const Bits& col, bool bit) {
    for (std::size_t i = 0; i < w_.size(); ++i) {
      w_[i] &= bit ? col.w_[i] : ~col.w_[i];
    }
    trim();
  }

  /// this = (this & ~sel) | (src & sel): row-selective overwrite.
  void merge(const Bits& src, const Bits& sel) {
    for (std::size_t i = 0; i < w_.size(); ++i) {
      w_[i] = (w_[i] & ~sel.w_[i]) | (src.w_[i] & sel.w_[i]);
    }
  }

  void set_masked(const Bits& sel, bool bit) {
    for (std::size_t i = 0; i < w_.size(); ++i) {
      if (bit) w_[i] |= sel.w_[i]; else w_[i] &= ~sel.w_[i];
    }
  }

  friend bool operator==(const Bits& a, const Bits& b) {
    return a.n_ == b.n_ && a.w_ == b.w_;
  }

 private:
  void trim() {
    if (n_ % 64 && !w_.empty()) {
      w_.back() &= (~uint64_t{0}) >> (64 - n_ % 64);
    }
  }

  std::size_t n_ = 0;
  std::vector<uint64_t> w_;
};

/// Contiguous run of bit columns holding one word per row, LSB first.
struct ColumnField {
  int offset = 0;
  int width = 0;
  bool is_signed = false;

  int col(int bit) const { return offset + bit; }
};

/// Shifts the read window right by `s` bits; columns shifted past the end
/// read as zero (the caller sees a narrower field).
inline ColumnField shifted_view(const ColumnField& f, int s) {
  if (s < 0) throw InvalidArgument("shifted_view: negative shift");
  ColumnField g = f;
  g.offset = f.offset + std::min(s, f.width);
  g.width = std::max(0, f.width - s);
  return g;
}

inline ColumnField subfield(const ColumnField& f, int bit_offset, int width,
                            bool is_signed = false) {
  return ColumnField{f.offset + bit_offset, width, is_signed};
}

struct CycleCounters {
  uint64_t compares = 0;
  uint64_t writes = 0;

  uint64_t total() const { return compares + writes; }
  friend CycleCounters operator-(CycleCounters a, const CycleCounters& b) {
    a.compares -= b.compares;
    a.writes -= b.writes;
    return a;
  }
};

/// One column-and-value pair of a search key or write pattern.
struct ColBit {
  int col;
  bool bit;
};

/// Two-dimensional associative processor state: a CAM bit matrix with
/// key/mask/tag registers in the column dimension (bit-serial word-parallel
/// search and write across all rows) and a second register set in the row
/// dimension. Every compare and every write costs one cycle, no matter how
/// many rows or columns participate.
class ApState {
 public:
  ApState(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 1 || cols < 1) {
      throw InvalidArgument("ApState: dimensions must be positive");
    }
    cells_.assign(static_cast<std::size_t>(cols), Bits(static_cast<std::size_t>(rows)));
    tag_ = Bits(static_cast<std::size_t>(rows));
    tag2_ = Bits(static_cast<std::size_t>(cols));
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  const Bits& column(int c) const { return cells_.at(static_cast<std::size_t>(c)); }
  bool cell(int r, int c) const { return column(c).get(static_cast<std::size_t>(r)); }

  const CycleCounters& counters() const { return counters_; }
  void reset_counters() { counters_ = {}; }
  CycleCounters snapshot_counters() const { return counters_; }

  /// Streams one line per cycle when set; null disables tracing.
  void set_cycle_trace(std::ostream* os) { trace_ = os; }

  /// Presents `key` on the listed columns and searches all rows at once.
  /// Rows matching every listed bit are tagged. An empty pattern is a
  /// vacuous match: every row is tagged.
  const Bits& compare(const std::vector<ColBit>& key) {
    tag_.fill(true);
    for (const ColBit& kb : key) {
      check_col(kb.col);
      tag_.and_match(cells_[static_cast<std::size_t>(kb.col)], kb.bit);
    }
    ++counters_.compares;
    trace_cycle("compare", "col", key, tag_.popcount());
    return tag_;
  }

  /// Writes the pattern bits into every tagged row. The cycle is spent even
  /// when the tag is empty (the controller runs a fixed schedule).
  void masked_write(const std::vector<ColBit>& pattern, const Bits& tag) {
    for (const ColBit& pb : pattern) {
      check_col(pb.col);
      cells_[static_cast<std::size_t>(pb.col)].set_masked(tag, pb.bit);
    }
    ++counters_.writes;
    trace_cycle("write", "col", pattern, tag.popcount());
  }

  /// Write cycle whose data source is a tag register instead of the key:
  /// rows selected by `row_sel` get cell[r][col] = values[r]. Used for
  /// host loads and for tag-driven conditional copies.
  void write_from_tag(int col, const Bits& values, const Bits& row_sel) {
    check_col(col);
    cells_[static_cast<std::size_t>(col)].merge(values, row_sel);
    ++counters_.writes;
    trace_cycle("write", "col", {{col, true}}, row_sel.popcount());
  }

  /// Row-dimension search: presents per-row bits and tags the columns on
  /// which every listed row matches.
  const Bits& compare_rows(const std::vector<ColBit>& row_key) {
    tag2_.fill(true);
    for (int c = 0; c < cols_; ++c) {
      for (const ColBit& rb : row_key) {
        check_row(rb.col);
        if (cells_[static_cast<std::size_t>(c)].get(static_cast<std::size_t>(rb.col)) != rb.bit) {
          tag2_.set(static_cast<std::size_t>(c), false);
          break;
        }
      }
    }
    ++counters_.compares;
    trace_cycle("compare", "row", row_key, tag2_.popcount());
    return tag2_;
  }

  /// Row-dimension write: for every tagged column, the listed rows take the
  /// listed bits.
  void write_rows(const std::vector<ColBit>& row_pattern, const Bits& col_tag) {
    for (int c = 0; c < cols_; ++c) {
      if (!col_tag.get(static_cast<std::size_t>(c))) continue;
      for (const ColBit& rb : row_pattern) {
        check_row(rb.col);
        cells_[static_cast<std::size_t>(c)].set(static_cast<std::size_t>(rb.col), rb.bit);
      }
    }
    ++counters_.writes;
    trace_cycle("write", "row", row_pattern, col_tag.popcount());
  }

  /// One stage of the row-pair reduction tree: every row r that is a
  /// multiple of 2*stride accumulates row r+stride over `field`, all pairs
  /// in parallel. The operation LUT is applied across all bits of the two
  /// selected rows at once (row-dimension passes), so the stage costs a
  /// fixed 4 compare + 4 write cycles regardless of field width.
  void row_reduce_stage(const ColumnField& field, int stride) {
    check_field(field);
    if (stride < 1) throw InvalidArgument("row_reduce_stage: stride < 1");
    for (int pass = 0; pass < 4; ++pass) {
      ++counters_.compares;
      trace_cycle("compare", "row", {{stride, true}}, 0);
      ++counters_.writes;
      trace_cycle("write", "row", {{stride, true}}, 0);
    }
    for (int r = 0; r + stride < rows_; r += 2 * stride) {
      const uint64_t a = read_word_u(r, field);
      const uint64_t b = read_word_u(r + stride, field);
      uint64_t s = a + b;
      if (field.width < 64) s &= (~uint64_t{0}) >> (64 - field.width);
      poke_word_u(r, field, s);
    }
  }

  // -- host load/store (DMA-style, one write cycle per bit column) --

  void load_column(const ColumnField& f, const std::vector<int64_t>& words) {
    check_field(f);
    if (static_cast<int>(words.size()) != rows_) {
      throw InvalidArgument("load_column: word count != rows");
    }
    const Bits all(static_cast<std::size_t>(rows_), true);
    for (int k = 0; k < f.width; ++k) {
      Bits plane(static_cast<std::size_t>(rows_));
      for (int r = 0; r < rows_; ++r) {
        const uint64_t u = encode(words[static_cast<std::size_t>(r)], f);
        plane.set(static_cast<std::size_t>(r), (u >> k) & 1);
      }
      write_from_tag(f.col(k), plane, all);
    }
  }

  std::vector<int64_t> read_column(const ColumnField& f) const {
    check_field(f);
    std::vector<int64_t> out(static_cast<std::size_t>(rows_));
    for (int r = 0; r < rows_; ++r) {
      uint64_t u = read_word_u(r, f);
      if (f.is_signed && f.width < 64 && ((u >> (f.width - 1)) & 1)) {
        u |= (~uint64_t{0}) << f.width;
      }
      out[static_cast<std::size_t>(r)] = static_cast<int64_t>(u);
    }
    return out;
  }

  /// Raw unsigned readback of up to 64 bits; zero width reads as zero.
  uint64_t read_word_u(int r, const ColumnField& f) const {
    uint64_t u = 0;
    for (int k = 0; k < f.width && k < 64; ++k) {
      if (cell(r, f.col(k))) u |= uint64_t{1} << k;
    }
    return u;
  }

 private:
  friend class ApTestPeek;

  void poke_word_u(int r, const ColumnField& f, uint64_t u) {
    for (int k = 0; k < f.width && k < 64; ++k) {
      cells_[static_cast<std::size_t>(f.col(k))].set(static_cast<std::size_t>(r),
                                                     (u >> k) & 1);
    }
  }

  uint64_t encode(int64_t w, const ColumnField& f) const {
    if (f.is_signed) {
      const int64_t lo = -(int64_t{1} << (f.width - 1));
      const int64_t hi = (int64_t{1} << (f.width - 1)) - 1;
      if (w < lo || w > hi) {
        throw PrecisionOverflow("load", "load_column: signed value out of range");
      }
    } else {
      if (w < 0 || (f.width < 63 && w >= (int64_t{1} << f.width))) {
        throw PrecisionOverflow("load", "load_column: unsigned value out of range");
      }
    }
    return static_cast<uint64_t>(w) & ((f.width >= 64) ? ~uint64_t{0}
                                                       : ((uint64_t{1} << f.width) - 1));
  }

  void check_col(int c) const {
    if (c < 0 || c >= cols_) throw InvalidArgument("column index out of range");
  }
  void check_row(int r) const {
    if (r < 0 || r >= rows_) throw InvalidArgument("row index out of range");
  }
  void check_field(const ColumnField& f) const {
    if (f.offset < 0 || f.width < 0 || f.offset + f.width > cols_) {
      throw InvalidArgument("field exceeds column count");
    }
  }

  void trace_cycle(const char* kind, const char* dim,
                   const std::vector<ColBit>& pattern, std::size_t tag_pop) {
    if (!trace_) return;
    *trace_ << "{\"cycle\":" << counters_.total() << ",\"kind\":\"" << kind
            << "\",\"dim\":\"" << dim << "\",\"pattern\":\"";
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      if (i) *trace_ << ' ';
      *trace_ << pattern[i].col << ':' << (pattern[i].bit ? 1 : 0);
    }
    *trace_ << "\",\"tag_pop\":" << tag_pop << "}\n";
  }

  int rows_;
  int cols_;
  std::vector<Bits> cells_; // column-major: cells_[col] holds one bit per row
  Bits tag_;
  Bits tag2_;
  CycleCounters counters_;
  std::ostream* trace_ = nullptr;
};

inline ApState new_ap(int rows, int cols) { return ApState(rows, cols); }

// ---------------------------------------------------------------------------
// Generic bit-serial LUT engine
// ---------------------------------------------------------------------------

enum class Trit : uint8_t { Zero, One, DontCare };
enum class WriteOp : uint8_t { Zero, One, Keep };

/// One compare/write pass over the per-bit column tuple
/// [operand_0 .. operand_{k-1}, result, carry].
struct LutPass {
  std::vector<Trit> match;
  std::vector<WriteOp> write;
};

/// Ordered pass list applied at every bit position, LSB first.
struct Lut {
  std::vector<LutPass> passes;
  bool in_place_safe = false; // result may overlap an operand
};

/// Roles resolved to physical columns for one bit position.
struct LutBinding {
  std::vector<ColumnField> operands;
  ColumnField result;
  int carry_col = -1; // fixed column shared by all bit positions, -1 if unused
};

/// Applies `lut` bit position by bit position across all rows in parallel
/// and returns the cycles consumed. Functional meaning belongs to the
/// kernel that owns the LUT; this engine only sequences compare/write pairs.
inline uint64_t run_lut_bitserial(ApState& ap, const Lut& lut,
                                  const LutBinding& bind, int width) {
  if (!lut.in_place_safe) {
    for (const auto& op : bind.operands) {
      const bool overlap = !(bind.result.offset + bind.result.width <= op.offset ||
                             op.offset + op.width <= bind.result.offset);
      if (overlap && bind.result.width > 0 && op.width > 0) {
        throw LayoutConflict("run_lut_bitserial: result overlaps an operand");
      }
    }
  }
  const uint64_t before = ap.counters().total();
  const std::size_t roles = bind.operands.size() + 2;
  for (int k = 0; k < width; ++k) {
    for (const LutPass& pass : lut.passes) {
      if (pass.match.size() != roles || pass.write.size() != roles) {
        throw InvalidArgument("run_lut_bitserial: pass arity mismatch");
      }
      std::vector<ColBit> key;
      std::vector<ColBit> wr;
      for (std::size_t i = 0; i < roles; ++i) {
        int col;
        if (i < bind.operands.size()) {
          col = bind.operands[i].col(k);
        } else if (i == bind.operands.size()) {
          col = bind.result.col(k);
        } else {
          col = bind.carry_col;
          if (col < 0) continue;
        }
        if (pass.match[i] != Trit::DontCare) {
          key.push_back({col, pass.match[i] == Trit::One});
        }
        if (pass.write[i] != WriteOp::Keep) {
          wr.push_back({col, pass.write[i] == WriteOp::One});
        }
      }
      const Bits& tag = ap.compare(key);
      ap.masked_write(wr, tag);
    }
  }
  return ap.counters().total() - before;
}

/// Test access into private cell state (shadow-matrix fuzzing).
class ApTestPeek {
 public:
  static void poke(ApState& ap, int r, const ColumnField& f, uint64_t u) {
    ap.poke_word_u(r, f, u);
  }
};

}  // namespace apsoft::ap

#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "apsoft/errors.hpp"
#include "apsoft/quant.hpp"

namespace apsoft::sched {

using quant::PrecisionConfig;

inline int ceil_log2(int64_t n) {
  if (n < 1) throw InvalidArgument("ceil_log2: non-positive argument");
  return n <= 1 ? 0 : std::bit_width(static_cast<uint64_t>(n - 1));
}

enum class OpKind {
  Load,      // host word load, one write cycle per bit
  Broadcast, // constant fill, one write cycle per bit
  Add,       // also covers subtraction
  Mul,
  ShiftVar,  // per-row variable shift (extension)
  Reduce,
  Readdress, // zero-cycle column re-addressing
};

/// Cycle split and energy accounting of one primitive inside a step.
struct OpCost {
  OpKind kind = OpKind::Add;
  int width = 0;        // operand width the primitive runs at
  uint64_t compares = 0;
  uint64_t writes = 0;
  int energy_width = 0; // active bit columns per cycle of this primitive

  uint64_t cycles() const { return compares + writes; }
};

inline OpCost load_cost(int w) { return {OpKind::Load, w, 0, uint64_t(w), 1}; }
inline OpCost broadcast_cost(int w) { return {OpKind::Broadcast, w, 0, uint64_t(w), 1}; }

inline OpCost add_cost(int w) {
  return {OpKind::Add, w, uint64_t(5 * w), uint64_t(6 * w + 1), w};
}

inline OpCost mul_cost(int w) {
  const uint64_t uw = uint64_t(w);
  return {OpKind::Mul, w, 4 * uw * uw + uw, 4 * uw * uw + 3 * uw, w};
}

inline OpCost shift_var_cost(int q_bits, int w) {
  return {OpKind::ShiftVar, w, uint64_t(q_bits) * uint64_t(1 + w),
          uint64_t(q_bits) * uint64_t(w), w};
}

inline OpCost reduce_cost(int w, int rows) {
  const int stages = rows <= 1 ? 0 : ceil_log2(rows);
  return {OpKind::Reduce, w, uint64_t(5 * w + 4 * stages + 1),
          uint64_t(5 * w + 4 * stages), w};
}

/// One step of the dataflow: primitives, per-lane replication already
/// expanded into the op list.
struct StepSpec {
  int index = 0;
  std::string name;
  std::vector<OpCost> ops;
  bool extension = false; // uses a runtime form not in the published table

  uint64_t cycles() const {
    uint64_t c = 0;
    for (const auto& op : ops) c += op.cycles();
    return c;
  }
  uint64_t compares() const {
    uint64_t c = 0;
    for (const auto& op : ops) c += op.compares;
    return c;
  }
  uint64_t writes() const {
    uint64_t c = 0;
    for (const auto& op : ops) c += op.writes;
    return c;
  }
};

/// Derived widths of the dataflow for one configuration.
struct ScheduleWidths {
  int w_mu = 0;      // reciprocal constant for the modulus, 2M+1 bits
  int w_qmul = 0;    // quotient-times-ln2 multiply width, max(M, 4)
  int w_corr = 0;    // remainder arithmetic width, M + vcorr_extra
  int q_bits = 0;    // shift-amount field width, M
  int recip_bits = 0;
  int w_factor = 0;  // division factor width, recip_bits + 1
  int tree_extra = 0;

  static ScheduleWidths from(const PrecisionConfig& cfg, int seqlen) {
    ScheduleWidths w;
    const int m = cfg.m_bits;
    w.w_mu = 2 * m + 1;
    w.w_qmul = m < 4 ? 4 : m;
    w.w_corr = m + cfg.vcorr_extra;
    w.q_bits = m;
    w.recip_bits = cfg.frac_bits + cfg.w_vapprox + cfg.w_sum;
    w.w_factor = w.recip_bits + 1;
    const int rows = seqlen / 2;
    w.tree_extra = (rows <= 1 ? 0 : ceil_log2(rows)) + 1;
    return w;
  }
};

/// The 13-step execution plan: two words per row, so every per-word
/// primitive runs once per lane; constants are broadcast once and shared.
/// Step 12 is controller work (the reciprocal) and costs no array cycles.
inline std::vector<StepSpec> build_schedule(const PrecisionConfig& cfg, int seqlen,
                                            bool paper_formulas_only = false) {
  if (seqlen < 2 || seqlen % 2 != 0) {
    throw InvalidArgument("build_schedule: sequence length must be even and >= 2");
  }
  const int m = cfg.m_bits;
  const int rows = seqlen / 2;
  const ScheduleWidths w = ScheduleWidths::from(cfg, seqlen);

  std::vector<StepSpec> steps;
  auto lane2 = [](OpCost c) { return std::vector<OpCost>{c, c}; };
  auto push = [&steps](int idx, std::string name, std::vector<OpCost> ops,
                       bool ext = false) {
    steps.push_back({idx, std::move(name), std::move(ops), ext});
  };

  push(1, "load-inputs", lane2(load_cost(m)));

  {
    std::vector<OpCost> ops{broadcast_cost(m)};
    ops.push_back(add_cost(m));
    ops.push_back(add_cost(m));
    push(2, "stabilize", std::move(ops));
  }
  {
    std::vector<OpCost> ops{broadcast_cost(w.w_mu)};
    ops.push_back(mul_cost(w.w_mu));
    ops.push_back(mul_cost(w.w_mu));
    push(3, "modulus-multiply", std::move(ops));
  }
  push(4, "quotient-shift", {});
  {
    std::vector<OpCost> ops{broadcast_cost(cfg.w_vln2)};
    ops.push_back(mul_cost(w.w_qmul));
    ops.push_back(mul_cost(w.w_qmul));
    push(5, "quotient-ln2", std::move(ops));
  }
  push(6, "remainder", lane2(add_cost(w.w_corr)));
  {
    std::vector<OpCost> ops{broadcast_cost(cfg.w_vb)};
    ops.push_back(add_cost(w.w_corr));
    ops.push_back(add_cost(w.w_corr));
    push(7, "offset", std::move(ops));
  }
  push(8, "square", lane2(mul_cost(w.w_corr)));
  {
    std::vector<OpCost> ops{broadcast_cost(cfg.w_vc)};
    ops.push_back(add_cost(cfg.w_poly));
    ops.push_back(add_cost(cfg.w_poly));
    push(9, "bias", std::move(ops));
  }
  if (paper_formulas_only) {
    push(10, "variable-shift", lane2(mul_cost(cfg.w_poly)), true);
  } else {
    push(10, "variable-shift", lane2(shift_var_cost(w.q_bits, cfg.w_poly)), true);
  }
  push(11, "reduce", {reduce_cost(cfg.w_vapprox, rows)});
  push(12, "controller-reciprocal", {});
  if (paper_formulas_only) {
    push(13, "normalize", lane2(mul_cost(w.w_factor)), true);
  } else {
    std::vector<OpCost> ops{broadcast_cost(w.w_factor)};
    ops.push_back(mul_cost(w.w_factor));
    ops.push_back(mul_cost(w.w_factor));
    push(13, "normalize", std::move(ops), true);
  }
  return steps;
}

}  // namespace apsoft::sched

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "apsoft/ap_kernels.hpp"
#include "apsoft/ap_state.hpp"
#include "apsoft/errors.hpp"
#include "apsoft/quant.hpp"
#include "apsoft/ref_softmax.hpp"
#include "apsoft/schedule.hpp"

namespace apsoft::pipeline {

using ap::ApState;
using ap::ColumnField;
using kernels::KernelReport;
using quant::DerivedConstants;
using quant::PrecisionConfig;
using quant::QuantizedVector;
using sched::ScheduleWidths;

/// Column allocation for one softmax instance. Each row holds two words of
/// the input (lane 0 = even elements, lane 1 = odd elements); per-word
/// working regions exist per lane, constants are shared. Operand regions
/// are padded to the width of the widest primitive that reads them, with
/// pad columns never written so they read as zero.
struct LayoutPlan {
  PrecisionConfig cfg;
  ScheduleWidths sw;
  int seqlen = 0;
  int rows = 0;
  int cols_used = 0;
  int budget = 0;

  int carry_col = 0; // shared scratch carry
  int zero_col = 0;  // never written; zero source for shift fill

  ColumnField mx, mu, ln, vb, vc, fact, tree;
  ColumnField v[2], nmag[2], prod[2], qprod[2], rem[2], offs[2], sq[2],
      polyz[2], divp[2];

  ColumnField q_view(int lane) const {
    return ap::subfield(prod[lane], 2 * cfg.m_bits, sw.q_bits);
  }
  ColumnField poly_view(int lane) const {
    return ap::subfield(polyz[lane], 0, cfg.w_poly);
  }
  ColumnField va_view(int lane) const {
    return ap::subfield(polyz[lane], 0, cfg.w_vapprox);
  }
  ColumnField out_view(int lane) const {
    return ap::subfield(divp[lane], sw.recip_bits - cfg.frac_bits, cfg.w_out);
  }

  /// Which value lives where at every step of the schedule.
  std::vector<std::string> step_roles() const {
    auto span = [](const ColumnField& f) {
      return "[" + std::to_string(f.offset) + ".." +
             std::to_string(f.offset + f.width - 1) + "]";
    };
    const std::string lanes = span(v[0]) + "/" + span(v[1]);
    return {
        "v -> lanes " + lanes,
        "max -> mx " + span(mx) + "; |v_stable| -> n " + span(ap::subfield(nmag[0], 0, cfg.m_bits)) + "/" + span(ap::subfield(nmag[1], 0, cfg.m_bits)),
        "mu -> " + span(mu) + "; n*mu -> prod " + span(prod[0]) + "/" + span(prod[1]),
        "q = prod >> 2M -> view " + span(q_view(0)) + "/" + span(q_view(1)),
        "v_ln2 -> " + span(ap::subfield(ln, 0, cfg.w_vln2)) + "; q*v_ln2 -> " + span(qprod[0]) + "/" + span(qprod[1]),
        "remainder -> " + span(rem[0]) + "/" + span(rem[1]),
        "v_b -> " + span(ap::subfield(vb, 0, cfg.w_vb)) + "; v_b+v_corr -> " + span(offs[0]) + "/" + span(offs[1]),
        "square -> " + span(ap::subfield(sq[0], 0, 2 * sw.w_corr)) + "/" + span(ap::subfield(sq[1], 0, 2 * sw.w_corr)),
        "v_c -> " + span(ap::subfield(vc, 0, cfg.w_vc)) + "; poly -> " + span(poly_view(0)) + "/" + span(poly_view(1)),
        "v_approx (in place) -> " + span(va_view(0)) + "/" + span(va_view(1)),
        "pair sums -> tree " + span(tree),
        "reciprocal factor (host scalar)",
        "factor -> " + span(fact) + "; out -> " + span(out_view(0)) + "/" + span(out_view(1)),
    };
  }

  std::vector<std::pair<std::string, ColumnField>> all_regions() const {
    std::vector<std::pair<std::string, ColumnField>> r;
    r.push_back({"mx", mx});
    r.push_back({"mu", mu});
    r.push_back({"ln", ln});
    r.push_back({"vb", vb});
    r.push_back({"vc", vc});
    r.push_back({"fact", fact});
    r.push_back({"tree", tree});
    for (int l = 0; l < 2; ++l) {
      const std::string s = std::to_string(l);
      r.push_back({"v" + s, v[l]});
      r.push_back({"n" + s, nmag[l]});
      r.push_back({"prod" + s, prod[l]});
      r.push_back({"qprod" + s, qprod[l]});
      r.push_back({"rem" + s, rem[l]});
      r.push_back({"offs" + s, offs[l]});
      r.push_back({"sq" + s, sq[l]});
      r.push_back({"polyz" + s, polyz[l]});
      r.push_back({"divp" + s, divp[l]});
    }
    return r;
  }
};

inline LayoutPlan plan_layout(const PrecisionConfig& cfg, int seqlen,
                              int budget = 1024) {
  if (seqlen < 2 || seqlen % 2 != 0) {
    throw InvalidArgument("plan_layout: sequence length must be even and >= 2");
  }
  LayoutPlan p;
  p.cfg = cfg;
  p.sw = ScheduleWidths::from(cfg, seqlen);
  p.seqlen = seqlen;
  p.rows = seqlen / 2;
  p.budget = budget;

  int cursor = 0;
  auto alloc = [&cursor, budget](int width, const char* name) {
    if (cursor + width > budget) {
      throw LayoutConflict(std::string("plan_layout: column budget exceeded at region '") +
                           name + "' (need " + std::to_string(cursor + width) +
                           ", budget " + std::to_string(budget) + ")");
    }
    ColumnField f{cursor, width, false};
    cursor += width;
    return f;
  };

  const int m = cfg.m_bits;
  p.carry_col = alloc(1, "carry").offset;
  p.zero_col = alloc(1, "zero").offset;
  p.mx = alloc(m, "mx");
  p.mu = alloc(p.sw.w_mu, "mu");
  p.ln = alloc(p.sw.w_qmul, "ln");
  p.vb = alloc(p.sw.w_corr, "vb");
  p.vc = alloc(cfg.w_poly, "vc");
  p.fact = alloc(p.sw.w_factor, "fact");
  p.tree = alloc(cfg.w_vapprox + p.sw.tree_extra, "tree");
  for (int l = 0; l < 2; ++l) {
    p.v[l] = alloc(m, "v");
    p.v[l].is_signed = true;
    p.nmag[l] = alloc(p.sw.w_mu, "n");
    p.prod[l] = alloc(2 * p.sw.w_mu, "prod");
    p.qprod[l] = alloc(2 * p.sw.w_qmul, "qprod");
    p.rem[l] = alloc(p.sw.w_corr, "rem");
    p.offs[l] = alloc(p.sw.w_corr, "offs");
    p.sq[l] = alloc(cfg.w_poly, "sq");
    p.polyz[l] = alloc(p.sw.w_factor, "polyz");
    p.divp[l] = alloc(2 * p.sw.w_factor, "divp");
  }
  p.cols_used = cursor;
  return p;
}

/// Per-step execution record: cycles spent and the semantic word values the
/// step left behind (signed where the value is conceptually negative).
struct StepRecord {
  int index = 0;
  std::string name;
  std::string kernel;
  int width = 0;
  uint64_t cycles = 0;
  uint64_t digest = 0;
  std::vector<int64_t> values;
};

struct StepTrace {
  std::vector<StepRecord> steps;
  uint64_t total_cycles = 0;
  KernelReport totals;
};

struct InstanceResult {
  std::vector<int64_t> out_int;
  StepTrace trace;
  LayoutPlan plan;
};

namespace detail {

inline uint64_t fnv1a(const std::vector<int64_t>& values) {
  uint64_t h = 1469598103934665603ull;
  for (int64_t v : values) {
    auto u = static_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (u >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  }
  return h;
}

/// Reads one word per input element, de-interleaving the two lanes.
template <typename ReadLane>
std::vector<int64_t> gather(int seqlen, ReadLane&& read_lane) {
  std::vector<int64_t> out(static_cast<std::size_t>(seqlen));
  const auto lane0 = read_lane(0);
  const auto lane1 = read_lane(1);
  for (int i = 0; i < seqlen / 2; ++i) {
    out[static_cast<std::size_t>(2 * i)] = lane0[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(2 * i + 1)] = lane1[static_cast<std::size_t>(i)];
  }
  return out;
}

}  // namespace detail

/// Executes the 13-step dataflow for one vector on one AP. The result is
/// bit-identical to the scalar reference; every step is checked against its
/// scheduled cycle budget.
inline InstanceResult run_softmax_instance(
    const QuantizedVector& v, const PrecisionConfig& cfg,
    std::optional<DerivedConstants> consts_override = std::nullopt,
    int column_budget = 1024, std::ostream* cycle_trace = nullptr) {
  const int seqlen = static_cast<int>(v.values.size());
  const LayoutPlan plan = plan_layout(cfg, seqlen, column_budget);
  const int m = cfg.m_bits;
  const int64_t qmin = v.scheme.qmin();
  for (int64_t x : v.values) {
    if (x > 0 || x < qmin) {
      throw InvalidArgument("run_softmax_instance: input outside quantized range");
    }
  }
  const DerivedConstants k =
      consts_override ? *consts_override : quant::derive_constants(v.scheme, cfg);
  const int64_t va_peak = k.v_b * k.v_b + k.v_c;
  if (va_peak >= (int64_t{1} << cfg.w_vapprox)) {
    throw PrecisionOverflow("v_approx",
                            "run_softmax_instance: peak exponential exceeds w_vapprox");
  }

  const auto schedule = sched::build_schedule(cfg, seqlen);
  ApState apx(plan.rows, plan.cols_used);
  apx.set_cycle_trace(cycle_trace);

  InstanceResult res;
  res.plan = plan;
  StepTrace& tr = res.trace;

  auto mask_m = [m](int64_t x) {
    return static_cast<unsigned __int128>(static_cast<uint64_t>(x) &
                                          ((uint64_t{1} << m) - 1));
  };
  auto record = [&](int idx, const char* kernel, int width, uint64_t cycles,
                    std::vector<int64_t> values) {
    StepRecord rec;
    rec.index = idx;
    rec.name = schedule[static_cast<std::size_t>(idx - 1)].name;
    rec.kernel = kernel;
    rec.width = width;
    rec.cycles = cycles;
    rec.values = std::move(values);
    rec.digest = detail::fnv1a(rec.values);
    const uint64_t budgeted = schedule[static_cast<std::size_t>(idx - 1)].cycles();
    if (cycles != budgeted) {
      throw Error("step '" + rec.name + "' consumed " + std::to_string(cycles) +
                  " cycles, schedule says " + std::to_string(budgeted));
    }
    tr.total_cycles += cycles;
    tr.steps.push_back(std::move(rec));
  };
  auto add_report = [&tr](const KernelReport& r) {
    tr.totals = tr.totals + r;
    return r.cycles;
  };

  // 1: load the two words of every row
  {
    std::vector<int64_t> lane0(static_cast<std::size_t>(plan.rows));
    std::vector<int64_t> lane1(static_cast<std::size_t>(plan.rows));
    for (int i = 0; i < plan.rows; ++i) {
      lane0[static_cast<std::size_t>(i)] = v.values[static_cast<std::size_t>(2 * i)];
      lane1[static_cast<std::size_t>(i)] = v.values[static_cast<std::size_t>(2 * i + 1)];
    }
    const auto before = apx.counters();
    apx.load_column(plan.v[0], lane0);
    apx.load_column(plan.v[1], lane1);
    const auto d = apx.counters() - before;
    tr.totals = tr.totals + KernelReport{d.total(), d.compares, d.writes, false};
    record(1, "load", m, d.total(), detail::gather(seqlen, [&](int l) {
             return apx.read_column(plan.v[l]);
           }));
  }

  // 2: magnitude of the stabilized value, n = max(v) - v, one word per lane
  const int64_t max_v = *std::max_element(v.values.begin(), v.values.end());
  {
    uint64_t cyc = add_report(kernels::k_broadcast(apx, mask_m(max_v), plan.mx));
    for (int l = 0; l < 2; ++l) {
      cyc += add_report(kernels::k_sub(apx, plan.mx, plan.v[l],
                                       ap::subfield(plan.nmag[l], 0, m),
                                       plan.carry_col));
    }
    record(2, "broadcast+sub", m, cyc, detail::gather(seqlen, [&](int l) {
             auto mags = apx.read_column(ap::subfield(plan.nmag[l], 0, m));
             for (auto& x : mags) x = -x; // stabilized value is -n
             return mags;
           }));
  }

  // 3: n * mu at the reciprocal width; the accumulator starts at the
  // rounding bias so the 2M-bit shift lands on the exact quotient
  {
    uint64_t cyc = add_report(kernels::k_broadcast(
        apx, static_cast<unsigned __int128>(k.mu), plan.mu));
    for (int l = 0; l < 2; ++l) {
      cyc += add_report(kernels::k_mul(apx, ap::subfield(plan.nmag[l], 0, plan.sw.w_mu),
                                       plan.mu, plan.prod[l], plan.carry_col,
                                       static_cast<unsigned __int128>(k.round_bias)));
    }
    const int read_w = std::min(2 * plan.sw.w_mu, 62);
    record(3, "broadcast+mul", plan.sw.w_mu, cyc, detail::gather(seqlen, [&](int l) {
             return apx.read_column(ap::subfield(plan.prod[l], 0, read_w));
           }));
  }

  // 4: quotient = product >> 2M, free column re-addressing
  record(4, "shr-const", 0, 0, detail::gather(seqlen, [&](int l) {
           return apx.read_column(plan.q_view(l));
         }));

  // 5: q * v_ln2
  {
    uint64_t cyc = add_report(kernels::k_broadcast(
        apx, static_cast<unsigned __int128>(k.v_ln2), ap::subfield(plan.ln, 0, cfg.w_vln2)));
    for (int l = 0; l < 2; ++l) {
      cyc += add_report(kernels::k_mul(
          apx, ap::subfield(plan.prod[l], 2 * m, plan.sw.w_qmul), plan.ln,
          plan.qprod[l], plan.carry_col));
    }
    record(5, "broadcast+mul", plan.sw.w_qmul, cyc, detail::gather(seqlen, [&](int l) {
             return apx.read_column(ap::subfield(plan.qprod[l], 0,
                                                 std::min(2 * plan.sw.w_qmul, 62)));
           }));
  }

  // 6: remainder magnitude r = n - q*v_ln2, in [0, v_ln2)
  {
    uint64_t cyc = 0;
    for (int l = 0; l < 2; ++l) {
      cyc += add_report(kernels::k_sub(apx, ap::subfield(plan.nmag[l], 0, plan.sw.w_corr),
                                       ap::subfield(plan.qprod[l], 0, plan.sw.w_corr),
                                       plan.rem[l], plan.carry_col));
    }
    record(6, "sub", plan.sw.w_corr, cyc, detail::gather(seqlen, [&](int l) {
             auto r = apx.read_column(plan.rem[l]);
             for (auto& x : r) x = -x; // remainder as a non-positive correction
             return r;
           }));
  }

  // 7: polynomial argument v_b + v_corr = v_b - r
  {
    uint64_t cyc = add_report(kernels::k_broadcast(
        apx, static_cast<unsigned __int128>(k.v_b), ap::subfield(plan.vb, 0, cfg.w_vb)));
    for (int l = 0; l < 2; ++l) {
      cyc += add_report(kernels::k_sub(apx, plan.vb, plan.rem[l], plan.offs[l],
                                       plan.carry_col));
    }
    record(7, "broadcast+sub", plan.sw.w_corr, cyc, detail::gather(seqlen, [&](int l) {
             return apx.read_column(plan.offs[l]);
           }));
  }

  // 8: square of the polynomial argument
  {
    uint64_t cyc = 0;
    for (int l = 0; l < 2; ++l) {
      cyc += add_report(kernels::k_square(
          apx, plan.offs[l], ap::subfield(plan.sq[l], 0, 2 * plan.sw.w_corr),
          plan.carry_col));
    }
    record(8, "square", plan.sw.w_corr, cyc, detail::gather(seqlen, [&](int l) {
             return apx.read_column(ap::subfield(plan.sq[l], 0, 2 * plan.sw.w_corr));
           }));
  }

  // 9: add the constant term -> full polynomial value
  {
    uint64_t cyc = add_report(kernels::k_broadcast(
        apx, static_cast<unsigned __int128>(k.v_c), ap::subfield(plan.vc, 0, cfg.w_vc)));
    for (int l = 0; l < 2; ++l) {
      cyc += add_report(kernels::k_add(apx, ap::subfield(plan.sq[l], 0, cfg.w_poly),
                                       plan.vc, plan.poly_view(l), plan.carry_col));
    }
    record(9, "broadcast+add", cfg.w_poly, cyc, detail::gather(seqlen, [&](int l) {
             return apx.read_column(plan.poly_view(l));
           }));
  }

  // 10: shift each word right by its own quotient
  {
    uint64_t cyc = 0;
    for (int l = 0; l < 2; ++l) {
      cyc += add_report(kernels::k_shr_var(apx, plan.poly_view(l), plan.q_view(l),
                                           plan.zero_col));
    }
    record(10, "shr-var", cfg.w_poly, cyc, detail::gather(seqlen, [&](int l) {
             return apx.read_column(plan.va_view(l));
           }));
  }

  // 11: row-pair reduction of the exponentials; the w_sum-bit register
  // keeps the aligned, saturating view of the tree total
  int64_t sum_eff = 0;
  {
    auto red = kernels::k_reduce_sum(apx, plan.va_view(0), plan.va_view(1), plan.tree);
    sum_eff = refmodel::condition_sum(red.sum, cfg, static_cast<std::size_t>(seqlen));
    add_report(red.report);
    record(11, "reduce", cfg.w_vapprox, red.report.cycles, {sum_eff});
  }

  // 12: the controller forms the round-up reciprocal of the register value
  const auto recip =
      quant::Reciprocal::make(sum_eff, cfg.frac_bits, cfg.w_vapprox, cfg.w_sum);
  record(12, "host-reciprocal", 0, 0,
         {static_cast<int64_t>(static_cast<uint64_t>(recip.factor) & ((uint64_t{1} << 62) - 1)),
          static_cast<int64_t>(recip.factor >> 62), recip.recip_bits, sum_eff});

  // 13: multiply by the reciprocal; the output window is a shifted view
  {
    uint64_t cyc = add_report(kernels::k_broadcast(apx, recip.factor, plan.fact));
    for (int l = 0; l < 2; ++l) {
      cyc += add_report(kernels::k_mul(apx,
                                       ap::subfield(plan.polyz[l], 0, plan.sw.w_factor),
                                       plan.fact, plan.divp[l], plan.carry_col));
    }
    res.out_int = detail::gather(seqlen, [&](int l) {
      return apx.read_column(plan.out_view(l));
    });
    record(13, "broadcast+mul", plan.sw.w_factor, cyc, res.out_int);
  }

  return res;
}

/// Step-by-step comparison of the AP execution against the scalar reference.
struct VerifyReport {
  std::vector<bool> step_ok;   // 13 entries
  int first_divergence = -1;   // 1-based step index, -1 when all match
  bool all_ok() const { return first_divergence < 0; }
};

inline VerifyReport verify_against_ref(const QuantizedVector& v,
                                       const PrecisionConfig& cfg,
                                       std::optional<DerivedConstants> consts_override =
                                           std::nullopt) {
  const auto golden = refmodel::int_softmax(v, cfg);
  const auto sim = run_softmax_instance(v, cfg, consts_override);
  const auto& tr = golden.trace;

  std::vector<std::vector<int64_t>> expected(14);
  expected[1] = v.values;
  expected[2] = tr.v_stable;
  expected[3] = tr.product;
  expected[4] = tr.q;
  expected[5] = tr.q_ln2;
  expected[6] = tr.v_corr;
  expected[7] = tr.corr_plus_b;
  expected[8] = tr.square;
  expected[9] = tr.poly;
  expected[10] = tr.v_approx;
  expected[11] = {tr.sum};
  expected[12] = {
      static_cast<int64_t>(static_cast<uint64_t>(tr.factor) & ((uint64_t{1} << 62) - 1)),
      static_cast<int64_t>(tr.factor >> 62), tr.recip_bits, tr.sum};
  expected[13] = tr.out_int;

  VerifyReport rep;
  rep.step_ok.assign(13, true);
  for (int i = 1; i <= 13; ++i) {
    const bool ok = sim.trace.steps[static_cast<std::size_t>(i - 1)].values ==
                    expected[static_cast<std::size_t>(i)];
    rep.step_ok[static_cast<std::size_t>(i - 1)] = ok;
    if (!ok && rep.first_divergence < 0) rep.first_divergence = i;
  }
  return rep;
}

}  // namespace apsoft::pipeline

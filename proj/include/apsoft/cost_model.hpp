#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "apsoft/errors.hpp"
#include "apsoft/quant.hpp"
#include "apsoft/schedule.hpp"

namespace apsoft::cost {

using quant::PrecisionConfig;
using sched::ceil_log2;

// Closed-form 2D-AP runtimes of the elementary word operations.

inline uint64_t cycles_add(int m) {
  if (m < 1) throw InvalidArgument("cycles_add: width must be >= 1");
  return uint64_t(2 * m) + uint64_t(8 * m) + uint64_t(m) + 1; // 11M + 1
}

inline uint64_t cycles_mul(int m) {
  if (m < 1) throw InvalidArgument("cycles_mul: width must be >= 1");
  const uint64_t um = uint64_t(m);
  return 2 * um + 8 * um * um + 2 * um; // 8M^2 + 4M
}

inline uint64_t cycles_reduce(int m, int64_t words) {
  if (m < 1) throw InvalidArgument("cycles_reduce: width must be >= 1");
  if (words < 2 || words % 2 != 0) {
    throw InvalidArgument("cycles_reduce: word count must be even and >= 2");
  }
  return uint64_t(2 * m) + uint64_t(8 * m) + 8 * uint64_t(ceil_log2(words / 2)) + 1;
}

inline uint64_t cycles_matmul(int m, int64_t i, int64_t j, int64_t u) {
  if (m < 1 || i < 1 || j < 1 || u < 1) {
    throw InvalidArgument("cycles_matmul: dimensions must be >= 1");
  }
  const uint64_t um = uint64_t(m);
  const uint64_t lj = uint64_t(ceil_log2(j));
  return 2 * um + 8 * um * um + 8 * lj + 2 * um + lj;
}

/// Per-step cycle totals of one softmax instance.
struct CycleBreakdown {
  struct Step {
    int index;
    std::string name;
    uint64_t cycles;
    bool extension;
  };
  std::vector<Step> steps;
  uint64_t total = 0;
  bool uses_extension_formulas = false;
};

inline CycleBreakdown instance_cycles(const PrecisionConfig& cfg, int seqlen,
                                      bool paper_formulas_only = false) {
  CycleBreakdown b;
  for (const auto& step : sched::build_schedule(cfg, seqlen, paper_formulas_only)) {
    b.steps.push_back({step.index, step.name, step.cycles(), step.extension});
    b.total += step.cycles();
    b.uses_extension_formulas |= step.extension && !paper_formulas_only;
  }
  return b;
}

/// Energy/latency/area parameters of one AP array.
struct ApCostParams {
  double clock_mhz = 1000.0;
  double energy_per_compare_bit = 1.0; // pJ per active cell per compare cycle
  double energy_per_write_bit = 1.0;   // pJ per active cell per write cycle
  double energy_scale = 1.0;           // calibration multiplier
  double area_per_ap_mm2 = 0.02;
  bool calibrated = false;
  double calibration_target_pj = 0.0;

  void validate() const {
    if (clock_mhz <= 0 || energy_per_compare_bit <= 0 || energy_per_write_bit <= 0 ||
        energy_scale <= 0 || area_per_ap_mm2 <= 0) {
      throw InvalidArgument("ApCostParams: all parameters must be positive");
    }
  }
};

namespace detail {

/// Weighted cell activity of one instance: every cycle drives all rows
/// across the primitive's active bit columns.
inline double instance_energy_pj(const PrecisionConfig& cfg, int seqlen,
                                 const ApCostParams& p) {
  const double rows = static_cast<double>(seqlen) / 2.0;
  double pj = 0.0;
  for (const auto& step : sched::build_schedule(cfg, seqlen)) {
    for (const auto& op : step.ops) {
      const double bits = static_cast<double>(op.energy_width);
      pj += rows * bits *
            (static_cast<double>(op.compares) * p.energy_per_compare_bit +
             static_cast<double>(op.writes) * p.energy_per_write_bit);
    }
  }
  return pj * p.energy_scale;
}

}  // namespace detail

inline double instance_energy_joules(const PrecisionConfig& cfg, int seqlen,
                                     const ApCostParams& p) {
  p.validate();
  return detail::instance_energy_pj(cfg, seqlen, p) * 1e-12;
}

/// The calibration operation: one word-wise addition at the best-precision
/// element width (6 bits) with every row occupied, reported per word in pJ.
inline double calibration_op_energy_pj(const ApCostParams& p) {
  const auto op = sched::add_cost(6);
  return static_cast<double>(op.width) *
         (static_cast<double>(op.compares) * p.energy_per_compare_bit +
          static_cast<double>(op.writes) * p.energy_per_write_bit) *
         p.energy_scale;
}

/// Scales the energy model so the calibration op reports exactly target_pj.
inline ApCostParams calibrate_energy(ApCostParams p, double target_pj = 5.88e-3) {
  if (target_pj <= 0) throw InvalidArgument("calibrate_energy: target must be > 0");
  p.validate();
  ApCostParams base = p;
  base.energy_scale = 1.0;
  const double raw = calibration_op_energy_pj(base);
  double scale = target_pj / raw;
  // land exactly on the target despite rounding of the quotient
  for (int i = 0; i < 4 && raw * scale != target_pj; ++i) {
    scale = std::nextafter(scale, raw * scale < target_pj
                                      ? std::numeric_limits<double>::infinity()
                                      : 0.0);
  }
  p.energy_scale = scale;
  p.calibrated = true;
  p.calibration_target_pj = target_pj;
  return p;
}

/// Model family descriptor: one AP per attention head.
struct ModelSpec {
  std::string name;
  int layers = 0;
  int heads = 0;
};

inline std::vector<ModelSpec> default_models() {
  return {{"llama2-7b", 32, 32}, {"llama2-13b", 40, 40}, {"llama2-70b", 80, 64}};
}

struct Workload {
  int batch = 1;
  int seqlen = 128;
};

struct CostReport {
  uint64_t instance_cycles = 0;
  double total_latency_s = 0.0;
  double total_energy_j = 0.0;
  double edp = 0.0;
  double area_mm2 = 0.0;
  bool calibrated = false;
};

/// Full-workload roll-up: every attention row of every layer and batch is
/// one instance; heads run their own APs in parallel, so they multiply
/// energy and area but not latency.
inline CostReport aggregate(const ModelSpec& model, const Workload& wl,
                            const PrecisionConfig& cfg, const ApCostParams& p,
                            bool paper_formulas_only = false) {
  if (model.layers < 1 || model.heads < 1) {
    throw InvalidArgument("aggregate: model must have positive layer/head counts");
  }
  if (wl.batch < 1 || wl.seqlen < 2 || wl.seqlen % 2 != 0) {
    throw InvalidArgument("aggregate: workload dimensions invalid");
  }
  p.validate();
  CostReport r;
  r.instance_cycles = instance_cycles(cfg, wl.seqlen, paper_formulas_only).total;
  const double instances = static_cast<double>(model.layers) *
                           static_cast<double>(wl.batch) *
                           static_cast<double>(wl.seqlen);
  r.total_latency_s = instances * static_cast<double>(r.instance_cycles) /
                      (p.clock_mhz * 1e6);
  r.total_energy_j =
      instances * static_cast<double>(model.heads) *
      instance_energy_joules(cfg, wl.seqlen, p);
  r.edp = r.total_energy_j * r.total_latency_s;
  r.area_mm2 = static_cast<double>(model.heads) * p.area_per_ap_mm2;
  r.calibrated = p.calibrated;
  return r;
}

struct BaselinePoint {
  double energy_j = 0.0;
  double latency_s = 0.0;
};

struct RatioReport {
  double energy_ratio = 0.0;  // baseline / AP; above 1 favors the AP
  double latency_ratio = 0.0;
  double edp_ratio = 0.0;
};

inline RatioReport edp_ratio(const CostReport& ap, const BaselinePoint& baseline) {
  if (baseline.energy_j <= 0 || baseline.latency_s <= 0) {
    throw InvalidArgument("edp_ratio: baseline values must be positive");
  }
  if (ap.total_energy_j <= 0 || ap.total_latency_s <= 0) {
    throw InvalidArgument("edp_ratio: AP report must be positive");
  }
  RatioReport r;
  r.energy_ratio = baseline.energy_j / ap.total_energy_j;
  r.latency_ratio = baseline.latency_s / ap.total_latency_s;
  r.edp_ratio = r.energy_ratio * r.latency_ratio;
  return r;
}

}  // namespace apsoft::cost

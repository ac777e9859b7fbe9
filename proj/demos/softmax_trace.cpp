// Runs one softmax instance on the simulated array and prints the per-step
// execution record next to the scalar reference values.

#include <cstdio>

#include "apsoft/cost_model.hpp"
#include "apsoft/pipeline.hpp"

int main() {
  using namespace apsoft;
  const auto cfg = quant::preset(8, 0, 16);
  const auto scheme = quant::make_scheme(8, -7.0);

  const std::vector<double> x{0.0, -2.7559, -0.4, -5.1, -1.25, -3.3, -6.9, -0.05};
  const auto qv = quant::quantize(x, scheme);

  std::printf("quantized inputs:");
  for (int64_t q : qv.values) std::printf(" %lld", static_cast<long long>(q));
  std::printf("\n\n%-4s %-22s %-16s %6s %8s\n", "step", "name", "kernel", "width",
              "cycles");

  const auto res = pipeline::run_softmax_instance(qv, cfg);
  for (const auto& s : res.trace.steps) {
    std::printf("%-4d %-22s %-16s %6d %8llu\n", s.index, s.name.c_str(),
                s.kernel.c_str(), s.width, static_cast<unsigned long long>(s.cycles));
  }
  std::printf("total cycles: %llu (analytic %llu)\n",
              static_cast<unsigned long long>(res.trace.total_cycles),
              static_cast<unsigned long long>(
                  cost::instance_cycles(cfg, static_cast<int>(x.size())).total));

  const auto verify = pipeline::verify_against_ref(qv, cfg);
  std::printf("matches the scalar reference: %s\n", verify.all_ok() ? "yes" : "NO");

  const auto probs = quant::dequantize_output(res.out_int, cfg.frac_bits);
  const auto exact = refmodel::float_softmax(x);
  std::printf("\n%-10s %-12s %-12s\n", "input", "integer", "double");
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::printf("%-10.4f %-12.8f %-12.8f\n", x[i], probs[i], exact[i]);
  }
  return verify.all_ok() ? 0 : 1;
}

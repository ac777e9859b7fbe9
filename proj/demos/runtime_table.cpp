// Prints the closed-form 2D-AP runtimes of the elementary operations and
// the per-instance cycle budget of the softmax dataflow across the grid.

#include <cstdio>

#include "apsoft/cost_model.hpp"

int main() {
  using namespace apsoft;
  std::printf("%-6s %10s %10s %14s\n", "width", "add", "multiply", "reduce(4096)");
  for (int m : {4, 6, 8, 12, 16}) {
    std::printf("%-6d %10llu %10llu %14llu\n", m,
                static_cast<unsigned long long>(cost::cycles_add(m)),
                static_cast<unsigned long long>(cost::cycles_mul(m)),
                static_cast<unsigned long long>(cost::cycles_reduce(m, 4096)));
  }

  std::printf("\ninstance cycles per precision cell (seqlen 4096):\n");
  std::printf("%-16s %12s %12s\n", "preset", "cycles", "table-only");
  for (int m : {4, 6, 8}) {
    for (int n : {8, 16}) {
      const auto cfg = quant::preset(m, 0, n);
      std::printf("%-16s %12llu %12llu\n", cfg.key().c_str(),
                  static_cast<unsigned long long>(cost::instance_cycles(cfg, 4096).total),
                  static_cast<unsigned long long>(
                      cost::instance_cycles(cfg, 4096, true).total));
    }
  }
  return 0;
}

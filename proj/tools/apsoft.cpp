// apsoft: accuracy sweeps, cost characterization, baseline comparison and
// single-instance simulation of the integer softmax on the 2D associative
// processor model.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "apsoft/cost_model.hpp"
#include "apsoft/harness.hpp"
#include "apsoft/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace apsoft;

namespace {

constexpr const char* kVersion = APSOFT_VERSION;

// ---------------------------------------------------------------------------
// run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
  std::vector<std::string> presets;           // accuracy sweep grid
  std::map<int, double> t_clip{{4, -4.0}, {6, -7.0}, {8, -7.0}};
  std::vector<int> seqlens{128, 1024, 4096};  // accuracy lengths
  std::vector<int> cost_seqlens{128, 256, 512, 1024, 2048, 4096};
  std::vector<int> batches{1, 2, 4, 8, 16, 32};
  std::vector<cost::ModelSpec> models = cost::default_models();
  std::string cost_preset = "M8-vc+0-N16";
  std::optional<int> d_override;
  int samples = 64;
  uint64_t seed = 42;
  std::string distribution = "uniform";
  cost::ApCostParams params;
  bool calibrate = true;
  double calibrate_target_pj = 5.88e-3;

  static RunConfig defaults() {
    RunConfig c;
    c.presets = quant::all_preset_keys();
    return c;
  }
};

RunConfig load_config(const std::string& path) {
  RunConfig c = RunConfig::defaults();
  if (path.empty()) return c;
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file '" + path + "'");
  json j = json::parse(in);

  if (j.contains("presets")) {
    c.presets.clear();
    for (const auto& p : j["presets"]) {
      if (p.get<std::string>() == "all") {
        c.presets = quant::all_preset_keys();
        break;
      }
      c.presets.push_back(p.get<std::string>());
    }
  }
  if (j.contains("t_clip")) {
    for (auto& [key, val] : j["t_clip"].items()) {
      c.t_clip[std::stoi(key)] = val.get<double>();
    }
  }
  if (j.contains("seqlens")) c.seqlens = j["seqlens"].get<std::vector<int>>();
  if (j.contains("cost_seqlens")) {
    c.cost_seqlens = j["cost_seqlens"].get<std::vector<int>>();
  }
  if (j.contains("batches")) c.batches = j["batches"].get<std::vector<int>>();
  if (j.contains("models")) {
    c.models.clear();
    for (const auto& m : j["models"]) {
      c.models.push_back({m.at("name").get<std::string>(), m.at("layers").get<int>(),
                          m.at("heads").get<int>()});
    }
  }
  if (j.contains("cost_preset")) c.cost_preset = j["cost_preset"].get<std::string>();
  if (j.contains("d_override") && !j["d_override"].is_null()) {
    c.d_override = j["d_override"].get<int>();
  }
  if (j.contains("samples")) c.samples = j["samples"].get<int>();
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
  if (j.contains("distribution")) c.distribution = j["distribution"].get<std::string>();
  if (j.contains("cost_params")) {
    const auto& p = j["cost_params"];
    if (p.contains("clock_mhz")) c.params.clock_mhz = p["clock_mhz"].get<double>();
    if (p.contains("energy_per_compare_bit")) {
      c.params.energy_per_compare_bit = p["energy_per_compare_bit"].get<double>();
    }
    if (p.contains("energy_per_write_bit")) {
      c.params.energy_per_write_bit = p["energy_per_write_bit"].get<double>();
    }
    if (p.contains("energy_scale")) c.params.energy_scale = p["energy_scale"].get<double>();
    if (p.contains("area_per_ap_mm2")) {
      c.params.area_per_ap_mm2 = p["area_per_ap_mm2"].get<double>();
    }
    if (p.contains("calibrate")) c.calibrate = p["calibrate"].get<bool>();
    if (p.contains("calibrate_target_pj")) {
      c.calibrate_target_pj = p["calibrate_target_pj"].get<double>();
    }
  }
  return c;
}

quant::PrecisionConfig preset_for(const RunConfig& rc, const std::string& key) {
  auto cfg = quant::parse_preset_key(key);
  if (rc.d_override) cfg.frac_bits = *rc.d_override;
  return cfg;
}

double t_clip_for(const RunConfig& rc, int m_bits) {
  const auto it = rc.t_clip.find(m_bits);
  if (it == rc.t_clip.end()) {
    throw InvalidArgument("no clip threshold configured for M=" + std::to_string(m_bits));
  }
  return it->second;
}

int sweep_threads() {
  if (const char* env = std::getenv("APSOFT_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

/// Runs fn(i) for i in [0, n) on the sweep pool; results stay index-ordered.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int threads = std::min(sweep_threads(), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// output files
// ---------------------------------------------------------------------------

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Writes through a temporary file; nothing is left behind on failure.
class OutputFile {
 public:
  explicit OutputFile(const fs::path& path) : path_(path), tmp_(path.string() + ".tmp") {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(tmp_);
    if (!out_) throw Error("cannot open output file '" + tmp_.string() + "'");
  }
  ~OutputFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      fs::remove(tmp_, ec);
    }
  }
  std::ofstream& stream() { return out_; }
  void commit() {
    out_.close();
    if (!out_) throw Error("write failure on '" + tmp_.string() + "'");
    fs::rename(tmp_, path_);
    committed_ = true;
  }

 private:
  fs::path path_;
  fs::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

void write_meta_line(std::ofstream& os, uint64_t seed, bool calibrated) {
  os << "# apsoft " << kVersion << " seed=" << seed
     << " calibrated=" << (calibrated ? "true" : "false") << "\n";
}

// minimal CSV reader for the tool's own comma-separated files
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw InvalidArgument("CSV is missing required column '" + name + "'");
  }
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open CSV file '" + path + "'");
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.header.empty()) throw InvalidArgument("CSV file '" + path + "' is empty");
  return t;
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_accuracy(const RunConfig& rc, const fs::path& out_dir) {
  struct Cell {
    std::string preset;
    int seqlen;
    harness::CellStats stats;
  };
  std::vector<Cell> cells;
  for (const auto& key : rc.presets) {
    for (int len : rc.seqlens) cells.push_back({key, len, {}});
  }
  const auto dist = harness::parse_distribution(rc.distribution);
  parallel_for(static_cast<int>(cells.size()), [&](int i) {
    auto& cell = cells[static_cast<std::size_t>(i)];
    const auto cfg = preset_for(rc, cell.preset);
    cell.stats = harness::run_accuracy_cell(cfg, t_clip_for(rc, cfg.m_bits),
                                            cell.seqlen, rc.samples, rc.seed, dist);
  });

  OutputFile f(out_dir / "accuracy.csv");
  write_meta_line(f.stream(), rc.seed, rc.params.calibrated);
  f.stream() << "preset,seqlen,samples,mean_abs,max_abs,argmax_rate\n";
  for (const auto& c : cells) {
    f.stream() << c.preset << ',' << c.seqlen << ',' << c.stats.samples << ','
               << fmt9(c.stats.mean_abs) << ',' << fmt9(c.stats.max_abs) << ','
               << fmt9(c.stats.argmax_rate) << "\n";
  }
  f.commit();
  std::cout << "wrote " << (out_dir / "accuracy.csv").string() << " ("
            << cells.size() << " rows)\n";
  return 0;
}

int cmd_cost(const RunConfig& rc, const fs::path& out_dir, bool paper_only) {
  cost::ApCostParams params = rc.params;
  if (rc.calibrate) params = cost::calibrate_energy(params, rc.calibrate_target_pj);
  const auto cfg = preset_for(rc, rc.cost_preset);

  OutputFile f(out_dir / "cost.csv");
  write_meta_line(f.stream(), rc.seed, params.calibrated);
  f.stream() << "model,preset,seqlen,batch,instance_cycles,latency_s,energy_J,"
                "edp,area_mm2,calibrated\n";
  std::size_t rows = 0;
  for (const auto& model : rc.models) {
    for (int len : rc.cost_seqlens) {
      for (int batch : rc.batches) {
        const auto r = cost::aggregate(model, {batch, len}, cfg, params, paper_only);
        f.stream() << model.name << ',' << rc.cost_preset << ',' << len << ','
                   << batch << ',' << r.instance_cycles << ','
                   << fmt9(r.total_latency_s) << ',' << fmt9(r.total_energy_j) << ','
                   << fmt9(r.edp) << ',' << fmt9(r.area_mm2) << ','
                   << (r.calibrated ? "true" : "false") << "\n";
        ++rows;
      }
    }
  }
  f.commit();
  std::cout << "wrote " << (out_dir / "cost.csv").string() << " (" << rows
            << " rows)\n";
  return 0;
}

int cmd_compare(const RunConfig& rc, const std::string& cost_csv,
                const std::string& baseline_csv, const fs::path& out_dir) {
  const CsvTable ap = read_csv(cost_csv);
  const CsvTable base = read_csv(baseline_csv);

  const int am = ap.col("model"), as = ap.col("seqlen"), ab = ap.col("batch");
  const int ae = ap.col("energy_J"), al = ap.col("latency_s");
  const int bm = base.col("model"), bd = base.col("device"), bs = base.col("seqlen");
  const int bb = base.col("batch"), be = base.col("energy_J"), bl = base.col("latency_s");

  std::map<std::string, std::pair<double, double>> ap_points;
  for (const auto& row : ap.rows) {
    const std::string key = row[am] + "|" + row[as] + "|" + row[ab];
    ap_points[key] = {std::stod(row[ae]), std::stod(row[al])};
  }

  std::vector<std::string> unmatched;
  OutputFile f(out_dir / "compare.csv");
  write_meta_line(f.stream(), rc.seed, rc.params.calibrated);
  f.stream() << "model,device,seqlen,batch,energy_ratio,latency_ratio,edp_ratio\n";
  for (const auto& row : base.rows) {
    const std::string key = row[bm] + "|" + row[bs] + "|" + row[bb];
    const auto it = ap_points.find(key);
    if (it == ap_points.end()) {
      unmatched.push_back(row[bm] + " seqlen=" + row[bs] + " batch=" + row[bb]);
      continue;
    }
    const auto [ap_e, ap_l] = it->second;
    const double e_ratio = std::stod(row[be]) / ap_e;
    const double l_ratio = std::stod(row[bl]) / ap_l;
    f.stream() << row[bm] << ',' << row[bd] << ',' << row[bs] << ',' << row[bb]
               << ',' << fmt9(e_ratio) << ',' << fmt9(l_ratio) << ','
               << fmt9(e_ratio * l_ratio) << "\n";
  }
  if (!unmatched.empty()) {
    std::cerr << "compare: " << unmatched.size()
              << " baseline rows have no matching cost row:\n";
    for (const auto& u : unmatched) std::cerr << "  " << u << "\n";
    return 2;
  }
  f.commit();
  std::cout << "wrote " << (out_dir / "compare.csv").string() << " ("
            << base.rows.size() << " rows)\n";
  return 0;
}

int cmd_simulate(const RunConfig& rc, const std::string& input_path,
                 const fs::path& out_dir, bool strict, bool to_stdout,
                 const std::string& cycle_trace_path) {
  std::ifstream in(input_path);
  if (!in) throw InvalidArgument("cannot open input file '" + input_path + "'");
  json j = json::parse(in);
  const auto values = j.at("values").get<std::vector<double>>();
  auto cfg = preset_for(rc, j.value("preset", std::string("M8-vc+0-N16")));
  if (j.contains("D") && !j["D"].is_null()) cfg.frac_bits = j["D"].get<int>();
  const double tc = j.contains("T_C") ? j["T_C"].get<double>()
                                      : t_clip_for(rc, cfg.m_bits);

  const auto scheme = quant::make_scheme(cfg.m_bits, tc);
  const auto consts = quant::derive_constants(scheme, cfg, strict);
  const auto qv = quant::quantize(values, scheme);

  std::ofstream trace_stream;
  std::ostream* trace = nullptr;
  if (!cycle_trace_path.empty()) {
    trace_stream.open(cycle_trace_path);
    if (!trace_stream) {
      throw InvalidArgument("cannot open cycle trace file '" + cycle_trace_path + "'");
    }
    trace = &trace_stream;
  }

  const auto sim = pipeline::run_softmax_instance(qv, cfg, consts, 1024, trace);
  const auto gold = refmodel::int_softmax(qv, cfg, strict);
  const auto verify = pipeline::verify_against_ref(qv, cfg, consts);
  const auto analytic = cost::instance_cycles(cfg, static_cast<int>(values.size()));

  json out;
  out["preset"] = cfg.key();
  out["T_C"] = tc;
  out["D"] = cfg.frac_bits;
  out["quantized"] = qv.values;
  out["out_int"] = sim.out_int;
  out["out_probs"] = quant::dequantize_output(sim.out_int, cfg.frac_bits);
  out["cycles"] = sim.trace.total_cycles;
  out["cycles_analytic"] = analytic.total;
  out["equivalence"] = verify.all_ok() && sim.out_int == gold.out_int;
  out["uses_extension_formulas"] = analytic.uses_extension_formulas;
  json steps = json::array();
  for (const auto& s : sim.trace.steps) {
    steps.push_back({{"step", s.index},
                     {"name", s.name},
                     {"kernel", s.kernel},
                     {"width", s.width},
                     {"cycles", s.cycles},
                     {"digest", s.digest}});
  }
  out["step_trace"] = steps;

  if (to_stdout) {
    std::cout << out.dump(2) << "\n";
  } else {
    OutputFile f(out_dir / "simulate.json");
    f.stream() << out.dump(2) << "\n";
    f.commit();
    std::cout << "wrote " << (out_dir / "simulate.json").string() << "\n";
  }
  return out["equivalence"].get<bool>() ? 0 : 1;
}

int cmd_demo_xor() {
  ap::ApState apx(4, 6);
  const ap::ColumnField A{0, 2, false}, B{2, 2, false}, R{4, 2, false};
  apx.load_column(A, {3, 0, 2, 3});
  apx.load_column(B, {1, 1, 2, 2});
  apx.reset_counters();

  auto print_state = [&](const char* label) {
    std::cout << label << "\n  row | A  B  R\n";
    for (int r = 0; r < 4; ++r) {
      std::cout << "   " << r << "  | " << apx.read_word_u(r, A) << "  "
                << apx.read_word_u(r, B) << "  " << apx.read_word_u(r, R) << "\n";
    }
  };
  print_state("initial contents (A, B loaded; R clear):");

  // exclusive-or LUT: two passes per bit position, writing the result bit
  // where exactly one operand bit is set
  for (int k = 0; k < 2; ++k) {
    std::cout << "bit " << k << ":\n";
    {
      const auto& tag = apx.compare({{A.col(k), true}, {B.col(k), false}});
      std::cout << "  pass 1: match A=1,B=0 -> tag rows=" << tag.popcount()
                << ", write R=1\n";
      apx.masked_write({{R.col(k), true}}, tag);
    }
    {
      const auto& tag = apx.compare({{A.col(k), false}, {B.col(k), true}});
      std::cout << "  pass 2: match A=0,B=1 -> tag rows=" << tag.popcount()
                << ", write R=1\n";
      apx.masked_write({{R.col(k), true}}, tag);
    }
  }

  print_state("final contents:");
  const auto result = apx.read_column(R);
  std::cout << "result = [";
  for (std::size_t i = 0; i < result.size(); ++i) {
    std::cout << (i ? ", " : "") << result[i];
  }
  std::cout << "]\ncompares=" << apx.counters().compares
            << " writes=" << apx.counters().writes << "\n";

  const bool ok = result == std::vector<int64_t>{2, 1, 0, 1};
  std::cout << (ok ? "match: A xor B reproduced exactly\n"
                   : "MISMATCH against the reference result\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("apsoft ") + kVersion +
               " - integer softmax on a 2D associative processor"};
  app.require_subcommand(1);
  app.fallthrough(); // global options may follow the subcommand name

  std::string config_path;
  std::string out_dir = "results";
  uint64_t seed_override = 0;
  bool seed_set = false;
  bool strict = false;
  bool paper_only = false;
  app.add_option("--config", config_path, "JSON run configuration")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed_override, "random seed override")
      ->each([&seed_set](const std::string&) { seed_set = true; });
  app.add_flag("--strict-widths", strict, "error out on any width overflow");
  app.add_flag("--paper-formulas-only", paper_only,
               "charge extension ops at the nearest published runtime form");

  auto* acc = app.add_subcommand("accuracy", "error sweep over the precision grid");
  auto* cst = app.add_subcommand("cost", "cycle/energy/EDP sweep over workloads");
  auto* cmp = app.add_subcommand("compare", "ratios against a baseline CSV");
  std::string cost_csv, baseline_csv;
  cmp->add_option("cost_csv", cost_csv, "cost sweep CSV")->required();
  cmp->add_option("baseline_csv", baseline_csv, "baseline measurements CSV")->required();
  auto* sim = app.add_subcommand("simulate", "run one instance with a step trace");
  std::string sim_input, cycle_trace_path;
  bool sim_stdout = false;
  sim->add_option("input", sim_input, "JSON input {values, preset, T_C}")->required();
  sim->add_flag("--stdout", sim_stdout, "print the report instead of writing a file");
  sim->add_option("--cycle-trace", cycle_trace_path,
                  "write one line per compare/write cycle");
  auto* demo = app.add_subcommand("demo-xor", "bit-serial exclusive-or walkthrough");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig rc = load_config(config_path);
    if (seed_set) rc.seed = seed_override;

    if (*acc) return cmd_accuracy(rc, out_dir);
    if (*cst) return cmd_cost(rc, out_dir, paper_only);
    if (*cmp) return cmd_compare(rc, cost_csv, baseline_csv, out_dir);
    if (*sim) {
      return cmd_simulate(rc, sim_input, out_dir, strict, sim_stdout,
                          cycle_trace_path);
    }
    if (*demo) return cmd_demo_xor();
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UnknownPreset& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

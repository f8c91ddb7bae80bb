// Command-line front end: run | compare | diagnose | regime-table.

#include "mbprox/mbprox.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw mbprox::ConfigError("--seeds: empty entry in '" + text + "'");
    seeds.push_back(mbprox::csv::parse_uint(item));
  }
  if (seeds.empty()) throw mbprox::ConfigError("--seeds: no seeds given");
  return seeds;
}

int cmd_run(const std::string& config_path, const mbprox::HarnessOptions& opt) {
  const auto cfg = mbprox::load_config(config_path);
  const auto outcome = mbprox::run_experiment(cfg, opt);
  for (const auto& msg : outcome.messages) std::cerr << "diverged: " << msg << '\n';
  if (!opt.quiet) {
    std::cout << "wrote " << outcome.trace_files.size() << " trace file(s), "
              << outcome.summary_file.string() << " and " << outcome.plot_file.string() << '\n';
    for (const auto& r : outcome.rows) {
      std::cout << "  " << r.run_id << ": samples=" << r.samples_used
                << " obj_at_R=" << mbprox::csv::number(r.obj_at_R)
                << " obj_last=" << mbprox::csv::number(r.obj_last) << " status=" << r.status
                << '\n';
    }
  }
  return outcome.exit_code;
}

int cmd_compare(const std::vector<std::string>& paths, const mbprox::HarnessOptions& opt) {
  std::vector<mbprox::fs::path> summaries(paths.begin(), paths.end());
  const mbprox::fs::path out = opt.out_dir ? mbprox::fs::path(*opt.out_dir)
                               : std::getenv("MBPROX_OUT_DIR") && *std::getenv("MBPROX_OUT_DIR")
                                   ? mbprox::fs::path(std::getenv("MBPROX_OUT_DIR"))
                                   : mbprox::fs::path("mbprox_out");
  const auto rows = mbprox::compare(summaries, out);
  if (!opt.quiet) {
    mbprox::write_comparison(std::cout, rows);
    std::cout << "wrote " << (out / "compare.csv").string() << " and "
              << (out / "compare.gp").string() << '\n';
  }
  return mbprox::exit_ok;
}

int cmd_diagnose(const std::string& config_path, const mbprox::HarnessOptions& opt) {
  const auto cfg = mbprox::load_config(config_path);
  const auto report = mbprox::diagnose(cfg);
  const auto out = mbprox::resolve_out_dir(cfg, opt);
  mbprox::fs::create_directories(out);
  std::ofstream(out / "diagnostics.json") << report.report.dump(2) << '\n';
  if (!opt.quiet) std::cout << report.report.dump(2) << '\n';
  return mbprox::exit_ok;
}

int cmd_regime(const std::string& config_path, const mbprox::HarnessOptions& opt) {
  auto cfg = mbprox::load_config(config_path);
  if (opt.seeds) cfg.seeds = *opt.seeds;
  const std::string table = mbprox::regime_table_csv(cfg);
  const auto out = mbprox::resolve_out_dir(cfg, opt);
  mbprox::fs::create_directories(out);
  std::ofstream(out / "regime_table.csv", std::ios::binary) << table;
  if (!opt.quiet) std::cout << table;
  return mbprox::exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minibatch-prox experiments: run, compare, diagnose, regime-table"};
  app.require_subcommand(1);
  std::string out_dir;
  std::string seeds_text;
  bool quiet = false;
  app.add_option("--out", out_dir, "Output directory (default: config, then $MBPROX_OUT_DIR)");
  app.add_option("--seeds", seeds_text, "Comma-separated seeds overriding the config");
  app.add_flag("--quiet", quiet, "Suppress progress output");

  std::string config_path;
  std::vector<std::string> summary_paths;
  auto* run = app.add_subcommand("run", "Run the configured experiment replicas");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  auto* cmp = app.add_subcommand("compare", "Merge summary CSVs into medians and a plot script");
  cmp->add_option("summaries", summary_paths, "summary.csv files")->required()->expected(2, -1);
  auto* diag = app.add_subcommand("diagnose", "Estimate regularity constants");
  diag->add_option("config", config_path, "Experiment config (JSON)")->required();
  auto* reg = app.add_subcommand("regime-table", "Emit the asymptotic runtime/energy table");
  reg->add_option("config", config_path, "Experiment config (JSON)")->required();
  for (auto* sub : {run, cmp, diag, reg}) {
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seeds", seeds_text, "Comma-separated seeds overriding the config");
    sub->add_flag("--quiet", quiet, "Suppress progress output");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mbprox::exit_config;
  }

  try {
    mbprox::HarnessOptions opt;
    opt.quiet = quiet;
    if (!out_dir.empty()) opt.out_dir = out_dir;
    if (!seeds_text.empty()) opt.seeds = parse_seed_list(seeds_text);
    if (*run) return cmd_run(config_path, opt);
    if (*cmp) return cmd_compare(summary_paths, opt);
    if (*diag) return cmd_diagnose(config_path, opt);
    return cmd_regime(config_path, opt);
  } catch (const mbprox::InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mbprox::exit_config;
  } catch (const mbprox::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mbprox::exit_divergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "xmam/benchmark.hpp"
#include "xmam/errors.hpp"
#include "xmam_cli/runner.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

void configure_logging() {
  const char* level = std::getenv("XMAM_LOG_LEVEL");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Federated learning robustness simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Run an experiment described by a YAML config");
  run->add_option("config", config_path, "Experiment config file")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Override the config seed");

  xmam::ScreeningOptions bench_opts;
  std::string bench_csv = "screening_times.csv";
  auto* bench = app.add_subcommand("bench", "Time the screening phase of every aggregator");
  bench->add_option("--tau", bench_opts.tau, "Updates per round")->capture_default_str();
  bench->add_option("--zeta", bench_opts.zeta, "Parameters per update")->capture_default_str();
  bench->add_option("--classes", bench_opts.classes, "Output classes M")->capture_default_str();
  bench->add_option("--repeats", bench_opts.repeats, "Timed repetitions (>= 3)")
      ->check(CLI::PositiveNumber & CLI::Range(std::size_t{3}, std::numeric_limits<std::size_t>::max()))
      ->capture_default_str();
  bench->add_option("--f", bench_opts.f, "Byzantine count for Krum")->capture_default_str();
  bench->add_option("--csv", bench_csv, "CSV output path")->capture_default_str();

  std::string run_dir, space = "slous", scatter_out;
  std::size_t round = 0;
  auto* scatter = app.add_subcommand("export-scatter", "Write 2-D PCA coordinates of one round");
  scatter->add_option("run_dir", run_dir, "Run output directory")->required();
  scatter->add_option("--round", round, "Round to export")->required();
  scatter->add_option("--space", space, "slous or updates")
      ->check(CLI::IsMember({"slous", "updates"}))
      ->capture_default_str();
  scatter->add_option("--out", scatter_out, "CSV output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      xmam::cli::run({config_path, out_dir, seed});
      spdlog::info("results written to {}", out_dir);
    } else if (*bench) {
      const xmam::ScreeningTable table = xmam::screening_benchmark(bench_opts);
      xmam::cli::print_screening_table(table, std::cout);
      std::ofstream csv(bench_csv);
      if (!csv) throw xmam::IoError("cannot write " + bench_csv);
      csv << xmam::cli::screening_csv(table);
    } else if (*scatter) {
      const std::string csv =
          xmam::cli::export_scatter(run_dir, round, xmam::cli::parse_scatter_space(space));
      if (scatter_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(scatter_out);
        if (!out) throw xmam::IoError("cannot write " + scatter_out);
        out << csv;
      }
    }
  } catch (const xmam::ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntimeError;
  }
  return kOk;
}

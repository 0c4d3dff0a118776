#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "xmam/benchmark.hpp"
#include "xmam_cli/config.hpp"

namespace xmam::cli {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr const char* kMetricsHeader =
    "iteration,test_error,attack_success_rate,preserved_count,screening_seconds,preserved_ids";

struct RunRequest {
  std::filesystem::path config_path;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
};

/// Parses the config, runs the experiment and writes metrics.csv, timing.csv,
/// diagnostics.json, manifest.json and a copy of the config into out_dir.
/// Throws ConfigError for config problems; other failures are recorded in the
/// manifest (status "failed") and rethrown.
ExperimentResult run(const RunRequest& request);

/// Same as run() for an already parsed config; config_text is stored verbatim.
ExperimentResult run_parsed(const RunConfig& config, const std::string& config_text,
                            const std::string& config_source, const std::filesystem::path& out_dir);

enum class ScatterSpace { updates, slous };
ScatterSpace parse_scatter_space(const std::string& name);

/// CSV with header id,pc1,pc2,is_malicious,preserved for one stored round.
std::string export_scatter(const std::filesystem::path& run_dir, std::size_t round,
                           ScatterSpace space);

/// Human-readable table of mean/stddev screening seconds.
void print_screening_table(const ScreeningTable& table, std::ostream& out);
std::string screening_csv(const ScreeningTable& table);

}  // namespace xmam::cli

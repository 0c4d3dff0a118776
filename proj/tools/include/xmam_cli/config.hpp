#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "xmam/simulation.hpp"

namespace xmam::cli {

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
  ExperimentConfig experiment;
  /// Write measured screening times into metrics.csv instead of "nan".
  /// Off by default so that reruns produce byte-identical metrics.
  bool report_timing = false;
};

/// Parses YAML text. Omitted keys keep their defaults; unknown keys, bad
/// values and constraint violations throw ConfigError with line context.
/// Relative paths inside the file resolve against base_dir.
RunConfig parse_config_text(const std::string& text, const std::string& source,
                            const std::filesystem::path& base_dir = {});

/// Reads and parses a config file; relative paths resolve against its directory.
RunConfig parse_config(const std::filesystem::path& path);

/// 64-bit FNV-1a over the bytes, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace xmam::cli

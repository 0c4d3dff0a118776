#include "xmam_cli/runner.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "xmam/errors.hpp"

namespace xmam::cli {
namespace {

using nlohmann::json;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

std::string fmt_rate(Scalar v) { return std::isnan(v) ? "nan" : fmt::format("{:.6f}", v); }

std::string join_ids(const std::vector<std::size_t>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(ids[i]);
  }
  return out;
}

json number_or_null(Scalar v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json round_json(const RoundReport& r) {
  json j;
  j["iteration"] = r.iteration;
  j["test_error"] = number_or_null(r.test_error);
  j["attack_success_rate"] = number_or_null(r.attack_success_rate);
  j["sampled_ids"] = r.sampled_ids;
  std::vector<bool> flags = r.sampled_malicious;
  j["is_malicious"] = flags;
  j["preserved_ids"] = r.preserved_ids;
  if (r.diagnostics) {
    const RoundDiagnostics& d = *r.diagnostics;
    j["slous"] = d.slous;
    j["cluster_labels"] = d.cluster_labels;
    j["krum_scores"] = d.krum_scores;
    j["update_norms"] = d.update_norms;
    j["update_pca"] = d.update_pca;
    j["slou_pca"] = d.slou_pca;
    j["all_noise_fallback"] = d.all_noise_fallback;
    j["hierarchy_passes"] = d.hierarchy_passes;
    if (d.lambda_search) {
      j["lambda_search"] = {{"lambda", d.lambda_search->lambda},
                            {"accepted", d.lambda_search->accepted},
                            {"probes", d.lambda_search->probes}};
    }
  }
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ExperimentResult run(const RunRequest& request) {
  std::string text;
  try {
    text = read_text(request.config_path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  RunConfig config =
      parse_config_text(text, request.config_path.string(), request.config_path.parent_path());
  if (request.seed) config.experiment.seed = *request.seed;
  return run_parsed(config, text, request.config_path.string(), request.out_dir);
}

ExperimentResult run_parsed(const RunConfig& config, const std::string& config_text,
                            const std::string& config_source, const std::filesystem::path& out_dir) {
  const ExperimentConfig& exp = config.experiment;
  exp.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  json manifest;
  manifest["artifact_version"] = kArtifactVersion;
  manifest["config_path"] = config_source;
  manifest["config_copy"] = "config.yaml";
  manifest["config_hash"] = fnv1a_hex(config_text);
  manifest["config_hash_algorithm"] = "fnv1a-64";
  manifest["seed"] = exp.seed;
  manifest["started_at"] = utc_now();
  manifest["outputs"] = {"metrics.csv", "timing.csv", "diagnostics.json", "manifest.json"};
  manifest["status"] = "running";
  write_text(out_dir / "config.yaml", config_text);
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");

  std::ofstream metrics(out_dir / "metrics.csv", std::ios::binary);
  std::ofstream timing(out_dir / "timing.csv", std::ios::binary);
  if (!metrics || !timing) throw IoError("cannot open metrics files in " + out_dir.string());
  metrics << kMetricsHeader << '\n';
  timing << "iteration,screening_seconds,round_seconds\n";

  json rounds = json::array();
  std::size_t completed = 0;
  auto sink = [&](const RoundReport& r) {
    const std::string screening =
        config.report_timing ? fmt::format("{:.9f}", r.screening_seconds) : "nan";
    metrics << r.iteration << ',' << fmt_rate(r.test_error) << ','
            << fmt_rate(r.attack_success_rate) << ',' << r.preserved_ids.size() << ','
            << screening << ',' << join_ids(r.preserved_ids) << '\n';
    metrics.flush();
    timing << r.iteration << ',' << fmt::format("{:.9f}", r.screening_seconds) << ','
           << fmt::format("{:.6f}", r.round_seconds) << '\n';
    timing.flush();
    rounds.push_back(round_json(r));
    ++completed;
    spdlog::info("round {:>3}: test_error={} asr={} preserved={}/{} malicious_preserved={} ({:.2f}s)",
                 r.iteration, fmt_rate(r.test_error), fmt_rate(r.attack_success_rate),
                 r.preserved_ids.size(), r.sampled_ids.size(), r.preserved_malicious(),
                 r.round_seconds);
  };

  auto write_diagnostics = [&](const std::vector<std::size_t>& malicious) {
    json diag;
    diag["malicious_ids"] = malicious;
    diag["rounds"] = rounds;
    write_text(out_dir / "diagnostics.json", diag.dump() + "\n");
  };

  try {
    spdlog::info("loading data");
    const ExperimentData data = load_experiment_data(exp.data);
    spdlog::info("train={} test={} clients={} tau={} aggregator={} attack={}/{}", data.train.size(),
                 data.test.size(), exp.num_clients, exp.tau, to_string(exp.aggregator.kind),
                 to_string(exp.attack.kind), to_string(exp.attack.mode));
    ExperimentResult result = run_experiment(exp, data, {sink});
    write_diagnostics(result.malicious_ids);
    manifest["malicious_ids"] = result.malicious_ids;
    manifest["status"] = "complete";
    manifest["rounds_completed"] = completed;
    manifest["finished_at"] = utc_now();
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
    return result;
  } catch (const std::exception& e) {
    metrics.flush();
    timing.flush();
    try {
      write_diagnostics({});
    } catch (const std::exception&) {
    }
    manifest["status"] = "failed";
    manifest["partial"] = true;
    manifest["rounds_completed"] = completed;
    manifest["error"] = e.what();
    manifest["finished_at"] = utc_now();
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
    throw;
  }
}

ScatterSpace parse_scatter_space(const std::string& name) {
  if (name == "updates") return ScatterSpace::updates;
  if (name == "slous") return ScatterSpace::slous;
  throw ArgumentError("unknown space '" + name + "' (expected updates or slous)");
}

std::string export_scatter(const std::filesystem::path& run_dir, std::size_t round,
                           ScatterSpace space) {
  const json diag = json::parse(read_text(run_dir / "diagnostics.json"));
  const char* key = space == ScatterSpace::updates ? "update_pca" : "slou_pca";
  for (const json& r : diag.at("rounds")) {
    if (r.at("iteration").get<std::size_t>() != round) continue;
    if (!r.contains(key)) {
      throw ArgumentError("round " + std::to_string(round) + " has no stored PCA coordinates");
    }
    const auto ids = r.at("sampled_ids").get<std::vector<std::size_t>>();
    const auto flags = r.at("is_malicious").get<std::vector<bool>>();
    const auto preserved = r.at("preserved_ids").get<std::vector<std::size_t>>();
    const auto coords = r.at(key).get<std::vector<std::vector<double>>>();
    if (coords.size() != ids.size()) {
      throw FormatError("round " + std::to_string(round) + ": coordinate count does not match ids");
    }
    std::string out = "id,pc1,pc2,is_malicious,preserved\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const bool kept = std::find(preserved.begin(), preserved.end(), ids[i]) != preserved.end();
      out += fmt::format("{},{:.9g},{:.9g},{},{}\n", ids[i], coords[i].at(0), coords[i].at(1),
                         flags[i] ? 1 : 0, kept ? 1 : 0);
    }
    return out;
  }
  throw ArgumentError("round " + std::to_string(round) + " not found in " +
                      (run_dir / "diagnostics.json").string());
}

void print_screening_table(const ScreeningTable& table, std::ostream& out) {
  out << fmt::format("screening time, tau={} zeta={} M={}\n", table.tau, table.zeta, table.classes);
  out << fmt::format("{:<12} {:>14} {:>14}\n", "aggregator", "mean_s", "stddev_s");
  for (const ScreeningRow& r : table.rows) {
    out << fmt::format("{:<12} {:>14.6e} {:>14.6e}\n", to_string(r.kind), r.mean_seconds,
                       r.stddev_seconds);
  }
}

std::string screening_csv(const ScreeningTable& table) {
  std::string out = "aggregator,tau,zeta,classes,repeats,mean_seconds,stddev_seconds\n";
  for (const ScreeningRow& r : table.rows) {
    out += fmt::format("{},{},{},{},{},{:.9e},{:.9e}\n", to_string(r.kind), table.tau, table.zeta,
                       table.classes, r.samples.size(), r.mean_seconds, r.stddev_seconds);
  }
  return out;
}

}  // namespace xmam::cli

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "xmam/errors.hpp"
#include "xmam_cli/config.hpp"
#include "xmam_cli/runner.hpp"

namespace xmam::cli {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            (std::string("xmam_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

const std::string kTiny = R"(schema_version: 1
num_clients: 8
tau: 4
malicious_fraction: 0.25
global_iterations: 2
batch_size: 8
lr: 0.05
data:
  kind: synthetic
  classes: 3
  per_class: 30
  dim: 6
  test_per_class: 10
  dirichlet_alpha: 10
model:
  preset: mlp
  hidden: 6
attack:
  trigger_block: 1
  target_label: 0
  trigger_intensity: 8
aggregator:
  kind: xmam
)";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(XMAM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// --- config parsing ----------------------------------------------------------------

TEST(ConfigParse, EmptyDocumentGivesDefaults) {
  const RunConfig c = parse_config_text("", "empty.yaml");
  const ExperimentConfig d;
  EXPECT_EQ(c.experiment.num_clients, d.num_clients);
  EXPECT_EQ(c.experiment.tau, d.tau);
  EXPECT_EQ(c.experiment.lr, d.lr);
  EXPECT_EQ(c.experiment.aggregator.kind, d.aggregator.kind);
  EXPECT_FALSE(c.report_timing);
}

TEST(ConfigParse, UnknownKeyNamesKeyAndLine) {
  try {
    parse_config_text("tau: 10\naggegator:\n  kind: krum\n", "typo.yaml");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("aggegator"), std::string::npos) << msg;
    EXPECT_NE(msg.find("typo.yaml:2"), std::string::npos) << msg;
  }
}

TEST(ConfigParse, NestedUnknownKeyIsQualified) {
  try {
    parse_config_text("attack:\n  epsilom: 0.1\n", "x.yaml");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("attack.epsilom"), std::string::npos) << e.what();
  }
}

TEST(ConfigParse, ConstraintViolationsRejected) {
  EXPECT_THROW(parse_config_text("malicious_fraction: 0.6\n", "x"), ConfigError);
  EXPECT_THROW(parse_config_text("tau: -3\n", "x"), ConfigError);
  EXPECT_THROW(parse_config_text("tau: ten\n", "x"), ConfigError);
  EXPECT_THROW(parse_config_text("aggregator:\n  kind: median\n", "x"), ConfigError);
  EXPECT_THROW(parse_config_text("schema_version: 2\n", "x"), ConfigError);
  EXPECT_THROW(parse_config_text("tau: [1, 2\n", "x"), ConfigError);
  EXPECT_THROW(parse_config_text("data: 3\n", "x"), ConfigError);
}

TEST(ConfigParse, ValuesLandInFields) {
  const RunConfig c = parse_config_text(kTiny + "warmup_rounds: 3\nwarmup_lr: 0.2\nseed: 9\n", "t.yaml", "/base");
  EXPECT_EQ(c.experiment.num_clients, 8u);
  EXPECT_EQ(c.experiment.data.kind, DatasetKind::synthetic);
  EXPECT_EQ(c.experiment.data.synthetic.dim, 6u);
  EXPECT_EQ(c.experiment.model.preset, "mlp");
  EXPECT_EQ(c.experiment.attack.trigger.intensity, 8.0);
  EXPECT_EQ(c.experiment.aggregator.kind, AggregatorKind::xmam);
  EXPECT_EQ(c.experiment.warmup_rounds, 3u);
  EXPECT_EQ(c.experiment.warmup_lr, 0.2);
  EXPECT_EQ(c.experiment.seed, 9u);
}

TEST(ConfigParse, RelativeDataPathResolvesAgainstConfigDir) {
  const RunConfig c = parse_config_text("data:\n  mnist_dir: digits\n", "c.yaml", "/some/where");
  EXPECT_EQ(fs::path(c.experiment.data.mnist_dir), fs::path("/some/where/digits"));
}

TEST(ConfigParse, HashIsFnv1a) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

// --- runs -------------------------------------------------------------------------

TEST(Run, WritesArtifactsAndRerunsIdentically) {
  TempDir dir;
  put(dir.path() / "tiny.yaml", kTiny);
  run({dir.path() / "tiny.yaml", dir.path() / "a", std::nullopt});
  run({dir.path() / "tiny.yaml", dir.path() / "b", std::nullopt});
  const std::string metrics = slurp(dir.path() / "a" / "metrics.csv");
  EXPECT_EQ(count_lines(metrics), 3u);
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), kMetricsHeader);
  EXPECT_EQ(metrics, slurp(dir.path() / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(dir.path() / "a" / "config.yaml"), kTiny);
  const auto manifest = nlohmann::json::parse(slurp(dir.path() / "a" / "manifest.json"));
  EXPECT_EQ(manifest["status"], "complete");
  EXPECT_EQ(manifest["config_hash"], fnv1a_hex(kTiny));
  EXPECT_EQ(manifest["rounds_completed"], 2);
  const auto diag = nlohmann::json::parse(slurp(dir.path() / "a" / "diagnostics.json"));
  EXPECT_EQ(diag["rounds"].size(), 2u);
  EXPECT_EQ(count_lines(slurp(dir.path() / "a" / "timing.csv")), 3u);
}

TEST(Run, SeedOverrideChangesOutcome) {
  TempDir dir;
  put(dir.path() / "tiny.yaml", kTiny);
  const ExperimentResult a = run({dir.path() / "tiny.yaml", dir.path() / "a", std::nullopt});
  const ExperimentResult b = run({dir.path() / "tiny.yaml", dir.path() / "b", 42});
  EXPECT_NE(a.final_model, b.final_model);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir.path() / "b" / "manifest.json"))["seed"], 42);
}

TEST(Run, FailureMarksManifest) {
  TempDir dir;
  RunConfig c = parse_config_text(kTiny, "t");
  c.experiment.data.kind = DatasetKind::mnist;
  c.experiment.data.mnist_dir = (dir.path() / "missing").string();
  EXPECT_THROW(run_parsed(c, kTiny, "t", dir.path() / "out"), IoError);
  const auto manifest = nlohmann::json::parse(slurp(dir.path() / "out" / "manifest.json"));
  EXPECT_EQ(manifest["status"], "failed");
  EXPECT_TRUE(manifest["partial"].get<bool>());
}

TEST(Scatter, RowsFlagsAndErrors) {
  TempDir dir;
  put(dir.path() / "tiny.yaml", kTiny);
  const ExperimentResult r = run({dir.path() / "tiny.yaml", dir.path() / "run", std::nullopt});
  for (ScatterSpace space : {ScatterSpace::slous, ScatterSpace::updates}) {
    const std::string csv = export_scatter(dir.path() / "run", 1, space);
    EXPECT_EQ(count_lines(csv), 5u);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,pc1,pc2,is_malicious,preserved");
    std::istringstream lines(csv.substr(csv.find('\n') + 1));
    std::string line;
    std::size_t malicious = 0, preserved = 0;
    while (std::getline(lines, line)) {
      const std::size_t id = std::stoul(line.substr(0, line.find(',')));
      const bool is_mal = line[line.size() - 3] == '1';
      malicious += is_mal;
      EXPECT_EQ(is_mal, std::count(r.malicious_ids.begin(), r.malicious_ids.end(), id) == 1);
      const bool kept = line.back() == '1';
      preserved += kept;
      const auto& ids = r.reports[1].preserved_ids;
      EXPECT_EQ(kept, std::count(ids.begin(), ids.end(), id) == 1);
    }
    EXPECT_EQ(malicious, 1u);
    EXPECT_EQ(preserved, r.reports[1].preserved_ids.size());
  }
  EXPECT_THROW(export_scatter(dir.path() / "run", 7, ScatterSpace::slous), ArgumentError);
  EXPECT_THROW(parse_scatter_space("weights"), ArgumentError);
}

// --- executable -------------------------------------------------------------------

TEST(Executable, ExitCodes) {
  TempDir dir;
  put(dir.path() / "ok.yaml", kTiny);
  put(dir.path() / "bad.yaml", "malicious_fraction: 0.6\n");
  std::string broken = kTiny;
  broken.replace(broken.find("kind: synthetic"), 15, "kind: mnist\n  mnist_dir: nowhere");
  put(dir.path() / "broken.yaml", broken);
  const std::string d = dir.path().string();
  EXPECT_EQ(run_cli("run " + d + "/ok.yaml --out " + d + "/o1"), 0);
  EXPECT_EQ(run_cli("run " + d + "/bad.yaml --out " + d + "/o2"), 1);
  EXPECT_EQ(run_cli("run " + d + "/missing.yaml --out " + d + "/o3"), 1);
  EXPECT_EQ(run_cli("run " + d + "/broken.yaml --out " + d + "/o4"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("export-scatter " + d + "/o1 --round 1 --out " + d + "/s.csv"), 0);
  EXPECT_EQ(count_lines(slurp(dir.path() / "s.csv")), 5u);
  EXPECT_EQ(run_cli("export-scatter " + d + "/o1 --round 9"), 2);
}

TEST(Executable, BenchWritesCsv) {
  TempDir dir;
  const std::string csv = (dir.path() / "bench.csv").string();
  EXPECT_EQ(run_cli("bench --tau 6 --zeta 2000 --repeats 1 --f 2 --csv " + csv), 1);
  ASSERT_EQ(run_cli("bench --tau 6 --zeta 2000 --repeats 3 --f 2 --csv " + csv), 0);
  const std::string text = slurp(csv);
  EXPECT_EQ(count_lines(text), 1u + all_aggregator_kinds().size());
  EXPECT_NE(text.find("xmam,6,"), std::string::npos);
}

}  // namespace
}  // namespace xmam::cli

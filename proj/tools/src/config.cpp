#include "xmam_cli/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "xmam/errors.hpp"

namespace xmam::cli {
namespace {

std::string where(const std::string& source, const YAML::Node& node) {
  const YAML::Mark m = node.Mark();
  if (m.line < 0) return source;
  return source + ":" + std::to_string(m.line + 1);
}

class Reader {
 public:
  Reader(std::string source, std::filesystem::path base)
      : source_(std::move(source)), base_(std::move(base)) {}

  /// Visits every key of a mapping; unknown keys are errors.
  void section(const YAML::Node& map, const std::string& prefix,
               const std::map<std::string, std::function<void(const YAML::Node&)>>& handlers) {
    if (!map.IsMap()) {
      throw ConfigError(where(source_, map) + ": '" + prefix + "' must be a mapping");
    }
    for (const auto& kv : map) {
      const std::string key = kv.first.as<std::string>();
      const std::string full = prefix.empty() ? key : prefix + "." + key;
      const auto it = handlers.find(key);
      if (it == handlers.end()) {
        throw ConfigError(where(source_, kv.first) + ": unknown key '" + full + "'");
      }
      current_ = full;
      it->second(kv.second);
    }
  }

  template <class T>
  T get(const YAML::Node& node) const {
    if (!node.IsScalar()) {
      throw ConfigError(where(source_, node) + ": '" + current_ + "' must be a scalar");
    }
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(where(source_, node) + ": '" + current_ + "' has invalid value '" +
                        node.Scalar() + "'");
    }
  }

  std::size_t count(const YAML::Node& node) const {
    const auto v = get<long long>(node);
    if (v < 0) {
      throw ConfigError(where(source_, node) + ": '" + current_ + "' must be >= 0");
    }
    return static_cast<std::size_t>(v);
  }

  template <class F>
  auto parse(const YAML::Node& node, F&& fn) const {
    try {
      return fn(get<std::string>(node));
    } catch (const ArgumentError& e) {
      throw ConfigError(where(source_, node) + ": '" + current_ + "': " + e.what());
    }
  }

  std::string path(const YAML::Node& node) const {
    std::filesystem::path p = get<std::string>(node);
    if (p.is_relative() && !base_.empty()) p = base_ / p;
    return p.lexically_normal().string();
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
  std::filesystem::path base_;
  std::string current_;
};

Corner parse_corner(const std::string& s) {
  if (s == "top_left") return Corner::top_left;
  if (s == "top_right") return Corner::top_right;
  if (s == "bottom_left") return Corner::bottom_left;
  if (s == "bottom_right") return Corner::bottom_right;
  throw ArgumentError("unknown corner '" + s +
                      "' (expected top_left, top_right, bottom_left or bottom_right)");
}

ProbeKind parse_probe(const std::string& s) {
  if (s == "ones") return ProbeKind::ones;
  if (s == "random") return ProbeKind::random;
  throw ArgumentError("unknown probe '" + s + "' (expected ones or random)");
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& source,
                            const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  RunConfig rc;
  if (root.IsNull()) {
    rc.experiment.validate();
    return rc;
  }
  ExperimentConfig& c = rc.experiment;
  Reader r(source, base_dir);
  using H = std::map<std::string, std::function<void(const YAML::Node&)>>;

  const H data{
      {"kind", [&](const YAML::Node& n) { c.data.kind = r.parse(n, parse_dataset_kind); }},
      {"mnist_dir", [&](const YAML::Node& n) { c.data.mnist_dir = r.path(n); }},
      {"train_limit", [&](const YAML::Node& n) { c.data.train_limit = r.count(n); }},
      {"test_limit", [&](const YAML::Node& n) { c.data.test_limit = r.count(n); }},
      {"classes", [&](const YAML::Node& n) { c.data.synthetic.classes = r.count(n); }},
      {"per_class", [&](const YAML::Node& n) { c.data.synthetic.per_class = r.count(n); }},
      {"test_per_class", [&](const YAML::Node& n) { c.data.synthetic_test_per_class = r.count(n); }},
      {"dim", [&](const YAML::Node& n) { c.data.synthetic.dim = r.count(n); }},
      {"separation", [&](const YAML::Node& n) { c.data.synthetic.separation = r.get<double>(n); }},
      {"synthetic_seed", [&](const YAML::Node& n) { c.data.synthetic.seed = r.get<std::uint64_t>(n); }},
      {"dirichlet_alpha", [&](const YAML::Node& n) { c.data.dirichlet_alpha = r.get<double>(n); }},
  };
  const H model{
      {"preset", [&](const YAML::Node& n) { c.model.preset = r.get<std::string>(n); }},
      {"hidden", [&](const YAML::Node& n) { c.model.hidden = r.count(n); }},
  };
  AttackConfig& a = c.attack;
  const H attack{
      {"kind", [&](const YAML::Node& n) { a.kind = r.parse(n, parse_attack_kind); }},
      {"mode", [&](const YAML::Node& n) { a.mode = r.parse(n, parse_attack_mode); }},
      {"epsilon", [&](const YAML::Node& n) { a.epsilon = r.get<double>(n); }},
      {"rho1", [&](const YAML::Node& n) { a.rho1 = r.get<double>(n); }},
      {"rho2", [&](const YAML::Node& n) { a.rho2 = r.get<double>(n); }},
      {"replace_scale", [&](const YAML::Node& n) { a.replace_scale = r.get<double>(n); }},
      {"poison_fraction", [&](const YAML::Node& n) { a.poison_fraction = r.get<double>(n); }},
      {"target_label", [&](const YAML::Node& n) { a.trigger.target_label = r.get<int>(n); }},
      {"trigger_block", [&](const YAML::Node& n) { a.trigger.block_size = r.count(n); }},
      {"trigger_corner", [&](const YAML::Node& n) { a.trigger.corner = r.parse(n, parse_corner); }},
      {"trigger_intensity", [&](const YAML::Node& n) { a.trigger.intensity = r.get<double>(n); }},
      {"source_class", [&](const YAML::Node& n) { a.source_class = r.get<int>(n); }},
      {"tail_fraction", [&](const YAML::Node& n) { a.tail_fraction = r.get<double>(n); }},
      {"subpopulation_test_fraction",
       [&](const YAML::Node& n) { a.subpopulation_test_fraction = r.get<double>(n); }},
      {"adaptive", [&](const YAML::Node& n) { a.adaptive = r.parse(n, parse_adaptive_kind); }},
      {"lambda_init", [&](const YAML::Node& n) { a.lambda_init = r.get<double>(n); }},
      {"lambda_floor", [&](const YAML::Node& n) { a.lambda_floor = r.get<double>(n); }},
  };
  AggregatorConfig& g = c.aggregator;
  const H aggregator{
      {"kind", [&](const YAML::Node& n) { g.kind = r.parse(n, parse_aggregator_kind); }},
      {"delta", [&](const YAML::Node& n) { g.delta = r.get<double>(n); }},
      {"rsa_beta0", [&](const YAML::Node& n) { g.rsa_beta0 = r.get<double>(n); }},
      {"rsa_decay", [&](const YAML::Node& n) { g.rsa_decay = r.get<double>(n); }},
      {"rfa_v", [&](const YAML::Node& n) { g.rfa.v = r.get<double>(n); }},
      {"rfa_mu", [&](const YAML::Node& n) { g.rfa.mu = r.get<double>(n); }},
      {"rfa_max_rounds", [&](const YAML::Node& n) { g.rfa.max_rounds = r.count(n); }},
      {"f", [&](const YAML::Node& n) { g.f = r.count(n); }},
      {"eta_g", [&](const YAML::Node& n) { g.eta_g = r.get<double>(n); }},
      {"min_cluster_size", [&](const YAML::Node& n) { g.xmam.hdbscan.min_cluster_size = r.count(n); }},
      {"min_samples", [&](const YAML::Node& n) { g.xmam.hdbscan.min_samples = r.count(n); }},
      {"single_cluster_outlier_factor",
       [&](const YAML::Node& n) { g.xmam.hdbscan.single_cluster_outlier_factor = r.get<double>(n); }},
      {"sum_preserved", [&](const YAML::Node& n) { g.xmam.sum_preserved = r.get<bool>(n); }},
      {"probe_full_model", [&](const YAML::Node& n) { g.xmam.probe_full_model = r.get<bool>(n); }},
      {"probe", [&](const YAML::Node& n) { g.xmam.probe = r.parse(n, parse_probe); }},
      {"probe_seed", [&](const YAML::Node& n) { g.xmam.probe_seed = r.get<std::uint64_t>(n); }},
  };
  const H top{
      {"schema_version",
       [&](const YAML::Node& n) {
         const int v = r.get<int>(n);
         if (v != kSchemaVersion) {
           throw ConfigError(where(source, n) + ": unsupported schema_version " +
                             std::to_string(v) + " (this build reads " +
                             std::to_string(kSchemaVersion) + ")");
         }
       }},
      {"num_clients", [&](const YAML::Node& n) { c.num_clients = r.count(n); }},
      {"tau", [&](const YAML::Node& n) { c.tau = r.count(n); }},
      {"malicious_fraction", [&](const YAML::Node& n) { c.malicious_fraction = r.get<double>(n); }},
      {"global_iterations", [&](const YAML::Node& n) { c.global_iterations = r.count(n); }},
      {"local_iterations", [&](const YAML::Node& n) { c.local_iterations = r.count(n); }},
      {"batch_size", [&](const YAML::Node& n) { c.batch_size = r.count(n); }},
      {"lr", [&](const YAML::Node& n) { c.lr = r.get<double>(n); }},
      {"lr_decay", [&](const YAML::Node& n) { c.lr_decay = r.get<double>(n); }},
      {"momentum", [&](const YAML::Node& n) { c.momentum = r.get<double>(n); }},
      {"weight_decay", [&](const YAML::Node& n) { c.weight_decay = r.get<double>(n); }},
      {"seed", [&](const YAML::Node& n) { c.seed = r.get<std::uint64_t>(n); }},
      {"warmup_rounds", [&](const YAML::Node& n) { c.warmup_rounds = r.count(n); }},
      {"warmup_lr", [&](const YAML::Node& n) { c.warmup_lr = r.get<double>(n); }},
      {"diagnostics_every", [&](const YAML::Node& n) { c.diagnostics_every = r.count(n); }},
      {"report_timing", [&](const YAML::Node& n) { rc.report_timing = r.get<bool>(n); }},
      {"data", [&](const YAML::Node& n) { r.section(n, "data", data); }},
      {"model", [&](const YAML::Node& n) { r.section(n, "model", model); }},
      {"attack", [&](const YAML::Node& n) { r.section(n, "attack", attack); }},
      {"aggregator", [&](const YAML::Node& n) { r.section(n, "aggregator", aggregator); }},
  };
  r.section(root, "", top);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return rc;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string(), path.parent_path());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace xmam::cli

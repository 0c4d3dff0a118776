#include "xmam/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "xmam/errors.hpp"
#include "xmam/nn.hpp"
#include "xmam/rng.hpp"

namespace xmam {
namespace {

enum Stream : std::uint64_t {
  kPartition = 1,
  kMalicious = 2,
  kPoison = 3,
  kSample = 4,
  kTrain = 5,
  kInit = 6,
  kSubpopulation = 7,
  kWarmup = 8,
};

using Clock = std::chrono::steady_clock;

template <class Enum, std::size_t N>
Enum parse_enum(std::string_view name, const std::pair<std::string_view, Enum> (&table)[N],
                const char* what) {
  std::string options;
  for (const auto& [text, value] : table) {
    if (text == name) return value;
    if (!options.empty()) options += ", ";
    options += text;
  }
  throw ArgumentError("unknown " + std::string(what) + " '" + std::string(name) + "' (expected " +
                      options + ")");
}

constexpr std::pair<std::string_view, DatasetKind> kDatasetKinds[] = {
    {"mnist", DatasetKind::mnist}, {"synthetic", DatasetKind::synthetic}};
constexpr std::pair<std::string_view, AttackKind> kAttackKinds[] = {
    {"none", AttackKind::none},
    {"trigger", AttackKind::trigger},
    {"subpopulation", AttackKind::subpopulation}};
constexpr std::pair<std::string_view, AttackMode> kAttackModes[] = {
    {"blackbox", AttackMode::blackbox}, {"pgd", AttackMode::pgd}, {"smp", AttackMode::smp}};
constexpr std::pair<std::string_view, AdaptiveKind> kAdaptiveKinds[] = {
    {"none", AdaptiveKind::none},
    {"krum_attack", AdaptiveKind::krum_attack},
    {"xmam_attack", AdaptiveKind::xmam_attack}};

template <class Enum, std::size_t N>
std::string_view enum_name(Enum value, const std::pair<std::string_view, Enum> (&table)[N]) {
  for (const auto& [text, v] : table) {
    if (v == value) return text;
  }
  return "unknown";
}

Dataset take_first(const Dataset& data, std::size_t limit) {
  if (limit == 0 || limit >= data.size()) return data;
  std::vector<std::size_t> idx(limit);
  std::iota(idx.begin(), idx.end(), 0);
  Dataset out = data.subset(idx);
  out.name = data.name;
  return out;
}

bool trigger_fits(const TriggerSpec& trigger, const Dataset& data) {
  if (data.empty() || trigger.block_size == 0) return false;
  const auto& shape = data.inputs.front().shape;
  return shape.size() == 3 && trigger.block_size <= shape[1] && trigger.block_size <= shape[2];
}

std::vector<std::size_t> remove_indices(std::size_t n, const std::vector<std::size_t>& drop) {
  std::vector<bool> gone(n, false);
  for (std::size_t i : drop) gone[i] = true;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (!gone[i]) keep.push_back(i);
  }
  return keep;
}

ParamVector malicious_update(const Federation& fed, const ExperimentConfig& config,
                             const ClientShard& shard, const ParamVector& global,
                             const LocalTraining& hyper, std::uint64_t seed) {
  const AttackConfig& a = config.attack;
  ParamVector u;
  switch (a.mode) {
    case AttackMode::blackbox:
      u = train_local(global, fed.spec, shard, hyper, seed);
      break;
    case AttackMode::pgd:
      u = pgd_project(train_local(global, fed.spec, shard, hyper, seed), a.epsilon);
      break;
    case AttackMode::smp:
      u = smp_train(global, fed.spec, shard, {a.rho1, a.rho2}, hyper, seed).update;
      break;
  }
  if (a.replace_scale) u = model_replacement_scale(u, *a.replace_scale);
  return u;
}

std::vector<std::vector<Scalar>> pca2(std::span<const std::vector<Scalar>> rows) {
  if (rows.size() < 2 || rows.front().size() < 2) return {};
  return pca_project(rows, 2).coords;
}

std::vector<std::vector<Scalar>> pca2(std::span<const ParamVector> updates) {
  std::vector<std::span<const Scalar>> views;
  for (const ParamVector& u : updates) views.push_back(u.view());
  if (views.size() < 2 || views.front().size() < 2) return {};
  return pca_project(std::span<const std::span<const Scalar>>(views), 2).coords;
}

}  // namespace

std::string_view to_string(DatasetKind kind) { return enum_name(kind, kDatasetKinds); }
std::string_view to_string(AttackKind kind) { return enum_name(kind, kAttackKinds); }
std::string_view to_string(AttackMode mode) { return enum_name(mode, kAttackModes); }
std::string_view to_string(AdaptiveKind kind) { return enum_name(kind, kAdaptiveKinds); }
DatasetKind parse_dataset_kind(std::string_view n) { return parse_enum(n, kDatasetKinds, "dataset"); }
AttackKind parse_attack_kind(std::string_view n) { return parse_enum(n, kAttackKinds, "attack kind"); }
AttackMode parse_attack_mode(std::string_view n) { return parse_enum(n, kAttackModes, "attack mode"); }
AdaptiveKind parse_adaptive_kind(std::string_view n) {
  return parse_enum(n, kAdaptiveKinds, "adaptive attack");
}

void AttackConfig::validate() const {
  if (mode == AttackMode::pgd && !(epsilon > 0.0)) {
    throw ConfigError("attack.epsilon must be > 0 in pgd mode");
  }
  if (mode == AttackMode::smp && (rho1 < 0.0 || rho2 < 0.0)) {
    throw ConfigError("attack.rho1 and attack.rho2 must be >= 0 in smp mode");
  }
  if (replace_scale && !(*replace_scale >= 1.0)) {
    throw ConfigError("attack.replace_scale must be >= 1");
  }
  if (!(poison_fraction > 0.0 && poison_fraction < 1.0)) {
    throw ConfigError("attack.poison_fraction must lie in (0, 1)");
  }
  if (trigger.block_size == 0) throw ConfigError("attack.trigger_block must be >= 1");
  if (trigger.target_label < 0) throw ConfigError("attack.target_label must be >= 0");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
    throw ConfigError("attack.tail_fraction must lie in (0, 1]");
  }
  if (!(subpopulation_test_fraction > 0.0 && subpopulation_test_fraction < 1.0)) {
    throw ConfigError("attack.subpopulation_test_fraction must lie in (0, 1)");
  }
  if (!(lambda_init > 0.0)) throw ConfigError("attack.lambda_init must be > 0");
  if (!(lambda_floor > 0.0) || lambda_floor > lambda_init) {
    throw ConfigError("attack.lambda_floor must lie in (0, lambda_init]");
  }
}

std::size_t ExperimentConfig::malicious_clients() const {
  return static_cast<std::size_t>(std::llround(malicious_fraction * static_cast<Scalar>(num_clients)));
}

std::size_t ExperimentConfig::malicious_per_round() const {
  return static_cast<std::size_t>(std::llround(malicious_fraction * static_cast<Scalar>(tau)));
}

Scalar ExperimentConfig::lr_at(std::size_t t) const {
  return lr * std::pow(lr_decay, static_cast<Scalar>(t));
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (num_clients < 1) fail("num_clients must be >= 1");
  if (tau < 1) fail("tau must be >= 1");
  if (tau > num_clients) {
    fail("tau must not exceed num_clients (tau = " + std::to_string(tau) +
         ", num_clients = " + std::to_string(num_clients) + ")");
  }
  if (!(malicious_fraction >= 0.0 && malicious_fraction < 0.5)) {
    fail("malicious_fraction must satisfy 0 <= malicious_fraction < 0.5 (threat model: "
         "malicious clients are fewer than half of all clients), got " +
         std::to_string(malicious_fraction));
  }
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (!(lr_decay > 0.0)) fail("lr_decay must be > 0");
  if (warmup_lr < 0.0) fail("warmup_lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (!(data.dirichlet_alpha > 0.0)) fail("data.dirichlet_alpha must be > 0");
  if (data.kind == DatasetKind::synthetic) {
    if (data.synthetic.classes < 2) fail("data.classes must be >= 2");
    if (data.synthetic.dim < 1) fail("data.dim must be >= 1");
  }
  if (model.preset != "lenet_lite" && model.preset != "mlp") {
    fail("model.preset must be lenet_lite or mlp, got '" + model.preset + "'");
  }
  if (model.preset == "mlp" && model.hidden < 1) fail("model.hidden must be >= 1");
  const std::size_t m = malicious_per_round();
  const std::size_t total = malicious_clients();
  if (m > total) {
    fail("round(tau * malicious_fraction) = " + std::to_string(m) +
         " exceeds the number of malicious clients " + std::to_string(total));
  }
  if (tau - m > num_clients - total) fail("not enough benign clients to fill a round");
  attack.validate();
  if (attack.adaptive != AdaptiveKind::none && m == 0) {
    fail("adaptive attacks need at least one malicious client per round");
  }
  try {
    AggregatorConfig resolved = aggregator;
    if (!resolved.f) resolved.f = m;
    resolved.validate(tau);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentData load_experiment_data(const DataConfig& config) {
  ExperimentData out;
  if (config.kind == DatasetKind::mnist) {
    MnistSplit split = load_mnist_dir(config.mnist_dir);
    out.train = take_first(split.train, config.train_limit);
    out.test = take_first(split.test, config.test_limit);
    return out;
  }
  SyntheticOptions o = config.synthetic;
  const std::size_t train_per_class = o.per_class;
  o.per_class = train_per_class + config.synthetic_test_per_class;
  Dataset all = gen_synthetic(o);
  const std::size_t cut = train_per_class * o.classes;
  std::vector<std::size_t> train_idx(cut), test_idx(all.size() - cut);
  std::iota(train_idx.begin(), train_idx.end(), 0);
  std::iota(test_idx.begin(), test_idx.end(), cut);
  out.train = all.subset(train_idx);
  out.test = all.subset(test_idx);
  out.train.name = "synthetic-train";
  out.test.name = "synthetic-test";
  out.train = take_first(out.train, config.train_limit);
  out.test = take_first(out.test, config.test_limit);
  return out;
}

NetworkSpec make_network(const ModelConfig& model, const Dataset& sample) {
  if (sample.empty()) throw ArgumentError("cannot size a network from an empty dataset");
  const auto& shape = sample.inputs.front().shape;
  if (shape.size() != 3) throw DimensionError("inputs must have shape (channels, height, width)");
  const Shape3 in{shape[0], shape[1], shape[2]};
  if (model.preset == "lenet_lite") return lenet_lite(in, sample.num_classes);
  if (model.preset == "mlp") return mlp(in, model.hidden, sample.num_classes);
  throw ArgumentError("unknown model preset '" + model.preset + "'");
}

Federation build_federation(const ExperimentConfig& config, const ExperimentData& data) {
  config.validate();
  data.train.validate();
  data.test.validate();
  if (data.test.empty()) throw ArgumentError("the test split is empty");
  const AttackConfig& a = config.attack;

  Federation fed{make_network(config.model, data.train), {}, {}, {}, data.test, {}};
  fed.probe = make_probe(fed.spec, config.aggregator.xmam.probe, config.aggregator.xmam.probe_seed);

  // Subpopulation examples are rare data: benign clients never hold them.
  std::vector<std::size_t> pool(data.train.size());
  std::iota(pool.begin(), pool.end(), 0);
  if (a.kind == AttackKind::subpopulation) {
    fed.backdoor = make_subpopulation_backdoor(
        data.train, class_tail_selector(data.train, a.source_class, a.tail_fraction),
        a.trigger.target_label, a.subpopulation_test_fraction,
        derive_seed(config.seed, {kSubpopulation}));
    pool = remove_indices(data.train.size(), fed.backdoor.source_indices);
  } else if (trigger_fits(a.trigger, data.test)) {
    fed.backdoor = make_trigger_task(data.test, a.trigger);
  } else if (a.kind == AttackKind::trigger) {
    throw ConfigError("attack.trigger_block does not fit the input images");
  }
  Dataset partition_data = data.train.subset(pool);
  partition_data.name = data.train.name;

  fed.shards = dirichlet_partition(partition_data, config.num_clients, config.data.dirichlet_alpha,
                                   derive_seed(config.seed, {kPartition}));
  for (ClientShard& s : fed.shards) {
    for (std::size_t& i : s.source_indices) i = pool[i];
  }

  std::vector<std::size_t> ids(config.num_clients);
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(derive_seed(config.seed, {kMalicious}));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(config.malicious_clients());
  std::sort(ids.begin(), ids.end());
  fed.malicious_ids = ids;

  for (std::size_t id : fed.malicious_ids) {
    ClientShard& s = fed.shards[id];
    s.is_malicious = true;
    if (a.adaptive != AdaptiveKind::none || a.kind == AttackKind::none) continue;
    const std::uint64_t seed = derive_seed(config.seed, {kPoison, id});
    if (a.kind == AttackKind::trigger) {
      PoisonResult pr = apply_trigger(s.clean, a.trigger, a.poison_fraction, seed);
      const std::vector<std::size_t> keep = remove_indices(s.clean.size(), pr.source_indices);
      std::vector<std::size_t> kept_sources;
      for (std::size_t k : keep) kept_sources.push_back(s.source_indices[k]);
      Dataset clean = s.clean.subset(keep);
      clean.name = s.clean.name;
      s.clean = std::move(clean);
      s.source_indices = std::move(kept_sources);
      s.poisoned = std::move(pr.poisoned);
    } else {
      const Dataset& bank = fed.backdoor.train_poison;
      const Scalar ratio = a.poison_fraction / (1.0 - a.poison_fraction);
      auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<Scalar>(s.clean.size())));
      count = std::clamp<std::size_t>(count, 1, bank.size());
      std::vector<std::size_t> order(bank.size());
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 prng(seed);
      std::shuffle(order.begin(), order.end(), prng);
      order.resize(count);
      std::sort(order.begin(), order.end());
      s.poisoned = bank.subset(order);
    }
  }
  return fed;
}

std::size_t RoundReport::preserved_malicious() const {
  std::size_t n = 0;
  for (std::size_t id : preserved_ids) {
    const auto it = std::lower_bound(sampled_ids.begin(), sampled_ids.end(), id);
    if (it != sampled_ids.end() && *it == id &&
        sampled_malicious[static_cast<std::size_t>(it - sampled_ids.begin())]) {
      ++n;
    }
  }
  return n;
}

bool krum_accepts(std::span<const ParamVector> updates, std::span<const std::size_t> malicious,
                  std::size_t f) {
  const std::size_t chosen = krum(updates, f).selected;
  return std::find(malicious.begin(), malicious.end(), chosen) != malicious.end();
}

bool xmam_accepts(std::span<const ParamVector> updates, std::span<const std::size_t> malicious,
                  const NetworkSpec& spec, const Tensor& probe, const XmamOptions& options,
                  const ParamVector* global) {
  const AggregationResult r = xmam_aggregate(updates, spec, probe, options, 1.0, global);
  for (std::size_t i : malicious) {
    if (!std::binary_search(r.preserved_ids.begin(), r.preserved_ids.end(), i)) return false;
  }
  return true;
}

RoundOutput run_round(const Federation& fed, const ExperimentConfig& config,
                      const TrainingState& state) {
  const auto round_start = Clock::now();
  const std::size_t t = state.round;
  const std::size_t m = config.malicious_per_round();
  require_same_size(state.global.size(), fed.spec.param_count(), "global model");

  std::vector<std::size_t> malicious_pool = fed.malicious_ids;
  std::vector<std::size_t> benign_pool;
  for (std::size_t id = 0; id < fed.shards.size(); ++id) {
    if (!fed.shards[id].is_malicious) benign_pool.push_back(id);
  }
  std::mt19937_64 rng(derive_seed(config.seed, {kSample, t}));
  std::shuffle(malicious_pool.begin(), malicious_pool.end(), rng);
  std::shuffle(benign_pool.begin(), benign_pool.end(), rng);

  RoundOutput out;
  RoundReport& rep = out.report;
  rep.iteration = t;
  rep.sampled_ids.assign(malicious_pool.begin(), malicious_pool.begin() + static_cast<std::ptrdiff_t>(m));
  rep.sampled_ids.insert(rep.sampled_ids.end(), benign_pool.begin(),
                         benign_pool.begin() + static_cast<std::ptrdiff_t>(config.tau - m));
  std::sort(rep.sampled_ids.begin(), rep.sampled_ids.end());

  const LocalTraining hyper{config.lr_at(t), config.momentum, config.weight_decay,
                            config.local_iterations, config.batch_size};
  const bool adaptive = config.attack.adaptive != AdaptiveKind::none;
  std::vector<std::size_t> malicious_pos;
  out.updates.reserve(config.tau);
  for (std::size_t k = 0; k < rep.sampled_ids.size(); ++k) {
    const std::size_t id = rep.sampled_ids[k];
    const ClientShard& shard = fed.shards[id];
    const std::uint64_t seed = derive_seed(config.seed, {kTrain, t, id});
    rep.sampled_malicious.push_back(shard.is_malicious);
    try {
      if (shard.is_malicious) malicious_pos.push_back(k);
      if (shard.is_malicious && !adaptive) {
        out.updates.push_back(malicious_update(fed, config, shard, state.global, hyper, seed));
      } else {
        const Dataset* parts[] = {&shard.clean};
        out.updates.push_back(train_datasets(state.global, fed.spec, parts, hyper, seed).update);
      }
    } catch (const Error& e) {
      throw std::runtime_error("round " + std::to_string(t) + ", client " + std::to_string(id) +
                               ": " + e.what());
    }
  }

  const std::size_t f = config.aggregator.f.value_or(m);
  std::optional<LambdaSearch> search;
  if (adaptive && !malicious_pos.empty()) {
    const ParamVector estimate = fedavg(out.updates);
    std::vector<ParamVector> trial = out.updates;
    auto install = [&](Scalar lambda) {
      const ParamVector crafted = adaptive_craft(estimate, lambda);
      for (std::size_t k : malicious_pos) trial[k] = crafted;
    };
    auto accepts = [&](Scalar lambda) {
      install(lambda);
      if (config.attack.adaptive == AdaptiveKind::krum_attack) {
        return krum_accepts(trial, malicious_pos, f);
      }
      return xmam_accepts(trial, malicious_pos, fed.spec, fed.probe, config.aggregator.xmam,
                          &state.global);
    };
    search = binary_search_lambda(accepts, config.attack.lambda_init, config.attack.lambda_floor);
    install(search->lambda);
    out.updates = std::move(trial);
  }

  AggregationResult agg;
  try {
    agg = aggregate(out.updates, config.aggregator,
                    {&fed.spec, &fed.probe, &state.global, t, f});
  } catch (const Error& e) {
    throw std::runtime_error("round " + std::to_string(t) + ": aggregation failed: " + e.what());
  }
  rep.screening_seconds = agg.screening_seconds;
  for (std::size_t i : agg.preserved_ids) rep.preserved_ids.push_back(rep.sampled_ids[i]);
  std::sort(rep.preserved_ids.begin(), rep.preserved_ids.end());

  out.state.round = t + 1;
  out.state.global = state.global;
  axpy(config.aggregator.eta_g, agg.global_update.view(), out.state.global.view());
  if (!all_finite(out.state.global.view())) {
    throw NumericError("round " + std::to_string(t) + ": global model became non-finite");
  }

  rep.test_error = testing_error_rate(out.state.global, fed.spec, fed.test);
  rep.attack_success_rate = fed.backdoor.test_set.empty()
                                ? std::numeric_limits<Scalar>::quiet_NaN()
                                : attack_success_rate(out.state.global, fed.spec, fed.backdoor);

  if (config.diagnostics_every > 0 && t % config.diagnostics_every == 0) {
    RoundDiagnostics d;
    if (config.aggregator.kind == AggregatorKind::xmam) {
      d.slous = std::move(agg.diagnostics.slous);
      d.cluster_labels = std::move(agg.diagnostics.cluster_labels);
    } else {
      for (const ParamVector& u : out.updates) d.slous.push_back(xmam_examine(u, fed.spec, fed.probe));
    }
    d.krum_scores = std::move(agg.diagnostics.krum_scores);
    d.all_noise_fallback = agg.diagnostics.all_noise_fallback;
    d.hierarchy_passes = agg.diagnostics.hierarchy_passes;
    for (const ParamVector& u : out.updates) d.update_norms.push_back(l2_norm(u.view()));
    d.update_pca = pca2(out.updates);
    d.slou_pca = pca2(d.slous);
    d.lambda_search = search;
    rep.diagnostics = std::move(d);
  } else if (search) {
    RoundDiagnostics d;
    d.lambda_search = search;
    rep.diagnostics = std::move(d);
  }
  rep.round_seconds = std::chrono::duration<Scalar>(Clock::now() - round_start).count();
  return out;
}

Scalar attack_success_rate(const ParamVector& model, const NetworkSpec& spec,
                           const BackdoorTask& task) {
  if (task.test_set.empty()) throw ArgumentError("backdoor test set is empty");
  std::size_t hits = 0;
  for (const Tensor& x : task.test_set.inputs) {
    if (predict(model, spec, x) == static_cast<std::size_t>(task.target_label)) ++hits;
  }
  return static_cast<Scalar>(hits) / static_cast<Scalar>(task.test_set.size());
}

Scalar testing_error_rate(const ParamVector& model, const NetworkSpec& spec, const Dataset& test) {
  if (test.empty()) throw ArgumentError("test set is empty");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (predict(model, spec, test.inputs[i]) != static_cast<std::size_t>(test.labels[i])) ++wrong;
  }
  return static_cast<Scalar>(wrong) / static_cast<Scalar>(test.size());
}

ParamVector warm_up(const Federation& fed, const ExperimentConfig& config, ParamVector params) {
  std::vector<std::size_t> ids(fed.shards.size());
  const Scalar lr = config.warmup_lr > 0.0 ? config.warmup_lr : config.lr;
  const LocalTraining hyper{lr, config.momentum, config.weight_decay, config.local_iterations,
                            config.batch_size};
  for (std::size_t w = 0; w < config.warmup_rounds; ++w) {
    std::iota(ids.begin(), ids.end(), 0);
    std::mt19937_64 rng(derive_seed(config.seed, {kWarmup, w}));
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<std::size_t> picked(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(config.tau));
    std::sort(picked.begin(), picked.end());
    std::vector<ParamVector> updates;
    for (std::size_t id : picked) {
      const ClientShard& shard = fed.shards[id];
      if (shard.clean.empty()) continue;
      const Dataset* parts[] = {&shard.clean};
      updates.push_back(train_datasets(params, fed.spec, parts, hyper,
                                       derive_seed(config.seed, {kWarmup, w, id}))
                            .update);
    }
    if (!updates.empty()) axpy(1.0, fedavg(updates).view(), params.view());
  }
  return params;
}

ParamVector initial_model(const Federation& fed, const ExperimentConfig& config) {
  return warm_up(fed, config, init_params(fed.spec, derive_seed(config.seed, {kInit})));
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                const std::vector<RoundSink>& sinks, const ParamVector* start) {
  const Federation fed = build_federation(config, data);
  ExperimentResult result;
  result.malicious_ids = fed.malicious_ids;
  TrainingState state{start ? *start : initial_model(fed, config), 0};
  if (state.global.size() != fed.spec.param_count()) {
    throw DimensionError("starting model does not match the network");
  }
  for (std::size_t t = 0; t < config.global_iterations; ++t) {
    RoundOutput out = run_round(fed, config, state);
    for (const RoundSink& sink : sinks) sink(out.report);
    result.reports.push_back(std::move(out.report));
    state = std::move(out.state);
  }
  result.final_model = std::move(state.global);
  return result;
}

}  // namespace xmam

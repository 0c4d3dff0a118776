#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xmam/aggregation.hpp"
#include "xmam/attacks.hpp"
#include "xmam/dataset.hpp"
#include "xmam/network.hpp"
#include "xmam/vec.hpp"

namespace xmam {

enum class DatasetKind { mnist, synthetic };
enum class AttackKind { none, trigger, subpopulation };
enum class AttackMode { blackbox, pgd, smp };
enum class AdaptiveKind { none, krum_attack, xmam_attack };

std::string_view to_string(DatasetKind kind);
std::string_view to_string(AttackKind kind);
std::string_view to_string(AttackMode mode);
std::string_view to_string(AdaptiveKind kind);
DatasetKind parse_dataset_kind(std::string_view name);
AttackKind parse_attack_kind(std::string_view name);
AttackMode parse_attack_mode(std::string_view name);
AdaptiveKind parse_adaptive_kind(std::string_view name);

struct DataConfig {
  DatasetKind kind = DatasetKind::mnist;
  std::string mnist_dir = "data/mnist";
  /// Keep only the first n examples of a split; 0 keeps everything.
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  SyntheticOptions synthetic;
  /// Examples per class in the synthetic test split.
  std::size_t synthetic_test_per_class = 50;
  Scalar dirichlet_alpha = 0.5;
};

struct ModelConfig {
  /// lenet_lite or mlp.
  std::string preset = "lenet_lite";
  std::size_t hidden = 64;
};

struct AttackConfig {
  AttackKind kind = AttackKind::trigger;
  AttackMode mode = AttackMode::blackbox;
  Scalar epsilon = 5e-2;
  Scalar rho1 = 10.0;
  Scalar rho2 = 1e-4;
  /// Multiply malicious updates by this factor (model replacement).
  std::optional<Scalar> replace_scale;
  /// Share of each malicious client's local data that is poisoned.
  Scalar poison_fraction = 0.3;
  TriggerSpec trigger;
  int source_class = 1;
  Scalar tail_fraction = 0.1;
  Scalar subpopulation_test_fraction = 0.5;
  AdaptiveKind adaptive = AdaptiveKind::none;
  Scalar lambda_init = 1.0;
  Scalar lambda_floor = 1e-10;

  void validate() const;
};

struct ExperimentConfig {
  std::size_t num_clients = 200;
  std::size_t tau = 30;
  Scalar malicious_fraction = 0.2;
  std::size_t global_iterations = 100;
  std::size_t local_iterations = 1;
  std::size_t batch_size = 32;
  Scalar lr = 0.001;
  Scalar lr_decay = 0.998;
  Scalar momentum = 0.9;
  Scalar weight_decay = 1e-4;
  std::uint64_t seed = 0;
  /// Attack-free FedAvg rounds (all sampled clients train on clean data)
  /// run before round 0 to start from a trained model.
  std::size_t warmup_rounds = 0;
  /// Local learning rate during warm-up; 0 means lr.
  Scalar warmup_lr = 0.0;
  DataConfig data;
  ModelConfig model;
  AttackConfig attack;
  AggregatorConfig aggregator;
  /// Store SLOUs, labels and PCA coordinates every k-th round (0 = never).
  std::size_t diagnostics_every = 1;

  /// Throws ConfigError naming the violated constraint.
  void validate() const;
  /// round(N * fraction): clients that are malicious for the whole run.
  std::size_t malicious_clients() const;
  /// round(tau * fraction): malicious clients sampled in every round.
  std::size_t malicious_per_round() const;
  /// lr * lr_decay^t
  Scalar lr_at(std::size_t t) const;
};

struct ExperimentData {
  Dataset train;
  Dataset test;
};

/// Loads MNIST from config.mnist_dir or generates the synthetic splits.
ExperimentData load_experiment_data(const DataConfig& config);

NetworkSpec make_network(const ModelConfig& model, const Dataset& sample);

struct Federation {
  NetworkSpec spec;
  std::vector<ClientShard> shards;
  std::vector<std::size_t> malicious_ids;
  BackdoorTask backdoor;
  Dataset test;
  Tensor probe;
};

/// Partitions the training data, picks the malicious clients and poisons
/// their shards. The backdoor task is built even without an attack so that
/// the attack success rate is always defined.
Federation build_federation(const ExperimentConfig& config, const ExperimentData& data);

struct TrainingState {
  ParamVector global;
  std::size_t round = 0;
};


struct RoundDiagnostics {
  std::vector<std::vector<Scalar>> slous;
  std::vector<int> cluster_labels;
  std::vector<Scalar> krum_scores;
  std::vector<Scalar> update_norms;
  std::vector<std::vector<Scalar>> update_pca;
  std::vector<std::vector<Scalar>> slou_pca;
  bool all_noise_fallback = false;
  std::size_t hierarchy_passes = 0;
  std::optional<LambdaSearch> lambda_search;
};

struct RoundReport {
  std::size_t iteration = 0;
  Scalar test_error = 0.0;
  Scalar attack_success_rate = 0.0;
  /// Sampled client ids, sorted.
  std::vector<std::size_t> sampled_ids;
  std::vector<bool> sampled_malicious;
  std::vector<std::size_t> preserved_ids;
  Scalar screening_seconds = 0.0;
  Scalar round_seconds = 0.0;
  std::optional<RoundDiagnostics> diagnostics;

  std::size_t preserved_malicious() const;
};

struct RoundOutput {
  TrainingState state;
  RoundReport report;
  /// Client updates in sampled_ids order.
  std::vector<ParamVector> updates;
};

/// Samples tau clients (stratified to the exact malicious count), trains
/// them, aggregates and applies w <- w + eta_g * u.
RoundOutput run_round(const Federation& federation, const ExperimentConfig& config,
                      const TrainingState& state);

/// Fraction of the task's test inputs classified as the target label.
Scalar attack_success_rate(const ParamVector& model, const NetworkSpec& spec,
                           const BackdoorTask& task);
/// 1 - accuracy.
Scalar testing_error_rate(const ParamVector& model, const NetworkSpec& spec, const Dataset& test);

using RoundSink = std::function<void(const RoundReport&)>;

struct ExperimentResult {
  std::vector<RoundReport> reports;
  ParamVector final_model;
  std::vector<std::size_t> malicious_ids;
};

/// Runs config.warmup_rounds of attack-free FedAvg from params.
ParamVector warm_up(const Federation& federation, const ExperimentConfig& config, ParamVector params);

/// Seeded initialization followed by warm_up.
ParamVector initial_model(const Federation& federation, const ExperimentConfig& config);

/// start, when given, replaces initial_model (e.g. a warm-up shared across runs).
ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                const std::vector<RoundSink>& sinks = {},
                                const ParamVector* start = nullptr);

/// Krum attack acceptance: Krum picks one of the malicious positions.
bool krum_accepts(std::span<const ParamVector> updates, std::span<const std::size_t> malicious,
                  std::size_t f);
/// XMAM attack acceptance: every malicious position lies in the major cluster.
bool xmam_accepts(std::span<const ParamVector> updates, std::span<const std::size_t> malicious,
                  const NetworkSpec& spec, const Tensor& probe, const XmamOptions& options,
                  const ParamVector* global = nullptr);

}  // namespace xmam

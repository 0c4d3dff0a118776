#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xmam/clustering.hpp"
#include "xmam/network.hpp"
#include "xmam/tensor.hpp"
#include "xmam/vec.hpp"

namespace xmam {

enum class AggregatorKind { fedavg, ndc, rsa, rfa, krum, multi_krum, xmam };

std::string_view to_string(AggregatorKind kind);
/// Accepts the names printed by to_string ("multi_krum" also as "multi-krum").
AggregatorKind parse_aggregator_kind(std::string_view name);
std::vector<AggregatorKind> all_aggregator_kinds();

struct RfaOptions {
  Scalar v = 0.1;
  Scalar mu = 1e-5;
  std::size_t max_rounds = 500;
};

enum class ProbeKind { ones, random };

struct XmamOptions {
  HdbscanOptions hdbscan;
  /// Sum the preserved updates instead of averaging them.
  bool sum_preserved = false;
  /// Probe w_g + u instead of u.
  bool probe_full_model = false;
  ProbeKind probe = ProbeKind::ones;
  std::uint64_t probe_seed = 0;
};

struct AggregatorConfig {
  AggregatorKind kind = AggregatorKind::xmam;
  Scalar delta = 2.0;
  Scalar rsa_beta0 = 5e-5;
  Scalar rsa_decay = 0.998;
  RfaOptions rfa;
  /// Assumed Byzantine count for Krum and Multi-Krum. Unset means "the
  /// number of malicious clients sampled per round".
  std::optional<std::size_t> f;
  Scalar eta_g = 1.0;
  XmamOptions xmam;

  /// Checks option ranges; tau > 0 also checks f against tau.
  void validate(std::size_t tau = 0) const;
};

struct AggregationDiagnostics {
  std::vector<Scalar> krum_scores;
  std::vector<std::vector<Scalar>> slous;
  std::vector<int> cluster_labels;
  std::size_t hierarchy_passes = 0;
  /// Clustering found no cluster and every update was kept.
  bool all_noise_fallback = false;
  std::size_t rfa_rounds = 0;
};

struct AggregationResult {
  ParamVector global_update;
  /// Sorted indices into the update list.
  std::vector<std::size_t> preserved_ids;
  Scalar screening_seconds = 0.0;
  AggregationDiagnostics diagnostics;
};

/// Weighted mean; empty weights mean uniform.
ParamVector fedavg(std::span<const ParamVector> updates, std::span<const Scalar> weights = {});

/// u / max(1, ||u|| / delta)
ParamVector clip_update(const ParamVector& update, Scalar delta);
ParamVector ndc(std::span<const ParamVector> updates, Scalar delta);

/// beta0 * decay^t
Scalar rsa_beta(Scalar beta0, Scalar decay, std::size_t t);
/// beta * sum_i sign(u_i), Sign(0) = 0.
ParamVector rsa(std::span<const ParamVector> updates, Scalar beta);

struct RfaResult {
  ParamVector z;
  std::size_t rounds = 0;
  bool converged = false;
};

/// Smoothed Weiszfeld iterations from the weighted mean.
RfaResult rfa(std::span<const ParamVector> updates, std::span<const Scalar> weights,
              const RfaOptions& options = {});
/// sum_i p_i * max(v, ||z - u_i||)
Scalar rfa_objective(const ParamVector& z, std::span<const ParamVector> updates,
                     std::span<const Scalar> weights, Scalar v);

struct KrumResult {
  std::size_t selected = 0;
  std::vector<Scalar> scores;
};

/// Score of each update: sum of squared distances to its tau - f - 2 nearest
/// other updates. Ties go to the lowest index.
KrumResult krum(std::span<const ParamVector> updates, std::size_t f);
/// Krum restricted to the alive indices of a squared-distance matrix.
/// selected is an original index; scores follow the order of alive.
KrumResult krum_select(const DenseMatrix& squared, std::span<const std::size_t> alive,
                       std::size_t neighbors);
DenseMatrix squared_distance_matrix(std::span<const ParamVector> updates);

struct MultiKrumResult {
  ParamVector update;
  /// Indices in selection order.
  std::vector<std::size_t> selected;
};

/// Repeated Krum on the remaining updates until tau - f - 2 are chosen; the
/// neighbour count shrinks with the remaining set (never below one).
MultiKrumResult multi_krum(std::span<const ParamVector> updates, std::size_t f);

/// All-ones or seeded uniform [0,1) input shaped like the network input.
Tensor make_probe(const NetworkSpec& spec, ProbeKind kind = ProbeKind::ones,
                  std::uint64_t seed = 0);

/// Softmax output with the update itself loaded as the network parameters.
std::vector<Scalar> xmam_examine(const ParamVector& update, const NetworkSpec& spec,
                                 const Tensor& probe);

/// Examines every update, clusters the outputs and averages the updates of
/// the largest cluster, scaled by eta_g. global is required only when
/// options.probe_full_model is set.
AggregationResult xmam_aggregate(std::span<const ParamVector> updates, const NetworkSpec& spec,
                                 const Tensor& probe, const XmamOptions& options = {},
                                 Scalar eta_g = 1.0, const ParamVector* global = nullptr);

struct AggregationContext {
  const NetworkSpec* spec = nullptr;
  const Tensor* probe = nullptr;
  const ParamVector* global = nullptr;
  std::size_t round = 0;
  /// Byzantine count used when config.f is unset.
  std::size_t default_f = 0;
};

/// Runs the configured rule. The returned global_update is NOT scaled by
/// eta_g; screening_seconds covers the filtering phase only (zero for FedAvg).
AggregationResult aggregate(std::span<const ParamVector> updates, const AggregatorConfig& config,
                            const AggregationContext& context);

}  // namespace xmam

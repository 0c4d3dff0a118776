#include "xmam/aggregation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "xmam/errors.hpp"
#include "xmam/nn.hpp"

namespace xmam {
namespace {

using Clock = std::chrono::steady_clock;

Scalar seconds_since(Clock::time_point start) {
  return std::chrono::duration<Scalar>(Clock::now() - start).count();
}

void require_updates(std::span<const ParamVector> updates, const char* who) {
  if (updates.empty()) throw ArgumentError(std::string(who) + ": no updates to aggregate");
  for (const ParamVector& u : updates) require_same_size(u.size(), updates[0].size(), who);
}

std::vector<Scalar> resolve_weights(std::span<const Scalar> weights, std::size_t n,
                                    const char* who) {
  if (weights.empty()) return std::vector<Scalar>(n, 1.0);
  if (weights.size() != n) {
    throw DimensionError(std::string(who) + ": expected " + std::to_string(n) + " weights, got " +
                         std::to_string(weights.size()));
  }
  for (Scalar w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw ArgumentError(std::string(who) + ": weights must be positive and finite");
    }
  }
  return {weights.begin(), weights.end()};
}

ParamVector mean_of(std::span<const ParamVector> updates, std::span<const std::size_t> ids) {
  ParamVector out(updates[0].size());
  for (std::size_t i : ids) axpy(1.0, updates[i].view(), out.view());
  const Scalar inv = 1.0 / static_cast<Scalar>(ids.size());
  for (Scalar& x : out.values) x *= inv;
  return out;
}

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

std::string_view to_string(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::fedavg: return "fedavg";
    case AggregatorKind::ndc: return "ndc";
    case AggregatorKind::rsa: return "rsa";
    case AggregatorKind::rfa: return "rfa";
    case AggregatorKind::krum: return "krum";
    case AggregatorKind::multi_krum: return "multi_krum";
    case AggregatorKind::xmam: return "xmam";
  }
  return "unknown";
}

AggregatorKind parse_aggregator_kind(std::string_view name) {
  for (AggregatorKind k : all_aggregator_kinds()) {
    if (name == to_string(k)) return k;
  }
  if (name == "multi-krum") return AggregatorKind::multi_krum;
  throw ArgumentError("unknown aggregator '" + std::string(name) +
                      "' (expected fedavg, ndc, rsa, rfa, krum, multi_krum or xmam)");
}

std::vector<AggregatorKind> all_aggregator_kinds() {
  return {AggregatorKind::fedavg, AggregatorKind::ndc,        AggregatorKind::rsa,
          AggregatorKind::rfa,    AggregatorKind::krum,       AggregatorKind::multi_krum,
          AggregatorKind::xmam};
}

void AggregatorConfig::validate(std::size_t tau) const {
  if (!(delta > 0.0)) throw ArgumentError("aggregator.delta must be > 0");
  if (!(rsa_beta0 > 0.0)) throw ArgumentError("aggregator.rsa_beta0 must be > 0");
  if (!(rsa_decay > 0.0)) throw ArgumentError("aggregator.rsa_decay must be > 0");
  if (!(rfa.v > 0.0)) throw ArgumentError("aggregator.rfa_v must be > 0");
  if (!(rfa.mu > 0.0)) throw ArgumentError("aggregator.rfa_mu must be > 0");
  if (rfa.max_rounds < 1) throw ArgumentError("aggregator.rfa_max_rounds must be >= 1");
  if (!std::isfinite(eta_g) || eta_g < 0.0) throw ArgumentError("aggregator.eta_g must be >= 0");
  if (xmam.hdbscan.min_cluster_size < 2) {
    throw ArgumentError("aggregator.min_cluster_size must be >= 2");
  }
  if (xmam.hdbscan.min_samples < 1) throw ArgumentError("aggregator.min_samples must be >= 1");
  if (!(xmam.hdbscan.single_cluster_outlier_factor > 0.0)) {
    throw ArgumentError("aggregator.single_cluster_outlier_factor must be > 0");
  }
  const bool krum_family = kind == AggregatorKind::krum || kind == AggregatorKind::multi_krum;
  if (krum_family && tau > 0 && f && *f + 3 > tau) {
    throw ArgumentError("aggregator.f must satisfy 0 <= f <= tau - 3 (f = " + std::to_string(*f) +
                        ", tau = " + std::to_string(tau) + ")");
  }
  if (kind == AggregatorKind::krum || kind == AggregatorKind::multi_krum) {
    if (tau > 0 && tau < 3) throw ArgumentError("Krum needs tau >= 3");
  }
  if (kind == AggregatorKind::xmam && tau == 1) throw ArgumentError("XMAM needs tau >= 2");
}

ParamVector fedavg(std::span<const ParamVector> updates, std::span<const Scalar> weights) {
  require_updates(updates, "fedavg");
  const std::vector<Scalar> w = resolve_weights(weights, updates.size(), "fedavg");
  const Scalar total = std::accumulate(w.begin(), w.end(), 0.0);
  ParamVector out(updates[0].size());
  for (std::size_t i = 0; i < updates.size(); ++i) axpy(w[i] / total, updates[i].view(), out.view());
  return out;
}

ParamVector clip_update(const ParamVector& update, Scalar delta) {
  if (!(delta > 0.0)) throw ArgumentError("clip threshold must be > 0");
  const Scalar factor = std::max<Scalar>(1.0, l2_norm(update.view()) / delta);
  if (factor == 1.0) return update;
  return scaled(update, 1.0 / factor);
}

ParamVector ndc(std::span<const ParamVector> updates, Scalar delta) {
  require_updates(updates, "ndc");
  std::vector<ParamVector> clipped;
  clipped.reserve(updates.size());
  for (const ParamVector& u : updates) clipped.push_back(clip_update(u, delta));
  return fedavg(clipped);
}

Scalar rsa_beta(Scalar beta0, Scalar decay, std::size_t t) {
  return beta0 * std::pow(decay, static_cast<Scalar>(t));
}

ParamVector rsa(std::span<const ParamVector> updates, Scalar beta) {
  require_updates(updates, "rsa");
  if (!(beta > 0.0)) throw ArgumentError("rsa step must be > 0");
  ParamVector out(updates[0].size());
  for (const ParamVector& u : updates) {
    for (std::size_t j = 0; j < u.size(); ++j) {
      out[j] += static_cast<Scalar>((u[j] > 0.0) - (u[j] < 0.0));
    }
  }
  for (Scalar& x : out.values) x *= beta;
  return out;
}

Scalar rfa_objective(const ParamVector& z, std::span<const ParamVector> updates,
                     std::span<const Scalar> weights, Scalar v) {
  const std::vector<Scalar> w = resolve_weights(weights, updates.size(), "rfa");
  Scalar total = 0.0;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    total += w[i] * std::max(v, distance(z.view(), updates[i].view()));
  }
  return total;
}

RfaResult rfa(std::span<const ParamVector> updates, std::span<const Scalar> weights,
              const RfaOptions& options) {
  require_updates(updates, "rfa");
  if (!(options.v > 0.0) || !(options.mu > 0.0) || options.max_rounds < 1) {
    throw ArgumentError("rfa needs v > 0, mu > 0 and max_rounds >= 1");
  }
  const std::vector<Scalar> p = resolve_weights(weights, updates.size(), "rfa");
  RfaResult r;
  r.z = fedavg(updates, p);
  std::vector<Scalar> q(updates.size());
  for (std::size_t round = 0; round < options.max_rounds; ++round) {
    Scalar qsum = 0.0;
    for (std::size_t i = 0; i < updates.size(); ++i) {
      q[i] = p[i] / std::max(options.v, distance(r.z.view(), updates[i].view()));
      qsum += q[i];
    }
    ParamVector next(r.z.size());
    for (std::size_t i = 0; i < updates.size(); ++i) axpy(q[i] / qsum, updates[i].view(), next.view());
    const Scalar step = distance(next.view(), r.z.view());
    r.z = std::move(next);
    r.rounds = round + 1;
    if (step < options.mu) {
      r.converged = true;
      break;
    }
  }
  return r;
}

DenseMatrix squared_distance_matrix(std::span<const ParamVector> updates) {
  DenseMatrix d(updates.size());
  for (std::size_t i = 0; i < updates.size(); ++i) {
    for (std::size_t j = i + 1; j < updates.size(); ++j) {
      d(i, j) = d(j, i) = squared_distance(updates[i].view(), updates[j].view());
    }
  }
  return d;
}

KrumResult krum_select(const DenseMatrix& squared, std::span<const std::size_t> alive,
                       std::size_t neighbors) {
  if (alive.empty()) throw ArgumentError("krum: no candidates");
  if (neighbors < 1 || neighbors + 1 > alive.size()) {
    throw ArgumentError("krum: neighbour count " + std::to_string(neighbors) +
                        " invalid for " + std::to_string(alive.size()) + " updates");
  }
  KrumResult r;
  r.scores.resize(alive.size());
  std::vector<Scalar> row;
  std::size_t best = 0;
  for (std::size_t a = 0; a < alive.size(); ++a) {
    row.clear();
    for (std::size_t b = 0; b < alive.size(); ++b) {
      if (b != a) row.push_back(squared(alive[a], alive[b]));
    }
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(neighbors), row.end());
    r.scores[a] = std::accumulate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(neighbors), 0.0);
    if (r.scores[a] < r.scores[best]) best = a;
  }
  r.selected = alive[best];
  return r;
}

KrumResult krum(std::span<const ParamVector> updates, std::size_t f) {
  require_updates(updates, "krum");
  if (updates.size() < f + 3) {
    throw ArgumentError("krum needs tau >= f + 3 (tau = " + std::to_string(updates.size()) +
                        ", f = " + std::to_string(f) + ")");
  }
  const std::vector<std::size_t> alive = iota_ids(updates.size());
  return krum_select(squared_distance_matrix(updates), alive, updates.size() - f - 2);
}

MultiKrumResult multi_krum(std::span<const ParamVector> updates, std::size_t f) {
  require_updates(updates, "multi_krum");
  const std::size_t tau = updates.size();
  if (tau < f + 3) {
    throw ArgumentError("multi_krum needs tau >= f + 3 (tau = " + std::to_string(tau) +
                        ", f = " + std::to_string(f) + ")");
  }
  const DenseMatrix sq = squared_distance_matrix(updates);
  std::vector<std::size_t> alive = iota_ids(tau);
  MultiKrumResult r;
  const std::size_t wanted = tau - f - 2;
  while (r.selected.size() < wanted) {
    std::size_t neighbors = alive.size() > f + 2 ? alive.size() - f - 2 : 1;
    neighbors = std::min(neighbors, alive.size() - 1);
    const KrumResult k = krum_select(sq, alive, neighbors);
    r.selected.push_back(k.selected);
    alive.erase(std::find(alive.begin(), alive.end(), k.selected));
  }
  r.update = mean_of(updates, r.selected);
  return r;
}

Tensor make_probe(const NetworkSpec& spec, ProbeKind kind, std::uint64_t seed) {
  const Shape3& s = spec.input_shape();
  Tensor probe({s.channels, s.height, s.width}, 1.0);
  if (kind == ProbeKind::random) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Scalar> unit(0.0, 1.0);
    for (Scalar& x : probe.values) x = unit(rng);
  }
  return probe;
}

std::vector<Scalar> xmam_examine(const ParamVector& update, const NetworkSpec& spec,
                                 const Tensor& probe) {
  if (update.size() != spec.param_count()) {
    throw DimensionError("xmam: update has " + std::to_string(update.size()) +
                         " entries, network '" + spec.name() + "' needs " +
                         std::to_string(spec.param_count()));
  }
  return forward(update, spec, probe);
}

namespace {

AggregationResult xmam_screen(std::span<const ParamVector> updates, const NetworkSpec& spec,
                              const Tensor& probe, const XmamOptions& options,
                              const ParamVector* global) {
  if (updates.size() < 2) throw ArgumentError("xmam needs at least two updates");
  if (options.probe_full_model && global == nullptr) {
    throw ArgumentError("xmam: probe_full_model needs the global model");
  }
  AggregationResult r;
  std::vector<Point> slous;
  slous.reserve(updates.size());
  for (const ParamVector& u : updates) {
    slous.push_back(options.probe_full_model ? xmam_examine(add(*global, u), spec, probe)
                                             : xmam_examine(u, spec, probe));
  }
  const ClusterResult clusters = hdbscan(slous, options.hdbscan);
  r.diagnostics.cluster_labels = clusters.labels;
  r.diagnostics.hierarchy_passes = clusters.hierarchy_passes;
  if (clusters.all_noise() || clusters.clusters[0].empty()) {
    r.diagnostics.all_noise_fallback = true;
    r.preserved_ids = iota_ids(updates.size());
  } else {
    r.preserved_ids = clusters.clusters[0];
    std::sort(r.preserved_ids.begin(), r.preserved_ids.end());
  }
  r.diagnostics.slous = std::move(slous);
  return r;
}

void xmam_combine(AggregationResult& r, std::span<const ParamVector> updates,
                  const XmamOptions& options, Scalar eta_g) {
  r.global_update = mean_of(updates, r.preserved_ids);
  Scalar factor = eta_g;
  if (options.sum_preserved) factor *= static_cast<Scalar>(r.preserved_ids.size());
  if (factor != 1.0) r.global_update = scaled(r.global_update, factor);
}

}  // namespace

AggregationResult xmam_aggregate(std::span<const ParamVector> updates, const NetworkSpec& spec,
                                 const Tensor& probe, const XmamOptions& options, Scalar eta_g,
                                 const ParamVector* global) {
  require_updates(updates, "xmam");
  AggregationResult r = xmam_screen(updates, spec, probe, options, global);
  xmam_combine(r, updates, options, eta_g);
  return r;
}

AggregationResult aggregate(std::span<const ParamVector> updates, const AggregatorConfig& config,
                            const AggregationContext& context) {
  require_updates(updates, std::string(to_string(config.kind)).c_str());
  const std::size_t tau = updates.size();
  AggregationResult r;
  const auto start = Clock::now();
  switch (config.kind) {
    case AggregatorKind::fedavg:
      r.global_update = fedavg(updates);
      r.preserved_ids = iota_ids(tau);
      return r;
    case AggregatorKind::ndc: {
      std::vector<ParamVector> clipped;
      clipped.reserve(tau);
      for (const ParamVector& u : updates) clipped.push_back(clip_update(u, config.delta));
      r.screening_seconds = seconds_since(start);
      r.global_update = fedavg(clipped);
      r.preserved_ids = iota_ids(tau);
      return r;
    }
    case AggregatorKind::rsa:
      r.global_update =
          rsa(updates, rsa_beta(config.rsa_beta0, config.rsa_decay, context.round));
      r.screening_seconds = seconds_since(start);
      r.preserved_ids = iota_ids(tau);
      return r;
    case AggregatorKind::rfa: {
      RfaResult z = rfa(updates, {}, config.rfa);
      r.screening_seconds = seconds_since(start);
      r.global_update = std::move(z.z);
      r.diagnostics.rfa_rounds = z.rounds;
      r.preserved_ids = iota_ids(tau);
      return r;
    }
    case AggregatorKind::krum: {
      const std::size_t f = config.f.value_or(context.default_f);
      KrumResult k = krum(updates, f);
      r.screening_seconds = seconds_since(start);
      r.global_update = updates[k.selected];
      r.preserved_ids = {k.selected};
      r.diagnostics.krum_scores = std::move(k.scores);
      return r;
    }
    case AggregatorKind::multi_krum: {
      const std::size_t f = config.f.value_or(context.default_f);
      MultiKrumResult m = multi_krum(updates, f);
      r.screening_seconds = seconds_since(start);
      r.global_update = std::move(m.update);
      r.preserved_ids = std::move(m.selected);
      std::sort(r.preserved_ids.begin(), r.preserved_ids.end());
      return r;
    }
    case AggregatorKind::xmam: {
      if (context.spec == nullptr || context.probe == nullptr) {
        throw ArgumentError("xmam needs a network spec and a probe");
      }
      r = xmam_screen(updates, *context.spec, *context.probe, config.xmam, context.global);
      r.screening_seconds = seconds_since(start);
      xmam_combine(r, updates, config.xmam, 1.0);
      return r;
    }
  }
  throw ArgumentError("unhandled aggregator kind");
}

}  // namespace xmam

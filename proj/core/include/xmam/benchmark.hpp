#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xmam/aggregation.hpp"

namespace xmam {

struct ScreeningOptions {
  std::vector<AggregatorKind> aggregators = all_aggregator_kinds();
  std::size_t tau = 30;
  /// Requested parameter count; the probed network rounds it up.
  std::size_t zeta = 1000000;
  std::size_t classes = 10;
  std::size_t repeats = 3;
  /// Byzantine count for Krum and Multi-Krum.
  std::size_t f = 6;
  std::uint64_t seed = 0;
};

struct ScreeningRow {
  AggregatorKind kind = AggregatorKind::fedavg;
  Scalar mean_seconds = 0.0;
  Scalar stddev_seconds = 0.0;
  std::vector<Scalar> samples;
};

struct ScreeningTable {
  std::size_t tau = 0;
  /// Actual parameter count of the probed network.
  std::size_t zeta = 0;
  std::size_t classes = 0;
  std::vector<ScreeningRow> rows;

  const ScreeningRow& row(AggregatorKind kind) const;
};

/// Network used to probe updates of roughly zeta parameters: a 784-input MLP
/// whose hidden width is the smallest reaching zeta.
NetworkSpec screening_network(std::size_t zeta, std::size_t classes);

/// Times the screening phase of each aggregator on tau random updates.
ScreeningTable screening_benchmark(const ScreeningOptions& options);

}  // namespace xmam

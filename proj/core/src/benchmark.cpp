#include "xmam/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "xmam/errors.hpp"

namespace xmam {

const ScreeningRow& ScreeningTable::row(AggregatorKind kind) const {
  for (const ScreeningRow& r : rows) {
    if (r.kind == kind) return r;
  }
  throw ArgumentError("no benchmark row for " + std::string(to_string(kind)));
}

NetworkSpec screening_network(std::size_t zeta, std::size_t classes) {
  if (classes < 2) throw ArgumentError("screening network needs at least 2 classes");
  constexpr std::size_t kInput = 784;
  // zeta = hidden * (kInput + 1) + classes * (hidden + 1)
  std::size_t hidden = 1;
  if (zeta > classes) {
    hidden = (zeta - classes + kInput + classes) / (kInput + 1 + classes);
    hidden = std::max<std::size_t>(hidden, 1);
  }
  return mlp(Shape3{1, 28, 28}, hidden, classes);
}

ScreeningTable screening_benchmark(const ScreeningOptions& options) {
  if (options.repeats < 3) throw ArgumentError("screening benchmark needs repeats >= 3");
  if (options.tau < 3) throw ArgumentError("screening benchmark needs tau >= 3");
  const NetworkSpec spec = screening_network(options.zeta, options.classes);
  ScreeningTable table{options.tau, spec.param_count(), options.classes, {}};

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<Scalar> normal(0.0, 1e-3);
  std::vector<ParamVector> updates(options.tau, ParamVector(spec.param_count()));
  for (ParamVector& u : updates) {
    for (Scalar& x : u.values) x = normal(rng);
  }
  const Tensor probe = make_probe(spec);
  const ParamVector global(spec.param_count());

  for (AggregatorKind kind : options.aggregators) {
    AggregatorConfig config;
    config.kind = kind;
    config.f = std::min(options.f, options.tau - 3);
    ScreeningRow row{kind, 0.0, 0.0, {}};
    for (std::size_t r = 0; r < options.repeats; ++r) {
      const AggregationResult res = aggregate(updates, config, {&spec, &probe, &global, 0, 0});
      row.samples.push_back(res.screening_seconds);
    }
    Scalar sum = 0.0;
    for (Scalar s : row.samples) sum += s;
    row.mean_seconds = sum / static_cast<Scalar>(row.samples.size());
    Scalar var = 0.0;
    for (Scalar s : row.samples) var += (s - row.mean_seconds) * (s - row.mean_seconds);
    row.stddev_seconds = std::sqrt(var / static_cast<Scalar>(row.samples.size() - 1));
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace xmam

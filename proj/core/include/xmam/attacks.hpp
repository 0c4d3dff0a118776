#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "xmam/dataset.hpp"
#include "xmam/network.hpp"
#include "xmam/nn.hpp"

namespace xmam {

struct LocalTraining {
  Scalar lr = 0.001;
  Scalar momentum = 0.9;
  Scalar weight_decay = 1e-4;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
};

struct LocalTrainingResult {
  ParamVector update;               // w_after - w_global
  std::vector<Scalar> epoch_losses;  // mean minibatch loss per epoch
};

/// Minibatch momentum SGD over the concatenation of parts, starting from
/// global. Each epoch reshuffles with a stream seeded by seed.
LocalTrainingResult train_datasets(const ParamVector& global, const NetworkSpec& spec,
                                   std::span<const Dataset* const> parts,
                                   const LocalTraining& hyper, std::uint64_t seed);

/// Benign shards train on clean data only; malicious shards train on
/// clean + poisoned (black-box mode).
ParamVector train_local(const ParamVector& global, const NetworkSpec& spec,
                        const ClientShard& shard, const LocalTraining& hyper, std::uint64_t seed);

/// Rescales a nonzero update to L2 norm epsilon. A zero update is returned as is.
ParamVector pgd_project(const ParamVector& update, Scalar epsilon);

struct SmpOptions {
  Scalar rho1 = 10.0;
  Scalar rho2 = 1e-4;
};

/// Minimizes rho1 * L(poisoned) + L(clean) + rho2 * ||w - w_g||_2 by SGD and
/// returns w - w_g. Every clean minibatch is paired with a poisoned one.
LocalTrainingResult smp_train(const ParamVector& global, const NetworkSpec& spec,
                              const ClientShard& shard, const SmpOptions& smp,
                              const LocalTraining& hyper, std::uint64_t seed);

/// tau * update; tau >= 1.
ParamVector model_replacement_scale(const ParamVector& update, Scalar tau);

/// Sign with Sign(0) = 0.
ParamVector sign_vector(const ParamVector& v);

/// u_g - lambda * sign(u_g): the update every colluding client submits.
ParamVector adaptive_craft(const ParamVector& global_update_estimate, Scalar lambda);

struct LambdaSearch {
  Scalar lambda = 1.0;
  bool accepted = false;
  std::size_t probes = 0;
};

/// Probes lambda = init, init/2, init/4, ... until accepts(lambda) is true or
/// lambda <= floor (the floor probe is still evaluated).
LambdaSearch binary_search_lambda(const std::function<bool(Scalar)>& accepts, Scalar init = 1.0,
                                  Scalar floor = 1e-10);

}  // namespace xmam

#include "xmam/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "xmam/rng.hpp"

namespace xmam {
namespace {

struct Example {
  const Tensor* input;
  int label;
};

std::vector<Example> gather(std::span<const Dataset* const> parts) {
  std::vector<Example> all;
  for (const Dataset* d : parts) {
    for (std::size_t i = 0; i < d->size(); ++i) all.push_back({&d->inputs[i], d->labels[i]});
  }
  return all;
}

LossAndGrad batch_loss(const ParamVector& w, const NetworkSpec& spec,
                       const std::vector<Example>& pool, std::span<const std::size_t> idx) {
  std::vector<const Tensor*> xs;
  std::vector<int> ys;
  xs.reserve(idx.size());
  ys.reserve(idx.size());
  for (std::size_t i : idx) {
    xs.push_back(pool[i].input);
    ys.push_back(pool[i].label);
  }
  return loss_and_grad(w, spec, std::span<const Tensor* const>(xs), ys);
}

void check_hyper(const LocalTraining& h) {
  if (h.batch_size == 0) throw ArgumentError("batch size must be positive");
  if (!(h.lr > 0.0)) throw ArgumentError("local learning rate must be positive");
}

}  // namespace

LocalTrainingResult train_datasets(const ParamVector& global, const NetworkSpec& spec,
                                   std::span<const Dataset* const> parts,
                                   const LocalTraining& hyper, std::uint64_t seed) {
  check_hyper(hyper);
  require_same_size(global.size(), spec.param_count(), "train_datasets global model");
  const std::vector<Example> pool = gather(parts);
  if (pool.empty()) throw ArgumentError("cannot train on an empty shard");

  std::mt19937_64 rng(seed);
  ParamVector w = global;
  MomentumState state;
  const SgdOptions sgd{hyper.lr, hyper.momentum, hyper.weight_decay};
  LocalTrainingResult r;
  std::vector<std::size_t> order(pool.size());
  for (std::size_t e = 0; e < hyper.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Scalar loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      LossAndGrad lg = batch_loss(w, spec, pool, std::span(order).subspan(start, end - start));
      loss_sum += lg.loss;
      ++batches;
      w = sgd_step(w, lg.grad, sgd, state);
    }
    r.epoch_losses.push_back(loss_sum / static_cast<Scalar>(batches));
  }
  r.update = subtract(w, global);
  return r;
}

ParamVector train_local(const ParamVector& global, const NetworkSpec& spec,
                        const ClientShard& shard, const LocalTraining& hyper, std::uint64_t seed) {
  if (shard.clean.empty() && shard.poisoned.empty()) {
    throw ArgumentError("client " + std::to_string(shard.client_id) + " has an empty shard");
  }
  std::vector<const Dataset*> parts{&shard.clean};
  if (shard.is_malicious && !shard.poisoned.empty()) parts.push_back(&shard.poisoned);
  return train_datasets(global, spec, parts, hyper, seed).update;
}

ParamVector pgd_project(const ParamVector& update, Scalar epsilon) {
  if (!(epsilon > 0.0)) throw ArgumentError("PGD epsilon must be positive");
  const Scalar n = l2_norm(update.values);
  if (n == 0.0) return update;
  return scaled(update, epsilon / n);
}

LocalTrainingResult smp_train(const ParamVector& global, const NetworkSpec& spec,
                              const ClientShard& shard, const SmpOptions& smp,
                              const LocalTraining& hyper, std::uint64_t seed) {
  check_hyper(hyper);
  if (shard.poisoned.empty()) throw ArgumentError("SMP training needs poisoned data");
  if (shard.clean.empty()) throw ArgumentError("SMP training needs clean data");
  if (smp.rho1 < 0.0 || smp.rho2 < 0.0) throw ArgumentError("SMP weights must be non-negative");

  const Dataset* clean_parts[] = {&shard.clean};
  const Dataset* poison_parts[] = {&shard.poisoned};
  const std::vector<Example> clean = gather(clean_parts);
  const std::vector<Example> poison = gather(poison_parts);

  // Separate streams: with rho1 = rho2 = 0 the clean minibatch sequence is
  // exactly the one train_datasets draws for the clean data alone.
  std::mt19937_64 rng(seed);
  std::mt19937_64 poison_rng(derive_seed(seed, {1}));
  ParamVector w = global;
  MomentumState state;
  const SgdOptions sgd{hyper.lr, hyper.momentum, hyper.weight_decay};
  LocalTrainingResult r;

  std::vector<std::size_t> order(clean.size());
  std::vector<std::size_t> porder(poison.size());
  std::iota(porder.begin(), porder.end(), 0);
  std::shuffle(porder.begin(), porder.end(), poison_rng);
  std::size_t pcursor = 0;

  for (std::size_t e = 0; e < hyper.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Scalar loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      LossAndGrad lg = batch_loss(w, spec, clean, std::span(order).subspan(start, end - start));
      Scalar objective = lg.loss;
      if (smp.rho1 > 0.0) {
        std::vector<std::size_t> pidx;
        for (std::size_t k = 0; k < end - start; ++k) {
          if (pcursor == porder.size()) {
            std::shuffle(porder.begin(), porder.end(), poison_rng);
            pcursor = 0;
          }
          pidx.push_back(porder[pcursor++]);
        }
        const LossAndGrad pg = batch_loss(w, spec, poison, pidx);
        objective += smp.rho1 * pg.loss;
        axpy(smp.rho1, pg.grad.values, lg.grad.values);
      }
      if (smp.rho2 > 0.0) {
        const ParamVector diff = subtract(w, global);
        const Scalar n = l2_norm(diff.values);
        objective += smp.rho2 * n;
        // Subgradient 0 at w == w_g.
        if (n > 0.0) axpy(smp.rho2 / n, diff.values, lg.grad.values);
      }
      loss_sum += objective;
      ++batches;
      w = sgd_step(w, lg.grad, sgd, state);
    }
    r.epoch_losses.push_back(loss_sum / static_cast<Scalar>(batches));
  }
  r.update = subtract(w, global);
  return r;
}

ParamVector model_replacement_scale(const ParamVector& update, Scalar tau) {
  if (!(tau >= 1.0)) throw ArgumentError("model replacement factor must be >= 1");
  return scaled(update, tau);
}

ParamVector sign_vector(const ParamVector& v) {
  ParamVector s(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) s[i] = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
  return s;
}

ParamVector adaptive_craft(const ParamVector& global_update_estimate, Scalar lambda) {
  if (!(lambda > 0.0)) throw ArgumentError("adaptive attack lambda must be positive");
  ParamVector out(global_update_estimate.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Scalar u = global_update_estimate[i];
    const Scalar s = u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
    out[i] = u - lambda * s;
  }
  return out;
}

LambdaSearch binary_search_lambda(const std::function<bool(Scalar)>& accepts, Scalar init,
                                  Scalar floor) {
  if (!(init > 0.0) || !(floor > 0.0)) throw ArgumentError("lambda bounds must be positive");
  LambdaSearch r;
  r.lambda = init;
  while (true) {
    ++r.probes;
    if (accepts(r.lambda)) {
      r.accepted = true;
      return r;
    }
    if (r.lambda <= floor) return r;
    r.lambda /= 2.0;
  }
}

}  // namespace xmam

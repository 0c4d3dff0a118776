#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xmam/network.hpp"
#include "xmam/tensor.hpp"
#include "xmam/vec.hpp"

namespace xmam {

/// Softmax output of the network for a single input.
std::vector<Scalar> forward(const ParamVector& params, const NetworkSpec& spec,
                            const Tensor& input);

/// Pre-softmax activations for a single input.
std::vector<Scalar> forward_logits(const ParamVector& params, const NetworkSpec& spec,
                                   const Tensor& input);

/// Index of the largest probability; ties resolve to the lowest class.
std::size_t predict(const ParamVector& params, const NetworkSpec& spec, const Tensor& input);

struct LossAndGrad {
  Scalar loss = 0.0;
  Gradient grad;
};

/// Mean cross-entropy over the batch and its gradient.
LossAndGrad loss_and_grad(const ParamVector& params, const NetworkSpec& spec,
                          std::span<const Tensor> inputs, std::span<const int> labels);

/// Same as loss_and_grad, batch given as pointers into a larger dataset.
LossAndGrad loss_and_grad(const ParamVector& params, const NetworkSpec& spec,
                          std::span<const Tensor* const> inputs, std::span<const int> labels);

struct SgdOptions {
  Scalar lr = 0.001;
  Scalar momentum = 0.9;
  Scalar weight_decay = 1e-4;
};

/// Caller-owned momentum buffer; empty before the first step.
struct MomentumState {
  std::vector<Scalar> velocity;
};

/// v <- momentum * v + grad + weight_decay * params;  params <- params - lr * v
ParamVector sgd_step(const ParamVector& params, const Gradient& grad, const SgdOptions& options,
                     MomentumState& state);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed);

}  // namespace xmam

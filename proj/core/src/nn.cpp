#include "xmam/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace xmam {
namespace {

// Activations of one example: acts[i] is the input of layer i, acts.back()
// is the softmax output. Max-pool layers remember their argmax positions.
struct Trace {
  std::vector<std::vector<Scalar>> acts;
  std::vector<std::vector<std::size_t>> argmax;
};

void conv_forward(const Conv2d& c, const LayerPlan& p, const Scalar* w, const Scalar* in,
                  Scalar* out) {
  const std::size_t oh = p.out.height, ow = p.out.width;
  const std::size_t ih = p.in.height, iw = p.in.width;
  const std::size_t k = c.kernel, s = c.stride;
  const Scalar* bias = w + p.weight_count;
  for (std::size_t o = 0; o < c.out_channels; ++o) {
    Scalar* dst = out + o * oh * ow;
    std::fill(dst, dst + oh * ow, bias[o]);
    for (std::size_t ci = 0; ci < c.in_channels; ++ci) {
      const Scalar* src = in + ci * ih * iw;
      const Scalar* kern = w + ((o * c.in_channels + ci) * k) * k;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const Scalar wv = kern[ky * k + kx];
          for (std::size_t y = 0; y < oh; ++y) {
            const Scalar* row = src + (y * s + ky) * iw + kx;
            Scalar* drow = dst + y * ow;
            if (s == 1) {
              for (std::size_t x = 0; x < ow; ++x) drow[x] += wv * row[x];
            } else {
              for (std::size_t x = 0; x < ow; ++x) drow[x] += wv * row[x * s];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const Conv2d& c, const LayerPlan& p, const Scalar* w, const Scalar* in,
                   const Scalar* dout, Scalar* dw, Scalar* din) {
  const std::size_t oh = p.out.height, ow = p.out.width;
  const std::size_t ih = p.in.height, iw = p.in.width;
  const std::size_t k = c.kernel, s = c.stride;
  Scalar* dbias = dw + p.weight_count;
  for (std::size_t o = 0; o < c.out_channels; ++o) {
    const Scalar* g = dout + o * oh * ow;
    Scalar sum = 0.0;
    for (std::size_t i = 0; i < oh * ow; ++i) sum += g[i];
    dbias[o] += sum;
    for (std::size_t ci = 0; ci < c.in_channels; ++ci) {
      const Scalar* src = in + ci * ih * iw;
      const Scalar* kern = w + ((o * c.in_channels + ci) * k) * k;
      Scalar* dkern = dw + ((o * c.in_channels + ci) * k) * k;
      Scalar* dsrc = din ? din + ci * ih * iw : nullptr;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const Scalar wv = kern[ky * k + kx];
          Scalar acc = 0.0;
          for (std::size_t y = 0; y < oh; ++y) {
            const Scalar* row = src + (y * s + ky) * iw + kx;
            const Scalar* grow = g + y * ow;
            if (s == 1) {
              for (std::size_t x = 0; x < ow; ++x) acc += grow[x] * row[x];
            } else {
              for (std::size_t x = 0; x < ow; ++x) acc += grow[x] * row[x * s];
            }
            if (dsrc) {
              Scalar* drow = dsrc + (y * s + ky) * iw + kx;
              if (s == 1) {
                for (std::size_t x = 0; x < ow; ++x) drow[x] += wv * grow[x];
              } else {
                for (std::size_t x = 0; x < ow; ++x) drow[x * s] += wv * grow[x];
              }
            }
          }
          dkern[ky * k + kx] += acc;
        }
      }
    }
  }
}

void pool_forward(const MaxPool2d& m, const LayerPlan& p, const Scalar* in, Scalar* out,
                  std::size_t* arg) {
  const std::size_t oh = p.out.height, ow = p.out.width;
  const std::size_t ih = p.in.height, iw = p.in.width;
  for (std::size_t ch = 0; ch < p.in.channels; ++ch) {
    const Scalar* src = in + ch * ih * iw;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (y * m.stride) * iw + x * m.stride;
        for (std::size_t ky = 0; ky < m.kernel; ++ky) {
          for (std::size_t kx = 0; kx < m.kernel; ++kx) {
            const std::size_t idx = (y * m.stride + ky) * iw + x * m.stride + kx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = ch * oh * ow + y * ow + x;
        out[o] = src[best];
        arg[o] = ch * ih * iw + best;
      }
    }
  }
}

void fc_forward(const FullyConnected& f, const LayerPlan& p, const Scalar* w, const Scalar* in,
                Scalar* out) {
  const Scalar* bias = w + p.weight_count;
  for (std::size_t o = 0; o < f.out_dim; ++o) {
    const Scalar* row = w + o * f.in_dim;
    Scalar s = 0.0;
    for (std::size_t i = 0; i < f.in_dim; ++i) s += row[i] * in[i];
    out[o] = s + bias[o];
  }
}

void fc_backward(const FullyConnected& f, const LayerPlan& p, const Scalar* w, const Scalar* in,
                 const Scalar* dout, Scalar* dw, Scalar* din) {
  Scalar* dbias = dw + p.weight_count;
  for (std::size_t o = 0; o < f.out_dim; ++o) {
    const Scalar g = dout[o];
    dbias[o] += g;
    if (g == 0.0) continue;
    Scalar* drow = dw + o * f.in_dim;
    const Scalar* row = w + o * f.in_dim;
    for (std::size_t i = 0; i < f.in_dim; ++i) drow[i] += g * in[i];
    if (din) {
      for (std::size_t i = 0; i < f.in_dim; ++i) din[i] += g * row[i];
    }
  }
}

void softmax_inplace(std::span<const Scalar> logits, std::span<Scalar> out) {
  Scalar mx = logits[0];
  for (Scalar v : logits) {
    if (!std::isfinite(v)) throw NumericError("non-finite logit in forward pass");
    mx = std::max(mx, v);
  }
  Scalar sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (Scalar& v : out) v /= sum;
}

void check_inputs(const ParamVector& params, const NetworkSpec& spec) {
  if (params.size() != spec.param_count()) {
    throw DimensionError("network '" + spec.name() + "' has " +
                         std::to_string(spec.param_count()) + " parameters but got " +
                         std::to_string(params.size()));
  }
}

void check_input(const NetworkSpec& spec, const Tensor& input) {
  if (input.size() != spec.input_shape().size()) {
    throw DimensionError("input of " + std::to_string(input.size()) +
                         " values does not match network input size " +
                         std::to_string(spec.input_shape().size()));
  }
}

void run_forward(const ParamVector& params, const NetworkSpec& spec, const Tensor& input,
                 Trace& t) {
  const auto& plan = spec.plan();
  const auto& layers = spec.layers();
  t.acts.resize(layers.size() + 1);
  t.argmax.resize(layers.size());
  t.acts[0].assign(input.values.begin(), input.values.end());
  const Scalar* w = params.values.data();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const LayerPlan& p = plan[li];
    const std::vector<Scalar>& in = t.acts[li];
    std::vector<Scalar>& out = t.acts[li + 1];
    out.resize(p.out.size());
    const Layer& layer = layers[li];
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      conv_forward(*c, p, w + p.param_offset, in.data(), out.data());
    } else if (std::holds_alternative<ReLU>(layer)) {
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    } else if (const auto* m = std::get_if<MaxPool2d>(&layer)) {
      t.argmax[li].resize(p.out.size());
      pool_forward(*m, p, in.data(), out.data(), t.argmax[li].data());
    } else if (std::holds_alternative<Flatten>(layer)) {
      out = in;
    } else if (const auto* f = std::get_if<FullyConnected>(&layer)) {
      fc_forward(*f, p, w + p.param_offset, in.data(), out.data());
    } else {
      softmax_inplace(in, out);
    }
  }
}

// Accumulates into grad the gradient for one example given dL/dlogits.
void run_backward(const ParamVector& params, const NetworkSpec& spec, const Trace& t,
                  std::vector<Scalar> delta, Gradient& grad) {
  const auto& plan = spec.plan();
  const auto& layers = spec.layers();
  const Scalar* w = params.values.data();
  Scalar* dw = grad.values.data();
  std::vector<Scalar> din;
  // The final layer is Softmax; delta already refers to its input.
  for (std::size_t li = layers.size() - 1; li-- > 0;) {
    const LayerPlan& p = plan[li];
    const Layer& layer = layers[li];
    const bool need_din = li > 0;
    din.assign(need_din ? p.in.size() : 0, 0.0);
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      conv_backward(*c, p, w + p.param_offset, t.acts[li].data(), delta.data(),
                    dw + p.param_offset, need_din ? din.data() : nullptr);
    } else if (std::holds_alternative<ReLU>(layer)) {
      if (need_din) {
        for (std::size_t i = 0; i < din.size(); ++i) din[i] = t.acts[li][i] > 0.0 ? delta[i] : 0.0;
      }
    } else if (std::holds_alternative<MaxPool2d>(layer)) {
      if (need_din) {
        for (std::size_t i = 0; i < delta.size(); ++i) din[t.argmax[li][i]] += delta[i];
      }
    } else if (std::holds_alternative<Flatten>(layer)) {
      if (need_din) din = delta;
    } else if (const auto* f = std::get_if<FullyConnected>(&layer)) {
      fc_backward(*f, p, w + p.param_offset, t.acts[li].data(), delta.data(),
                  dw + p.param_offset, need_din ? din.data() : nullptr);
    }
    if (!need_din) break;
    delta.swap(din);
  }
}

template <class InputAt>
LossAndGrad loss_and_grad_impl(const ParamVector& params, const NetworkSpec& spec,
                               std::size_t batch, InputAt input_at, std::span<const int> labels) {
  if (batch == 0) throw ArgumentError("loss_and_grad: empty batch");
  require_same_size(batch, labels.size(), "loss_and_grad labels");
  check_inputs(params, spec);
  const std::size_t m = spec.num_classes();
  LossAndGrad out;
  out.grad = Gradient(spec.param_count());
  Trace t;
  const Scalar inv_b = 1.0 / static_cast<Scalar>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor& x = input_at(b);
    check_input(spec, x);
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= m) {
      throw ArgumentError("loss_and_grad: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(m) + ")");
    }
    run_forward(params, spec, x, t);
    const std::vector<Scalar>& probs = t.acts.back();
    const std::vector<Scalar>& logits = t.acts[t.acts.size() - 2];
    // log p_y computed from logits for accuracy when p_y underflows.
    Scalar mx = logits[0];
    for (Scalar v : logits) mx = std::max(mx, v);
    Scalar lse = 0.0;
    for (Scalar v : logits) lse += std::exp(v - mx);
    out.loss += (std::log(lse) + mx - logits[static_cast<std::size_t>(y)]) * inv_b;
    std::vector<Scalar> delta(m);
    for (std::size_t k = 0; k < m; ++k) delta[k] = probs[k] * inv_b;
    delta[static_cast<std::size_t>(y)] -= inv_b;
    run_backward(params, spec, t, std::move(delta), out.grad);
  }
  if (!std::isfinite(out.loss) || !all_finite(out.grad.values)) {
    throw NumericError("loss_and_grad produced a non-finite value");
  }
  return out;
}

}  // namespace

std::vector<Scalar> forward(const ParamVector& params, const NetworkSpec& spec,
                            const Tensor& input) {
  check_inputs(params, spec);
  check_input(spec, input);
  Trace t;
  run_forward(params, spec, input, t);
  return std::move(t.acts.back());
}

std::vector<Scalar> forward_logits(const ParamVector& params, const NetworkSpec& spec,
                                   const Tensor& input) {
  check_inputs(params, spec);
  check_input(spec, input);
  Trace t;
  run_forward(params, spec, input, t);
  return std::move(t.acts[t.acts.size() - 2]);
}

std::size_t predict(const ParamVector& params, const NetworkSpec& spec, const Tensor& input) {
  const std::vector<Scalar> p = forward(params, spec, input);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

LossAndGrad loss_and_grad(const ParamVector& params, const NetworkSpec& spec,
                          std::span<const Tensor> inputs, std::span<const int> labels) {
  return loss_and_grad_impl(params, spec, inputs.size(),
                            [&](std::size_t i) -> const Tensor& { return inputs[i]; }, labels);
}

LossAndGrad loss_and_grad(const ParamVector& params, const NetworkSpec& spec,
                          std::span<const Tensor* const> inputs, std::span<const int> labels) {
  return loss_and_grad_impl(params, spec, inputs.size(),
                            [&](std::size_t i) -> const Tensor& { return *inputs[i]; }, labels);
}

ParamVector sgd_step(const ParamVector& params, const Gradient& grad, const SgdOptions& options,
                     MomentumState& state) {
  require_same_size(grad.size(), params.size(), "sgd_step gradient");
  if (!(options.lr > 0.0)) throw ArgumentError("sgd_step: lr must be positive");
  if (options.momentum < 0.0 || options.momentum >= 1.0) {
    throw ArgumentError("sgd_step: momentum must lie in [0, 1)");
  }
  if (state.velocity.empty()) {
    state.velocity.assign(params.size(), 0.0);
  } else {
    require_same_size(state.velocity.size(), params.size(), "sgd_step momentum buffer");
  }
  ParamVector out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Scalar& v = state.velocity[i];
    v = options.momentum * v + grad.values[i] + options.weight_decay * params[i];
    out[i] = params[i] - options.lr * v;
  }
  return out;
}

ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamVector out(spec.param_count());
  for (std::size_t li = 0; li < spec.layers().size(); ++li) {
    const LayerPlan& p = spec.plan()[li];
    if (p.param_count() == 0) continue;
    std::size_t fan_in = 1;
    if (const auto* c = std::get_if<Conv2d>(&spec.layers()[li])) {
      fan_in = c->in_channels * c->kernel * c->kernel;
    } else if (const auto* f = std::get_if<FullyConnected>(&spec.layers()[li])) {
      fan_in = f->in_dim;
    }
    const Scalar bound = 1.0 / std::sqrt(static_cast<Scalar>(fan_in));
    std::uniform_real_distribution<Scalar> dist(-bound, bound);
    for (std::size_t i = 0; i < p.param_count(); ++i) out[p.param_offset + i] = dist(rng);
  }
  return out;
}

}  // namespace xmam

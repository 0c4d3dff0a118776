#include "xmam/network.hpp"

#include <string>

namespace xmam {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string shape_str(const Shape3& s) {
  return "(" + std::to_string(s.channels) + "," + std::to_string(s.height) + "," +
         std::to_string(s.width) + ")";
}

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Conv2d&) { return std::string("Conv2d"); },
                        [](const ReLU&) { return std::string("ReLU"); },
                        [](const MaxPool2d&) { return std::string("MaxPool2d"); },
                        [](const Flatten&) { return std::string("Flatten"); },
                        [](const FullyConnected&) { return std::string("FullyConnected"); },
                        [](const Softmax&) { return std::string("Softmax"); },
                    },
                    layer);
}

NetworkSpec::NetworkSpec(std::string name, std::vector<Layer> layers, Shape3 input_shape)
    : name_(std::move(name)), layers_(std::move(layers)), input_shape_(input_shape) {
  if (input_shape_.size() == 0) throw DimensionError("network input shape must be positive");
  if (layers_.empty() || !std::holds_alternative<Softmax>(layers_.back())) {
    throw DimensionError("network '" + name_ + "' must end with a Softmax layer");
  }

  Shape3 cur = input_shape_;
  std::size_t offset = 0;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& layer = layers_[li];
    LayerPlan p;
    p.in = cur;
    p.param_offset = offset;
    const std::string where = "layer " + std::to_string(li) + " (" + layer_name(layer) + ")";

    std::visit(
        Overloaded{
            [&](Conv2d& c) {
              if (c.stride == 0) c.stride = 1;
              if (c.in_channels != cur.channels) {
                throw DimensionError(where + " expects " + std::to_string(c.in_channels) +
                                     " input channels, got shape " + shape_str(cur));
              }
              if (c.kernel == 0 || c.kernel > cur.height || c.kernel > cur.width ||
                  c.out_channels == 0) {
                throw DimensionError(where + " kernel does not fit input " + shape_str(cur));
              }
              p.out = {c.out_channels, (cur.height - c.kernel) / c.stride + 1,
                       (cur.width - c.kernel) / c.stride + 1};
              p.weight_count = c.out_channels * c.in_channels * c.kernel * c.kernel;
              p.bias_count = c.out_channels;
            },
            [&](ReLU&) { p.out = cur; },
            [&](MaxPool2d& m) {
              if (m.stride == 0) m.stride = m.kernel;
              if (m.kernel == 0 || m.kernel > cur.height || m.kernel > cur.width) {
                throw DimensionError(where + " window does not fit input " + shape_str(cur));
              }
              p.out = {cur.channels, (cur.height - m.kernel) / m.stride + 1,
                       (cur.width - m.kernel) / m.stride + 1};
            },
            [&](Flatten&) { p.out = {cur.size(), 1, 1}; },
            [&](FullyConnected& f) {
              if (f.in_dim != cur.size()) {
                throw DimensionError(where + " expects " + std::to_string(f.in_dim) +
                                     " inputs, got shape " + shape_str(cur));
              }
              if (f.out_dim == 0) throw DimensionError(where + " has zero outputs");
              p.out = {f.out_dim, 1, 1};
              p.weight_count = f.out_dim * f.in_dim;
              p.bias_count = f.out_dim;
            },
            [&](Softmax&) {
              if (li + 1 != layers_.size()) {
                throw DimensionError(where + " must be the final layer");
              }
              if (cur.height != 1 || cur.width != 1) {
                throw DimensionError(where + " requires a flat input, got " + shape_str(cur));
              }
              p.out = cur;
            },
        },
        layers_[li]);

    offset += p.param_count();
    cur = p.out;
    plan_.push_back(p);
  }
  num_classes_ = cur.size();
  param_count_ = offset;
  if (num_classes_ < 1) throw DimensionError("network must produce at least one class");
}

NetworkSpec probe_net(std::size_t n, std::size_t num_classes) {
  if (n < 5) throw ArgumentError("probe_net needs n >= 5");
  const std::size_t pooled = n - 4;
  return NetworkSpec("probe-net",
                     {Conv2d{1, 1, 3, 1}, ReLU{}, MaxPool2d{3, 1}, Flatten{},
                      FullyConnected{pooled * pooled, num_classes}, Softmax{}},
                     Shape3{1, n, n});
}

NetworkSpec lenet_lite(Shape3 input, std::size_t num_classes) {
  const std::size_t h1 = (input.height - 2) / 2;
  const std::size_t w1 = (input.width - 2) / 2;
  if (h1 < 3 || w1 < 3) throw ArgumentError("lenet_lite input is too small");
  const std::size_t h2 = (h1 - 2) / 2;
  const std::size_t w2 = (w1 - 2) / 2;
  if (h2 < 1 || w2 < 1) throw ArgumentError("lenet_lite input is too small");
  return NetworkSpec("lenet-lite",
                     {Conv2d{input.channels, 8, 3, 1}, ReLU{}, MaxPool2d{2, 2},
                      Conv2d{8, 16, 3, 1}, ReLU{}, MaxPool2d{2, 2}, Flatten{},
                      FullyConnected{16 * h2 * w2, num_classes}, Softmax{}},
                     input);
}

NetworkSpec mlp(Shape3 input, std::size_t hidden, std::size_t num_classes) {
  return NetworkSpec("mlp",
                     {Flatten{}, FullyConnected{input.size(), hidden}, ReLU{},
                      FullyConnected{hidden, num_classes}, Softmax{}},
                     input);
}

ParamVector flatten_params(const NetworkSpec& spec, const StructuredWeights& weights) {
  ParamVector out(spec.param_count());
  std::size_t k = 0;
  for (const LayerPlan& p : spec.plan()) {
    if (p.param_count() == 0) continue;
    if (k >= weights.size()) throw DimensionError("flatten_params: too few layers given");
    const LayerWeights& lw = weights[k++];
    require_same_size(lw.weights.size(), p.weight_count, "flatten_params weights");
    require_same_size(lw.bias.size(), p.bias_count, "flatten_params bias");
    std::copy(lw.weights.begin(), lw.weights.end(), out.values.begin() + p.param_offset);
    std::copy(lw.bias.begin(), lw.bias.end(),
              out.values.begin() + p.param_offset + p.weight_count);
  }
  if (k != weights.size()) throw DimensionError("flatten_params: too many layers given");
  return out;
}

StructuredWeights unflatten_params(const NetworkSpec& spec, const ParamVector& params) {
  require_same_size(params.size(), spec.param_count(), "unflatten_params");
  StructuredWeights out;
  for (const LayerPlan& p : spec.plan()) {
    if (p.param_count() == 0) continue;
    auto w0 = params.values.begin() + p.param_offset;
    auto b0 = w0 + p.weight_count;
    out.push_back({std::vector<Scalar>(w0, b0), std::vector<Scalar>(b0, b0 + p.bias_count)});
  }
  return out;
}

}  // namespace xmam

#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "xmam/vec.hpp"

namespace xmam {

struct Conv2d {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
};
struct ReLU {};
struct MaxPool2d {
  std::size_t kernel = 2;
  std::size_t stride = 0;  // 0 means "same as kernel"
};
struct Flatten {};
struct FullyConnected {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
};
struct Softmax {};

using Layer = std::variant<Conv2d, ReLU, MaxPool2d, Flatten, FullyConnected, Softmax>;

std::string layer_name(const Layer& layer);

/// (channels, height, width) of an activation.
struct Shape3 {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Resolved geometry of one layer inside a NetworkSpec.
struct LayerPlan {
  Shape3 in;
  Shape3 out;
  std::size_t param_offset = 0;  // first weight in the flat vector
  std::size_t weight_count = 0;  // weights, followed by bias_count biases
  std::size_t bias_count = 0;

  std::size_t param_count() const { return weight_count + bias_count; }
};

/// Architecture descriptor that interprets a ParamVector.
///
/// Flat layout: layers in order; for each parametric layer the weights come
/// first and the biases after them. Conv weights are [out][in][ky][kx] and
/// fully connected weights are [out][in], both row-major.
class NetworkSpec {
 public:
  NetworkSpec(std::string name, std::vector<Layer> layers, Shape3 input_shape);

  const std::string& name() const { return name_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<LayerPlan>& plan() const { return plan_; }
  const Shape3& input_shape() const { return input_shape_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t param_count() const { return param_count_; }

 private:
  std::string name_;
  std::vector<Layer> layers_;
  Shape3 input_shape_;
  std::vector<LayerPlan> plan_;
  std::size_t num_classes_ = 0;
  std::size_t param_count_ = 0;
};

/// Single conv / pool / fully connected network used to reason about SLOU
/// sensitivity: Conv3x3(1->1, stride 1) -> ReLU -> MaxPool3x3(stride 1) ->
/// Flatten -> FC((n-4)^2 -> M) -> Softmax on an n x n input.
NetworkSpec probe_net(std::size_t n, std::size_t num_classes);

/// Conv3x3x8 -> ReLU -> MaxPool2 -> Conv3x3x16 -> ReLU -> MaxPool2 ->
/// Flatten -> FC -> Softmax.
NetworkSpec lenet_lite(Shape3 input, std::size_t num_classes);

/// Flatten -> FC(hidden) -> ReLU -> FC(M) -> Softmax, for vector inputs.
NetworkSpec mlp(Shape3 input, std::size_t hidden, std::size_t num_classes);

/// Parameters of one parametric layer, in flat-layout order.
struct LayerWeights {
  std::vector<Scalar> weights;
  std::vector<Scalar> bias;
  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

/// One entry per parametric layer (Conv2d or FullyConnected), in order.
using StructuredWeights = std::vector<LayerWeights>;

ParamVector flatten_params(const NetworkSpec& spec, const StructuredWeights& weights);
StructuredWeights unflatten_params(const NetworkSpec& spec, const ParamVector& params);

}  // namespace xmam

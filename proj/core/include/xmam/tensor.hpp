#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "xmam/errors.hpp"

namespace xmam {

/// Floating point type used throughout the simulator.
using Scalar = double;

/// Dense row-major tensor. Shape entries are positive; values are finite.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<Scalar> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_, Scalar fill = 0.0);
  Tensor(std::vector<std::size_t> shape_, std::vector<Scalar> values_);

  std::size_t size() const { return values.size(); }
  std::span<const Scalar> view() const { return values; }
  std::span<Scalar> view() { return values; }

  /// Throws DimensionError/NumericError when the invariants do not hold.
  void validate() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Number of elements described by a shape (1 for an empty shape).
inline std::size_t shape_size(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace xmam

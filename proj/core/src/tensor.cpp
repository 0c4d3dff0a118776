#include "xmam/tensor.hpp"

#include <cmath>
#include <string>

namespace xmam {

Tensor::Tensor(std::vector<std::size_t> shape_, Scalar fill)
    : shape(std::move(shape_)), values(shape_size(shape), fill) {
  validate();
}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<Scalar> values_)
    : shape(std::move(shape_)), values(std::move(values_)) {
  validate();
}

void Tensor::validate() const {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor shape entries must be positive");
  }
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor shape describes " + std::to_string(shape_size(shape)) +
                         " values but " + std::to_string(values.size()) + " were given");
  }
  for (Scalar v : values) {
    if (!std::isfinite(v)) throw NumericError("tensor contains a non-finite value");
  }
}

}  // namespace xmam

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xmam/tensor.hpp"

namespace xmam {

/// Flat model parameters or a model update (w, u = w - w_g).
struct ParamVector {
  std::vector<Scalar> values;

  ParamVector() = default;
  explicit ParamVector(std::size_t n, Scalar fill = 0.0) : values(n, fill) {}
  explicit ParamVector(std::vector<Scalar> v) : values(std::move(v)) {}
  ParamVector(std::initializer_list<Scalar> v) : values(v) {}

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  Scalar& operator[](std::size_t i) { return values[i]; }
  Scalar operator[](std::size_t i) const { return values[i]; }
  std::span<const Scalar> view() const { return values; }
  std::span<Scalar> view() { return values; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// Derivative of a loss with respect to a ParamVector, same layout.
struct Gradient {
  std::vector<Scalar> values;

  Gradient() = default;
  explicit Gradient(std::size_t n) : values(n, 0.0) {}
  explicit Gradient(std::vector<Scalar> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  std::span<const Scalar> view() const { return values; }
  std::span<Scalar> view() { return values; }
};

Scalar dot(std::span<const Scalar> a, std::span<const Scalar> b);
Scalar l2_norm(std::span<const Scalar> a);
Scalar squared_distance(std::span<const Scalar> a, std::span<const Scalar> b);
Scalar distance(std::span<const Scalar> a, std::span<const Scalar> b);
bool all_finite(std::span<const Scalar> a);

/// y += alpha * x
void axpy(Scalar alpha, std::span<const Scalar> x, std::span<Scalar> y);

ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector subtract(const ParamVector& a, const ParamVector& b);
ParamVector scaled(const ParamVector& a, Scalar factor);

/// Throws DimensionError unless both sizes agree.
void require_same_size(std::size_t a, std::size_t b, const char* what);

}  // namespace xmam

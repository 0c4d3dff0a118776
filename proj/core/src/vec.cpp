#include "xmam/vec.hpp"

#include <cmath>
#include <string>

namespace xmam {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(a) +
                         " does not match " + std::to_string(b));
  }
}

Scalar dot(std::span<const Scalar> a, std::span<const Scalar> b) {
  require_same_size(a.size(), b.size(), "dot");
  Scalar s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Scalar l2_norm(std::span<const Scalar> a) {
  Scalar s = 0.0;
  for (Scalar v : a) s += v * v;
  return std::sqrt(s);
}

Scalar squared_distance(std::span<const Scalar> a, std::span<const Scalar> b) {
  require_same_size(a.size(), b.size(), "squared_distance");
  Scalar s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Scalar d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

Scalar distance(std::span<const Scalar> a, std::span<const Scalar> b) {
  return std::sqrt(squared_distance(a, b));
}

bool all_finite(std::span<const Scalar> a) {
  for (Scalar v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void axpy(Scalar alpha, std::span<const Scalar> x, std::span<Scalar> y) {
  require_same_size(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

ParamVector add(const ParamVector& a, const ParamVector& b) {
  require_same_size(a.size(), b.size(), "add");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

ParamVector subtract(const ParamVector& a, const ParamVector& b) {
  require_same_size(a.size(), b.size(), "subtract");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

ParamVector scaled(const ParamVector& a, Scalar factor) {
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
  return out;
}

}  // namespace xmam

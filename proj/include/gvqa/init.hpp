// init.hpp — Glorot-uniform weight initialization.
#pragma once

#include <cmath>

#include "gvqa/tensor.hpp"

namespace gvqa {

inline double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// Rank-2 shapes draw uniformly from +-sqrt(6/(fan_in+fan_out)); rank-1 shapes
// are biases and start at zero.
inline Tensor glorot_init(const Shape& shape, std::uint64_t seed) {
  Tensor t(shape);
  if (shape.size() == 1) return t;
  if (shape.size() != 2)
    throw ShapeError("glorot_init expects a rank-1 or rank-2 shape, got " + shape_str(shape));
  const double bound = glorot_bound(shape[1], shape[0]);
  Rng rng(seed);
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace gvqa

#pragma once

#include <string>
#include <vector>

#include "rcn/random.hpp"
#include "rcn/tensor.hpp"

namespace rcn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Flat, ordered view of a model's learnable tensors. Checkpoints serialise
// arrays in exactly this order.
using ParamList = std::vector<NamedTensor>;

// uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)]
Tensor init_weight(const Shape& shape, int fan_in, Rng& rng);

inline long long param_count(const ParamList& params) {
  long long total = 0;
  for (const NamedTensor& p : params) total += p.tensor.size();
  return total;
}

}  // namespace rcn

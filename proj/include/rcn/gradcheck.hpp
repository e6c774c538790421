#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rcn/tensor.hpp"

namespace rcn {

// Re-evaluates the closure after in-place perturbations of the checked
// tensors, so it must be a pure function of their current values.
using ScalarFn = std::function<Tensor()>;

// Skip predicate: (tensor index within `inputs`, flat coordinate) -> skip.
// Used to step around known non-differentiable points (e.g. coordinates near
// a sparsemax support boundary).
using SkipCoord = std::function<bool(std::size_t, int)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  int worst_coord = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int checked = 0;
  int skipped = 0;
};

// Compares tape gradients of f against central finite differences
// (f(x+h e_i) - f(x-h e_i)) / 2h for every coordinate of every tensor in
// `inputs`. Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check_report(const ScalarFn& f, const std::vector<Tensor>& inputs,
                                  double h = 1e-5, const SkipCoord& skip = nullptr);

double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5,
                  const SkipCoord& skip = nullptr);

}  // namespace rcn

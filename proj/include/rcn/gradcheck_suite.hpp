#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rcn {

struct SuiteResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Finite-difference checks (central differences, h = 1e-5) of every layer and
// model on toy instances: relation layer, discrete and permutation-pooled
// convolutions, group attention with the entropy term, soft-group
// convolution, and the four full models end to end.
std::vector<SuiteResult> run_gradcheck_suite(std::uint64_t seed = 1);

}  // namespace rcn

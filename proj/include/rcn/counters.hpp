#pragma once

#include <cstdint>

namespace rcn {

// Cost instrumentation for the scaling contracts. Thread-local so parallel
// batch workers never contend; tests read them from a single thread.
struct OpCounters {
  // multiply-adds spent on group-attention score computation
  std::uint64_t attention_score_ops = 0;
  // (i, j) pair evaluations performed by relation layers
  std::uint64_t relation_pairs = 0;
  // group-level relational inner product evaluations
  std::uint64_t rip_groups = 0;

  void reset() { *this = OpCounters{}; }
  static OpCounters& active();
};

}  // namespace rcn

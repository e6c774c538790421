#pragma once

#include <vector>

#include "rcn/params.hpp"
#include "rcn/random.hpp"
#include "rcn/relation.hpp"
#include "rcn/tensor.hpp"

namespace rcn {

// Learnable templates of pairwise relational patterns within groups of s
// objects; one output channel per filter.
struct GraphletFilterBank {
  Tensor filters;  // [s, s, d_r, n_f]
  int s = 0, d_r = 0, n_f = 0;

  static GraphletFilterBank make(int s, int d_r, int n_f, Rng& rng);
  long long param_count() const { return static_cast<long long>(s) * s * d_r * n_f; }
  void append_params(const std::string& prefix, ParamList& out) const;
};

using Group = std::vector<int>;

struct DiscreteGroupSet {
  std::vector<Group> groups;
  int s = 0;
};

// all (n choose s) combinations, lexicographic, each tuple ascending
DiscreteGroupSet enumerate_groups(int n, int s);

enum class Pool { kMax, kMean };

// full elementwise product-sum of two equal-shape [s, s, d_r] tensors
Tensor rel_inner_product(const Tensor& r_sub, const Tensor& filter);

// one channel per filter
Tensor rel_inner_product_bank(const Tensor& r_sub, const GraphletFilterBank& bank);

// pools the ordered relational inner product over all s! orderings of g,
// independently per channel; invariant to any permutation of g. s <= 6.
Tensor symmetric_rel_inner_product(const RelationTensor& R, const Group& g,
                                   const GraphletFilterBank& bank, Pool pool);

// row per group: the (optionally permutation-pooled) relational inner product
// of R[g] with every filter. Output [|groups|, n_f].
Tensor relconv_discrete(const RelationTensor& R, const GraphletFilterBank& bank,
                        const DiscreteGroupSet& groups, bool symmetric = false,
                        Pool pool = Pool::kMax);

}  // namespace rcn

#pragma once

#include <vector>

#include "rcn/params.hpp"
#include "rcn/random.hpp"
#include "rcn/tensor.hpp"

namespace rcn {

// Shared nonlinear map applied to every object before the per-dimension
// projections: identity, or a one-hidden-layer perceptron with tanh.
struct FeatureMap {
  bool identity = true;
  Tensor weight;  // [d_phi, d_in]
  Tensor bias;    // [d_phi]

  static FeatureMap make_identity();
  static FeatureMap make_mlp(int d_in, int d_phi, Rng& rng);

  int out_dim(int d_in) const { return identity ? d_in : weight.shape()[0]; }
  Tensor apply(const Tensor& X) const;  // [n, d_in] -> [n, d_phi]
  long long param_count() const;
  void append_params(const std::string& prefix, ParamList& out) const;
};

// Multi-dimensional inner-product relation layer. Relation dimension k pairs
// a left and a right projection of the shared feature map; with `symmetric`
// the right projection aliases the left one's storage, so r(x,y) = r(y,x)
// holds exactly by construction.
struct MdiprParams {
  FeatureMap phi;
  Tensor w1;  // [d_r, d_proj, d_phi]
  Tensor w2;  // same node as w1 when symmetric
  bool symmetric = false;
  int d_in = 0, d_r = 0, d_proj = 0, d_phi = 0;

  // d_phi_hidden == 0 keeps phi = identity
  static MdiprParams make(int d_in, int d_r, int d_proj, bool symmetric, Rng& rng,
                          int d_phi_hidden = 0);
  void append_params(const std::string& prefix, ParamList& out) const;
};

struct RelationTensor {
  Tensor values;  // [n, n, d_r]
  int n = 0;
  int d_r = 0;
};

// Restricts which (i, j) pairs a relation layer evaluates; everything else
// stays zero and is never computed.
struct PairMask {
  int n = 0;
  std::vector<char> keep;

  static PairMask all(int n);
  static PairMask from_groups(int n, const std::vector<std::vector<int>>& groups);
  bool pair(int i, int j) const { return keep[static_cast<std::size_t>(i * n + j)] != 0; }
  int count() const;
};

// R[i,j,k] = <W1^k phi(x_i), W2^k phi(x_j)> for all pairs (including i = j),
// or only masked pairs when a mask is given. Differentiable in X and params.
RelationTensor mdipr_forward(const Tensor& X, const MdiprParams& params,
                             const PairMask* mask = nullptr);

// stored projection parameters plus phi's own count
long long mdipr_param_count(const MdiprParams& params);

}  // namespace rcn

#pragma once

#include <string>
#include <vector>

#include "rcn/params.hpp"
#include "rcn/random.hpp"
#include "rcn/relation.hpp"
#include "rcn/relconv.hpp"
#include "rcn/tensor.hpp"

namespace rcn {

enum class KeyMode { kPositional, kFeature, kPositionalFeature, kContextual };

KeyMode key_mode_from_string(const std::string& s);
std::string key_mode_to_string(KeyMode m);

// Attention-based group retrieval: s learned queries per group select a soft
// combination of the input objects each.
struct GroupAttentionParams {
  int n_g = 0, s = 0, d_key = 0, d_in = 0, n_max = 32;
  KeyMode mode = KeyMode::kPositional;

  Tensor queries;    // [n_g, s, d_key]
  Tensor beta;       // learnable temperature, init 1/sqrt(d_key)
  Tensor key_proj;   // [d_key, d_in]; feature / positional+feature / contextual
  Tensor pos_embed;  // [n_max, d_key]; positional modes (learned, not sinusoidal)
  Tensor ctx_wq, ctx_wk, ctx_wv;  // [d_in, d_in]; contextual mode only

  // queries produced from mean-pooled input instead of free parameters
  bool input_queries = false;
  Tensor query_map_w;  // [n_g*s*d_key, d_in]
  Tensor query_map_b;  // [n_g*s*d_key]

  static GroupAttentionParams make(int d_in, int n_g, int s, int d_key, KeyMode mode, Rng& rng,
                                   int n_max = 32, bool input_queries = false);
  void append_params(const std::string& prefix, ParamList& out) const;
};

struct GroupAttentionResult {
  Tensor retrieved;  // [n_g, s, d_in]
  Tensor scores;     // [n_g, s, n]; every (g, i) row on the simplex
};

// key(x_j) per the configured mode; positional modes require n <= n_max
Tensor compute_keys(const Tensor& X, const GroupAttentionParams& p);

// alpha[g,i,j] = softmax_j(beta <q_i^g, key(x_j)>), retrieved[g,i] = sum_j alpha x_j
GroupAttentionResult group_attention(const Tensor& X, const GroupAttentionParams& p);

// mean Shannon entropy (natural log) over all (g, i) attention rows
Tensor entropy_regularizer(const Tensor& scores);

// log(n_classes) / log(n); multiplied by a user coefficient to obtain lambda
double entropy_scale(int n_classes, int n);

// group attention -> shared MD-IPR per retrieved group -> filter bank
Tensor relconv_group_attention(const Tensor& X, const GroupAttentionParams& attn,
                               const MdiprParams& mdipr, const GraphletFilterBank& bank,
                               GroupAttentionResult* result_out = nullptr,
                               bool symmetric_rip = false, Pool pool = Pool::kMax);

// ---------------------------------------------------------------------------
// Soft groups: a group matrix scores every discrete group, and the relational
// inner product becomes a sparse convex combination over discrete groups.
// ---------------------------------------------------------------------------

struct SoftGroupMatrix {
  Tensor g;  // [n, n_g]
  int n = 0, n_g = 0;

  static SoftGroupMatrix make(int n, int n_g, Rng& rng);
};

// alpha[g,k]: softplus the group matrix, take log-products over the members
// of each discrete group, then sparsemax per column. Columns sum to 1.
Tensor group_match_scores(const SoftGroupMatrix& G, const DiscreteGroupSet& groups);

// convex combination sum_g alpha_g <R[g], f>; groups with alpha_g = 0 are
// never evaluated
Tensor soft_rel_inner_product(const RelationTensor& R, const GraphletFilterBank& bank,
                              const Tensor& alpha_col, const DiscreteGroupSet& groups);

// one soft relational inner product per column of the group matrix; [n_g, n_f]
Tensor relconv_soft(const RelationTensor& R, const GraphletFilterBank& bank,
                    const SoftGroupMatrix& G, const DiscreteGroupSet& groups,
                    Tensor* scores_out = nullptr);

// discrete groups that receive nonzero weight in any column
std::vector<std::vector<int>> supported_groups(const Tensor& scores,
                                               const DiscreteGroupSet& groups);

}  // namespace rcn

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rcn/grouping.hpp"
#include "rcn/params.hpp"
#include "rcn/random.hpp"
#include "rcn/relation.hpp"
#include "rcn/relconv.hpp"
#include "rcn/tensor.hpp"

namespace rcn {

enum class GroupingKind { kDiscreteAll, kDiscreteGiven, kAttention, kSoft };

GroupingKind grouping_from_string(const std::string& s);
std::string grouping_to_string(GroupingKind g);

struct RelConvBlockConfig {
  int d_r = 16;
  int d_proj = 16;
  bool symmetric_relations = true;
  int phi_hidden = 0;  // 0 keeps phi = identity
  int s = 3;
  int n_f = 16;
  GroupingKind grouping = GroupingKind::kDiscreteAll;
  std::vector<Group> given_groups;  // kDiscreteGiven only
  int n_g = 8;                      // learned-group kinds
  KeyMode key_mode = KeyMode::kPositional;
  int d_key = 16;
  int n_max = 32;
  bool input_queries = false;
  bool symmetric_rip = false;
  Pool pool = Pool::kMax;
  bool residual = false;
};

struct ReadoutConfig {
  std::vector<int> hidden = {64, 32};
  // sum over group rows before the perceptron (order-invariant readout)
  bool sum_pool = false;
};

struct ModelSpec {
  std::string type = "relconvnet";  // relconvnet | corelnet | predinet | transformer
  int n_objects = 0;
  int d_in = 0;
  int n_classes = 2;

  std::vector<RelConvBlockConfig> blocks;
  ReadoutConfig readout;

  int corelnet_d_embed = 64;

  int predinet_key_dim = 4;
  int predinet_heads = 4;
  int predinet_relations = 16;

  int tf_d_model = 64;
  int tf_heads = 8;
  int tf_layers = 2;
  int tf_d_ff = 128;
};

// fully-connected stack, relu between layers, linear head
struct Mlp {
  std::vector<Tensor> w;  // [out, in]
  std::vector<Tensor> b;

  static Mlp make(int d_in, const std::vector<int>& hidden, int d_out, Rng& rng);
  Tensor apply(const Tensor& x) const;
  void append_params(const std::string& prefix, ParamList& out) const;
};

class Model {
 public:
  virtual ~Model() = default;

  struct Forward {
    Tensor logits;
    // group-attention score tensors per block, for entropy regularisation
    std::vector<Tensor> attention_scores;
    int attention_n = 0;  // object count the attention rows normalise over
  };

  virtual Forward forward(const Tensor& X) = 0;
  Tensor forward_logits(const Tensor& X) { return forward(X).logits; }

  ParamList& params() { return params_; }
  const ParamList& params() const { return params_; }

 protected:
  ParamList params_;
};

std::unique_ptr<Model> build_model(const ModelSpec& spec, Rng& rng);

// convenience: row-stacked logits for a batch of instances, [B, n_classes]
Tensor batched_logits(Model& model, const std::vector<Tensor>& batch);

// ---------------------------------------------------------------------------
// concrete models (exposed for targeted tests)
// ---------------------------------------------------------------------------

class RelConvNet : public Model {
 public:
  RelConvNet(const ModelSpec& spec, Rng& rng);
  Forward forward(const Tensor& X) override;

  struct Block {
    RelConvBlockConfig cfg;
    int n_in = 0, d_in = 0, n_out = 0;
    MdiprParams mdipr;
    GraphletFilterBank bank;
    GroupAttentionParams attn;  // kAttention
    SoftGroupMatrix soft;       // kSoft
    DiscreteGroupSet groups;    // discrete and soft kinds
    Tensor res_w, ln_gain, ln_shift;  // residual only
  };

  // output of the final relational convolution stage, before readout
  Tensor features(const Tensor& X, Forward* detail = nullptr);
  const std::vector<Block>& blocks() const { return blocks_; }
  const Mlp& readout() const { return readout_; }

 private:
  Tensor block_forward(const Block& b, const Tensor& H, Forward& detail);
  ModelSpec spec_;
  std::vector<Block> blocks_;
  Mlp readout_;
};

class CoRelNet : public Model {
 public:
  CoRelNet(const ModelSpec& spec, Rng& rng);
  Forward forward(const Tensor& X) override;
  Tensor similarity(const Tensor& X);  // [n, n], rows on the simplex

 private:
  ModelSpec spec_;
  Tensor embed_;
  Mlp readout_;
};

class PrediNet : public Model {
 public:
  PrediNet(const ModelSpec& spec, Rng& rng);
  Forward forward(const Tensor& X) override;

 private:
  ModelSpec spec_;
  Tensor key_proj_;   // [key_dim, d_in]
  Tensor q1_, q2_;    // [heads, key_dim]
  Tensor rel_proj_;   // [relations, d_in]
  Mlp readout_;
};

class TransformerEncoder : public Model {
 public:
  TransformerEncoder(const ModelSpec& spec, Rng& rng);
  Forward forward(const Tensor& X) override;

 private:
  struct Layer {
    Tensor wq, wk, wv, wo;
    Tensor ln1_g, ln1_s, ln2_g, ln2_s;
    Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  };
  Tensor encode(const Tensor& X);  // [n, d_model]
  ModelSpec spec_;
  Tensor embed_w_, embed_b_;
  std::vector<Layer> layers_;
  Tensor final_g_, final_s_;
  Mlp readout_;
};

}  // namespace rcn

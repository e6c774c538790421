#include "rcn/models.hpp"

#include <cmath>
#include <stdexcept>

#include "rcn/attention.hpp"

namespace rcn {

GroupingKind grouping_from_string(const std::string& s) {
  if (s == "discrete_all") return GroupingKind::kDiscreteAll;
  if (s == "discrete_given") return GroupingKind::kDiscreteGiven;
  if (s == "attention") return GroupingKind::kAttention;
  if (s == "soft") return GroupingKind::kSoft;
  throw std::invalid_argument("unknown grouping kind: " + s);
}

std::string grouping_to_string(GroupingKind g) {
  switch (g) {
    case GroupingKind::kDiscreteAll: return "discrete_all";
    case GroupingKind::kDiscreteGiven: return "discrete_given";
    case GroupingKind::kAttention: return "attention";
    case GroupingKind::kSoft: return "soft";
  }
  return "?";
}

Mlp Mlp::make(int d_in, const std::vector<int>& hidden, int d_out, Rng& rng) {
  Mlp m;
  int cur = d_in;
  for (int h : hidden) {
    m.w.push_back(init_weight({h, cur}, cur, rng));
    m.b.push_back(Tensor::zeros({h}).set_requires_grad(true));
    cur = h;
  }
  m.w.push_back(init_weight({d_out, cur}, cur, rng));
  m.b.push_back(Tensor::zeros({d_out}).set_requires_grad(true));
  return m;
}

Tensor Mlp::apply(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < w.size(); ++i) {
    h = add(matmul(w[i], h), b[i]);
    if (i + 1 < w.size()) h = relu(h);
  }
  return h;
}

void Mlp::append_params(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < w.size(); ++i) {
    out.push_back({prefix + ".w" + std::to_string(i), w[i]});
    out.push_back({prefix + ".b" + std::to_string(i), b[i]});
  }
}

// ---------------------------------------------------------------------------
// RelConvNet
// ---------------------------------------------------------------------------

RelConvNet::RelConvNet(const ModelSpec& spec, Rng& rng) : spec_(spec) {
  if (spec.blocks.empty()) throw std::invalid_argument("relconvnet: needs at least one block");
  int n = spec.n_objects, d = spec.d_in;
  for (std::size_t bi = 0; bi < spec.blocks.size(); ++bi) {
    const RelConvBlockConfig& cfg = spec.blocks[bi];
    Block b;
    b.cfg = cfg;
    b.n_in = n;
    b.d_in = d;
    Rng brng = rng.split("block" + std::to_string(bi));
    b.mdipr = MdiprParams::make(d, cfg.d_r, cfg.d_proj, cfg.symmetric_relations, brng,
                                cfg.phi_hidden);
    b.bank = GraphletFilterBank::make(cfg.s, cfg.d_r, cfg.n_f, brng);
    switch (cfg.grouping) {
      case GroupingKind::kDiscreteAll:
        b.groups = enumerate_groups(n, cfg.s);
        b.n_out = static_cast<int>(b.groups.groups.size());
        break;
      case GroupingKind::kDiscreteGiven:
        b.groups.s = cfg.s;
        b.groups.groups = cfg.given_groups;
        if (b.groups.groups.empty())
          throw std::invalid_argument("relconvnet: discrete_given with no groups");
        b.n_out = static_cast<int>(b.groups.groups.size());
        break;
      case GroupingKind::kAttention:
        b.attn = GroupAttentionParams::make(d, cfg.n_g, cfg.s, cfg.d_key, cfg.key_mode, brng,
                                            cfg.n_max, cfg.input_queries);
        b.n_out = cfg.n_g;
        break;
      case GroupingKind::kSoft:
        b.soft = SoftGroupMatrix::make(n, cfg.n_g, brng);
        b.groups = enumerate_groups(n, cfg.s);
        b.n_out = cfg.n_g;
        break;
    }
    if (cfg.residual) {
      if (b.n_out != n)
        throw std::invalid_argument("relconvnet: residual block needs matching shapes, got " +
                                    std::to_string(b.n_out) + " groups for " + std::to_string(n) +
                                    " objects");
      b.res_w = init_weight({d, cfg.n_f}, cfg.n_f, brng);
      b.ln_gain = Tensor::ones({d}).set_requires_grad(true);
      b.ln_shift = Tensor::zeros({d}).set_requires_grad(true);
      // shapes preserved
    } else {
      n = b.n_out;
      d = cfg.n_f;
    }
    blocks_.push_back(std::move(b));
  }

  const int feat = spec.readout.sum_pool ? d : n * d;
  Rng rrng = rng.split("readout");
  readout_ = Mlp::make(feat, spec.readout.hidden, spec.n_classes, rrng);

  for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
    const std::string prefix = "block" + std::to_string(bi);
    Block& b = blocks_[bi];
    b.mdipr.append_params(prefix + ".mdipr", params_);
    b.bank.append_params(prefix + ".bank", params_);
    if (b.cfg.grouping == GroupingKind::kAttention) b.attn.append_params(prefix + ".attn", params_);
    if (b.cfg.grouping == GroupingKind::kSoft) params_.push_back({prefix + ".soft.g", b.soft.g});
    if (b.cfg.residual) {
      params_.push_back({prefix + ".res_w", b.res_w});
      params_.push_back({prefix + ".ln_gain", b.ln_gain});
      params_.push_back({prefix + ".ln_shift", b.ln_shift});
    }
  }
  readout_.append_params("readout", params_);
}

Tensor RelConvNet::block_forward(const Block& b, const Tensor& H, Forward& detail) {
  Tensor out;
  switch (b.cfg.grouping) {
    case GroupingKind::kDiscreteAll:
    case GroupingKind::kDiscreteGiven: {
      // only pairs co-occurring in some group are evaluated
      PairMask mask = PairMask::from_groups(H.shape()[0], b.groups.groups);
      RelationTensor R = mdipr_forward(H, b.mdipr, &mask);
      out = relconv_discrete(R, b.bank, b.groups, b.cfg.symmetric_rip, b.cfg.pool);
      break;
    }
    case GroupingKind::kAttention: {
      GroupAttentionResult res;
      out = relconv_group_attention(H, b.attn, b.mdipr, b.bank, &res, b.cfg.symmetric_rip,
                                    b.cfg.pool);
      detail.attention_scores.push_back(res.scores);
      detail.attention_n = H.shape()[0];
      break;
    }
    case GroupingKind::kSoft: {
      Tensor alpha = group_match_scores(b.soft, b.groups);
      PairMask mask = PairMask::from_groups(H.shape()[0], supported_groups(alpha, b.groups));
      RelationTensor R = mdipr_forward(H, b.mdipr, &mask);
      const int m = alpha.shape()[0];
      std::vector<Tensor> rows;
      for (int k = 0; k < b.soft.n_g; ++k) {
        Tensor col = reshape(slice(alpha, 1, k, k + 1), {m});
        rows.push_back(reshape(soft_rel_inner_product(R, b.bank, col, b.groups), {1, b.bank.n_f}));
      }
      out = concat(rows, 0);
      break;
    }
  }
  if (b.cfg.residual) {
    Tensor projected = matmul(out, transpose(b.res_w));  // [n, d_in]
    return layer_norm(add(H, projected), b.ln_gain, b.ln_shift);
  }
  return out;
}

Tensor RelConvNet::features(const Tensor& X, Forward* detail) {
  Forward local;
  Forward& det = detail ? *detail : local;
  Tensor h = X;
  for (const Block& b : blocks_) h = block_forward(b, h, det);
  return h;
}

Model::Forward RelConvNet::forward(const Tensor& X) {
  Forward detail;
  Tensor h = features(X, &detail);
  Tensor flat = spec_.readout.sum_pool ? sum(h, 0) : reshape(h, {h.size()});
  detail.logits = readout_.apply(flat);
  return detail;
}

// ---------------------------------------------------------------------------
// CoRelNet
// ---------------------------------------------------------------------------

CoRelNet::CoRelNet(const ModelSpec& spec, Rng& rng) : spec_(spec) {
  Rng r = rng.split("corelnet");
  embed_ = init_weight({spec.corelnet_d_embed, spec.d_in}, spec.d_in, r);
  Rng rrng = r.split("readout");
  readout_ = Mlp::make(spec.n_objects * spec.n_objects, spec.readout.hidden, spec.n_classes, rrng);
  params_.push_back({"embed", embed_});
  readout_.append_params("readout", params_);
}

Tensor CoRelNet::similarity(const Tensor& X) {
  Tensor z = matmul(X, transpose(embed_));
  return softmax(matmul(z, transpose(z)), 1);
}

Model::Forward CoRelNet::forward(const Tensor& X) {
  Tensor sim = similarity(X);
  Forward f;
  f.logits = readout_.apply(reshape(sim, {sim.size()}));
  return f;
}

// ---------------------------------------------------------------------------
// PrediNet
// ---------------------------------------------------------------------------

PrediNet::PrediNet(const ModelSpec& spec, Rng& rng) : spec_(spec) {
  Rng r = rng.split("predinet");
  key_proj_ = init_weight({spec.predinet_key_dim, spec.d_in}, spec.d_in, r);
  q1_ = init_weight({spec.predinet_heads, spec.predinet_key_dim}, spec.predinet_key_dim, r);
  q2_ = init_weight({spec.predinet_heads, spec.predinet_key_dim}, spec.predinet_key_dim, r);
  rel_proj_ = init_weight({spec.predinet_relations, spec.d_in}, spec.d_in, r);
  Rng rrng = r.split("readout");
  readout_ = Mlp::make(spec.predinet_heads * spec.predinet_relations, spec.readout.hidden,
                       spec.n_classes, rrng);
  params_.push_back({"key_proj", key_proj_});
  params_.push_back({"q1", q1_});
  params_.push_back({"q2", q2_});
  params_.push_back({"rel_proj", rel_proj_});
  readout_.append_params("readout", params_);
}

Model::Forward PrediNet::forward(const Tensor& X) {
  Tensor keys = matmul(X, transpose(key_proj_));  // [n, key_dim]
  std::vector<Tensor> heads;
  for (int h = 0; h < spec_.predinet_heads; ++h) {
    Tensor q1 = reshape(slice(q1_, 0, h, h + 1), {spec_.predinet_key_dim});
    Tensor q2 = reshape(slice(q2_, 0, h, h + 1), {spec_.predinet_key_dim});
    Tensor a1 = softmax(matmul(keys, q1), 0);
    Tensor a2 = softmax(matmul(keys, q2), 0);
    Tensor e1 = matmul(a1, X);  // [d]
    Tensor e2 = matmul(a2, X);
    heads.push_back(matmul(rel_proj_, sub(e1, e2)));  // [relations]
  }
  Forward f;
  f.logits = readout_.apply(concat(heads, 0));
  return f;
}

// ---------------------------------------------------------------------------
// Transformer encoder
// ---------------------------------------------------------------------------

TransformerEncoder::TransformerEncoder(const ModelSpec& spec, Rng& rng) : spec_(spec) {
  if (spec.tf_d_model % spec.tf_heads != 0)
    throw std::invalid_argument("transformer: d_model " + std::to_string(spec.tf_d_model) +
                                " not divisible by heads " + std::to_string(spec.tf_heads));
  Rng r = rng.split("transformer");
  const int dm = spec.tf_d_model;
  embed_w_ = init_weight({dm, spec.d_in}, spec.d_in, r);
  embed_b_ = Tensor::zeros({dm}).set_requires_grad(true);
  for (int l = 0; l < spec.tf_layers; ++l) {
    Layer layer;
    layer.wq = init_weight({dm, dm}, dm, r);
    layer.wk = init_weight({dm, dm}, dm, r);
    layer.wv = init_weight({dm, dm}, dm, r);
    layer.wo = init_weight({dm, dm}, dm, r);
    layer.ln1_g = Tensor::ones({dm}).set_requires_grad(true);
    layer.ln1_s = Tensor::zeros({dm}).set_requires_grad(true);
    layer.ln2_g = Tensor::ones({dm}).set_requires_grad(true);
    layer.ln2_s = Tensor::zeros({dm}).set_requires_grad(true);
    layer.ff_w1 = init_weight({spec.tf_d_ff, dm}, dm, r);
    layer.ff_b1 = Tensor::zeros({spec.tf_d_ff}).set_requires_grad(true);
    layer.ff_w2 = init_weight({dm, spec.tf_d_ff}, spec.tf_d_ff, r);
    layer.ff_b2 = Tensor::zeros({dm}).set_requires_grad(true);
    layers_.push_back(std::move(layer));
  }
  final_g_ = Tensor::ones({dm}).set_requires_grad(true);
  final_s_ = Tensor::zeros({dm}).set_requires_grad(true);
  Rng rrng = r.split("readout");
  readout_ = Mlp::make(dm, spec.readout.hidden, spec.n_classes, rrng);

  params_.push_back({"embed_w", embed_w_});
  params_.push_back({"embed_b", embed_b_});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "layer" + std::to_string(l);
    Layer& lay = layers_[l];
    params_.push_back({p + ".wq", lay.wq});
    params_.push_back({p + ".wk", lay.wk});
    params_.push_back({p + ".wv", lay.wv});
    params_.push_back({p + ".wo", lay.wo});
    params_.push_back({p + ".ln1_g", lay.ln1_g});
    params_.push_back({p + ".ln1_s", lay.ln1_s});
    params_.push_back({p + ".ln2_g", lay.ln2_g});
    params_.push_back({p + ".ln2_s", lay.ln2_s});
    params_.push_back({p + ".ff_w1", lay.ff_w1});
    params_.push_back({p + ".ff_b1", lay.ff_b1});
    params_.push_back({p + ".ff_w2", lay.ff_w2});
    params_.push_back({p + ".ff_b2", lay.ff_b2});
  }
  params_.push_back({"final_g", final_g_});
  params_.push_back({"final_s", final_s_});
  readout_.append_params("readout", params_);
}

Tensor TransformerEncoder::encode(const Tensor& X) {
  const int dm = spec_.tf_d_model;
  const int heads = spec_.tf_heads;
  const int dh = dm / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor h = add(matmul(X, transpose(embed_w_)), embed_b_);
  for (const Layer& lay : layers_) {
    Tensor normed = layer_norm(h, lay.ln1_g, lay.ln1_s);
    Tensor q = matmul(normed, transpose(lay.wq));
    Tensor k = matmul(normed, transpose(lay.wk));
    Tensor v = matmul(normed, transpose(lay.wv));
    std::vector<Tensor> head_outs;
    for (int hd = 0; hd < heads; ++hd) {
      Tensor qh = slice(q, 1, hd * dh, (hd + 1) * dh);
      Tensor kh = slice(k, 1, hd * dh, (hd + 1) * dh);
      Tensor vh = slice(v, 1, hd * dh, (hd + 1) * dh);
      Tensor attn = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
      head_outs.push_back(matmul(attn, vh));
    }
    Tensor mha = matmul(concat(head_outs, 1), transpose(lay.wo));
    h = add(h, mha);

    Tensor normed2 = layer_norm(h, lay.ln2_g, lay.ln2_s);
    Tensor ff = add(matmul(relu(add(matmul(normed2, transpose(lay.ff_w1)), lay.ff_b1)),
                           transpose(lay.ff_w2)),
                    lay.ff_b2);
    h = add(h, ff);
  }
  return layer_norm(h, final_g_, final_s_);
}

Model::Forward TransformerEncoder::forward(const Tensor& X) {
  Tensor pooled = mean(encode(X), 0);  // average over objects
  Forward f;
  f.logits = readout_.apply(pooled);
  return f;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Model> build_model(const ModelSpec& spec, Rng& rng) {
  if (spec.type == "relconvnet") return std::make_unique<RelConvNet>(spec, rng);
  if (spec.type == "corelnet") return std::make_unique<CoRelNet>(spec, rng);
  if (spec.type == "predinet") return std::make_unique<PrediNet>(spec, rng);
  if (spec.type == "transformer") return std::make_unique<TransformerEncoder>(spec, rng);
  throw std::invalid_argument("unknown model type: " + spec.type);
}

Tensor batched_logits(Model& model, const std::vector<Tensor>& batch) {
  std::vector<Tensor> rows;
  rows.reserve(batch.size());
  for (const Tensor& x : batch) {
    Tensor logits = model.forward(x).logits;
    rows.push_back(reshape(logits, {1, logits.size()}));
  }
  return concat(rows, 0);
}

}  // namespace rcn

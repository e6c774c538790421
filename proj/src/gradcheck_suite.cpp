#include "rcn/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>

#include "rcn/gradcheck.hpp"
#include "rcn/grouping.hpp"
#include "rcn/models.hpp"
#include "rcn/training.hpp"

namespace rcn {

namespace {

constexpr double kTol = 1e-4;

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = make_tensor(shape, false);
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

std::vector<Tensor> all_params(Model& model) {
  std::vector<Tensor> out;
  for (NamedTensor& p : model.params()) out.push_back(p.tensor);
  return out;
}

SuiteResult check(const std::string& name, const ScalarFn& f, std::vector<Tensor> inputs,
                  const SkipCoord& skip = nullptr) {
  SuiteResult r;
  r.name = name;
  r.tolerance = kTol;
  r.error = grad_check(f, inputs, 1e-5, skip);
  r.pass = r.error < kTol;
  return r;
}

SuiteResult check_model_loss(const std::string& name, const ModelSpec& spec, Rng& rng) {
  Rng mrng = rng.split(name);
  std::unique_ptr<Model> model = build_model(spec, mrng);
  Tensor X = random_tensor({spec.n_objects, spec.d_in}, mrng).set_requires_grad(true);
  const int label = 1;
  std::vector<Tensor> inputs = all_params(*model);
  inputs.push_back(X);
  return check(
      name,
      [&]() {
        Model::Forward fwd = model->forward(X);
        return total_loss(fwd.logits, label, fwd.attention_scores,
                          fwd.attention_scores.empty() ? 0.0 : 0.3);
      },
      inputs);
}

}  // namespace

std::vector<SuiteResult> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<SuiteResult> results;
  Rng root(seed);

  {
    Rng rng = root.split("mdipr");
    MdiprParams p = MdiprParams::make(6, 3, 4, false, rng);
    Tensor X = random_tensor({5, 6}, rng).set_requires_grad(true);
    Tensor probe = random_tensor({5, 5, 3}, rng);
    results.push_back(check(
        "mdipr_forward",
        [&]() { return sum(mul(mdipr_forward(X, p).values, probe)); }, {X, p.w1, p.w2}));
  }
  {
    Rng rng = root.split("mdipr_sym");
    MdiprParams p = MdiprParams::make(6, 3, 4, true, rng, 5);
    Tensor X = random_tensor({4, 6}, rng).set_requires_grad(true);
    Tensor probe = random_tensor({4, 4, 3}, rng);
    results.push_back(check(
        "mdipr_forward_symmetric_phi",
        [&]() { return sum(mul(mdipr_forward(X, p).values, probe)); },
        {X, p.w1, p.phi.weight, p.phi.bias}));
  }
  {
    Rng rng = root.split("relconv");
    MdiprParams p = MdiprParams::make(6, 2, 3, true, rng);
    GraphletFilterBank bank = GraphletFilterBank::make(3, 2, 4, rng);
    DiscreteGroupSet groups = enumerate_groups(5, 3);
    Tensor X = random_tensor({5, 6}, rng).set_requires_grad(true);
    Tensor probe = random_tensor({10, 4}, rng);
    results.push_back(check(
        "relconv_discrete",
        [&]() {
          RelationTensor R = mdipr_forward(X, p);
          return sum(mul(relconv_discrete(R, bank, groups), probe));
        },
        {X, p.w1, bank.filters}));
    results.push_back(check(
        "symmetric_rip_s3_max",
        [&]() {
          RelationTensor R = mdipr_forward(X, p);
          return sum(mul(relconv_discrete(R, bank, groups, true, Pool::kMax), probe));
        },
        {X, p.w1, bank.filters}));
  }
  {
    Rng rng = root.split("groupattn");
    GroupAttentionParams attn = GroupAttentionParams::make(6, 3, 3, 4, KeyMode::kPositionalFeature, rng);
    MdiprParams p = MdiprParams::make(6, 2, 3, true, rng);
    GraphletFilterBank bank = GraphletFilterBank::make(3, 2, 4, rng);
    Tensor X = random_tensor({5, 6}, rng).set_requires_grad(true);
    Tensor probe = random_tensor({3, 4}, rng);
    results.push_back(check(
        "group_attention_entropy",
        [&]() {
          GroupAttentionResult res;
          Tensor out = relconv_group_attention(X, attn, p, bank, &res);
          return add(sum(mul(out, probe)), scale(entropy_regularizer(res.scores), 0.5));
        },
        {X, attn.queries, attn.key_proj, attn.pos_embed, attn.beta, p.w1, bank.filters}));
  }
  {
    Rng rng = root.split("soft");
    MdiprParams p = MdiprParams::make(5, 2, 2, true, rng);
    GraphletFilterBank bank = GraphletFilterBank::make(2, 2, 3, rng);
    DiscreteGroupSet pairs = enumerate_groups(4, 2);
    SoftGroupMatrix G = SoftGroupMatrix::make(4, 2, rng);
    Tensor X = random_tensor({4, 5}, rng).set_requires_grad(true);
    Tensor probe = random_tensor({2, 3}, rng);

    // stay away from sparsemax support boundaries: resample the group matrix
    // until every column log-score clears the threshold by a margin
    auto boundary_margin = [&]() {
      NoGradScope ng;
      Tensor logs = rcn::log(softplus(G.g.detach()));
      double margin = 1e300;
      for (int k = 0; k < 2; ++k) {
        std::vector<double> col;
        for (const Group& g : pairs.groups) {
          double acc = 0.0;
          for (int i : g) acc += logs.at({i, k});
          col.push_back(acc);
        }
        std::vector<double> sorted(col);
        std::sort(sorted.begin(), sorted.end(), std::greater<double>());
        double cumsum = 0.0, tau = 0.0;
        for (std::size_t j = 1; j <= sorted.size(); ++j) {
          cumsum += sorted[j - 1];
          if (1.0 + static_cast<double>(j) * sorted[j - 1] > cumsum)
            tau = (cumsum - 1.0) / static_cast<double>(j);
        }
        for (double v : col) margin = std::min(margin, std::fabs(v - tau));
      }
      return margin;
    };
    for (int attempt = 0; attempt < 50 && boundary_margin() < 1e-3; ++attempt)
      for (int i = 0; i < G.g.size(); ++i) G.g[i] = rng.uniform(-1.5, 1.5);

    results.push_back(check(
        "relconv_soft",
        [&]() {
          Tensor alpha = group_match_scores(G, pairs);
          RelationTensor R = mdipr_forward(X, p);
          std::vector<Tensor> rows;
          for (int k = 0; k < 2; ++k) {
            Tensor col = reshape(slice(alpha, 1, k, k + 1), {static_cast<int>(pairs.groups.size())});
            rows.push_back(reshape(soft_rel_inner_product(R, bank, col, pairs), {1, 3}));
          }
          return sum(mul(concat(rows, 0), probe));
        },
        {X, G.g, p.w1, bank.filters}));
  }

  {
    ModelSpec spec;
    spec.type = "corelnet";
    spec.n_objects = 4;
    spec.d_in = 6;
    spec.corelnet_d_embed = 8;
    spec.readout.hidden = {8};
    results.push_back(check_model_loss("corelnet_loss", spec, root));
  }
  {
    ModelSpec spec;
    spec.type = "predinet";
    spec.n_objects = 4;
    spec.d_in = 6;
    spec.predinet_key_dim = 3;
    spec.predinet_heads = 2;
    spec.predinet_relations = 4;
    spec.readout.hidden = {8};
    results.push_back(check_model_loss("predinet_loss", spec, root));
  }
  {
    ModelSpec spec;
    spec.type = "transformer";
    spec.n_objects = 4;
    spec.d_in = 6;
    spec.tf_d_model = 16;
    spec.tf_heads = 2;
    spec.tf_layers = 2;
    spec.tf_d_ff = 24;
    spec.readout.hidden = {8};
    results.push_back(check_model_loss("transformer_loss", spec, root));
  }
  {
    ModelSpec spec;
    spec.type = "relconvnet";
    spec.n_objects = 5;
    spec.d_in = 8;
    RelConvBlockConfig b;
    b.d_r = 3;
    b.d_proj = 4;
    b.symmetric_relations = true;
    b.s = 3;
    b.n_f = 4;
    b.grouping = GroupingKind::kDiscreteAll;
    b.symmetric_rip = true;
    b.pool = Pool::kMax;
    spec.blocks = {b};
    spec.readout.hidden = {8};
    results.push_back(check_model_loss("relconvnet_loss", spec, root));
  }
  {
    ModelSpec spec;
    spec.type = "relconvnet";
    spec.n_objects = 5;
    spec.d_in = 8;
    RelConvBlockConfig b;
    b.d_r = 2;
    b.d_proj = 3;
    b.s = 3;
    b.n_f = 4;
    b.grouping = GroupingKind::kAttention;
    b.n_g = 3;
    b.d_key = 4;
    b.key_mode = KeyMode::kPositional;
    spec.blocks = {b};
    spec.readout.hidden = {8};
    results.push_back(check_model_loss("relconvnet_attention_loss", spec, root));
  }

  return results;
}

}  // namespace rcn

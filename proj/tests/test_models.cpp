#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "rcn/attention.hpp"
#include "rcn/gradcheck.hpp"
#include "rcn/gradcheck_suite.hpp"
#include "rcn/models.hpp"
#include "rcn/random.hpp"
#include "rcn/training.hpp"

using namespace rcn;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng) {
  Tensor t = make_tensor(shape, false);
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1, 1);
  return t;
}

ModelSpec tiny_relconvnet(int n = 5, int d = 6) {
  ModelSpec spec;
  spec.type = "relconvnet";
  spec.n_objects = n;
  spec.d_in = d;
  RelConvBlockConfig b;
  b.d_r = 2;
  b.d_proj = 3;
  b.symmetric_relations = true;
  b.s = 3;
  b.n_f = 16;
  b.grouping = GroupingKind::kDiscreteAll;
  b.symmetric_rip = true;
  b.pool = Pool::kMax;
  spec.blocks = {b};
  spec.readout.hidden = {8};
  return spec;
}

}  // namespace

TEST_CASE("one discrete block over 5 objects yields 10 group rows") {
  Rng rng(1);
  ModelSpec spec = tiny_relconvnet();
  RelConvNet net(spec, rng);
  Tensor X = random_tensor({5, 6}, rng);
  Tensor feats = net.features(X);
  CHECK(feats.shape() == Shape{10, 16});
  Tensor logits = net.forward(X).logits;
  CHECK(logits.shape() == Shape{2});
}

TEST_CASE("stacked blocks propagate gradient into the first filter bank") {
  Rng rng(2);
  ModelSpec spec = tiny_relconvnet(4, 5);
  RelConvBlockConfig b2 = spec.blocks[0];
  b2.s = 2;
  b2.n_f = 3;
  b2.symmetric_rip = false;
  spec.blocks.push_back(b2);  // relations between relational features
  RelConvNet net(spec, rng);

  Tensor X = random_tensor({4, 5}, rng);
  Model::Forward fwd = net.forward(X);
  Tensor loss = cross_entropy(fwd.logits, 0);
  Tape::active().backward(loss);

  double bank1_norm = 0.0;
  for (const NamedTensor& p : net.params())
    if (p.name == "block0.bank.filters")
      for (double g : p.tensor.grad()) bank1_norm += g * g;
  CHECK(bank1_norm > 0.0);

  // same objective passes a finite-difference check through both blocks
  for (NamedTensor& p : net.params()) p.tensor.zero_grad();
  Tensor xg = random_tensor({4, 5}, rng).set_requires_grad(true);
  std::vector<Tensor> inputs = {xg};
  for (NamedTensor& p : net.params()) inputs.push_back(p.tensor);
  const double err = grad_check([&]() { return cross_entropy(net.forward(xg).logits, 1); }, inputs);
  CHECK(err < 1e-4);
}

TEST_CASE("residual blocks preserve the input shape") {
  Rng rng(3);
  ModelSpec spec;
  spec.type = "relconvnet";
  spec.n_objects = 5;
  spec.d_in = 6;
  RelConvBlockConfig b;
  b.d_r = 2;
  b.d_proj = 2;
  b.s = 3;
  b.n_f = 4;
  b.grouping = GroupingKind::kAttention;
  b.n_g = 5;  // must equal n for the residual path
  b.d_key = 4;
  b.key_mode = KeyMode::kPositional;
  b.residual = true;
  spec.blocks = {b};
  spec.readout.hidden = {8};
  RelConvNet net(spec, rng);
  Tensor X = random_tensor({5, 6}, rng);
  CHECK(net.features(X).shape() == Shape{5, 6});

  // mismatched shapes are rejected at construction
  spec.blocks[0].n_g = 4;
  CHECK_THROWS_AS(RelConvNet(spec, rng), std::invalid_argument);
}

TEST_CASE("batched logits stack one row per instance") {
  Rng rng(4);
  ModelSpec spec = tiny_relconvnet();
  RelConvNet net(spec, rng);
  std::vector<Tensor> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(random_tensor({5, 6}, rng));
  Tensor logits = batched_logits(net, batch);
  CHECK(logits.shape() == Shape{3, 2});
  for (int i = 0; i < 3; ++i) {
    Tensor one = net.forward(batch[static_cast<std::size_t>(i)]).logits;
    CHECK(logits.at({i, 0}) == one[0]);
    CHECK(logits.at({i, 1}) == one[1]);
  }
}

TEST_CASE("permuting inputs permutes symmetric group features") {
  Rng rng(5);
  ModelSpec spec = tiny_relconvnet();
  RelConvNet net(spec, rng);
  Tensor X = random_tensor({5, 6}, rng);
  std::vector<int> perm = {3, 0, 4, 1, 2};
  Tensor XP = make_tensor({5, 6}, false);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 6; ++j) XP.at({i, j}) = X.at({perm[static_cast<std::size_t>(i)], j});

  Tensor fa = net.features(X);
  Tensor fb = net.features(XP);
  // rows are the same multiset: symmetric relations + permutation-pooled
  // inner products make each group's row order independent
  std::multiset<std::vector<double>> rows_a, rows_b;
  for (int g = 0; g < 10; ++g) {
    std::vector<double> ra, rb;
    for (int f = 0; f < 16; ++f) {
      ra.push_back(fa.at({g, f}));
      rb.push_back(fb.at({g, f}));
    }
    rows_a.insert(ra);
    rows_b.insert(rb);
  }
  CHECK(rows_a == rows_b);
}

TEST_CASE("sum readout makes the full model permutation-invariant") {
  Rng rng(6);
  ModelSpec spec = tiny_relconvnet();
  spec.readout.sum_pool = true;
  RelConvNet net(spec, rng);
  Tensor X = random_tensor({5, 6}, rng);
  std::vector<int> perm = {4, 2, 0, 3, 1};
  Tensor XP = make_tensor({5, 6}, false);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 6; ++j) XP.at({i, j}) = X.at({perm[static_cast<std::size_t>(i)], j});
  Tensor la = net.forward(X).logits;
  Tensor lb = net.forward(XP).logits;
  CHECK(la[0] == doctest::Approx(lb[0]).epsilon(1e-12));
  CHECK(la[1] == doctest::Approx(lb[1]).epsilon(1e-12));
}

TEST_CASE("corelnet similarity matrix") {
  Rng rng(7);
  ModelSpec spec;
  spec.type = "corelnet";
  spec.n_objects = 3;
  spec.d_in = 4;
  spec.corelnet_d_embed = 5;
  spec.readout.hidden = {8};
  CoRelNet net(spec, rng);

  Tensor X = random_tensor({3, 4}, rng);
  Tensor sim = net.similarity(X);
  CHECK(sim.shape() == Shape{3, 3});
  for (int i = 0; i < 3; ++i) {
    double s = 0.0;
    for (int j = 0; j < 3; ++j) s += sim.at({i, j});
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  // identical objects give uniform rows
  Tensor same = make_tensor({3, 4}, false);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) same.at({i, j}) = X.at({0, j});
  Tensor usim = net.similarity(same);
  for (int i = 0; i < usim.size(); ++i) CHECK(usim[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  // loop oracle for Z Z^T then row softmax
  ParamList& params = net.params();
  const Tensor& embed = params[0].tensor;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> raw(3);
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int e = 0; e < 5; ++e) {
        double zi = 0.0, zj = 0.0;
        for (int c = 0; c < 4; ++c) {
          zi += embed.at({e, c}) * X.at({i, c});
          zj += embed.at({e, c}) * X.at({j, c});
        }
        acc += zi * zj;
      }
      raw[static_cast<std::size_t>(j)] = acc;
    }
    double z = 0.0;
    const double m = *std::max_element(raw.begin(), raw.end());
    for (double v : raw) z += std::exp(v - m);
    for (int j = 0; j < 3; ++j)
      CHECK(sim.at({i, j}) ==
            doctest::Approx(std::exp(raw[static_cast<std::size_t>(j)] - m) / z).epsilon(1e-10));
  }
}

TEST_CASE("predinet difference relations") {
  Rng rng(8);
  ModelSpec spec;
  spec.type = "predinet";
  spec.n_objects = 4;
  spec.d_in = 4;
  spec.predinet_key_dim = 3;
  spec.predinet_heads = 2;
  spec.predinet_relations = 4;
  spec.readout.hidden = {8};
  PrediNet net(spec, rng);

  // identical objects: every retrieved pair is equal, so logits match the
  // all-zero-relations readout regardless of attention
  Tensor same = make_tensor({4, 4}, false);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) same.at({i, j}) = 0.37 * (j + 1);
  Tensor logits = net.forward(same).logits;

  ParamList& params = net.params();
  // readout over a zero feature vector: logits = b2 + W2 relu(b1)
  Tensor w0, b0, w1, b1;
  for (NamedTensor& p : params) {
    if (p.name == "readout.w0") w0 = p.tensor;
    if (p.name == "readout.b0") b0 = p.tensor;
    if (p.name == "readout.w1") w1 = p.tensor;
    if (p.name == "readout.b1") b1 = p.tensor;
  }
  Tensor expect = add(matmul(w1, relu(b0)), b1);
  CHECK(logits[0] == doctest::Approx(expect[0]).epsilon(1e-12));
  CHECK(logits[1] == doctest::Approx(expect[1]).epsilon(1e-12));
}

TEST_CASE("self-attention primitive matches a hand-rolled oracle") {
  Rng rng(9);
  Tensor X = random_tensor({2, 3}, rng);
  Tensor wq = random_tensor({3, 3}, rng);
  Tensor wk = random_tensor({3, 3}, rng);
  Tensor wv = random_tensor({3, 3}, rng);
  Tensor out = self_attention(X, wq, wk, wv);

  auto proj = [&](const Tensor& w, int i, int c) {
    double acc = 0.0;
    for (int j = 0; j < 3; ++j) acc += w.at({c, j}) * X.at({i, j});
    return acc;
  };
  const double inv_sqrt = 1.0 / std::sqrt(3.0);
  for (int i = 0; i < 2; ++i) {
    double scores[2];
    for (int j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (int c = 0; c < 3; ++c) acc += proj(wq, i, c) * proj(wk, j, c);
      scores[j] = acc * inv_sqrt;
    }
    const double m = std::max(scores[0], scores[1]);
    const double z = std::exp(scores[0] - m) + std::exp(scores[1] - m);
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int j = 0; j < 2; ++j) acc += std::exp(scores[j] - m) / z * proj(wv, j, c);
      CHECK(out.at({i, c}) == doctest::Approx(acc).epsilon(1e-10));
    }
  }
}

TEST_CASE("transformer handles a single object as identity mixing") {
  Rng rng(10);
  ModelSpec spec;
  spec.type = "transformer";
  spec.n_objects = 1;
  spec.d_in = 4;
  spec.tf_d_model = 8;
  spec.tf_heads = 2;
  spec.tf_layers = 1;
  spec.tf_d_ff = 12;
  spec.readout.hidden = {6};
  TransformerEncoder net(spec, rng);
  Tensor X = random_tensor({1, 4}, rng);
  Tensor logits = net.forward(X).logits;
  CHECK(logits.size() == 2);
  for (int i = 0; i < 2; ++i) CHECK(std::isfinite(logits[i]));

  // indivisible head split rejected
  spec.tf_heads = 3;
  CHECK_THROWS_AS(TransformerEncoder(spec, rng), std::invalid_argument);
}

TEST_CASE("full gradient-check suite passes") {
  for (const SuiteResult& r : run_gradcheck_suite(1)) {
    INFO(r.name);
    CHECK(r.pass);
  }
}

TEST_CASE("layer parameter counts are independent of object count") {
  for (int n : {5, 9, 16}) {
    Rng rng(11);
    ModelSpec spec = tiny_relconvnet(n, 6);
    RelConvNet net(spec, rng);
    long long mdipr = 0, bank = 0;
    for (const NamedTensor& p : net.params()) {
      if (p.name == "block0.mdipr.w1") mdipr = p.tensor.size();
      if (p.name == "block0.bank.filters") bank = p.tensor.size();
    }
    CHECK(mdipr == 2 * 3 * 6);       // d_r * d_proj * d_phi
    CHECK(bank == 3 * 3 * 2 * 16);   // s^2 * d_r * n_f
  }
}

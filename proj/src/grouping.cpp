#include "rcn/grouping.hpp"

#include <cmath>
#include <stdexcept>

#include "rcn/attention.hpp"
#include "rcn/counters.hpp"

namespace rcn {

Tensor self_attention(const Tensor& X, const Tensor& wq, const Tensor& wk, const Tensor& wv) {
  Tensor q = matmul(X, transpose(wq));
  Tensor k = matmul(X, transpose(wk));
  Tensor v = matmul(X, transpose(wv));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.shape()[1]));
  Tensor attn = softmax(scale(matmul(q, transpose(k)), inv_sqrt_d), 1);
  return matmul(attn, v);
}

KeyMode key_mode_from_string(const std::string& s) {
  if (s == "positional") return KeyMode::kPositional;
  if (s == "feature") return KeyMode::kFeature;
  if (s == "positional+feature") return KeyMode::kPositionalFeature;
  if (s == "contextual") return KeyMode::kContextual;
  throw std::invalid_argument("unknown key mode: " + s);
}

std::string key_mode_to_string(KeyMode m) {
  switch (m) {
    case KeyMode::kPositional: return "positional";
    case KeyMode::kFeature: return "feature";
    case KeyMode::kPositionalFeature: return "positional+feature";
    case KeyMode::kContextual: return "contextual";
  }
  return "?";
}

GroupAttentionParams GroupAttentionParams::make(int d_in, int n_g, int s, int d_key, KeyMode mode,
                                                Rng& rng, int n_max, bool input_queries) {
  if (n_g < 1 || s < 2) throw std::invalid_argument("group attention: need n_g >= 1, s >= 2");
  GroupAttentionParams p;
  p.n_g = n_g;
  p.s = s;
  p.d_key = d_key;
  p.d_in = d_in;
  p.n_max = n_max;
  p.mode = mode;
  p.input_queries = input_queries;
  if (input_queries) {
    p.query_map_w = init_weight({n_g * s * d_key, d_in}, d_in, rng);
    p.query_map_b = Tensor::zeros({n_g * s * d_key}).set_requires_grad(true);
  } else {
    p.queries = init_weight({n_g, s, d_key}, d_key, rng);
  }
  p.beta = Tensor::scalar(1.0 / std::sqrt(static_cast<double>(d_key))).set_requires_grad(true);
  const bool uses_features = mode != KeyMode::kPositional;
  const bool uses_position = mode == KeyMode::kPositional || mode == KeyMode::kPositionalFeature;
  if (uses_features) p.key_proj = init_weight({d_key, d_in}, d_in, rng);
  if (uses_position) p.pos_embed = init_weight({n_max, d_key}, d_key, rng);
  if (mode == KeyMode::kContextual) {
    p.ctx_wq = init_weight({d_in, d_in}, d_in, rng);
    p.ctx_wk = init_weight({d_in, d_in}, d_in, rng);
    p.ctx_wv = init_weight({d_in, d_in}, d_in, rng);
  }
  return p;
}

void GroupAttentionParams::append_params(const std::string& prefix, ParamList& out) const {
  if (input_queries) {
    out.push_back({prefix + ".query_map_w", query_map_w});
    out.push_back({prefix + ".query_map_b", query_map_b});
  } else {
    out.push_back({prefix + ".queries", queries});
  }
  out.push_back({prefix + ".beta", beta});
  if (key_proj.defined()) out.push_back({prefix + ".key_proj", key_proj});
  if (pos_embed.defined()) out.push_back({prefix + ".pos_embed", pos_embed});
  if (ctx_wq.defined()) {
    out.push_back({prefix + ".ctx_wq", ctx_wq});
    out.push_back({prefix + ".ctx_wk", ctx_wk});
    out.push_back({prefix + ".ctx_wv", ctx_wv});
  }
}

Tensor compute_keys(const Tensor& X, const GroupAttentionParams& p) {
  const int n = X.shape()[0];
  const bool uses_position = p.mode == KeyMode::kPositional || p.mode == KeyMode::kPositionalFeature;
  if (uses_position && n > p.n_max)
    throw std::invalid_argument("compute_keys: n=" + std::to_string(n) +
                                " exceeds positional table n_max=" + std::to_string(p.n_max));
  switch (p.mode) {
    case KeyMode::kPositional:
      return slice(p.pos_embed, 0, 0, n);
    case KeyMode::kFeature:
      return matmul(X, transpose(p.key_proj));
    case KeyMode::kPositionalFeature:
      return add(matmul(X, transpose(p.key_proj)), slice(p.pos_embed, 0, 0, n));
    case KeyMode::kContextual: {
      Tensor ctx = self_attention(X, p.ctx_wq, p.ctx_wk, p.ctx_wv);
      return matmul(ctx, transpose(p.key_proj));
    }
  }
  throw std::logic_error("compute_keys: unreachable");
}

namespace {

Tensor resolve_queries(const Tensor& X, const GroupAttentionParams& p) {
  if (!p.input_queries) return p.queries;
  Tensor pooled = mean(X, 0);  // [d_in]
  Tensor q = add(matmul(p.query_map_w, pooled), p.query_map_b);
  return reshape(q, {p.n_g, p.s, p.d_key});
}

}  // namespace

GroupAttentionResult group_attention(const Tensor& X, const GroupAttentionParams& p) {
  if (X.ndim() != 2 || X.shape()[1] != p.d_in)
    throw std::invalid_argument("group_attention: expected [n," + std::to_string(p.d_in) +
                                "] objects, got " + shape_str(X.shape()));
  const int n = X.shape()[0], n_g = p.n_g, s = p.s, d_key = p.d_key, d = p.d_in;

  Tensor keys = compute_keys(X, p);  // [n, d_key]
  Tensor queries = resolve_queries(X, p);
  const double beta_v = p.beta.item();

  const bool needs = Tape::active().recording() &&
                     (X.requires_grad() || keys.requires_grad() || queries.requires_grad() ||
                      p.beta.requires_grad());
  Tensor scores = make_tensor({n_g, s, n}, needs);
  Tensor retrieved = make_tensor({n_g, s, d}, needs);

  // raw query-key dots kept for the temperature gradient
  std::vector<double> dots(static_cast<std::size_t>(n_g) * s * n);
  const double* pq = queries.data();
  const double* pk = keys.data();
  const double* px = X.data();
  double* pa = scores.data();
  double* pr = retrieved.data();

  OpCounters::active().attention_score_ops +=
      static_cast<std::uint64_t>(n_g) * s * n * static_cast<std::uint64_t>(d_key);
  for (int g = 0; g < n_g; ++g)
    for (int i = 0; i < s; ++i) {
      const double* q = pq + (g * s + i) * d_key;
      const std::size_t row = static_cast<std::size_t>((g * s + i)) * n;
      double m = -1e308;
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        const double* k = pk + j * d_key;
        for (int t = 0; t < d_key; ++t) acc += q[t] * k[t];
        dots[row + static_cast<std::size_t>(j)] = acc;
        m = std::max(m, beta_v * acc);
      }
      double z = 0.0;
      for (int j = 0; j < n; ++j) {
        const double e = std::exp(beta_v * dots[row + static_cast<std::size_t>(j)] - m);
        pa[row + static_cast<std::size_t>(j)] = e;
        z += e;
      }
      double* out_row = pr + static_cast<std::size_t>((g * s + i)) * d;
      for (int c = 0; c < d; ++c) out_row[c] = 0.0;
      for (int j = 0; j < n; ++j) {
        const double a = pa[row + static_cast<std::size_t>(j)] / z;
        pa[row + static_cast<std::size_t>(j)] = a;
        for (int c = 0; c < d; ++c) out_row[c] += a * px[j * d + c];
      }
    }

  if (needs) {
    NodePtr nx = X.node(), nk = keys.node(), nq = queries.node(), nb = p.beta.node(),
            na = scores.node(), nr = retrieved.node();
    Tape::active().record([nx, nk, nq, nb, na, nr, dots = std::move(dots), beta_v, n, n_g, s,
                           d_key, d]() {
      const double* alpha = na->value.data();
      const double* ag = na->grad.data();
      const double* rg = nr->grad.data();
      const double* px2 = nx->value.data();
      for (int g = 0; g < n_g; ++g)
        for (int i = 0; i < s; ++i) {
          const std::size_t row = static_cast<std::size_t>((g * s + i)) * n;
          const double* rgr = rg + static_cast<std::size_t>((g * s + i)) * d;
          // d(loss)/d(alpha): from retrieved objects plus any direct use
          std::vector<double> da(static_cast<std::size_t>(n));
          for (int j = 0; j < n; ++j) {
            double acc = ag[row + static_cast<std::size_t>(j)];
            for (int c = 0; c < d; ++c) acc += rgr[c] * px2[j * d + c];
            da[static_cast<std::size_t>(j)] = acc;
            if (nx->requires_grad) {
              const double a = alpha[row + static_cast<std::size_t>(j)];
              for (int c = 0; c < d; ++c)
                nx->grad[static_cast<std::size_t>(j * d + c)] += a * rgr[c];
            }
          }
          // softmax backward to the raw logits
          double dot = 0.0;
          for (int j = 0; j < n; ++j)
            dot += da[static_cast<std::size_t>(j)] * alpha[row + static_cast<std::size_t>(j)];
          const double* q = nq->value.data() + (g * s + i) * d_key;
          for (int j = 0; j < n; ++j) {
            const double ds =
                alpha[row + static_cast<std::size_t>(j)] * (da[static_cast<std::size_t>(j)] - dot);
            if (ds == 0.0) continue;
            if (nb->requires_grad) nb->grad[0] += ds * dots[row + static_cast<std::size_t>(j)];
            const double w = ds * beta_v;
            const double* k = nk->value.data() + j * d_key;
            if (nq->requires_grad) {
              double* qg = nq->grad.data() + (g * s + i) * d_key;
              for (int t = 0; t < d_key; ++t) qg[t] += w * k[t];
            }
            if (nk->requires_grad) {
              double* kg = nk->grad.data() + j * d_key;
              for (int t = 0; t < d_key; ++t) kg[t] += w * q[t];
            }
          }
        }
    });
  }
  return GroupAttentionResult{retrieved, scores};
}

Tensor entropy_regularizer(const Tensor& scores) {
  if (scores.ndim() != 3)
    throw std::invalid_argument("entropy_regularizer: expected [n_g, s, n] scores, got " +
                                shape_str(scores.shape()));
  const int rows = scores.shape()[0] * scores.shape()[1];
  const int n = scores.shape()[2];
  const double inv_rows = 1.0 / rows;

  Tensor out = make_tensor({1}, Tape::active().recording() && scores.requires_grad());
  double h = 0.0;
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < n; ++j) {
      const double a = scores[r * n + j];
      if (a > 0.0) h -= a * std::log(a);
    }
  out[0] = h * inv_rows;

  if (out.requires_grad()) {
    NodePtr ns = scores.node(), no = out.node();
    Tape::active().record([ns, no, rows, n, inv_rows]() {
      const double g = no->grad[0] * inv_rows;
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < n; ++j) {
          const double a = ns->value[static_cast<std::size_t>(r * n + j)];
          if (a > 0.0) ns->grad[static_cast<std::size_t>(r * n + j)] -= g * (std::log(a) + 1.0);
        }
    });
  }
  return out;
}

double entropy_scale(int n_classes, int n) {
  if (n_classes < 2 || n < 2)
    throw std::invalid_argument("entropy_scale: need n_classes >= 2 and n >= 2");
  return std::log(static_cast<double>(n_classes)) / std::log(static_cast<double>(n));
}

Tensor relconv_group_attention(const Tensor& X, const GroupAttentionParams& attn,
                               const MdiprParams& mdipr, const GraphletFilterBank& bank,
                               GroupAttentionResult* result_out, bool symmetric_rip, Pool pool) {
  if (bank.s != attn.s)
    throw std::invalid_argument("relconv_group_attention: bank filter size " +
                                std::to_string(bank.s) + " does not match group size " +
                                std::to_string(attn.s));
  GroupAttentionResult res = group_attention(X, attn);
  if (result_out) *result_out = res;

  DiscreteGroupSet full;
  full.s = attn.s;
  Group ident(static_cast<std::size_t>(attn.s));
  for (int i = 0; i < attn.s; ++i) ident[static_cast<std::size_t>(i)] = i;
  full.groups.push_back(ident);

  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(attn.n_g));
  for (int g = 0; g < attn.n_g; ++g) {
    Tensor xg = reshape(slice(res.retrieved, 0, g, g + 1), {attn.s, attn.d_in});
    RelationTensor rg = mdipr_forward(xg, mdipr);
    rows.push_back(relconv_discrete(rg, bank, full, symmetric_rip, pool));
  }
  return concat(rows, 0);
}

// ---------------------------------------------------------------------------
// soft groups
// ---------------------------------------------------------------------------

SoftGroupMatrix SoftGroupMatrix::make(int n, int n_g, Rng& rng) {
  SoftGroupMatrix m;
  m.n = n;
  m.n_g = n_g;
  m.g = init_weight({n, n_g}, n_g, rng);
  return m;
}

namespace {

// out[gi, k] = sum over members i of g of logs[i, k]
Tensor group_membership_sum(const Tensor& logs, const DiscreteGroupSet& groups) {
  const int n = logs.shape()[0], n_g = logs.shape()[1];
  const int m = static_cast<int>(groups.groups.size());
  Tensor out = make_tensor({m, n_g}, Tape::active().recording() && logs.requires_grad());
  for (int gi = 0; gi < m; ++gi) {
    for (int k = 0; k < n_g; ++k) {
      double acc = 0.0;
      for (int i : groups.groups[static_cast<std::size_t>(gi)]) acc += logs[i * n_g + k];
      out[gi * n_g + k] = acc;
    }
  }
  if (out.requires_grad()) {
    NodePtr nl = logs.node(), no = out.node();
    auto grps = groups.groups;
    Tape::active().record([nl, no, grps, n_g]() {
      for (std::size_t gi = 0; gi < grps.size(); ++gi)
        for (int k = 0; k < n_g; ++k) {
          const double g = no->grad[gi * static_cast<std::size_t>(n_g) + static_cast<std::size_t>(k)];
          if (g == 0.0) continue;
          for (int i : grps[gi]) nl->grad[static_cast<std::size_t>(i * n_g + k)] += g;
        }
    });
  }
  (void)n;
  return out;
}

}  // namespace

Tensor group_match_scores(const SoftGroupMatrix& G, const DiscreteGroupSet& groups) {
  if (groups.groups.empty()) throw std::invalid_argument("group_match_scores: empty group set");
  for (const Group& g : groups.groups)
    for (int i : g)
      if (i < 0 || i >= G.n) throw std::out_of_range("group_match_scores: group index out of range");

  // products of softplus values, taken in log space so sparsemax sees a
  // numerically tame range
  Tensor logs = rcn::log(softplus(G.g));  // [n, n_g]
  Tensor raw = group_membership_sum(logs, groups);  // [m, n_g]
  const int m = raw.shape()[0];
  std::vector<Tensor> cols;
  cols.reserve(static_cast<std::size_t>(G.n_g));
  for (int k = 0; k < G.n_g; ++k) {
    Tensor col = reshape(slice(raw, 1, k, k + 1), {m});
    cols.push_back(reshape(sparsemax(col), {m, 1}));
  }
  return concat(cols, 1);  // [m, n_g]
}

Tensor soft_rel_inner_product(const RelationTensor& R, const GraphletFilterBank& bank,
                              const Tensor& alpha_col, const DiscreteGroupSet& groups) {
  const int m = static_cast<int>(groups.groups.size());
  if (alpha_col.size() != m)
    throw std::invalid_argument("soft_rel_inner_product: alpha length " +
                                std::to_string(alpha_col.size()) + " vs " + std::to_string(m) +
                                " groups");
  // only supported groups contribute; sparsity carries through the backward
  // pass because the sparsemax Jacobian vanishes off-support
  std::vector<Tensor> terms;
  for (int gi = 0; gi < m; ++gi) {
    if (alpha_col[gi] <= 0.0) continue;
    DiscreteGroupSet one;
    one.s = groups.s;
    one.groups.push_back(groups.groups[static_cast<std::size_t>(gi)]);
    Tensor rip = reshape(relconv_discrete(R, bank, one, false, Pool::kMax), {bank.n_f});
    Tensor w = reshape(slice(alpha_col, 0, gi, gi + 1), {1});
    terms.push_back(mul(rip, w));
  }
  if (terms.empty()) return Tensor::zeros({bank.n_f});
  Tensor acc = terms[0];
  for (std::size_t t = 1; t < terms.size(); ++t) acc = add(acc, terms[t]);
  return acc;
}

Tensor relconv_soft(const RelationTensor& R, const GraphletFilterBank& bank,
                    const SoftGroupMatrix& G, const DiscreteGroupSet& groups, Tensor* scores_out) {
  Tensor alpha = group_match_scores(G, groups);  // [m, n_g]
  if (scores_out) *scores_out = alpha;
  const int m = alpha.shape()[0];
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(G.n_g));
  for (int k = 0; k < G.n_g; ++k) {
    Tensor col = reshape(slice(alpha, 1, k, k + 1), {m});
    rows.push_back(reshape(soft_rel_inner_product(R, bank, col, groups), {1, bank.n_f}));
  }
  return concat(rows, 0);  // [n_g, n_f]
}

std::vector<std::vector<int>> supported_groups(const Tensor& scores,
                                               const DiscreteGroupSet& groups) {
  const int m = scores.shape()[0], n_g = scores.shape()[1];
  std::vector<std::vector<int>> out;
  for (int gi = 0; gi < m; ++gi) {
    bool used = false;
    for (int k = 0; k < n_g && !used; ++k) used = scores[gi * n_g + k] > 0.0;
    if (used) out.push_back(groups.groups[static_cast<std::size_t>(gi)]);
  }
  return out;
}

}  // namespace rcn

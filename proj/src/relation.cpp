#include "rcn/relation.hpp"

#include <cmath>
#include <stdexcept>

#include "rcn/counters.hpp"

namespace rcn {

Tensor init_weight(const Shape& shape, int fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / fan_in);
  Tensor t = make_tensor(shape, false);
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

FeatureMap FeatureMap::make_identity() { return FeatureMap{}; }

FeatureMap FeatureMap::make_mlp(int d_in, int d_phi, Rng& rng) {
  FeatureMap m;
  m.identity = false;
  m.weight = init_weight({d_phi, d_in}, d_in, rng);
  m.bias = Tensor::zeros({d_phi}).set_requires_grad(true);
  return m;
}

Tensor FeatureMap::apply(const Tensor& X) const {
  if (identity) return X;
  return rcn::tanh(add(matmul(X, transpose(weight)), bias));
}

long long FeatureMap::param_count() const {
  return identity ? 0 : weight.size() + bias.size();
}

void FeatureMap::append_params(const std::string& prefix, ParamList& out) const {
  if (identity) return;
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

MdiprParams MdiprParams::make(int d_in, int d_r, int d_proj, bool symmetric, Rng& rng,
                              int d_phi_hidden) {
  if (d_r < 1 || d_proj < 1) throw std::invalid_argument("mdipr: d_r and d_proj must be >= 1");
  MdiprParams p;
  p.d_in = d_in;
  p.d_r = d_r;
  p.d_proj = d_proj;
  p.symmetric = symmetric;
  if (d_phi_hidden > 0) {
    p.phi = FeatureMap::make_mlp(d_in, d_phi_hidden, rng);
    p.d_phi = d_phi_hidden;
  } else {
    p.phi = FeatureMap::make_identity();
    p.d_phi = d_in;
  }
  p.w1 = init_weight({d_r, d_proj, p.d_phi}, p.d_phi, rng);
  p.w2 = symmetric ? p.w1 : init_weight({d_r, d_proj, p.d_phi}, p.d_phi, rng);
  return p;
}

void MdiprParams::append_params(const std::string& prefix, ParamList& out) const {
  phi.append_params(prefix + ".phi", out);
  out.push_back({prefix + ".w1", w1});
  if (!symmetric) out.push_back({prefix + ".w2", w2});
}

long long mdipr_param_count(const MdiprParams& params) {
  const long long proj = static_cast<long long>(params.symmetric ? 1 : 2) * params.d_r *
                         params.d_proj * params.d_phi;
  return proj + params.phi.param_count();
}

PairMask PairMask::all(int n) {
  PairMask m;
  m.n = n;
  m.keep.assign(static_cast<std::size_t>(n) * n, 1);
  return m;
}

PairMask PairMask::from_groups(int n, const std::vector<std::vector<int>>& groups) {
  PairMask m;
  m.n = n;
  m.keep.assign(static_cast<std::size_t>(n) * n, 0);
  for (const auto& g : groups)
    for (int i : g)
      for (int j : g) m.keep[static_cast<std::size_t>(i * n + j)] = 1;
  return m;
}

int PairMask::count() const {
  int c = 0;
  for (char k : keep) c += k != 0;
  return c;
}

RelationTensor mdipr_forward(const Tensor& X, const MdiprParams& params, const PairMask* mask) {
  if (X.ndim() != 2)
    throw std::invalid_argument("mdipr_forward: expected [n, d_in] objects, got " +
                                shape_str(X.shape()));
  const int n = X.shape()[0];
  if (X.shape()[1] != params.d_in)
    throw std::invalid_argument("mdipr_forward: object dim " + std::to_string(X.shape()[1]) +
                                " does not match params d_in " + std::to_string(params.d_in));
  if (mask && mask->n != n) throw std::invalid_argument("mdipr_forward: mask size mismatch");

  Tensor phi_x = params.phi.apply(X);
  const int d_r = params.d_r, d_proj = params.d_proj, d_phi = params.d_phi;
  const bool shared = params.w2.node() == params.w1.node();

  const bool needs =
      Tape::active().recording() &&
      (phi_x.requires_grad() || params.w1.requires_grad() || params.w2.requires_grad());
  Tensor out = make_tensor({n, n, d_r}, needs);

  // per-dimension projections z1[k,i,p], z2[k,j,p]
  const auto project = [&](const Tensor& w) {
    std::vector<double> z(static_cast<std::size_t>(d_r) * n * d_proj, 0.0);
    const double* pw = w.data();
    const double* px = phi_x.data();
    for (int k = 0; k < d_r; ++k)
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < d_proj; ++p) {
          double acc = 0.0;
          const double* wrow = pw + (k * d_proj + p) * d_phi;
          const double* xrow = px + i * d_phi;
          for (int f = 0; f < d_phi; ++f) acc += wrow[f] * xrow[f];
          z[static_cast<std::size_t>((k * n + i) * d_proj + p)] = acc;
        }
    return z;
  };
  std::vector<double> z1 = project(params.w1);
  std::vector<double> z2 = shared ? z1 : project(params.w2);

  double* po = out.data();
  std::fill(po, po + out.size(), 0.0);
  int pairs = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (mask && !mask->pair(i, j)) continue;
      ++pairs;
      for (int k = 0; k < d_r; ++k) {
        const double* a = z1.data() + static_cast<std::size_t>((k * n + i) * d_proj);
        const double* b = z2.data() + static_cast<std::size_t>((k * n + j) * d_proj);
        double acc = 0.0;
        for (int p = 0; p < d_proj; ++p) acc += a[p] * b[p];
        po[(i * n + j) * d_r + k] = acc;
      }
    }
  OpCounters::active().relation_pairs += static_cast<std::uint64_t>(pairs);

  if (needs) {
    NodePtr nx = phi_x.node(), nw1 = params.w1.node(), nw2 = params.w2.node(), no = out.node();
    std::vector<char> keep = mask ? mask->keep : std::vector<char>();
    Tape::active().record([nx, nw1, nw2, no, z1 = std::move(z1), z2 = std::move(z2),
                           keep = std::move(keep), n, d_r, d_proj, d_phi]() {
      const double* og = no->grad.data();
      const double* px = nx->value.data();
      std::vector<double> dz1(z1.size(), 0.0), dz2(z2.size(), 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (!keep.empty() && !keep[static_cast<std::size_t>(i * n + j)]) continue;
          for (int k = 0; k < d_r; ++k) {
            const double g = og[(i * n + j) * d_r + k];
            if (g == 0.0) continue;
            const std::size_t oi = static_cast<std::size_t>((k * n + i) * d_proj);
            const std::size_t oj = static_cast<std::size_t>((k * n + j) * d_proj);
            for (int p = 0; p < d_proj; ++p) {
              dz1[oi + p] += g * z2[oj + p];
              dz2[oj + p] += g * z1[oi + p];
            }
          }
        }
      // accumulate into w and phi(x); shared storage receives both sides
      const auto backprop_side = [&](const std::vector<double>& dz, const NodePtr& nw) {
        for (int k = 0; k < d_r; ++k)
          for (int i = 0; i < n; ++i) {
            const double* dzi = dz.data() + static_cast<std::size_t>((k * n + i) * d_proj);
            for (int p = 0; p < d_proj; ++p) {
              const double d = dzi[p];
              if (d == 0.0) continue;
              const std::size_t wrow = static_cast<std::size_t>((k * d_proj + p) * d_phi);
              if (nw->requires_grad)
                for (int f = 0; f < d_phi; ++f)
                  nw->grad[wrow + f] += d * px[i * d_phi + f];
              if (nx->requires_grad)
                for (int f = 0; f < d_phi; ++f)
                  nx->grad[static_cast<std::size_t>(i * d_phi + f)] += d * nw->value[wrow + f];
            }
          }
      };
      backprop_side(dz1, nw1);
      backprop_side(dz2, nw2);
    });
  }

  RelationTensor r;
  r.values = out;
  r.n = n;
  r.d_r = d_r;
  return r;
}

}  // namespace rcn

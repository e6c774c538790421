#include "rcn/relconv.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>

#include "rcn/counters.hpp"

namespace rcn {

GraphletFilterBank GraphletFilterBank::make(int s, int d_r, int n_f, Rng& rng) {
  if (s < 2) throw std::invalid_argument("graphlet filters: s must be >= 2");
  if (n_f < 1) throw std::invalid_argument("graphlet filters: n_f must be >= 1");
  GraphletFilterBank b;
  b.s = s;
  b.d_r = d_r;
  b.n_f = n_f;
  b.filters = init_weight({s, s, d_r, n_f}, s * s * d_r, rng);
  return b;
}

void GraphletFilterBank::append_params(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".filters", filters});
}

DiscreteGroupSet enumerate_groups(int n, int s) {
  if (s < 1 || s > n)
    throw std::invalid_argument("enumerate_groups: need 1 <= s <= n, got s=" + std::to_string(s) +
                                " n=" + std::to_string(n));
  DiscreteGroupSet gs;
  gs.s = s;
  Group cur(static_cast<std::size_t>(s));
  std::iota(cur.begin(), cur.end(), 0);
  while (true) {
    gs.groups.push_back(cur);
    int i = s - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == n - s + i) --i;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < s; ++j)
      cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
  }
  return gs;
}

Tensor rel_inner_product(const Tensor& r_sub, const Tensor& filter) {
  if (r_sub.shape() != filter.shape())
    throw std::invalid_argument("rel_inner_product: shape mismatch " + shape_str(r_sub.shape()) +
                                " vs " + shape_str(filter.shape()));
  return sum(mul(r_sub, filter));
}

namespace {

constexpr int kMaxPermSize = 6;

std::vector<std::vector<int>> all_permutations(int s) {
  std::vector<int> idx(static_cast<std::size_t>(s));
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::vector<int>> perms;
  do {
    perms.push_back(idx);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return perms;
}

// filters copied into per-filter contiguous rows, flat index (a*s+b)*d_r+k
std::vector<double> filter_rows(const Tensor& filters, int s, int d_r, int n_f) {
  std::vector<double> rows(static_cast<std::size_t>(n_f) * s * s * d_r);
  const double* pf = filters.data();
  const int block = s * s * d_r;
  for (int idx = 0; idx < block; ++idx)
    for (int f = 0; f < n_f; ++f)
      rows[static_cast<std::size_t>(f) * block + idx] = pf[idx * n_f + f];
  return rows;
}

void gather_subtensor(const double* r, int n, int d_r, const Group& g, const std::vector<int>& perm,
                      double* out) {
  const int s = static_cast<int>(g.size());
  for (int a = 0; a < s; ++a) {
    const int ia = g[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];
    for (int b = 0; b < s; ++b) {
      const int jb = g[static_cast<std::size_t>(perm[static_cast<std::size_t>(b)])];
      const double* src = r + (static_cast<std::size_t>(ia) * n + jb) * d_r;
      double* dst = out + (static_cast<std::size_t>(a) * s + b) * d_r;
      for (int k = 0; k < d_r; ++k) dst[k] = src[k];
    }
  }
}

void scatter_subtensor_grad(double* rgrad, int n, int d_r, const Group& g,
                            const std::vector<int>& perm, const double* dsub) {
  const int s = static_cast<int>(g.size());
  for (int a = 0; a < s; ++a) {
    const int ia = g[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];
    for (int b = 0; b < s; ++b) {
      const int jb = g[static_cast<std::size_t>(perm[static_cast<std::size_t>(b)])];
      double* dst = rgrad + (static_cast<std::size_t>(ia) * n + jb) * d_r;
      const double* src = dsub + (static_cast<std::size_t>(a) * s + b) * d_r;
      for (int k = 0; k < d_r; ++k) dst[k] += src[k];
    }
  }
}

}  // namespace

Tensor relconv_discrete(const RelationTensor& R, const GraphletFilterBank& bank,
                        const DiscreteGroupSet& groups, bool symmetric, Pool pool) {
  const int n = R.n, d_r = R.d_r, s = bank.s, n_f = bank.n_f;
  if (bank.d_r != d_r)
    throw std::invalid_argument("relconv: bank d_r " + std::to_string(bank.d_r) +
                                " does not match relation tensor d_r " + std::to_string(d_r));
  if (groups.s != s)
    throw std::invalid_argument("relconv: group size " + std::to_string(groups.s) +
                                " does not match filter size " + std::to_string(s));
  if (symmetric && s > kMaxPermSize)
    throw std::invalid_argument("relconv: symmetric pooling unsupported for s > 6 (s = " +
                                std::to_string(s) + ")");
  for (const Group& g : groups.groups) {
    if (static_cast<int>(g.size()) != s)
      throw std::invalid_argument("relconv: group arity mismatch");
    for (int i : g)
      if (i < 0 || i >= n) throw std::out_of_range("relconv: group index out of range");
  }

  const int n_groups = static_cast<int>(groups.groups.size());
  const int block = s * s * d_r;
  // canonicalise groups for the symmetric variant so the permutation scan
  // (and its accumulation order) never depends on how the tuple was written
  std::vector<Group> work_groups = groups.groups;
  if (symmetric)
    for (Group& g : work_groups) std::sort(g.begin(), g.end());
  const std::vector<std::vector<int>> perms =
      symmetric ? all_permutations(s) : std::vector<std::vector<int>>{};
  const std::vector<int> ident = [&] {
    std::vector<int> v(static_cast<std::size_t>(s));
    std::iota(v.begin(), v.end(), 0);
    return v;
  }();

  const bool needs =
      Tape::active().recording() && (R.values.requires_grad() || bank.filters.requires_grad());
  Tensor out = make_tensor({n_groups, n_f}, needs);
  std::vector<double> filt = filter_rows(bank.filters, s, d_r, n_f);
  const double* rv = R.values.data();
  double* po = out.data();
  // argmax permutation per (group, filter), sym-max only
  std::vector<std::uint16_t> arg;
  if (symmetric && pool == Pool::kMax)
    arg.resize(static_cast<std::size_t>(n_groups) * n_f);

  std::vector<double> sub(static_cast<std::size_t>(block));
  OpCounters::active().rip_groups += static_cast<std::uint64_t>(n_groups);
  for (int gi = 0; gi < n_groups; ++gi) {
    const Group& g = work_groups[static_cast<std::size_t>(gi)];
    if (!symmetric) {
      gather_subtensor(rv, n, d_r, g, ident, sub.data());
      for (int f = 0; f < n_f; ++f) {
        const double* fr = filt.data() + static_cast<std::size_t>(f) * block;
        double acc = 0.0;
        for (int idx = 0; idx < block; ++idx) acc += sub[static_cast<std::size_t>(idx)] * fr[idx];
        po[gi * n_f + f] = acc;
      }
    } else {
      for (std::size_t pi = 0; pi < perms.size(); ++pi) {
        gather_subtensor(rv, n, d_r, g, perms[pi], sub.data());
        for (int f = 0; f < n_f; ++f) {
          const double* fr = filt.data() + static_cast<std::size_t>(f) * block;
          double acc = 0.0;
          for (int idx = 0; idx < block; ++idx)
            acc += sub[static_cast<std::size_t>(idx)] * fr[idx];
          double& cell = po[gi * n_f + f];
          if (pool == Pool::kMax) {
            if (pi == 0 || acc > cell) {
              cell = acc;
              arg[static_cast<std::size_t>(gi * n_f + f)] = static_cast<std::uint16_t>(pi);
            }
          } else {
            if (pi == 0) cell = 0.0;
            cell += acc / static_cast<double>(perms.size());
          }
        }
      }
    }
  }

  if (needs) {
    NodePtr nr = R.values.node(), nf_node = bank.filters.node(), no = out.node();
    Tape::active().record([nr, nf_node, no, grps = std::move(work_groups), perms, ident,
                           arg = std::move(arg), filt = std::move(filt), n, d_r, s, n_f, block,
                           symmetric, pool]() {
      const double* rv2 = nr->value.data();
      const double* og = no->grad.data();
      std::vector<double> sub2(static_cast<std::size_t>(block));
      std::vector<double> dsub(static_cast<std::size_t>(block));
      // filter grads accumulated in row layout first, scattered at the end
      std::vector<double> dfilt(static_cast<std::size_t>(n_f) * block, 0.0);
      const int n_groups2 = static_cast<int>(grps.size());

      for (int gi = 0; gi < n_groups2; ++gi) {
        const Group& g = grps[static_cast<std::size_t>(gi)];
        if (!symmetric) {
          gather_subtensor(rv2, n, d_r, g, ident, sub2.data());
          std::fill(dsub.begin(), dsub.end(), 0.0);
          for (int f = 0; f < n_f; ++f) {
            const double gout = og[gi * n_f + f];
            if (gout == 0.0) continue;
            const double* fr = filt.data() + static_cast<std::size_t>(f) * block;
            double* df = dfilt.data() + static_cast<std::size_t>(f) * block;
            for (int idx = 0; idx < block; ++idx) {
              dsub[static_cast<std::size_t>(idx)] += gout * fr[idx];
              df[idx] += gout * sub2[static_cast<std::size_t>(idx)];
            }
          }
          if (nr->requires_grad) scatter_subtensor_grad(nr->grad.data(), n, d_r, g, ident, dsub.data());
        } else if (pool == Pool::kMax) {
          // gradient only through the first attaining permutation per channel
          for (int f = 0; f < n_f; ++f) {
            const double gout = og[gi * n_f + f];
            if (gout == 0.0) continue;
            const std::vector<int>& perm = perms[arg[static_cast<std::size_t>(gi * n_f + f)]];
            gather_subtensor(rv2, n, d_r, g, perm, sub2.data());
            const double* fr = filt.data() + static_cast<std::size_t>(f) * block;
            double* df = dfilt.data() + static_cast<std::size_t>(f) * block;
            std::fill(dsub.begin(), dsub.end(), 0.0);
            for (int idx = 0; idx < block; ++idx) {
              dsub[static_cast<std::size_t>(idx)] = gout * fr[idx];
              df[idx] += gout * sub2[static_cast<std::size_t>(idx)];
            }
            if (nr->requires_grad)
              scatter_subtensor_grad(nr->grad.data(), n, d_r, g, perm, dsub.data());
          }
        } else {
          const double w = 1.0 / static_cast<double>(perms.size());
          for (const auto& perm : perms) {
            gather_subtensor(rv2, n, d_r, g, perm, sub2.data());
            std::fill(dsub.begin(), dsub.end(), 0.0);
            for (int f = 0; f < n_f; ++f) {
              const double gout = og[gi * n_f + f] * w;
              if (gout == 0.0) continue;
              const double* fr = filt.data() + static_cast<std::size_t>(f) * block;
              double* df = dfilt.data() + static_cast<std::size_t>(f) * block;
              for (int idx = 0; idx < block; ++idx) {
                dsub[static_cast<std::size_t>(idx)] += gout * fr[idx];
                df[idx] += gout * sub2[static_cast<std::size_t>(idx)];
              }
            }
            if (nr->requires_grad)
              scatter_subtensor_grad(nr->grad.data(), n, d_r, g, perm, dsub.data());
          }
        }
      }

      if (nf_node->requires_grad) {
        double* gf = nf_node->grad.data();
        for (int idx = 0; idx < block; ++idx)
          for (int f = 0; f < n_f; ++f)
            gf[idx * n_f + f] += dfilt[static_cast<std::size_t>(f) * block + idx];
      }
    });
  }
  return out;
}

Tensor rel_inner_product_bank(const Tensor& r_sub, const GraphletFilterBank& bank) {
  if (r_sub.shape() != Shape{bank.s, bank.s, bank.d_r})
    throw std::invalid_argument("rel_inner_product_bank: subtensor shape " +
                                shape_str(r_sub.shape()) + " does not match bank " +
                                shape_str({bank.s, bank.s, bank.d_r}));
  RelationTensor R;
  R.values = r_sub;  // treat the subtensor as a size-s relation tensor over itself
  R.n = bank.s;
  R.d_r = bank.d_r;
  DiscreteGroupSet one;
  one.s = bank.s;
  Group g(static_cast<std::size_t>(bank.s));
  std::iota(g.begin(), g.end(), 0);
  one.groups.push_back(g);
  return reshape(relconv_discrete(R, bank, one, false, Pool::kMax), {bank.n_f});
}

Tensor symmetric_rel_inner_product(const RelationTensor& R, const Group& g,
                                   const GraphletFilterBank& bank, Pool pool) {
  DiscreteGroupSet one;
  one.s = static_cast<int>(g.size());
  one.groups.push_back(g);
  return reshape(relconv_discrete(R, bank, one, true, pool), {bank.n_f});
}

}  // namespace rcn

#include "rcn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace rcn {

Tensor context_normalize(const Tensor& X, const std::vector<std::vector<int>>& windows,
                         const Tensor& gain, const Tensor& shift) {
  if (X.ndim() != 2) throw std::invalid_argument("context_normalize: expected [m, d] input");
  const int m = X.shape()[0], d = X.shape()[1];
  if (gain.size() != d || shift.size() != d)
    throw std::invalid_argument("context_normalize: gain/shift must have d elements");
  std::vector<char> seen(static_cast<std::size_t>(m), 0);
  for (const auto& w : windows) {
    if (w.empty()) throw std::invalid_argument("context_normalize: empty window");
    for (int t : w) {
      if (t < 0 || t >= m) throw std::invalid_argument("context_normalize: index out of range");
      if (seen[static_cast<std::size_t>(t)])
        throw std::invalid_argument("context_normalize: windows must partition the sequence");
      seen[static_cast<std::size_t>(t)] = 1;
    }
  }
  for (char s : seen)
    if (!s) throw std::invalid_argument("context_normalize: windows must cover every object");

  constexpr double kEps = 1e-8;
  Tensor out = make_tensor({m, d}, false);
  for (const auto& w : windows) {
    const double inv = 1.0 / static_cast<double>(w.size());
    for (int j = 0; j < d; ++j) {
      double mu = 0.0;
      for (int t : w) mu += X.at({t, j});
      mu *= inv;
      double var = 0.0;
      for (int t : w) {
        const double c = X.at({t, j}) - mu;
        var += c * c;
      }
      var *= inv;
      const double sigma = std::sqrt(var + kEps);
      for (int t : w) out.at({t, j}) = gain[j] * ((X.at({t, j}) - mu) / sigma) + shift[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

namespace {

// cyclic Jacobi rotations on a symmetric matrix; returns eigenvalues and
// fills V with column eigenvectors
std::vector<double> jacobi_eigen(std::vector<std::vector<double>> a,
                                 std::vector<std::vector<double>>& v) {
  const std::size_t n = a.size();
  v.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::fabs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i][i];
  return eig;
}

}  // namespace

PcaProjection pca_fit(const std::vector<std::vector<double>>& data, int k) {
  const int n = static_cast<int>(data.size());
  if (n < 1) throw std::invalid_argument("pca_fit: empty data");
  const int d = static_cast<int>(data[0].size());
  if (k < 1 || k > d) throw std::invalid_argument("pca_fit: need 1 <= k <= d");
  if (n < k) throw std::invalid_argument("pca_fit: need at least k samples");

  PcaProjection proj;
  proj.mean.assign(static_cast<std::size_t>(d), 0.0);
  for (const auto& row : data)
    for (int j = 0; j < d; ++j) proj.mean[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j)];
  for (double& m : proj.mean) m /= n;

  // sample covariance
  std::vector<std::vector<double>> cov(static_cast<std::size_t>(d),
                                       std::vector<double>(static_cast<std::size_t>(d), 0.0));
  for (const auto& row : data)
    for (int a = 0; a < d; ++a) {
      const double ca = row[static_cast<std::size_t>(a)] - proj.mean[static_cast<std::size_t>(a)];
      for (int b = a; b < d; ++b)
        cov[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] +=
            ca * (row[static_cast<std::size_t>(b)] - proj.mean[static_cast<std::size_t>(b)]);
    }
  const double denom = n > 1 ? n - 1.0 : 1.0;
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      cov[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] /= denom;
      cov[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] =
          cov[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    }

  std::vector<std::vector<double>> vecs;
  std::vector<double> eig = jacobi_eigen(cov, vecs);

  std::vector<int> order(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return eig[static_cast<std::size_t>(a)] > eig[static_cast<std::size_t>(b)]; });

  double total = 0.0;
  for (double e : eig) total += std::max(e, 0.0);
  if (total <= 0.0) total = 1.0;

  for (int c = 0; c < k; ++c) {
    const int col = order[static_cast<std::size_t>(c)];
    std::vector<double> axis(static_cast<std::size_t>(d));
    for (int r = 0; r < d; ++r) axis[static_cast<std::size_t>(r)] = vecs[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)];
    // deterministic sign: first sizeable component positive
    for (double x : axis) {
      if (std::fabs(x) > 1e-12) {
        if (x < 0)
          for (double& y : axis) y = -y;
        break;
      }
    }
    proj.axes.push_back(std::move(axis));
    proj.explained_variance_ratio.push_back(std::max(eig[static_cast<std::size_t>(col)], 0.0) / total);
  }
  return proj;
}

std::vector<std::vector<double>> pca_apply(const PcaProjection& proj,
                                           const std::vector<std::vector<double>>& data) {
  std::vector<std::vector<double>> out;
  out.reserve(data.size());
  const std::size_t d = proj.mean.size();
  for (const auto& row : data) {
    if (row.size() != d) throw std::invalid_argument("pca_apply: dimension mismatch");
    std::vector<double> coords;
    coords.reserve(proj.axes.size());
    for (const auto& axis : proj.axes) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += axis[j] * (row[j] - proj.mean[j]);
      coords.push_back(acc);
    }
    out.push_back(std::move(coords));
  }
  return out;
}

// ---------------------------------------------------------------------------
// exports
// ---------------------------------------------------------------------------

std::vector<GeometryRow> export_set_geometry(RelConvNet& model, int sample_per_class,
                                             std::uint64_t seed, const std::string& csv_path) {
  NoGradScope no_grad;
  const std::vector<SetCard> deck = set_deck();
  const std::vector<Triplet> sets = enumerate_sets();
  Rng rng(seed);

  std::vector<Triplet> picked;
  std::vector<int> labels;
  for (int i = 0; i < sample_per_class; ++i) {
    picked.push_back(sets[rng.uniform_int(sets.size())]);
    labels.push_back(1);
  }
  int made = 0;
  while (made < sample_per_class) {
    Triplet t;
    t[0] = static_cast<int>(rng.uniform_int(81));
    t[1] = static_cast<int>(rng.uniform_int(81));
    t[2] = static_cast<int>(rng.uniform_int(81));
    std::sort(t.begin(), t.end());
    if (t[0] == t[1] || t[1] == t[2]) continue;
    if (is_set(deck[static_cast<std::size_t>(t[0])], deck[static_cast<std::size_t>(t[1])],
               deck[static_cast<std::size_t>(t[2])]))
      continue;
    picked.push_back(t);
    labels.push_back(0);
    ++made;
  }

  // first-block relational feature of each triplet under the trained weights
  const RelConvNet::Block& block = model.blocks().front();
  DiscreteGroupSet one;
  one.s = block.cfg.s;
  Group g(static_cast<std::size_t>(block.cfg.s));
  for (int i = 0; i < block.cfg.s; ++i) g[static_cast<std::size_t>(i)] = i;
  one.groups.push_back(g);

  std::vector<std::vector<double>> features;
  for (const Triplet& t : picked) {
    Tensor X = make_tensor({3, 12}, false);
    for (int i = 0; i < 3; ++i) {
      const std::vector<double> enc = encode_card(deck[static_cast<std::size_t>(t[static_cast<std::size_t>(i)])]);
      for (int j = 0; j < 12; ++j) X.at({i, j}) = enc[static_cast<std::size_t>(j)];
    }
    RelationTensor R = mdipr_forward(X, block.mdipr);
    Tensor rip = relconv_discrete(R, block.bank, one, block.cfg.symmetric_rip, block.cfg.pool);
    features.push_back(rip.values());
  }

  PcaProjection proj = pca_fit(features, 2);
  std::vector<std::vector<double>> coords = pca_apply(proj, features);

  std::vector<GeometryRow> rows;
  for (std::size_t i = 0; i < picked.size(); ++i) {
    GeometryRow r;
    r.id = static_cast<int>(i);
    r.pc1 = coords[i][0];
    r.pc2 = coords[i][1];
    r.is_set = labels[i];
    rows.push_back(r);
  }

  if (!csv_path.empty()) {
    std::ofstream os(csv_path);
    if (!os) throw std::runtime_error("geometry export: cannot open " + csv_path);
    os << "id,pc1,pc2,is_set\n";
    for (const GeometryRow& r : rows)
      os << r.id << ',' << r.pc1 << ',' << r.pc2 << ',' << r.is_set << '\n';
  }
  return rows;
}

void export_group_attention(RelConvNet& model, const TaskInstance& instance,
                            const std::string& json_path) {
  NoGradScope no_grad;
  Model::Forward detail;
  model.features(instance.objects, &detail);
  if (detail.attention_scores.empty())
    throw std::runtime_error("attention export: model has no group-attention block");

  nlohmann::json j;
  j["task"] = instance.task;
  j["label"] = instance.label;
  j["blocks"] = nlohmann::json::array();
  for (const Tensor& scores : detail.attention_scores) {
    const int n_g = scores.shape()[0], s = scores.shape()[1], n = scores.shape()[2];
    nlohmann::json groups = nlohmann::json::array();
    for (int g = 0; g < n_g; ++g) {
      nlohmann::json rows = nlohmann::json::array();
      for (int i = 0; i < s; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int k = 0; k < n; ++k) row.push_back(scores.at({g, i, k}));
        rows.push_back(row);
      }
      groups.push_back(rows);
    }
    j["blocks"].push_back({{"n_g", n_g}, {"s", s}, {"n", n}, {"scores", groups}});
  }

  std::ofstream os(json_path);
  if (!os) throw std::runtime_error("attention export: cannot open " + json_path);
  os << j.dump(2) << '\n';
}

double logistic_probe_accuracy(const std::vector<GeometryRow>& rows, int steps, double lr) {
  // standardise coordinates, then plain gradient descent on logistic loss
  double m1 = 0, m2 = 0;
  for (const GeometryRow& r : rows) {
    m1 += r.pc1;
    m2 += r.pc2;
  }
  m1 /= static_cast<double>(rows.size());
  m2 /= static_cast<double>(rows.size());
  double s1 = 0, s2 = 0;
  for (const GeometryRow& r : rows) {
    s1 += (r.pc1 - m1) * (r.pc1 - m1);
    s2 += (r.pc2 - m2) * (r.pc2 - m2);
  }
  s1 = std::sqrt(s1 / static_cast<double>(rows.size())) + 1e-12;
  s2 = std::sqrt(s2 / static_cast<double>(rows.size())) + 1e-12;

  double w1 = 0, w2 = 0, b = 0;
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (int it = 0; it < steps; ++it) {
    double g1 = 0, g2 = 0, gb = 0;
    for (const GeometryRow& r : rows) {
      const double x1 = (r.pc1 - m1) / s1, x2 = (r.pc2 - m2) / s2;
      const double p = 1.0 / (1.0 + std::exp(-(w1 * x1 + w2 * x2 + b)));
      const double err = p - r.is_set;
      g1 += err * x1;
      g2 += err * x2;
      gb += err;
    }
    w1 -= lr * g1 * inv_n;
    w2 -= lr * g2 * inv_n;
    b -= lr * gb * inv_n;
  }
  int correct = 0;
  for (const GeometryRow& r : rows) {
    const double x1 = (r.pc1 - m1) / s1, x2 = (r.pc2 - m2) / s2;
    const int pred = (w1 * x1 + w2 * x2 + b) > 0 ? 1 : 0;
    correct += pred == r.is_set ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace rcn

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "rcn/analysis.hpp"
#include "rcn/random.hpp"

using namespace rcn;

namespace {

Tensor unit_gain(int d) { return Tensor::ones({d}); }
Tensor zero_shift(int d) { return Tensor::zeros({d}); }

}  // namespace

TEST_CASE("context normalization closed forms for windows of two") {
  Tensor gain = unit_gain(1), shift = zero_shift(1);

  Tensor same = context_normalize(Tensor::from_data({2, 1}, {3.7, 3.7}), {{0, 1}}, gain, shift);
  CHECK(same[0] == 0.0);
  CHECK(same[1] == 0.0);

  // |x - y| large enough that the eps inside the root is negligible
  const double x = 31.0, y = 1.0;
  Tensor diff = context_normalize(Tensor::from_data({2, 1}, {x, y}), {{0, 1}}, gain, shift);
  CHECK(std::fabs(diff[0] - 1.0) < 1e-10);   // sign(x - y)
  CHECK(std::fabs(diff[1] + 1.0) < 1e-10);   // sign(y - x)

  Tensor rev = context_normalize(Tensor::from_data({2, 1}, {y, x}), {{0, 1}}, gain, shift);
  CHECK(std::fabs(rev[0] + 1.0) < 1e-10);
  CHECK(std::fabs(rev[1] - 1.0) < 1e-10);
}

TEST_CASE("context normalization closed form for (x, x, y)") {
  Tensor gain = unit_gain(1), shift = zero_shift(1);
  const double x = 24.0, y = -6.0;
  Tensor out = context_normalize(Tensor::from_data({3, 1}, {x, x, y}), {{0, 1, 2}}, gain, shift);
  const double s = 1.0;  // sign(x - y)
  CHECK(std::fabs(out[0] - s / std::sqrt(2.0)) < 1e-9);
  CHECK(std::fabs(out[1] - s / std::sqrt(2.0)) < 1e-9);
  CHECK(std::fabs(out[2] + 2.0 * s / std::sqrt(2.0)) < 1e-9);
}

TEST_CASE("context normalization is shift-invariant with zero window means") {
  Rng rng(2);
  Tensor X = make_tensor({6, 3}, false);
  for (int i = 0; i < X.size(); ++i) X[i] = rng.uniform(-5, 5);
  const std::vector<std::vector<int>> windows = {{0, 2, 4}, {1, 3}, {5}};
  Tensor gain = unit_gain(3), shift = zero_shift(3);

  Tensor a = context_normalize(X, windows, gain, shift);
  // pre-affine output has zero mean per window per dimension
  for (const auto& w : windows)
    for (int j = 0; j < 3; ++j) {
      double m = 0.0;
      for (int t : w) m += a.at({t, j});
      CHECK(std::fabs(m) < 1e-10);
    }

  Tensor shifted = X.detach();
  for (const auto& w : windows)
    for (int t : w)
      for (int j = 0; j < 3; ++j) shifted.at({t, j}) += 17.5;
  Tensor b = context_normalize(shifted, windows, gain, shift);
  for (int i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-7));

  CHECK_THROWS_AS(context_normalize(X, {{0, 1}}, gain, shift), std::invalid_argument);
  CHECK_THROWS_AS(context_normalize(X, {{0, 1, 2, 3, 4, 5}, {}}, gain, shift),
                  std::invalid_argument);
}

TEST_CASE("pca on collinear data concentrates variance on one axis") {
  Rng rng(3);
  std::vector<std::vector<double>> data;
  for (int i = 0; i < 40; ++i) {
    const double t = rng.uniform(-2, 2);
    data.push_back({3.0 * t + 1.0, -2.0 * t + 0.5});
  }
  PcaProjection proj = pca_fit(data, 2);
  CHECK(proj.explained_variance_ratio[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(proj.explained_variance_ratio[1] == doctest::Approx(0.0));
}

TEST_CASE("pca ratios on an isotropic sample are near uniform") {
  Rng rng(4);
  std::vector<std::vector<double>> data;
  for (int i = 0; i < 4000; ++i) {
    std::vector<double> row(4);
    for (double& v : row) v = rng.normal();
    data.push_back(row);
  }
  PcaProjection proj = pca_fit(data, 4);
  for (double r : proj.explained_variance_ratio) {
    CHECK(r > 0.2);
    CHECK(r < 0.3);
  }
}

TEST_CASE("pca matches the closed-form eigen oracle on three points") {
  // points (0,0), (2,0), (0,2): covariance [[4/3, -2/3], [-2/3, 4/3]]
  // eigenvalues 2 and 2/3 with axes (1,-1)/sqrt(2) and (1,1)/sqrt(2)
  const std::vector<std::vector<double>> data = {{0, 0}, {2, 0}, {0, 2}};
  PcaProjection proj = pca_fit(data, 2);
  CHECK(proj.mean[0] == doctest::Approx(2.0 / 3));
  CHECK(proj.mean[1] == doctest::Approx(2.0 / 3));
  CHECK(proj.explained_variance_ratio[0] == doctest::Approx(2.0 / (2.0 + 2.0 / 3)).epsilon(1e-9));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(std::fabs(proj.axes[0][0] - inv_sqrt2) < 1e-9);
  CHECK(std::fabs(proj.axes[0][1] + inv_sqrt2) < 1e-9);
  CHECK(std::fabs(proj.axes[1][0] - inv_sqrt2) < 1e-9);
  CHECK(std::fabs(proj.axes[1][1] - inv_sqrt2) < 1e-9);
}

TEST_CASE("pca axes are orthonormal and full-rank projection preserves distances") {
  Rng rng(5);
  std::vector<std::vector<double>> data;
  for (int i = 0; i < 60; ++i) {
    std::vector<double> row(5);
    for (double& v : row) v = rng.uniform(-1, 1);
    data.push_back(row);
  }
  PcaProjection proj = pca_fit(data, 5);
  for (std::size_t a = 0; a < proj.axes.size(); ++a)
    for (std::size_t b = 0; b < proj.axes.size(); ++b) {
      double dot = 0.0;
      for (int j = 0; j < 5; ++j) dot += proj.axes[a][static_cast<std::size_t>(j)] * proj.axes[b][static_cast<std::size_t>(j)];
      CHECK(std::fabs(dot - (a == b ? 1.0 : 0.0)) < 1e-8);
    }

  const std::vector<std::vector<double>> coords = pca_apply(proj, data);
  for (int t = 0; t < 20; ++t) {
    const std::size_t i = rng.uniform_int(60), j = rng.uniform_int(60);
    double d_orig = 0.0, d_proj = 0.0;
    for (int c = 0; c < 5; ++c) {
      const double diff = data[i][static_cast<std::size_t>(c)] - data[j][static_cast<std::size_t>(c)];
      d_orig += diff * diff;
      const double pdiff = coords[i][static_cast<std::size_t>(c)] - coords[j][static_cast<std::size_t>(c)];
      d_proj += pdiff * pdiff;
    }
    CHECK(d_proj == doctest::Approx(d_orig).epsilon(1e-8));
  }

  CHECK_THROWS_AS(pca_fit(data, 6), std::invalid_argument);
}

TEST_CASE("set geometry export writes balanced rows") {
  Rng rng(6);
  ModelSpec spec;
  spec.type = "relconvnet";
  spec.n_objects = 5;
  spec.d_in = 12;
  RelConvBlockConfig b;
  b.d_r = 4;
  b.d_proj = 4;
  b.s = 3;
  b.n_f = 8;
  b.grouping = GroupingKind::kDiscreteAll;
  b.symmetric_rip = true;
  spec.blocks = {b};
  spec.readout.hidden = {8};
  RelConvNet net(spec, rng);

  const std::string csv = "test_geometry.csv";
  const std::vector<GeometryRow> rows = export_set_geometry(net, 50, 3, csv);
  CHECK(rows.size() == 100);
  int sets = 0;
  for (const GeometryRow& r : rows) sets += r.is_set;
  CHECK(sets == 50);

  std::ifstream is(csv);
  std::string header;
  std::getline(is, header);
  CHECK(header == "id,pc1,pc2,is_set");
  int lines = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 100);
  std::remove(csv.c_str());
}

TEST_CASE("logistic probe separates a linearly separable cloud") {
  Rng rng(7);
  std::vector<GeometryRow> rows;
  for (int i = 0; i < 200; ++i) {
    GeometryRow r;
    r.id = i;
    r.is_set = i % 2;
    const double offset = r.is_set ? 2.0 : -2.0;
    r.pc1 = offset + rng.uniform(-0.5, 0.5);
    r.pc2 = rng.uniform(-1, 1);
    rows.push_back(r);
  }
  CHECK(logistic_probe_accuracy(rows) == doctest::Approx(1.0));
}

TEST_CASE("group attention export writes simplex rows") {
  Rng rng(8);
  ModelSpec spec;
  spec.type = "relconvnet";
  spec.n_objects = 9;
  spec.d_in = 6;
  RelConvBlockConfig b;
  b.d_r = 2;
  b.d_proj = 3;
  b.s = 3;
  b.n_f = 4;
  b.grouping = GroupingKind::kAttention;
  b.n_g = 4;
  b.d_key = 4;
  b.key_mode = KeyMode::kPositional;
  spec.blocks = {b};
  spec.readout.hidden = {8};
  RelConvNet net(spec, rng);

  TaskSpec task;
  task.name = "relgames";
  task.game = RelGame::kMatchPattern;
  task.vocab_dim = 6;
  Dataset one = generate_dataset(task, SplitPart::kVal, 1, 3);

  const std::string path = "test_attention.json";
  export_group_attention(net, one.instances.front(), path);

  std::ifstream is(path);
  REQUIRE(static_cast<bool>(is));
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"n_g\": 4") != std::string::npos);
  CHECK(text.find("\"scores\"") != std::string::npos);
  std::remove(path.c_str());
}

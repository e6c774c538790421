#pragma once

#include <string>
#include <vector>

#include "rcn/models.hpp"
#include "rcn/random.hpp"
#include "rcn/tasks.hpp"
#include "rcn/tensor.hpp"

namespace rcn {

// Per-window, per-dimension standardisation (eps = 1e-8 inside the root)
// followed by a learned affine map. Diagnostic preprocessing only; disabled
// in every bundled training configuration.
Tensor context_normalize(const Tensor& X, const std::vector<std::vector<int>>& windows,
                         const Tensor& gain, const Tensor& shift);

struct PcaProjection {
  std::vector<double> mean;                 // [d]
  std::vector<std::vector<double>> axes;    // k orthonormal rows, [d] each
  std::vector<double> explained_variance_ratio;  // non-increasing, sums <= 1
};

// Covariance eigendecomposition (cyclic Jacobi sweeps). Sign convention: the
// first component of each axis larger than 1e-12 in magnitude is positive.
PcaProjection pca_fit(const std::vector<std::vector<double>>& data, int k);
std::vector<std::vector<double>> pca_apply(const PcaProjection& proj,
                                           const std::vector<std::vector<double>>& data);

struct GeometryRow {
  int id = 0;
  double pc1 = 0.0, pc2 = 0.0;
  int is_set = 0;
};

// Relational-convolution feature per card triplet (balanced sets/non-sets),
// projected to 2-D; written as CSV "id,pc1,pc2,is_set".
std::vector<GeometryRow> export_set_geometry(RelConvNet& model, int sample_per_class,
                                             std::uint64_t seed, const std::string& csv_path);

// group attention scores for one instance, as JSON (n_g x s x n plus metadata)
void export_group_attention(RelConvNet& model, const TaskInstance& instance,
                            const std::string& json_path);

// tiny logistic regression on 2-D points; returns training accuracy
double logistic_probe_accuracy(const std::vector<GeometryRow>& rows, int steps = 500,
                               double lr = 0.5);

}  // namespace rcn

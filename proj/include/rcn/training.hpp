#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcn/models.hpp"
#include "rcn/params.hpp"
#include "rcn/tasks.hpp"
#include "rcn/tensor.hpp"

namespace rcn {

// raised on NaN/Inf aborts; the CLI maps it to exit code 3
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
  double weight_decay = 0.0;  // decoupled
};

// bias-corrected Adam with optional decoupled weight decay
class Adam {
 public:
  Adam(ParamList params, AdamConfig cfg);
  void step();
  void zero_grad();
  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const { return cfg_; }
  long long step_count() const { return t_; }

 private:
  ParamList params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long long t_ = 0;
};

// log-softmax + negative log-likelihood of the labelled class
Tensor cross_entropy(const Tensor& logits, int label);

// cross-entropy plus lambda times the mean attention-entropy term (when any
// attention scores are present)
Tensor total_loss(const Tensor& logits, int label, const std::vector<Tensor>& attention_scores,
                  double lambda);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

// argmax-of-logits accuracy (ties to the lowest class index), mean loss
EvalResult evaluate(Model& model, const Dataset& data, int threads = 1);

struct OptimConfig {
  AdamConfig adam;
  int batch_size = 128;
  int epochs = 100;
  // lambda = entropy_coeff * entropy_scale(n_classes, n); 0 disables the term
  double entropy_coeff = 0.0;
  int early_stop_patience = 0;  // epochs without val improvement; 0 = off
  std::string lr_schedule = "constant";  // constant | cosine
  int threads = 1;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double entropy = 0.0;  // mean attention entropy over the epoch (pre-lambda)
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_acc = 0.0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

struct TrainData {
  Dataset train, val, test;
};

using ModelFactory = std::function<std::unique_ptr<Model>()>;

// Epoch loop with seeded shuffling, per-epoch validation, best-val snapshot
// restored before the final test evaluation. `factory` builds worker replicas
// for batch-parallel gradient accumulation; instances are partitioned by
// index and reduced in worker order, so a fixed thread count gives an
// identical run every time.
TrainReport train(Model& model, const ModelFactory& factory, const TrainData& data,
                  const OptimConfig& optim, std::uint64_t seed);

// parameter value snapshot/restore in declaration order
std::vector<std::vector<double>> snapshot_params(const ParamList& params);
void restore_params(const ParamList& params, const std::vector<std::vector<double>>& values);

}  // namespace rcn

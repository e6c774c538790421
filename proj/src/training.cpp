#include "rcn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "rcn/grouping.hpp"

namespace rcn {

Adam::Adam(ParamList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const NamedTensor& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.size()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.tensor.size()), 0.0);
  }
}

void Adam::zero_grad() {
  for (NamedTensor& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi].tensor;
    const std::vector<double>& g = p.grad();
    std::vector<double>& m = m_[pi];
    std::vector<double>& v = v_[pi];
    for (int i = 0; i < p.size(); ++i) {
      const double gi = g[static_cast<std::size_t>(i)];
      if (!std::isfinite(gi))
        throw NumericError("adam: non-finite gradient in parameter '" + params_[pi].name +
                           "' at index " + std::to_string(i));
      m[static_cast<std::size_t>(i)] = cfg_.beta1 * m[static_cast<std::size_t>(i)] + (1.0 - cfg_.beta1) * gi;
      v[static_cast<std::size_t>(i)] = cfg_.beta2 * v[static_cast<std::size_t>(i)] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[static_cast<std::size_t>(i)] / bc1;
      const double vhat = v[static_cast<std::size_t>(i)] / bc2;
      double update = cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      if (cfg_.weight_decay > 0.0) update += cfg_.lr * cfg_.weight_decay * p[i];
      p[i] -= update;
    }
  }
}

Tensor cross_entropy(const Tensor& logits, int label) {
  if (logits.ndim() != 1)
    throw std::invalid_argument("cross_entropy: expected a logit vector, got " +
                                shape_str(logits.shape()));
  const int c = logits.size();
  if (label < 0 || label >= c) throw std::invalid_argument("cross_entropy: label out of range");

  double m = logits[0];
  for (int i = 1; i < c; ++i) m = std::max(m, logits[i]);
  double z = 0.0;
  for (int i = 0; i < c; ++i) z += std::exp(logits[i] - m);
  const double logz = std::log(z) + m;

  Tensor out = make_tensor({1}, Tape::active().recording() && logits.requires_grad());
  out[0] = logz - logits[label];

  if (out.requires_grad()) {
    NodePtr nl = logits.node(), no = out.node();
    Tape::active().record([nl, no, label, c, logz]() {
      const double g = no->grad[0];
      for (int i = 0; i < c; ++i) {
        const double p = std::exp(nl->value[static_cast<std::size_t>(i)] - logz);
        nl->grad[static_cast<std::size_t>(i)] += g * (p - (i == label ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

Tensor total_loss(const Tensor& logits, int label, const std::vector<Tensor>& attention_scores,
                  double lambda) {
  Tensor ce = cross_entropy(logits, label);
  if (lambda == 0.0 || attention_scores.empty()) return ce;
  Tensor h = entropy_regularizer(attention_scores[0]);
  for (std::size_t i = 1; i < attention_scores.size(); ++i)
    h = add(h, entropy_regularizer(attention_scores[i]));
  return add(ce, scale(h, lambda / static_cast<double>(attention_scores.size())));
}

namespace {

int argmax_lowest(const Tensor& logits) {
  int best = 0;
  for (int i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

struct SliceStats {
  double loss_sum = 0.0;
  double entropy_sum = 0.0;
  long long correct = 0;
};

// evaluation over [begin, end); pure, shared read-only parameters
SliceStats eval_slice(Model& model, const Dataset& data, std::size_t begin, std::size_t end) {
  NoGradScope no_grad;
  SliceStats s;
  for (std::size_t i = begin; i < end; ++i) {
    const TaskInstance& inst = data.instances[i];
    Tensor logits = model.forward(inst.objects).logits;
    s.loss_sum += cross_entropy(logits, inst.label).item();
    s.correct += argmax_lowest(logits) == inst.label ? 1 : 0;
  }
  return s;
}

std::vector<std::pair<std::size_t, std::size_t>> partition(std::size_t count, int threads) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t chunk = (count + static_cast<std::size_t>(threads) - 1) / threads;
  for (std::size_t begin = 0; begin < count; begin += chunk)
    out.emplace_back(begin, std::min(begin + chunk, count));
  return out;
}

}  // namespace

EvalResult evaluate(Model& model, const Dataset& data, int threads) {
  const std::size_t count = data.instances.size();
  if (count == 0) return {};
  SliceStats total;
  if (threads <= 1 || count < 64) {
    total = eval_slice(model, data, 0, count);
  } else {
    const auto parts = partition(count, threads);
    std::vector<SliceStats> stats(parts.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < parts.size(); ++w)
      pool.emplace_back([&, w]() { stats[w] = eval_slice(model, data, parts[w].first, parts[w].second); });
    for (std::thread& t : pool) t.join();
    for (const SliceStats& s : stats) {  // fixed reduction order
      total.loss_sum += s.loss_sum;
      total.correct += s.correct;
    }
  }
  EvalResult r;
  r.accuracy = static_cast<double>(total.correct) / static_cast<double>(count);
  r.loss = total.loss_sum / static_cast<double>(count);
  return r;
}

namespace {

double cross_entropy_value(const Tensor& logits, int label) {
  double m = logits[0];
  for (int i = 1; i < logits.size(); ++i) m = std::max(m, logits[i]);
  double z = 0.0;
  for (int i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - m);
  return std::log(z) + m - logits[label];
}

// forward/backward over a slice of the shuffled batch; gradients accumulate
// into the given model's parameters
SliceStats train_slice(Model& model, const Dataset& data, const std::vector<int>& order,
                       std::size_t begin, std::size_t end, double inv_batch, double lambda) {
  SliceStats s;
  Tape& tape = Tape::active();
  tape.clear();
  for (std::size_t bi = begin; bi < end; ++bi) {
    const TaskInstance& inst = data.instances[static_cast<std::size_t>(order[bi])];
    Model::Forward fwd = model.forward(inst.objects);
    Tensor loss = total_loss(fwd.logits, inst.label, fwd.attention_scores, lambda);
    const double lv = loss.item();
    if (!std::isfinite(lv)) throw NumericError("train: non-finite loss");
    s.loss_sum += cross_entropy_value(fwd.logits, inst.label);
    if (!fwd.attention_scores.empty()) {
      NoGradScope ng;
      double h = 0.0;
      for (const Tensor& sc : fwd.attention_scores) h += entropy_regularizer(sc).item();
      s.entropy_sum += h / static_cast<double>(fwd.attention_scores.size());
    }
    s.correct += argmax_lowest(fwd.logits) == inst.label ? 1 : 0;
    tape.backward(loss, inv_batch);
  }
  return s;
}

}  // namespace

std::vector<std::vector<double>> snapshot_params(const ParamList& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const NamedTensor& p : params) out.push_back(p.tensor.values());
  return out;
}

void restore_params(const ParamList& params, const std::vector<std::vector<double>>& values) {
  if (params.size() != values.size())
    throw std::invalid_argument("restore_params: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    const_cast<Tensor&>(params[i].tensor).values() = values[i];
}

TrainReport train(Model& model, const ModelFactory& factory, const TrainData& data,
                  const OptimConfig& optim, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report;
  report.seed = seed;

  if (data.train.instances.empty()) throw std::invalid_argument("train: empty training set");
  const double lambda =
      optim.entropy_coeff > 0.0
          ? optim.entropy_coeff * entropy_scale(data.train.n_classes, data.train.n_objects)
          : 0.0;

  Adam adam(model.params(), optim.adam);
  Rng shuffle_rng = Rng(seed).split("shuffle");

  const int threads = std::max(1, optim.threads);
  std::vector<std::unique_ptr<Model>> workers;
  if (threads > 1) {
    if (!factory) throw std::invalid_argument("train: threads > 1 requires a model factory");
    for (int w = 0; w < threads; ++w) workers.push_back(factory());
  }

  std::vector<int> order(data.train.instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::vector<std::vector<double>> best;
  int epochs_since_best = 0;

  for (int epoch = 0; epoch < optim.epochs; ++epoch) {
    double lr = optim.adam.lr;
    if (optim.lr_schedule == "cosine")
      lr = optim.adam.lr * 0.5 *
           (1.0 + std::cos(3.14159265358979323846 * epoch / std::max(1, optim.epochs)));
    adam.set_lr(lr);

    // seeded shuffle
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.uniform_int(i);
      std::swap(order[i - 1], order[j]);
    }

    SliceStats epoch_stats;
    const std::size_t total = order.size();
    for (std::size_t start = 0; start < total; start += static_cast<std::size_t>(optim.batch_size)) {
      const std::size_t stop = std::min(total, start + static_cast<std::size_t>(optim.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(stop - start);

      adam.zero_grad();
      if (threads == 1) {
        const SliceStats s = train_slice(model, data.train, order, start, stop, inv_batch, lambda);
        epoch_stats.loss_sum += s.loss_sum;
        epoch_stats.entropy_sum += s.entropy_sum;
        epoch_stats.correct += s.correct;
      } else {
        const auto parts = partition(stop - start, threads);
        const std::vector<std::vector<double>> master = snapshot_params(model.params());
        std::vector<SliceStats> stats(parts.size());
        std::vector<std::exception_ptr> errors(parts.size());
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < parts.size(); ++w) {
          pool.emplace_back([&, w]() {
            try {
              Model& wm = *workers[w];
              restore_params(wm.params(), master);
              for (NamedTensor& p : wm.params()) p.tensor.zero_grad();
              stats[w] = train_slice(wm, data.train, order, start + parts[w].first,
                                     start + parts[w].second, inv_batch, lambda);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        }
        for (std::thread& t : pool) t.join();
        for (const std::exception_ptr& e : errors)
          if (e) std::rethrow_exception(e);
        // reduce gradients in worker order
        ParamList& mp = model.params();
        for (std::size_t w = 0; w < parts.size(); ++w) {
          const ParamList& wp = workers[w]->params();
          for (std::size_t pi = 0; pi < mp.size(); ++pi) {
            std::vector<double>& dst = mp[pi].tensor.grad();
            const std::vector<double>& src = wp[pi].tensor.grad();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
          }
          epoch_stats.loss_sum += stats[w].loss_sum;
          epoch_stats.entropy_sum += stats[w].entropy_sum;
          epoch_stats.correct += stats[w].correct;
        }
      }
      adam.step();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = epoch_stats.loss_sum / static_cast<double>(total);
    rec.train_acc = static_cast<double>(epoch_stats.correct) / static_cast<double>(total);
    rec.entropy = epoch_stats.entropy_sum / static_cast<double>(total);

    const EvalResult val = evaluate(model, data.val, threads);
    rec.val_loss = val.loss;
    rec.val_acc = val.accuracy;
    report.epochs.push_back(rec);

    if (report.best_epoch < 0 || val.accuracy > report.best_val_acc) {
      report.best_epoch = epoch;
      report.best_val_acc = val.accuracy;
      best = snapshot_params(model.params());
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    if (optim.early_stop_patience > 0 && epochs_since_best >= optim.early_stop_patience) break;
  }

  if (!best.empty()) restore_params(model.params(), best);
  const EvalResult test = evaluate(model, data.test, threads);
  report.test_accuracy = test.accuracy;
  report.test_loss = test.loss;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace rcn

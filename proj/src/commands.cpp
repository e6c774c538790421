#include "rcn/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rcn/analysis.hpp"
#include "rcn/gradcheck_suite.hpp"
#include "rcn/serialize.hpp"

namespace rcn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

TrainData build_datasets(const RunConfig& cfg) {
  TrainData data;
  data.train = generate_dataset(cfg.task, SplitPart::kTrain, cfg.train_size, cfg.seed);
  data.val = generate_dataset(cfg.task, SplitPart::kVal, cfg.val_size, cfg.seed);
  data.test = generate_dataset(cfg.task, SplitPart::kTest, cfg.test_size, cfg.seed);
  return data;
}

}  // namespace

void write_metrics_jsonl(const std::string& path, const TrainReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("metrics: cannot open " + path);
  for (const EpochRecord& r : report.epochs) {
    json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["train_acc"] = r.train_acc;
    j["val_loss"] = r.val_loss;
    j["val_acc"] = r.val_acc;
    j["entropy"] = r.entropy;
    j["lr"] = r.lr;
    os << j.dump() << '\n';
  }
}

void write_summary_csv(const std::string& path, const RunConfig& cfg, const TrainReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("summary: cannot open " + path);
  os << "config_hash,seed,epochs_run,best_epoch,best_val_acc,test_acc,test_loss,wall_seconds\n";
  os << cfg.hash() << ',' << report.seed << ',' << report.epochs.size() << ','
     << report.best_epoch << ',' << fmt(report.best_val_acc) << ','
     << fmt(report.test_accuracy) << ',' << fmt(report.test_loss) << ','
     << fmt(report.wall_seconds) << '\n';
}

void cmd_gen_data(const RunConfig& cfg, bool quiet) {
  fs::create_directories(cfg.out);
  const TrainData data = build_datasets(cfg);
  const struct {
    const Dataset* ds;
    const char* name;
  } parts[] = {{&data.train, "train"}, {&data.val, "val"}, {&data.test, "test"}};
  for (const auto& p : parts) {
    const std::string base = cfg.out + "/" + p.name;
    save_dataset_jsonl(base + ".jsonl", *p.ds);
    save_dataset_binary(base + ".bin", *p.ds);
    if (!quiet)
      std::printf("wrote %s.{jsonl,bin} (%zu instances)\n", base.c_str(),
                  p.ds->instances.size());
  }
}

RunResult run_training(const RunConfig& cfg, bool quiet) {
  const TrainData data = build_datasets(cfg);

  Rng model_rng = Rng(cfg.seed).split("model");
  std::unique_ptr<Model> model = build_model(cfg.model, model_rng);
  ModelFactory factory = [&cfg]() {
    Rng r(0);  // worker replicas receive master values each batch
    return build_model(cfg.model, r);
  };

  RunResult result;
  result.spec = cfg.model;
  result.report = train(*model, factory, data, cfg.optim, cfg.seed);
  result.best_params = snapshot_params(model->params());
  if (!quiet)
    std::printf("seed %llu: best val %.4f (epoch %d), test %.4f over %zu epochs\n",
                static_cast<unsigned long long>(cfg.seed), result.report.best_val_acc,
                result.report.best_epoch, result.report.test_accuracy,
                result.report.epochs.size());
  return result;
}

namespace {

void train_single(const RunConfig& cfg, bool quiet) {
  fs::create_directories(cfg.out);
  RunResult result = run_training(cfg, quiet);

  write_metrics_jsonl(cfg.out + "/metrics.jsonl", result.report);
  write_summary_csv(cfg.out + "/summary.csv", cfg, result.report);

  Rng rng(cfg.seed);
  std::unique_ptr<Model> best = build_model(cfg.model, rng);
  restore_params(best->params(), result.best_params);
  save_checkpoint(cfg.out + "/checkpoint.rcn", cfg.model, best->params(), cfg.seed);
}

}  // namespace

void cmd_train(const RunConfig& cfg, bool quiet) {
  if (cfg.task.name == "relgames" && cfg.all_games) {
    static const RelGame kGames[] = {RelGame::kSame, RelGame::kBetween, RelGame::kOccurs,
                                     RelGame::kXoccurs, RelGame::kMatchPattern};
    for (RelGame g : kGames) {
      RunConfig sub = cfg;
      sub.all_games = false;
      sub.task.game = g;
      sub.out = cfg.out + "/" + relgame_to_string(g);
      if (!quiet) std::printf("== %s ==\n", relgame_to_string(g).c_str());
      train_single(sub, quiet);
    }
    return;
  }
  train_single(cfg, quiet);
}

void cmd_eval(const std::string& checkpoint_path, const std::string& dataset_path, bool quiet) {
  (void)quiet;
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  std::unique_ptr<Model> model = model_from_checkpoint(ck);
  const Dataset data = dataset_path.size() > 4 &&
                               dataset_path.substr(dataset_path.size() - 4) == ".bin"
                           ? load_dataset_binary(dataset_path)
                           : load_dataset_jsonl(dataset_path);
  const EvalResult r = evaluate(*model, data, 1);
  json j;
  j["accuracy"] = r.accuracy;
  j["loss"] = r.loss;
  j["count"] = data.instances.size();
  std::printf("%s\n", j.dump().c_str());
}

void cmd_gradcheck(std::uint64_t seed, bool quiet) {
  const std::vector<SuiteResult> results = run_gradcheck_suite(seed);
  bool all_pass = true;
  for (const SuiteResult& r : results) {
    all_pass = all_pass && r.pass;
    if (!quiet || !r.pass)
      std::printf("[%s] %-32s max_rel_err %.3e (tol %.0e)\n", r.pass ? "PASS" : "FAIL",
                  r.name.c_str(), r.error, r.tolerance);
  }
  if (!all_pass) throw NumericError("gradcheck: at least one check exceeded tolerance");
}

void cmd_analyze(const std::string& checkpoint_path, const std::string& mode,
                 const std::string& out_dir, std::uint64_t seed, bool quiet) {
  fs::create_directories(out_dir);
  if (mode == "set-geometry") {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    std::unique_ptr<Model> model = model_from_checkpoint(ck);
    auto* rcnet = dynamic_cast<RelConvNet*>(model.get());
    if (!rcnet) throw std::runtime_error("analyze: set-geometry needs a relconvnet checkpoint");
    const std::string csv = out_dir + "/set_geometry.csv";
    const std::vector<GeometryRow> rows = export_set_geometry(*rcnet, 1000, seed, csv);
    const double probe = logistic_probe_accuracy(rows);
    if (!quiet) std::printf("{\"rows\": %zu, \"probe_accuracy\": %.4f}\n", rows.size(), probe);
  } else if (mode == "group-attention") {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    std::unique_ptr<Model> model = model_from_checkpoint(ck);
    auto* rcnet = dynamic_cast<RelConvNet*>(model.get());
    if (!rcnet) throw std::runtime_error("analyze: group-attention needs a relconvnet checkpoint");
    TaskSpec spec;
    spec.name = "relgames";
    spec.game = RelGame::kMatchPattern;
    spec.vocab_dim = ck.spec.d_in;
    const Dataset one = generate_dataset(spec, SplitPart::kVal, 1, seed);
    export_group_attention(*rcnet, one.instances.front(), out_dir + "/group_attention.json");
    if (!quiet) std::printf("wrote %s/group_attention.json\n", out_dir.c_str());
  } else if (mode == "context-norm-demo") {
    // closed-form behaviour of context normalisation on windows of 2 and 3
    Tensor gain = Tensor::ones({1});
    Tensor shift = Tensor::zeros({1});
    Rng rng(seed);
    json demo = json::array();
    for (int t = 0; t < 8; ++t) {
      const double x = rng.uniform(-20, 20), y = rng.uniform(-20, 20);
      Tensor pair = Tensor::from_data({2, 1}, {x, y});
      Tensor cn2 = context_normalize(pair, {{0, 1}}, gain, shift);
      Tensor triple = Tensor::from_data({3, 1}, {x, x, y});
      Tensor cn3 = context_normalize(triple, {{0, 1, 2}}, gain, shift);
      demo.push_back({{"x", x},
                      {"y", y},
                      {"cn_pair", {cn2[0], cn2[1]}},
                      {"cn_triple", {cn3[0], cn3[1], cn3[2]}}});
    }
    std::ofstream os(out_dir + "/context_norm_demo.json");
    os << demo.dump(2) << '\n';
    if (!quiet) std::printf("wrote %s/context_norm_demo.json\n", out_dir.c_str());
  } else {
    throw ConfigError("analyze: unknown mode '" + mode + "'");
  }
}

}  // namespace rcn

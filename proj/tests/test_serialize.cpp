#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "rcn/config.hpp"
#include "rcn/models.hpp"
#include "rcn/random.hpp"
#include "rcn/serialize.hpp"
#include "rcn/tasks.hpp"

using namespace rcn;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

ModelSpec attention_spec() {
  ModelSpec spec;
  spec.type = "relconvnet";
  spec.n_objects = 6;
  spec.d_in = 5;
  RelConvBlockConfig b;
  b.d_r = 2;
  b.d_proj = 3;
  b.s = 3;
  b.n_f = 4;
  b.grouping = GroupingKind::kAttention;
  b.n_g = 3;
  b.d_key = 4;
  b.key_mode = KeyMode::kPositionalFeature;
  spec.blocks = {b};
  spec.readout.hidden = {8, 4};
  return spec;
}

}  // namespace

TEST_CASE("checkpoint round trip restores parameters and behaviour") {
  Rng rng(1);
  ModelSpec spec = attention_spec();
  std::unique_ptr<Model> model = build_model(spec, rng);

  TempFile tmp("test_ckpt.rcn");
  save_checkpoint(tmp.path, spec, model->params(), 42);
  const Checkpoint ck = load_checkpoint(tmp.path);
  CHECK(ck.seed == 42);
  CHECK(ck.arrays.size() == model->params().size());

  std::unique_ptr<Model> restored = model_from_checkpoint(ck);
  for (std::size_t i = 0; i < restored->params().size(); ++i) {
    CHECK(restored->params()[i].name == model->params()[i].name);
    CHECK(restored->params()[i].tensor.values() == model->params()[i].tensor.values());
  }

  Tensor X = make_tensor({6, 5}, false);
  Rng xr(2);
  for (int i = 0; i < X.size(); ++i) X[i] = xr.uniform(-1, 1);
  NoGradScope ng;
  Tensor a = model->forward(X).logits;
  Tensor b = restored->forward(X).logits;
  CHECK(a.values() == b.values());
}

TEST_CASE("model spec json round trip for every model type") {
  for (const std::string type : {"relconvnet", "corelnet", "predinet", "transformer"}) {
    ModelSpec spec = attention_spec();
    spec.type = type;
    ModelSpec back = model_spec_from_json(model_spec_to_json(spec));
    CHECK(back.type == spec.type);
    CHECK(back.n_objects == spec.n_objects);
    CHECK(back.d_in == spec.d_in);
    CHECK(back.readout.hidden == spec.readout.hidden);
    if (type == "relconvnet") {
      REQUIRE(back.blocks.size() == 1);
      CHECK(back.blocks[0].n_g == spec.blocks[0].n_g);
      CHECK(back.blocks[0].key_mode == spec.blocks[0].key_mode);
    }
  }
}

TEST_CASE("dataset files round trip exactly in both formats") {
  TaskSpec task;
  task.name = "set";
  Dataset data = generate_dataset(task, SplitPart::kTrain, 12, 77);

  TempFile jl("test_data.jsonl");
  save_dataset_jsonl(jl.path, data);
  Dataset from_jsonl = load_dataset_jsonl(jl.path);
  REQUIRE(from_jsonl.instances.size() == data.instances.size());
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    CHECK(from_jsonl.instances[i].label == data.instances[i].label);
    CHECK(from_jsonl.instances[i].objects.values() == data.instances[i].objects.values());
  }

  TempFile bin("test_data.bin");
  save_dataset_binary(bin.path, data);
  Dataset from_bin = load_dataset_binary(bin.path);
  REQUIRE(from_bin.instances.size() == data.instances.size());
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    CHECK(from_bin.instances[i].label == data.instances[i].label);
    CHECK(from_bin.instances[i].objects.values() == data.instances[i].objects.values());
  }
  CHECK(from_bin.task == "set");
  CHECK(from_bin.n_objects == 5);
}

TEST_CASE("run config parses with defaults and strict keys") {
  nlohmann::json j = {
      {"task", {{"name", "set"}, {"n", 5}}},
      {"model",
       {{"type", "relconvnet"},
        {"blocks", nlohmann::json::array({{{"d_r", 4}, {"s", 3}, {"n_f", 8}}})}}},
      {"optim", {{"lr", 0.001}, {"batch_size", 64}}},
      {"seed", 3},
  };
  RunConfig cfg = run_config_from_json(j);
  CHECK(cfg.task.name == "set");
  CHECK(cfg.model.n_objects == 5);
  CHECK(cfg.model.d_in == 12);
  CHECK(cfg.model.blocks[0].d_r == 4);
  CHECK(cfg.optim.batch_size == 64);
  CHECK(cfg.optim.adam.eps == 1e-7);
  CHECK(cfg.seed == 3);

  nlohmann::json bad = j;
  bad["task"]["cards"] = 81;
  CHECK_THROWS_WITH_AS(run_config_from_json(bad), "config: unknown key 'task.cards'",
                       ConfigError);

  nlohmann::json bad2 = j;
  bad2["optim"]["lr_schedule"] = "linear";
  CHECK_THROWS_AS(run_config_from_json(bad2), ConfigError);

  nlohmann::json bad3 = j;
  bad3["model"].erase("type");
  CHECK_THROWS_AS(run_config_from_json(bad3), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
  nlohmann::json j = {
      {"task", {{"name", "set"}}},
      {"model",
       {{"type", "relconvnet"},
        {"blocks", nlohmann::json::array({{{"d_r", 4}, {"s", 3}, {"n_f", 8}}})}}},
  };
  RunConfig a = run_config_from_json(j);
  RunConfig b = run_config_from_json(j);
  CHECK(a.hash() == b.hash());
  b.seed = 99;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("bundled reference configs parse") {
  namespace fs = std::filesystem;
  const fs::path configs = fs::path(CONFIG_DIR);
  int found = 0;
  for (const char* name : {"set-desk.json", "set-paper-scale.json", "relgames-all.json",
                           "match-to-sample.json", "gradcheck.json", "smoke.json"}) {
    const fs::path p = configs / name;
    REQUIRE_MESSAGE(fs::exists(p), name);
    RunConfig cfg = load_run_config(p.string());
    CHECK(!cfg.out.empty());
    ++found;
  }
  CHECK(found == 6);
}

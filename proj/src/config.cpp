#include "rcn/config.hpp"

#include <fstream>
#include <set>

#include "rcn/serialize.hpp"

namespace rcn {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + path + it.key() + "'");
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + key + "': " + e.what());
  }
}

TaskSpec parse_task(const json& j, bool& all_games) {
  check_keys(j, "task.",
             {"name", "n", "noise_sigma", "split_seed", "game", "train_vocab", "test_vocab",
              "vocab_size", "vocab_dim", "vocab_seed"});
  TaskSpec t;
  t.name = get_or<std::string>(j, "name", "set");
  if (t.name != "set" && t.name != "relgames" && t.name != "match_to_sample")
    throw ConfigError("config: unknown task name '" + t.name + "'");
  t.n = get_or<int>(j, "n", 5);
  t.noise_sigma = get_or<double>(j, "noise_sigma", 0.0);
  t.split_seed = get_or<std::uint64_t>(j, "split_seed", 7);
  const std::string game = get_or<std::string>(j, "game", "match_pattern");
  all_games = game == "all";
  if (!all_games) t.game = relgame_from_string(game);
  t.train_vocab = get_or<std::string>(j, "train_vocab", "pentominoes");
  t.test_vocab = get_or<std::string>(j, "test_vocab", "hexominoes");
  t.vocab_size = get_or<int>(j, "vocab_size", 16);
  t.vocab_dim = get_or<int>(j, "vocab_dim", 12);
  t.vocab_seed = get_or<std::uint64_t>(j, "vocab_seed", 5);
  return t;
}

RelConvBlockConfig parse_block(const json& j, const std::string& path) {
  check_keys(j, path,
             {"d_r", "d_proj", "symmetric_relations", "phi_hidden", "s", "n_f", "grouping",
              "given_groups", "n_g", "key_mode", "d_key", "n_max", "input_queries",
              "symmetric_rip", "pool", "residual"});
  RelConvBlockConfig b;
  b.d_r = get_or<int>(j, "d_r", b.d_r);
  b.d_proj = get_or<int>(j, "d_proj", b.d_proj);
  b.symmetric_relations = get_or<bool>(j, "symmetric_relations", b.symmetric_relations);
  b.phi_hidden = get_or<int>(j, "phi_hidden", 0);
  b.s = get_or<int>(j, "s", b.s);
  b.n_f = get_or<int>(j, "n_f", b.n_f);
  b.grouping = grouping_from_string(get_or<std::string>(j, "grouping", "discrete_all"));
  if (j.contains("given_groups")) b.given_groups = j.at("given_groups").get<std::vector<Group>>();
  b.n_g = get_or<int>(j, "n_g", b.n_g);
  b.key_mode = key_mode_from_string(get_or<std::string>(j, "key_mode", "positional"));
  b.d_key = get_or<int>(j, "d_key", b.d_key);
  b.n_max = get_or<int>(j, "n_max", b.n_max);
  b.input_queries = get_or<bool>(j, "input_queries", false);
  b.symmetric_rip = get_or<bool>(j, "symmetric_rip", false);
  const std::string pool = get_or<std::string>(j, "pool", "max");
  if (pool != "max" && pool != "mean") throw ConfigError("config: pool must be max or mean");
  b.pool = pool == "mean" ? Pool::kMean : Pool::kMax;
  b.residual = get_or<bool>(j, "residual", false);
  return b;
}

ModelSpec parse_model(const json& j, const TaskSpec& task) {
  check_keys(j, "model.",
             {"type", "readout", "blocks", "d_embed", "key_dim", "heads", "relations", "d_model",
              "layers", "d_ff"});
  ModelSpec m;
  if (!j.contains("type")) throw ConfigError("config: model.type is required");
  m.type = j.at("type").get<std::string>();
  m.n_objects = task.object_count();
  m.d_in = task.object_dim();
  m.n_classes = task.n_classes();
  if (j.contains("readout")) {
    check_keys(j.at("readout"), "model.readout.", {"hidden", "sum_pool"});
    m.readout.hidden = get_or<std::vector<int>>(j.at("readout"), "hidden", m.readout.hidden);
    m.readout.sum_pool = get_or<bool>(j.at("readout"), "sum_pool", false);
  }
  if (m.type == "relconvnet") {
    if (!j.contains("blocks") || j.at("blocks").empty())
      throw ConfigError("config: relconvnet needs model.blocks");
    int bi = 0;
    for (const json& bj : j.at("blocks"))
      m.blocks.push_back(parse_block(bj, "model.blocks[" + std::to_string(bi++) + "]."));
  } else if (m.type == "corelnet") {
    m.corelnet_d_embed = get_or<int>(j, "d_embed", m.corelnet_d_embed);
  } else if (m.type == "predinet") {
    m.predinet_key_dim = get_or<int>(j, "key_dim", m.predinet_key_dim);
    m.predinet_heads = get_or<int>(j, "heads", m.predinet_heads);
    m.predinet_relations = get_or<int>(j, "relations", m.predinet_relations);
  } else if (m.type == "transformer") {
    m.tf_d_model = get_or<int>(j, "d_model", m.tf_d_model);
    m.tf_heads = get_or<int>(j, "heads", m.tf_heads);
    m.tf_layers = get_or<int>(j, "layers", m.tf_layers);
    m.tf_d_ff = get_or<int>(j, "d_ff", m.tf_d_ff);
  } else {
    throw ConfigError("config: unknown model type '" + m.type + "'");
  }
  return m;
}

OptimConfig parse_optim(const json& j) {
  check_keys(j, "optim.",
             {"lr", "beta1", "beta2", "eps", "weight_decay", "batch_size", "epochs",
              "entropy_coeff", "early_stop_patience", "lr_schedule", "threads"});
  OptimConfig o;
  o.adam.lr = get_or<double>(j, "lr", 1e-3);
  o.adam.beta1 = get_or<double>(j, "beta1", 0.9);
  o.adam.beta2 = get_or<double>(j, "beta2", 0.999);
  o.adam.eps = get_or<double>(j, "eps", 1e-7);
  o.adam.weight_decay = get_or<double>(j, "weight_decay", 0.0);
  o.batch_size = get_or<int>(j, "batch_size", 128);
  o.epochs = get_or<int>(j, "epochs", 100);
  o.entropy_coeff = get_or<double>(j, "entropy_coeff", 0.0);
  o.early_stop_patience = get_or<int>(j, "early_stop_patience", 0);
  o.lr_schedule = get_or<std::string>(j, "lr_schedule", "constant");
  if (o.lr_schedule != "constant" && o.lr_schedule != "cosine")
    throw ConfigError("config: lr_schedule must be constant or cosine");
  o.threads = get_or<int>(j, "threads", 1);
  if (o.batch_size < 1 || o.epochs < 0 || o.threads < 1)
    throw ConfigError("config: batch_size/epochs/threads out of range");
  return o;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  check_keys(j, "",
             {"task", "model", "optim", "out", "seed", "train_size", "val_size", "test_size"});
  RunConfig c;
  if (!j.contains("task")) throw ConfigError("config: task block is required");
  if (!j.contains("model")) throw ConfigError("config: model block is required");
  c.task = parse_task(j.at("task"), c.all_games);
  c.model = parse_model(j.at("model"), c.task);
  c.optim = j.contains("optim") ? parse_optim(j.at("optim")) : OptimConfig{};
  c.out = get_or<std::string>(j, "out", "runs/out");
  c.seed = get_or<std::uint64_t>(j, "seed", 1);
  c.train_size = get_or<int>(j, "train_size", 1000);
  c.val_size = get_or<int>(j, "val_size", 200);
  c.test_size = get_or<int>(j, "test_size", 200);
  if (c.train_size < 1 || c.val_size < 0 || c.test_size < 0)
    throw ConfigError("config: dataset sizes out of range");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // byte offset -> line number for the diagnostic
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i)
      if (text[i] == '\n') ++line;
    throw ConfigError("config: parse error in " + path + " at line " + std::to_string(line) +
                      ": " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
}

json RunConfig::to_json() const {
  json j;
  j["task"] = {{"name", task.name},
               {"n", task.n},
               {"noise_sigma", task.noise_sigma},
               {"split_seed", task.split_seed},
               {"game", all_games ? "all" : relgame_to_string(task.game)},
               {"train_vocab", task.train_vocab},
               {"test_vocab", task.test_vocab},
               {"vocab_size", task.vocab_size},
               {"vocab_dim", task.vocab_dim},
               {"vocab_seed", task.vocab_seed}};
  j["model"] = model_spec_to_json(model);
  j["optim"] = {{"lr", optim.adam.lr},
                {"beta1", optim.adam.beta1},
                {"beta2", optim.adam.beta2},
                {"eps", optim.adam.eps},
                {"weight_decay", optim.adam.weight_decay},
                {"batch_size", optim.batch_size},
                {"epochs", optim.epochs},
                {"entropy_coeff", optim.entropy_coeff},
                {"early_stop_patience", optim.early_stop_patience},
                {"lr_schedule", optim.lr_schedule},
                {"threads", optim.threads}};
  j["out"] = out;
  j["seed"] = seed;
  j["train_size"] = train_size;
  j["val_size"] = val_size;
  j["test_size"] = test_size;
  return j;
}

std::string RunConfig::hash() const {
  const std::string s = to_json().dump();
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace rcn

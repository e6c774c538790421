#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rcn/commands.hpp"
#include "rcn/config.hpp"
#include "rcn/training.hpp"

namespace {

rcn::RunConfig load_with_overrides(const std::string& path,
                                   const std::optional<std::uint64_t>& seed,
                                   const std::optional<std::string>& out) {
  rcn::RunConfig cfg = rcn::load_run_config(path);
  if (seed) cfg.seed = *seed;
  if (out) cfg.out = *out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relational convolutional networks"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool quiet = false;
  app.add_flag("--quiet", quiet, "suppress progress output");

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "run configuration file");
    if (needs_config) opt->required();
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--out", out, "override the output directory");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "write datasets (JSONL and binary)");
  add_common(gen, true);

  CLI::App* tr = app.add_subcommand("train", "train a model and write metrics + checkpoint");
  add_common(tr, true);

  std::string ckpt_path, dataset_path;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset file");
  ev->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  ev->add_option("--dataset", dataset_path, "dataset file (.jsonl or .bin)")->required();

  CLI::App* gc = app.add_subcommand("gradcheck", "run the finite-difference suite");
  gc->add_option("--seed", seed, "suite seed");

  std::string mode;
  CLI::App* an = app.add_subcommand("analyze", "write analysis artifacts for a checkpoint");
  an->add_option("--checkpoint", ckpt_path, "checkpoint file");
  an->add_option("--mode", mode, "set-geometry | group-attention | context-norm-demo")->required();
  an->add_option("--seed", seed, "analysis seed");
  an->add_option("--out", out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      rcn::cmd_gen_data(load_with_overrides(config_path, seed, out), quiet);
    } else if (tr->parsed()) {
      rcn::cmd_train(load_with_overrides(config_path, seed, out), quiet);
    } else if (ev->parsed()) {
      rcn::cmd_eval(ckpt_path, dataset_path, quiet);
    } else if (gc->parsed()) {
      rcn::cmd_gradcheck(seed.value_or(1), quiet);
    } else if (an->parsed()) {
      rcn::cmd_analyze(ckpt_path, mode, out.value_or("runs/analysis"), seed.value_or(1), quiet);
    }
  } catch (const rcn::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const rcn::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

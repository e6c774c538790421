#pragma once

#include <string>

#include "rcn/config.hpp"

namespace rcn {

// Library-level command implementations; the CLI maps exceptions to exit
// codes (2 config, 3 numerical, 1 otherwise).

// writes <out>/<split>.jsonl and <out>/<split>.bin for train/val/test
void cmd_gen_data(const RunConfig& cfg, bool quiet);

// trains one model per config (or one per game for relgames "all"); writes
// metrics.jsonl, summary.csv and checkpoint.rcn under the run directory
void cmd_train(const RunConfig& cfg, bool quiet);

// prints accuracy/loss as JSON for a checkpoint over a dataset file
void cmd_eval(const std::string& checkpoint_path, const std::string& dataset_path, bool quiet);

// full finite-difference suite; throws NumericError when any check fails
void cmd_gradcheck(std::uint64_t seed, bool quiet);

// mode: set-geometry | group-attention | context-norm-demo
void cmd_analyze(const std::string& checkpoint_path, const std::string& mode,
                 const std::string& out_dir, std::uint64_t seed, bool quiet);

// single-run helper shared by cmd_train and the acceptance suite
struct RunResult {
  TrainReport report;
  ModelSpec spec;
  std::vector<std::vector<double>> best_params;
};
RunResult run_training(const RunConfig& cfg, bool quiet);

void write_metrics_jsonl(const std::string& path, const TrainReport& report);
void write_summary_csv(const std::string& path, const RunConfig& cfg, const TrainReport& report);

}  // namespace rcn

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "rcn/models.hpp"
#include "rcn/tasks.hpp"
#include "rcn/training.hpp"

namespace rcn {

// configuration problems map to exit code 2
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  TaskSpec task;
  bool all_games = false;  // relgames: run every game sequentially
  int train_size = 1000;
  int val_size = 200;
  int test_size = 200;
  ModelSpec model;  // n_objects / d_in filled from the task block
  OptimConfig optim;
  std::string out = "runs/out";
  std::uint64_t seed = 1;

  // canonical serialised form (used for hashing and reporting)
  nlohmann::json to_json() const;
  std::string hash() const;
};

// strict: unknown keys are rejected with their full path
RunConfig run_config_from_json(const nlohmann::json& j);

// parse errors carry line/key diagnostics
RunConfig load_run_config(const std::string& path);

}  // namespace rcn

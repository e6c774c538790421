#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rcn/models.hpp"
#include "rcn/params.hpp"
#include "rcn/tasks.hpp"

namespace rcn {

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// Checkpoint file: one JSON header line {spec, shapes, seed} followed by the
// raw little-endian f64 arrays in parameter declaration order.
void save_checkpoint(const std::string& path, const ModelSpec& spec, const ParamList& params,
                     std::uint64_t seed);

struct Checkpoint {
  ModelSpec spec;
  std::vector<std::pair<std::string, std::vector<double>>> arrays;
  std::uint64_t seed = 0;
};

Checkpoint load_checkpoint(const std::string& path);

// rebuilds the model and overwrites its parameters with the stored arrays
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck);

// dataset files: JSON-lines (one instance per line) and a packed binary twin
void save_dataset_jsonl(const std::string& path, const Dataset& data);
Dataset load_dataset_jsonl(const std::string& path);
void save_dataset_binary(const std::string& path, const Dataset& data);
Dataset load_dataset_binary(const std::string& path);

}  // namespace rcn

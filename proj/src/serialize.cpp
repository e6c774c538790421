#include "rcn/serialize.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

namespace rcn {

using nlohmann::json;

namespace {

void write_f64_le(std::ostream& os, const double* data, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(data[i]);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    os.write(bytes, 8);
  }
}

void read_f64_le(std::istream& is, double* data, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    char bytes[8];
    is.read(bytes, 8);
    if (!is) throw std::runtime_error("checkpoint/dataset: truncated float array");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
    data[i] = std::bit_cast<double>(bits);
  }
}

json block_to_json(const RelConvBlockConfig& b) {
  json j;
  j["d_r"] = b.d_r;
  j["d_proj"] = b.d_proj;
  j["symmetric_relations"] = b.symmetric_relations;
  j["phi_hidden"] = b.phi_hidden;
  j["s"] = b.s;
  j["n_f"] = b.n_f;
  j["grouping"] = grouping_to_string(b.grouping);
  if (!b.given_groups.empty()) j["given_groups"] = b.given_groups;
  j["n_g"] = b.n_g;
  j["key_mode"] = key_mode_to_string(b.key_mode);
  j["d_key"] = b.d_key;
  j["n_max"] = b.n_max;
  j["input_queries"] = b.input_queries;
  j["symmetric_rip"] = b.symmetric_rip;
  j["pool"] = b.pool == Pool::kMax ? "max" : "mean";
  j["residual"] = b.residual;
  return j;
}

RelConvBlockConfig block_from_json(const json& j) {
  RelConvBlockConfig b;
  b.d_r = j.at("d_r").get<int>();
  b.d_proj = j.at("d_proj").get<int>();
  b.symmetric_relations = j.at("symmetric_relations").get<bool>();
  b.phi_hidden = j.at("phi_hidden").get<int>();
  b.s = j.at("s").get<int>();
  b.n_f = j.at("n_f").get<int>();
  b.grouping = grouping_from_string(j.at("grouping").get<std::string>());
  if (j.contains("given_groups")) b.given_groups = j.at("given_groups").get<std::vector<Group>>();
  b.n_g = j.at("n_g").get<int>();
  b.key_mode = key_mode_from_string(j.at("key_mode").get<std::string>());
  b.d_key = j.at("d_key").get<int>();
  b.n_max = j.at("n_max").get<int>();
  b.input_queries = j.at("input_queries").get<bool>();
  b.symmetric_rip = j.at("symmetric_rip").get<bool>();
  b.pool = j.at("pool").get<std::string>() == "mean" ? Pool::kMean : Pool::kMax;
  b.residual = j.at("residual").get<bool>();
  return b;
}

}  // namespace

json model_spec_to_json(const ModelSpec& spec) {
  json j;
  j["type"] = spec.type;
  j["n_objects"] = spec.n_objects;
  j["d_in"] = spec.d_in;
  j["n_classes"] = spec.n_classes;
  j["readout"] = {{"hidden", spec.readout.hidden}, {"sum_pool", spec.readout.sum_pool}};
  if (spec.type == "relconvnet") {
    j["blocks"] = json::array();
    for (const RelConvBlockConfig& b : spec.blocks) j["blocks"].push_back(block_to_json(b));
  } else if (spec.type == "corelnet") {
    j["d_embed"] = spec.corelnet_d_embed;
  } else if (spec.type == "predinet") {
    j["key_dim"] = spec.predinet_key_dim;
    j["heads"] = spec.predinet_heads;
    j["relations"] = spec.predinet_relations;
  } else if (spec.type == "transformer") {
    j["d_model"] = spec.tf_d_model;
    j["heads"] = spec.tf_heads;
    j["layers"] = spec.tf_layers;
    j["d_ff"] = spec.tf_d_ff;
  }
  return j;
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  spec.type = j.at("type").get<std::string>();
  spec.n_objects = j.at("n_objects").get<int>();
  spec.d_in = j.at("d_in").get<int>();
  spec.n_classes = j.at("n_classes").get<int>();
  if (j.contains("readout")) {
    spec.readout.hidden = j.at("readout").at("hidden").get<std::vector<int>>();
    spec.readout.sum_pool = j.at("readout").at("sum_pool").get<bool>();
  }
  if (spec.type == "relconvnet") {
    for (const json& b : j.at("blocks")) spec.blocks.push_back(block_from_json(b));
  } else if (spec.type == "corelnet") {
    spec.corelnet_d_embed = j.at("d_embed").get<int>();
  } else if (spec.type == "predinet") {
    spec.predinet_key_dim = j.at("key_dim").get<int>();
    spec.predinet_heads = j.at("heads").get<int>();
    spec.predinet_relations = j.at("relations").get<int>();
  } else if (spec.type == "transformer") {
    spec.tf_d_model = j.at("d_model").get<int>();
    spec.tf_heads = j.at("heads").get<int>();
    spec.tf_layers = j.at("layers").get<int>();
    spec.tf_d_ff = j.at("d_ff").get<int>();
  }
  return spec;
}

void save_checkpoint(const std::string& path, const ModelSpec& spec, const ParamList& params,
                     std::uint64_t seed) {
  json header;
  header["spec"] = model_spec_to_json(spec);
  header["seed"] = seed;
  header["shapes"] = json::array();
  for (const NamedTensor& p : params)
    header["shapes"].push_back({{"name", p.name}, {"shape", p.tensor.shape()}});

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os << header.dump() << '\n';
  for (const NamedTensor& p : params)
    write_f64_le(os, p.tensor.data(), static_cast<std::size_t>(p.tensor.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("checkpoint: missing header");
  const json header = json::parse(line);

  Checkpoint ck;
  ck.spec = model_spec_from_json(header.at("spec"));
  ck.seed = header.at("seed").get<std::uint64_t>();
  for (const json& s : header.at("shapes")) {
    const std::string name = s.at("name").get<std::string>();
    const Shape shape = s.at("shape").get<Shape>();
    std::vector<double> values(static_cast<std::size_t>(shape_size(shape)));
    read_f64_le(is, values.data(), values.size());
    ck.arrays.emplace_back(name, std::move(values));
  }
  return ck;
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck) {
  Rng rng(ck.seed);
  std::unique_ptr<Model> model = build_model(ck.spec, rng);
  ParamList& params = model->params();
  if (params.size() != ck.arrays.size())
    throw std::runtime_error("checkpoint: parameter count mismatch (" +
                             std::to_string(params.size()) + " vs " +
                             std::to_string(ck.arrays.size()) + ")");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != ck.arrays[i].first)
      throw std::runtime_error("checkpoint: parameter '" + ck.arrays[i].first +
                               "' does not match model parameter '" + params[i].name + "'");
    if (params[i].tensor.size() != static_cast<int>(ck.arrays[i].second.size()))
      throw std::runtime_error("checkpoint: size mismatch in '" + params[i].name + "'");
    params[i].tensor.values() = ck.arrays[i].second;
  }
  return model;
}

// ---------------------------------------------------------------------------
// datasets
// ---------------------------------------------------------------------------

void save_dataset_jsonl(const std::string& path, const Dataset& data) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("dataset: cannot open " + path + " for writing");
  for (const TaskInstance& inst : data.instances) {
    json j;
    json rows = json::array();
    const int n = inst.objects.shape()[0], d = inst.objects.shape()[1];
    for (int i = 0; i < n; ++i) {
      json row = json::array();
      for (int c = 0; c < d; ++c) row.push_back(inst.objects.at({i, c}));
      rows.push_back(row);
    }
    j["objects"] = rows;
    j["label"] = inst.label;
    j["meta"] = {{"task", inst.task}, {"split", inst.split}};
    os << j.dump() << '\n';
  }
}

Dataset load_dataset_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("dataset: cannot open " + path);
  Dataset data;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const auto rows = j.at("objects").get<std::vector<std::vector<double>>>();
    const int n = static_cast<int>(rows.size());
    const int d = n > 0 ? static_cast<int>(rows[0].size()) : 0;
    Tensor obj = make_tensor({n, d}, false);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < d; ++c) obj.at({i, c}) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    TaskInstance inst;
    inst.objects = obj;
    inst.label = j.at("label").get<int>();
    inst.task = j.at("meta").at("task").get<std::string>();
    inst.split = j.at("meta").at("split").get<std::string>();
    data.instances.push_back(std::move(inst));
    data.n_objects = n;
    data.d = d;
    data.task = data.instances.back().task;
    data.split = data.instances.back().split;
  }
  return data;
}

void save_dataset_binary(const std::string& path, const Dataset& data) {
  json header;
  header["count"] = data.instances.size();
  header["n"] = data.n_objects;
  header["d"] = data.d;
  header["n_classes"] = data.n_classes;
  header["task"] = data.task;
  header["split"] = data.split;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("dataset: cannot open " + path + " for writing");
  os << header.dump() << '\n';
  for (const TaskInstance& inst : data.instances) {
    const std::uint64_t label = static_cast<std::uint64_t>(inst.label);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((label >> (8 * b)) & 0xFF);
    os.write(bytes, 8);
    write_f64_le(os, inst.objects.data(), static_cast<std::size_t>(inst.objects.size()));
  }
}

Dataset load_dataset_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("dataset: missing header");
  const json header = json::parse(line);

  Dataset data;
  const std::size_t count = header.at("count").get<std::size_t>();
  data.n_objects = header.at("n").get<int>();
  data.d = header.at("d").get<int>();
  data.n_classes = header.at("n_classes").get<int>();
  data.task = header.at("task").get<std::string>();
  data.split = header.at("split").get<std::string>();
  for (std::size_t i = 0; i < count; ++i) {
    char bytes[8];
    is.read(bytes, 8);
    if (!is) throw std::runtime_error("dataset: truncated label");
    std::uint64_t label = 0;
    for (int b = 0; b < 8; ++b)
      label |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
    TaskInstance inst;
    inst.objects = make_tensor({data.n_objects, data.d}, false);
    read_f64_le(is, inst.objects.data(), static_cast<std::size_t>(inst.objects.size()));
    inst.label = static_cast<int>(label);
    inst.task = data.task;
    inst.split = data.split;
    data.instances.push_back(std::move(inst));
  }
  return data;
}

}  // namespace rcn

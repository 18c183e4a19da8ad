#include "dtrm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dtrm/transformer.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written little-endian");

namespace dtrm {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'D', 'T', 'R', 'M'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

json model_header(const DtModel& model) {
  const DtConfig& cfg = model.config();
  json h;
  h["format_version"] = kCheckpointFormatVersion;
  h["task_family"] = model.task_family();
  h["prompt_feature_dim"] = model.prompt_feature_dim();
  h["seed"] = model.init_seed();

  json c;
  c["num_blocks"] = cfg.trunk.num_blocks;
  c["model_dim"] = cfg.trunk.model_dim;
  c["num_heads"] = cfg.trunk.num_heads;
  c["ffn_dim"] = cfg.trunk.ffn_dim;
  c["dropout_rate"] = cfg.trunk.dropout_rate;
  c["attention"] = to_string(cfg.trunk.attention);
  c["window"] = cfg.trunk.window;
  c["max_sequence_len"] = cfg.trunk.max_sequence_len;
  c["layer_norm_eps"] = cfg.trunk.layer_norm_eps;
  c["context_len"] = cfg.context_len;
  c["max_timestep"] = cfg.max_timestep;
  h["config"] = c;

  json adapters = json::array();
  for (const std::string& id : model.scenario_ids()) {
    const ScenarioAdapter& a = model.adapter(id);
    json aj;
    aj["scenario_id"] = a.scenario_id;
    aj["state_dim"] = a.state_dim;
    aj["discrete_cardinalities"] = a.action_spec.discrete_cardinalities;
    json bounds = json::array();
    for (const auto& [lo, hi] : a.action_spec.continuous_bounds) {
      bounds.push_back(json::array({lo, hi}));
    }
    aj["continuous_bounds"] = bounds;
    aj["prompt_features"] = a.prompt_features;
    aj["state_mean"] = a.state_mean;
    aj["state_std"] = a.state_std;
    aj["rtg_scale"] = a.rtg_scale;
    adapters.push_back(aj);
  }
  h["adapters"] = adapters;
  return h;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DtModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());

  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, kCheckpointFormatVersion);
  const std::string header = model_header(model).dump();
  write_pod<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  const auto params = model.named_parameters();
  write_pod<std::uint64_t>(out, params.size());
  for (const auto& [name, t] : params) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int e : t.shape) write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    out.write(reinterpret_cast<const char*>(t.data->data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path.string());
}

DtModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version));
  }
  const auto header_len = read_pod<std::uint64_t>(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  const json h = json::parse(header_text);
  if (h.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw std::runtime_error("checkpoint: header version mismatch");
  }

  DtConfig cfg;
  const json& c = h.at("config");
  cfg.trunk.num_blocks = c.at("num_blocks").get<int>();
  cfg.trunk.model_dim = c.at("model_dim").get<int>();
  cfg.trunk.num_heads = c.at("num_heads").get<int>();
  cfg.trunk.ffn_dim = c.at("ffn_dim").get<int>();
  cfg.trunk.dropout_rate = c.at("dropout_rate").get<double>();
  cfg.trunk.attention = attention_kind_from_string(c.at("attention").get<std::string>());
  cfg.trunk.window = c.at("window").get<int>();
  cfg.trunk.max_sequence_len = c.at("max_sequence_len").get<int>();
  cfg.trunk.layer_norm_eps = c.at("layer_norm_eps").get<double>();
  cfg.context_len = c.at("context_len").get<int>();
  cfg.max_timestep = c.at("max_timestep").get<int>();

  DtModel model(cfg, h.at("task_family").get<std::string>(),
                h.at("prompt_feature_dim").get<int>(), h.at("seed").get<std::uint64_t>());
  for (const json& aj : h.at("adapters")) {
    HybridActionSpec spec;
    spec.discrete_cardinalities = aj.at("discrete_cardinalities").get<std::vector<int>>();
    for (const json& b : aj.at("continuous_bounds")) {
      spec.continuous_bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
    }
    model.add_scenario(aj.at("scenario_id").get<std::string>(), aj.at("state_dim").get<int>(),
                       spec, aj.at("prompt_features").get<std::vector<double>>(),
                       aj.at("state_mean").get<std::vector<double>>(),
                       aj.at("state_std").get<std::vector<double>>(),
                       aj.at("rtg_scale").get<double>());
  }

  const auto num_blobs = read_pod<std::uint64_t>(in);
  std::map<std::string, Tensor> by_name;
  model.visit_parameters([&](const std::string& name, Tensor& t) { by_name.emplace(name, t); });
  if (num_blobs != by_name.size()) {
    throw std::runtime_error("checkpoint: parameter count mismatch");
  }
  for (std::uint64_t i = 0; i < num_blobs; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto ndim = read_pod<std::uint32_t>(in);
    std::vector<int> shape(ndim);
    for (auto& e : shape) e = static_cast<int>(read_pod<std::uint32_t>(in));
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: unexpected blob " + name);
    if (it->second.shape != shape) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    in.read(reinterpret_cast<char*>(it->second.data->data()),
            static_cast<std::streamsize>(it->second.numel() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated blob " + name);
  }
  return model;
}

}  // namespace dtrm

#include "seqmask/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace seqmask {

namespace {

using nlohmann::json;

json heads_to_json(const std::vector<HeadSpec>& heads) {
  json arr = json::array();
  for (const HeadSpec& h : heads) {
    arr.push_back({{"name", h.name}, {"num_classes", h.num_classes}});
  }
  return arr;
}

std::vector<HeadSpec> heads_from_json(const json& arr) {
  std::vector<HeadSpec> heads;
  for (const json& h : arr) {
    heads.push_back({h.at("name").get<std::string>(),
                     h.at("num_classes").get<int>()});
  }
  return heads;
}

json params_to_json(const std::vector<std::pair<std::string, Tensor>>& params) {
  json obj = json::object();
  for (const auto& [name, tensor] : params) {
    obj[name] = tensor.values();
  }
  return obj;
}

void params_from_json(const json& obj,
                      std::vector<std::pair<std::string, Tensor>> params,
                      const std::string& path) {
  for (auto& [name, tensor] : params) {
    if (!obj.contains(name)) {
      throw std::runtime_error("checkpoint " + path + ": missing parameter " +
                               name);
    }
    const auto values = obj.at(name).get<std::vector<double>>();
    auto& dst = tensor.mutable_values();
    if (values.size() != dst.size()) {
      throw std::runtime_error("checkpoint " + path + ": parameter " + name +
                               " has wrong size");
    }
    std::copy(values.begin(), values.end(), dst.begin());
  }
}

json read_checkpoint(const std::string& path, const std::string& kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("checkpoint " + path + ": " + e.what());
  }
  if (j.value("version", 0) != 1) {
    throw std::runtime_error("checkpoint " + path +
                             ": unsupported version");
  }
  if (j.value("kind", "") != kind) {
    throw std::runtime_error("checkpoint " + path + ": expected kind '" +
                             kind + "'");
  }
  return j;
}

void write_checkpoint(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace

void save_explanandum(const std::string& path, const Explanandum& model,
                      std::uint64_t vocab_hash) {
  const ExplanandumConfig& cfg = model.config();
  json j;
  j["version"] = 1;
  j["kind"] = "explanandum";
  j["vocab_hash"] = vocab_hash;
  j["frozen"] = model.frozen();
  j["config"] = {{"vocab_size", cfg.vocab_size},
                 {"embedding_dim", cfg.embedding_dim},
                 {"encoder", to_string(cfg.encoder)},
                 {"pooling", to_string(cfg.pooling)},
                 {"heads", heads_to_json(cfg.heads)},
                 {"seed", cfg.seed}};
  j["params"] = params_to_json(model.named_params());
  write_checkpoint(path, j);
}

LoadedExplanandum load_explanandum(const std::string& path) {
  const json j = read_checkpoint(path, "explanandum");
  const json& c = j.at("config");
  ExplanandumConfig cfg;
  cfg.vocab_size = c.at("vocab_size").get<std::int64_t>();
  cfg.embedding_dim = c.at("embedding_dim").get<std::int64_t>();
  cfg.encoder = encoder_from_string(c.at("encoder").get<std::string>());
  cfg.pooling = pooling_from_string(c.at("pooling").get<std::string>());
  cfg.heads = heads_from_json(c.at("heads"));
  cfg.seed = c.at("seed").get<std::uint64_t>();

  LoadedExplanandum out{Explanandum(cfg),
                        j.at("vocab_hash").get<std::uint64_t>()};
  params_from_json(j.at("params"), out.model.named_params(), path);
  if (j.value("frozen", false)) out.model.freeze();
  return out;
}

void save_explainer(const std::string& path, const Explainer& explainer,
                    std::uint64_t vocab_hash) {
  const ExplainerConfig& cfg = explainer.config();
  json j;
  j["version"] = 1;
  j["kind"] = "explainer";
  j["vocab_hash"] = vocab_hash;
  j["config"] = {{"vocab_size", cfg.vocab_size},
                 {"embedding_dim", cfg.embedding_dim},
                 {"hidden", cfg.hidden},
                 {"layers", cfg.layers},
                 {"bidirectional", cfg.bidirectional},
                 {"concat_cell", cfg.concat_cell},
                 {"heads", heads_to_json(cfg.heads)},
                 {"seed", cfg.seed}};
  j["params"] = params_to_json(explainer.named_params());
  json buffers = json::object();
  for (const auto& [name, values] : explainer.named_buffers()) {
    buffers[name] = values;
  }
  j["buffers"] = buffers;
  write_checkpoint(path, j);
}

LoadedExplainer load_explainer(const std::string& path) {
  const json j = read_checkpoint(path, "explainer");
  const json& c = j.at("config");
  ExplainerConfig cfg;
  cfg.vocab_size = c.at("vocab_size").get<std::int64_t>();
  cfg.embedding_dim = c.at("embedding_dim").get<std::int64_t>();
  cfg.hidden = c.at("hidden").get<std::int64_t>();
  cfg.layers = c.at("layers").get<int>();
  cfg.bidirectional = c.at("bidirectional").get<bool>();
  cfg.concat_cell = c.at("concat_cell").get<bool>();
  cfg.heads = heads_from_json(c.at("heads"));
  cfg.seed = c.at("seed").get<std::uint64_t>();

  LoadedExplainer out{Explainer(cfg), j.at("vocab_hash").get<std::uint64_t>()};
  params_from_json(j.at("params"), out.explainer.named_params(), path);
  for (const auto& [name, values] :
       j.at("buffers").items()) {
    out.explainer.set_buffer(name, values.get<std::vector<double>>());
  }
  return out;
}

}  // namespace seqmask

#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "barsctr/error.hpp"
#include "barsctr/json_util.hpp"

namespace barsctr::models {

inline constexpr std::array<std::string_view, 13> kModelNames = {
    "LR", "FM", "FFM", "HOFM", "FwFM", "DNN", "WideDeep", "IPNN", "NFM", "AFM", "DeepFM", "DCN", "xDeepFM"};

inline bool is_model_name(std::string_view name) {
  return std::find(kModelNames.begin(), kModelNames.end(), name) != kModelNames.end();
}

// Models with a DNN tower over embeddings.
inline bool uses_tower(std::string_view m) {
  return m == "DNN" || m == "WideDeep" || m == "IPNN" || m == "NFM" || m == "DeepFM" || m == "DCN" || m == "xDeepFM";
}

struct ModelConfig {
  std::string model = "LR";
  std::size_t embedding_dim = 16;
  std::vector<std::size_t> hidden_units;
  std::string activation = "relu";
  double dropout = 0.0;
  bool use_batch_norm = false;
  double l2 = 0.0;
  double init_std = 0.01;
  // model-specific knobs
  std::optional<std::size_t> cross_layers;                 // DCN
  std::optional<std::vector<std::size_t>> cin_layer_sizes;  // xDeepFM
  bool cin_pool_all_layers = true;                          // xDeepFM
  std::optional<std::size_t> attention_dim;                 // AFM
  double attention_dropout = 0.0;                           // AFM
  std::optional<std::size_t> order3_dim;                    // HOFM
};

inline void validate(const ModelConfig& c) {
  if (!is_model_name(c.model)) throw ConfigError("unknown model '" + c.model + "'");
  if (c.embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
  if (!(c.l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
  if (!(c.init_std > 0.0)) throw ConfigError("init_std must be > 0");
  if (c.activation != "relu") throw ConfigError("activation '" + c.activation + "' is not supported (relu only)");
  for (auto u : c.hidden_units)
    if (u == 0) throw ConfigError("hidden_units entries must be positive");
  if (c.cin_layer_sizes)
    for (auto h : *c.cin_layer_sizes)
      if (h == 0) throw ConfigError("cin_layer_sizes entries must be positive");
  if (c.attention_dim && *c.attention_dim == 0) throw ConfigError("attention_dim must be >= 1");
  if (!(c.attention_dropout >= 0.0 && c.attention_dropout < 1.0)) throw ConfigError("attention_dropout must be in [0,1)");
  if (c.order3_dim && *c.order3_dim == 0) throw ConfigError("order3_dim must be >= 1");

  auto knob = [&](bool present, bool wanted, const char* key) {
    if (wanted && !present) throw ConfigError(c.model + " needs '" + key + "'");
    if (!wanted && present) throw ConfigError("'" + std::string(key) + "' does not apply to " + c.model);
  };
  knob(c.cross_layers.has_value(), c.model == "DCN", "cross_layers");
  knob(c.cin_layer_sizes.has_value(), c.model == "xDeepFM", "cin_layer_sizes");
  knob(c.attention_dim.has_value(), c.model == "AFM", "attention_dim");
  knob(c.order3_dim.has_value(), c.model == "HOFM", "order3_dim");
  if (c.model != "AFM" && c.attention_dropout != 0.0) throw ConfigError("'attention_dropout' does not apply to " + c.model);
  if (c.model != "xDeepFM" && !c.cin_pool_all_layers) throw ConfigError("'cin_pooling' does not apply to " + c.model);
}

inline ModelConfig model_config_from_json(const json& j) {
  require_known_keys(j,
                     {"model", "embedding_dim", "hidden_units", "activation", "dropout", "use_batch_norm", "l2",
                      "init_std", "cross_layers", "cin_layer_sizes", "cin_pooling", "attention_dim",
                      "attention_dropout", "order3_dim", "order", "product"},
                     "model");
  ModelConfig c;
  c.model = get_required<std::string>(j, "model", "model");
  c.embedding_dim = get_or<std::size_t>(j, "embedding_dim", c.embedding_dim, "model");
  c.hidden_units = get_or<std::vector<std::size_t>>(j, "hidden_units", {}, "model");
  c.activation = get_or<std::string>(j, "activation", c.activation, "model");
  c.dropout = get_or<double>(j, "dropout", c.dropout, "model");
  c.use_batch_norm = get_or<bool>(j, "use_batch_norm", c.use_batch_norm, "model");
  c.l2 = get_or<double>(j, "l2", c.l2, "model");
  c.init_std = get_or<double>(j, "init_std", c.init_std, "model");
  if (j.contains("cross_layers")) c.cross_layers = j["cross_layers"].get<std::size_t>();
  if (j.contains("cin_layer_sizes")) c.cin_layer_sizes = j["cin_layer_sizes"].get<std::vector<std::size_t>>();
  if (j.contains("cin_pooling")) {
    const auto p = j["cin_pooling"].get<std::string>();
    if (p != "all" && p != "final") throw ConfigError("cin_pooling must be 'all' or 'final'");
    c.cin_pool_all_layers = p == "all";
  }
  if (j.contains("attention_dim")) c.attention_dim = j["attention_dim"].get<std::size_t>();
  c.attention_dropout = get_or<double>(j, "attention_dropout", 0.0, "model");
  if (j.contains("order3_dim")) c.order3_dim = j["order3_dim"].get<std::size_t>();
  if (j.contains("order")) {
    if (c.model != "HOFM") throw ConfigError("'order' does not apply to " + c.model);
    if (j["order"].get<int>() != 3) throw ConfigError("HOFM supports order 3 only");
  }
  if (j.contains("product")) {
    if (c.model != "IPNN") throw ConfigError("'product' does not apply to " + c.model);
    if (j["product"].get<std::string>() != "inner") throw ConfigError("IPNN supports product 'inner' only");
  }
  validate(c);
  return c;
}

inline json to_json(const ModelConfig& c) {
  json j{{"model", c.model},
         {"embedding_dim", c.embedding_dim},
         {"hidden_units", c.hidden_units},
         {"activation", c.activation},
         {"dropout", c.dropout},
         {"use_batch_norm", c.use_batch_norm},
         {"l2", c.l2},
         {"init_std", c.init_std}};
  if (c.cross_layers) j["cross_layers"] = *c.cross_layers;
  if (c.cin_layer_sizes) {
    j["cin_layer_sizes"] = *c.cin_layer_sizes;
    j["cin_pooling"] = c.cin_pool_all_layers ? "all" : "final";
  }
  if (c.attention_dim) {
    j["attention_dim"] = *c.attention_dim;
    j["attention_dropout"] = c.attention_dropout;
  }
  if (c.order3_dim) {
    j["order3_dim"] = *c.order3_dim;
    j["order"] = 3;
  }
  if (c.model == "IPNN") j["product"] = "inner";
  return j;
}

}  // namespace barsctr::models

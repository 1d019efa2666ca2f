#pragma once

#include <string>

#include "barsctr/json_util.hpp"
#include "barsctr/models/config.hpp"
#include "barsctr/train/config.hpp"

namespace barsctr::bench {

// One trial's full configuration: {"dataset": {"setting"}, "model": {...},
// "train": {...}}. The setting names the dataset variant in reports.
struct Experiment {
  std::string setting = "default";
  models::ModelConfig model;
  train::TrainConfig train;
};

inline json to_json(const Experiment& e) {
  return json{{"dataset", {{"setting", e.setting}}}, {"model", models::to_json(e.model)}, {"train", train::to_json(e.train)}};
}

inline Experiment experiment_from_json(const json& j) {
  require_known_keys(j, {"dataset", "model", "train"}, "experiment");
  Experiment e;
  if (j.contains("dataset")) {
    require_known_keys(j["dataset"], {"setting"}, "experiment.dataset");
    e.setting = get_or<std::string>(j["dataset"], "setting", e.setting, "experiment.dataset");
    if (e.setting.empty()) throw ConfigError("experiment.dataset.setting must not be empty");
  }
  if (!j.contains("model")) throw ConfigError("experiment: missing 'model' section");
  e.model = models::model_config_from_json(j["model"]);
  e.train = train::train_config_from_json(j.value("train", json::object()));
  return e;
}

// md5 of the canonical resolved config; names the trial's directory.
inline std::string config_digest(const Experiment& e) { return json_digest(to_json(e)); }

}  // namespace barsctr::bench

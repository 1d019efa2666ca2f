#pragma once

#include <string>
#include <vector>

#include "barsctr/error.hpp"
#include "barsctr/json_util.hpp"

namespace barsctr::train {

enum class Monitor { auc, logloss };

inline std::string monitor_name(Monitor m) { return m == Monitor::auc ? "auc" : "logloss"; }

inline Monitor parse_monitor(const std::string& s) {
  if (s == "auc") return Monitor::auc;
  if (s == "logloss") return Monitor::logloss;
  throw ConfigError("monitor must be 'auc' or 'logloss', got '" + s + "'");
}

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 10000;
  std::vector<std::size_t> batch_size_fallbacks = {5000, 2000, 1000};
  std::size_t max_epochs = 100;
  Monitor monitor = Monitor::auc;
  std::size_t patience = 2;            // early stopping
  std::size_t scheduler_patience = 1;  // reduce-lr-on-plateau
  double lr_reduce_factor = 10.0;
  double min_lr = 1e-6;
  double min_delta = 1e-6;
  std::uint64_t seed = 2019;
  bool deterministic_mode = true;
  std::size_t eval_every = 1;  // epochs
  // Cap on tensor bytes allocated during training, 0 = unlimited. Exceeding
  // it counts as memory exhaustion and walks the batch-size ladder.
  double memory_budget_mb = 0.0;
};

inline void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (c.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  for (std::size_t b : c.batch_size_fallbacks)
    if (b == 0) throw ConfigError("batch_size_fallbacks entries must be at least 1");
  if (c.max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
  if (c.patience == 0) throw ConfigError("patience must be at least 1");
  if (c.scheduler_patience == 0) throw ConfigError("scheduler_patience must be at least 1");
  if (!(c.lr_reduce_factor > 1.0)) throw ConfigError("lr_reduce_factor must be greater than 1");
  if (!(c.min_lr > 0.0)) throw ConfigError("min_lr must be positive");
  if (!(c.min_delta >= 0.0)) throw ConfigError("min_delta must be non-negative");
  if (c.eval_every == 0) throw ConfigError("eval_every must be at least 1");
  if (!(c.memory_budget_mb >= 0.0)) throw ConfigError("memory_budget_mb must be non-negative");
  if (!c.deterministic_mode) throw ConfigError("only deterministic_mode = true is implemented");
}

// Settings outside the usual benchmark protocol; recorded in the run log.
inline std::vector<std::string> protocol_warnings(const TrainConfig& c) {
  std::vector<std::string> out;
  if (c.patience != 2 && c.patience != 3) out.push_back("patience " + std::to_string(c.patience) + " is not 2 or 3");
  if (c.lr_reduce_factor != 10.0) out.push_back("lr_reduce_factor is not 10");
  return out;
}

inline json to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"batch_size_fallbacks", c.batch_size_fallbacks},
              {"max_epochs", c.max_epochs},
              {"monitor", monitor_name(c.monitor)},
              {"patience", c.patience},
              {"scheduler_patience", c.scheduler_patience},
              {"lr_reduce_factor", c.lr_reduce_factor},
              {"min_lr", c.min_lr},
              {"min_delta", c.min_delta},
              {"seed", c.seed},
              {"deterministic_mode", c.deterministic_mode},
              {"eval_every", c.eval_every},
              {"memory_budget_mb", c.memory_budget_mb}};
}

inline TrainConfig train_config_from_json(const json& j) {
  require_known_keys(j,
                     {"learning_rate", "batch_size", "batch_size_fallbacks", "max_epochs", "monitor", "patience",
                      "scheduler_patience", "lr_reduce_factor", "min_lr", "min_delta", "seed", "deterministic_mode",
                      "eval_every", "memory_budget_mb"},
                     "train");
  TrainConfig c;
  const char* ctx = "train";
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate, ctx);
  c.batch_size = get_or(j, "batch_size", c.batch_size, ctx);
  c.batch_size_fallbacks = get_or(j, "batch_size_fallbacks", c.batch_size_fallbacks, ctx);
  c.max_epochs = get_or(j, "max_epochs", c.max_epochs, ctx);
  c.monitor = parse_monitor(get_or<std::string>(j, "monitor", "auc", ctx));
  c.patience = get_or(j, "patience", c.patience, ctx);
  c.scheduler_patience = get_or(j, "scheduler_patience", c.scheduler_patience, ctx);
  c.lr_reduce_factor = get_or(j, "lr_reduce_factor", c.lr_reduce_factor, ctx);
  c.min_lr = get_or(j, "min_lr", c.min_lr, ctx);
  c.min_delta = get_or(j, "min_delta", c.min_delta, ctx);
  c.seed = get_or(j, "seed", c.seed, ctx);
  c.deterministic_mode = get_or(j, "deterministic_mode", c.deterministic_mode, ctx);
  c.eval_every = get_or(j, "eval_every", c.eval_every, ctx);
  c.memory_budget_mb = get_or(j, "memory_budget_mb", c.memory_budget_mb, ctx);
  validate(c);
  return c;
}

}  // namespace barsctr::train

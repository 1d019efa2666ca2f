#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "barsctr/data/batches.hpp"
#include "barsctr/data/pipeline.hpp"
#include "barsctr/json_util.hpp"
#include "barsctr/metrics.hpp"
#include "barsctr/models/zoo.hpp"
#include "barsctr/ndgrad/ndgrad.hpp"
#include "barsctr/rng.hpp"
#include "barsctr/train/config.hpp"
#include "barsctr/train/schedule.hpp"
#include "barsctr/train/snapshot.hpp"

namespace barsctr::train {

using ndgrad::Tensor;

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean BCE over the epoch, L2 excluded
  double val_logloss = 0.0;
  double val_auc = 0.0;
  double lr = 0.0;       // in effect during the epoch
  double next_lr = 0.0;  // after the scheduler saw this evaluation
  std::size_t batch_size = 0;
  bool best = false;
  double wall_seconds = 0.0;

  json to_json(bool with_time = true) const {
    json j{{"type", "epoch"},
           {"epoch", epoch},
           {"train_loss", train_loss},
           {"val_logloss", val_logloss},
           {"val_auc", val_auc},
           {"lr", lr},
           {"next_lr", next_lr},
           {"batch_size", batch_size},
           {"best", best}};
    if (with_time) j["wall_seconds"] = wall_seconds;
    return j;
  }
};

struct RunLog {
  json config;  // resolved model and train configs plus data provenance
  std::vector<EpochRecord> records;
  std::vector<json> events;  // batch-size fallbacks, protocol warnings
  std::string stop_reason;
  std::size_t best_epoch = 0;
  std::uint64_t seed = 0;
  json artifacts = json::object();

  // One JSON record per line: header, events, epochs, summary. Without wall
  // time the text is a pure function of config, data and seed.
  std::string to_jsonl(bool with_time = true) const {
    std::ostringstream out;
    out << canonical_dump(json{{"type", "config"}, {"config", config}, {"seed", seed}, {"artifacts", artifacts}}) << "\n";
    for (const auto& e : events) out << canonical_dump(e) << "\n";
    for (const auto& r : records) out << canonical_dump(r.to_json(with_time)) << "\n";
    out << canonical_dump(json{{"type", "summary"}, {"stop_reason", stop_reason}, {"best_epoch", best_epoch}}) << "\n";
    return out.str();
  }

  std::vector<double> monitored(Monitor m) const {
    std::vector<double> v;
    for (const auto& r : records) v.push_back(m == Monitor::auc ? r.val_auc : r.val_logloss);
    return v;
  }
};

struct TrialResult {
  std::string model;
  std::uint64_t seed = 0;
  double val_logloss = 0.0, val_auc = 0.0;
  double test_logloss = 0.0, test_auc = 0.0;
  std::size_t params = 0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  std::size_t final_batch_size = 0;
  std::string stop_reason;
  std::vector<double> epoch_wall_seconds;

  double mean_epoch_seconds() const {
    if (epoch_wall_seconds.empty()) return 0.0;
    double s = 0;
    for (double t : epoch_wall_seconds) s += t;
    return s / static_cast<double>(epoch_wall_seconds.size());
  }

  json to_json(bool with_time = true) const {
    json j{{"model", model},
           {"seed", seed},
           {"val_logloss", val_logloss},
           {"val_auc", val_auc},
           {"test_logloss", test_logloss},
           {"test_auc", test_auc},
           {"params", params},
           {"epochs", epochs},
           {"best_epoch", best_epoch},
           {"final_batch_size", final_batch_size},
           {"stop_reason", stop_reason}};
    if (with_time) j["epoch_wall_seconds"] = epoch_wall_seconds;
    return j;
  }

  static TrialResult from_json(const json& j) {
    TrialResult r;
    r.model = j.at("model").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.val_logloss = j.at("val_logloss").get<double>();
    r.val_auc = j.at("val_auc").get<double>();
    r.test_logloss = j.at("test_logloss").get<double>();
    r.test_auc = j.at("test_auc").get<double>();
    r.params = j.at("params").get<std::size_t>();
    r.epochs = j.at("epochs").get<std::size_t>();
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    r.final_batch_size = j.at("final_batch_size").get<std::size_t>();
    r.stop_reason = j.at("stop_reason").get<std::string>();
    r.epoch_wall_seconds = j.value("epoch_wall_seconds", std::vector<double>{});
    return r;
  }
};

struct TrainOutcome {
  ModelSnapshot best;
  RunLog log;
  TrialResult result;
};

// Logits for a whole dataset in eval mode, batch by batch, without a graph.
inline std::vector<double> predict(models::CtrModel& model, const data::EncodedDataset& ds, std::size_t batch_size) {
  ndgrad::NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(ds.size());
  data::BatchStream stream(ds, batch_size);
  data::Batch b;
  while (stream.next(b)) {
    const Tensor y = model.forward(b, false);
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return out;
}

inline metrics::EvalResult evaluate(models::CtrModel& model, const data::EncodedDataset& ds, std::size_t batch_size) {
  return metrics::evaluate_logits(predict(model, ds, batch_size), ds.labels);
}

namespace detail {

inline std::string norm_summary(const models::CtrModel& model) {
  std::ostringstream out;
  bool first = true;
  for (const auto& p : model.parameters()) {
    double s = 0;
    for (double v : p.tensor.values()) s += v * v;
    out << (first ? "" : ", ") << p.name << "=" << std::sqrt(s);
    first = false;
  }
  return out.str();
}

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// One shuffled pass. Returns the mean training loss.
inline double run_epoch(models::CtrModel& model, ndgrad::Adam& adam, const data::EncodedDataset& train,
                        std::size_t batch_size, double lr, std::uint64_t seed, std::size_t epoch) {
  auto& params = model.parameters();
  data::BatchStream stream(train, batch_size, mix_seed(seed, 2), epoch);
  data::Batch b;
  double total = 0.0;
  std::size_t index = 0;
  while (stream.next(b)) {
    for (auto& p : params) p.tensor.zero_grad();
    Tensor loss = ndgrad::bce_with_logits(model.forward(b, true), b.labels);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "non-finite training loss at epoch " << epoch << ", batch " << index << ", lr " << lr
          << "; parameter norms: " << norm_summary(model);
      throw NumericError(msg.str());
    }
    ndgrad::backward(loss);
    for (auto& p : params) p.tensor.mutable_grad();  // parameters the batch never touched get zeros
    adam.step(params, lr);
    total += value * static_cast<double>(b.size);
    ++index;
  }
  return total / static_cast<double>(train.size());
}

}  // namespace detail

// Epoch loop with validation after every `eval_every` epochs, reduce-lr-on-
// plateau, early stopping and best-snapshot restore, then one test pass.
inline TrainOutcome train(models::CtrModel& model, const data::SplitTriple& splits, const TrainConfig& cfg) {
  validate(cfg);
  if (splits.train.size() == 0 || splits.validation.size() == 0 || splits.test.size() == 0) {
    throw DataError("train, validation and test splits must all be non-empty");
  }
  TrainOutcome out;
  RunLog& log = out.log;
  log.seed = cfg.seed;
  log.config = {{"model", models::to_json(model.config())}, {"train", to_json(cfg)}};
  log.artifacts = {{"train_md5", splits.train.md5},
                   {"validation_md5", splits.validation.md5},
                   {"test_md5", splits.test.md5},
                   {"feature_map_digest", splits.train.feature_map_digest}};
  for (const auto& w : protocol_warnings(cfg)) log.events.push_back({{"type", "warning"}, {"message", w}});

  std::vector<std::size_t> ladder{cfg.batch_size};
  for (std::size_t b : cfg.batch_size_fallbacks)
    if (b < ladder.back()) ladder.push_back(b);
  std::size_t rung = 0;

  const std::size_t budget_bytes = static_cast<std::size_t>(cfg.memory_budget_mb * 1024.0 * 1024.0);
  ndgrad::ScopedMemoryBudget budget(budget_bytes == 0 ? 0 : ndgrad::MemoryBudget::live() + budget_bytes);

  ndgrad::Adam adam(model.parameters().size());
  PlateauScheduler scheduler(cfg);
  EarlyStopper stopper(cfg);
  std::size_t evaluations = 0;
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = detail::Clock::now();
    const double lr = scheduler.lr();
    double train_loss = 0.0;
    const ModelSnapshot before = capture(model);
    const ndgrad::Adam adam_before = adam;
    for (;;) {
      try {
        train_loss = detail::run_epoch(model, adam, splits.train, ladder[rung], lr, cfg.seed, epoch);
        break;
      } catch (const std::bad_alloc&) {
        if (rung + 1 >= ladder.size()) {
          throw NumericError("memory exhausted at the smallest batch size " + std::to_string(ladder[rung]));
        }
        restore(model, before);
        adam = adam_before;
        log.events.push_back({{"type", "batch_size_fallback"},
                              {"epoch", epoch},
                              {"from", ladder[rung]},
                              {"to", ladder[rung + 1]}});
        ++rung;
      }
    }
    if (epoch % cfg.eval_every != 0 && epoch != cfg.max_epochs) continue;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss;
    rec.lr = lr;
    rec.batch_size = ladder[rung];
    const auto val = evaluate(model, splits.validation, ladder[rung]);
    rec.val_logloss = val.logloss;
    rec.val_auc = val.auc;
    const double monitored = cfg.monitor == Monitor::auc ? val.auc : val.logloss;
    rec.next_lr = scheduler.step(monitored);
    const bool stop = stopper.step(monitored);
    if (stopper.best_index() == evaluations) {
      rec.best = true;
      log.best_epoch = epoch;
      out.best = capture(model);
      have_best = true;
    }
    ++evaluations;
    rec.wall_seconds = detail::seconds_since(t0);
    log.records.push_back(rec);
    if (stop) {
      log.stop_reason = "early_stop";
      break;
    }
  }
  if (log.stop_reason.empty()) log.stop_reason = "max_epochs";
  if (!have_best) throw StateError("training finished without an evaluation");

  restore(model, out.best);
  const auto val = evaluate(model, splits.validation, ladder[rung]);
  const auto test = evaluate(model, splits.test, ladder[rung]);

  TrialResult& r = out.result;
  r.model = model.config().model;
  r.seed = cfg.seed;
  r.val_logloss = val.logloss;
  r.val_auc = val.auc;
  r.test_logloss = test.logloss;
  r.test_auc = test.auc;
  r.params = model.count_params();
  r.epochs = log.records.empty() ? 0 : log.records.back().epoch;
  r.best_epoch = log.best_epoch;
  r.final_batch_size = ladder[rung];
  r.stop_reason = log.stop_reason;
  for (const auto& rec : log.records) r.epoch_wall_seconds.push_back(rec.wall_seconds);
  return out;
}

// Builds the model from its config (init seed = train seed), trains it and
// writes runlog.jsonl, trial.json and snapshot/ under out_dir.
inline TrainOutcome train_to_dir(const models::ModelConfig& mcfg, const data::SplitTriple& splits, const TrainConfig& cfg,
                                 const std::filesystem::path& out_dir, const json& provenance = json::object()) {
  auto model = models::build_model(mcfg, splits.feature_map, cfg.seed);
  TrainOutcome out = train(*model, splits, cfg);
  if (!provenance.empty()) out.log.artifacts["provenance"] = provenance;
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "runlog.jsonl", out.log.to_jsonl());
  json snap = save_snapshot(out_dir / "snapshot", out.best);
  json trial = out.result.to_json();
  trial["snapshot_md5"] = snap["md5"];
  trial["runlog_md5"] = md5_hex(out.log.to_jsonl(false));
  save_json_file(out_dir / "trial.json", trial);
  return out;
}

}  // namespace barsctr::train

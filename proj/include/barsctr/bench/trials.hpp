#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "barsctr/bench/experiment.hpp"
#include "barsctr/bench/grid.hpp"
#include "barsctr/data/pipeline.hpp"
#include "barsctr/train/trainer.hpp"

namespace barsctr::bench {

namespace fs = std::filesystem;

enum class TrialStatus { ok, failed };

// One executed (or resumed) trial, stored under <out>/<digest>/.
struct TrialRecord {
  std::string digest;
  Experiment experiment;
  TrialStatus status = TrialStatus::ok;
  std::string reason;  // failure message
  std::string error_kind;  // "config", "data", "numeric" or "other"
  train::TrialResult result;
  bool resumed = false;
  fs::path dir;

  bool ok() const { return status == TrialStatus::ok; }
};

// Digests tying a trial to the exact encoded data it ran on.
inline json data_provenance(const data::SplitTriple& s) {
  const json& m = s.manifest;
  json files = json::object();
  for (const char* part : {"train", "validation", "test"}) files[part] = m.at("files").at(part).at("md5");
  return json{{"source_md5", m.value("source_md5", "")},
              {"recipe_digest", m.value("recipe_digest", "")},
              {"split_seed", m.value("split_seed", 0)},
              {"feature_map_digest", s.feature_map.digest()},
              {"files", files}};
}

// A RunLog's text with wall-clock fields removed; equal for reruns of the same
// config, data and seed.
inline std::string untimed_runlog(const std::string& jsonl) {
  std::istringstream in(jsonl);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    j.erase("wall_seconds");
    out += canonical_dump(j) + "\n";
  }
  return out;
}

// Where a trial ran; wall times are as measured on this machine.
inline json host_info() {
  std::string cpu;
  if (std::ifstream in("/proc/cpuinfo"); in) {
    for (std::string line; std::getline(in, line);) {
      if (line.rfind("model name", 0) == 0) {
        cpu = line.substr(line.find(':') + 2);
        break;
      }
    }
  }
  return json{{"cpu", cpu}, {"hardware_threads", std::thread::hardware_concurrency()}};
}

inline std::string error_kind_of(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  return "other";
}

namespace detail {

inline TrialRecord load_trial_dir(const fs::path& dir) {
  TrialRecord r;
  r.dir = dir;
  const json cfg = load_json_file(dir / "config.json");
  r.digest = cfg.at("digest").get<std::string>();
  r.experiment = experiment_from_json(cfg.at("experiment"));
  if (fs::exists(dir / "trial.json")) {
    r.result = train::TrialResult::from_json(load_json_file(dir / "trial.json"));
  } else {
    r.status = TrialStatus::failed;
    const json failure = fs::exists(dir / "failure.json") ? load_json_file(dir / "failure.json") : json::object();
    r.reason = failure.value("reason", "incomplete");
    r.error_kind = failure.value("kind", "other");
  }
  return r;
}

inline TrialRecord run_one(const Experiment& e, const data::SplitTriple& splits, const json& provenance,
                           const fs::path& out_dir) {
  TrialRecord r;
  r.experiment = e;
  r.digest = config_digest(e);
  r.dir = out_dir / r.digest;
  if (fs::exists(r.dir / "trial.json")) {
    const json cfg = load_json_file(r.dir / "config.json");
    if (cfg.at("data") != provenance) {
      throw DataError("trial " + r.digest + " in '" + out_dir.string() + "' was run on different data");
    }
    r.result = train::TrialResult::from_json(load_json_file(r.dir / "trial.json"));
    r.resumed = true;
    return r;
  }
  fs::create_directories(r.dir);
  fs::remove(r.dir / "failure.json");
  save_json_file(r.dir / "config.json", json{{"digest", r.digest}, {"experiment", to_json(e)}, {"data", provenance}, {"host", host_info()}});
  try {
    auto outcome = train::train_to_dir(e.model, splits, e.train, r.dir, json{{"digest", r.digest}, {"data", provenance}});
    r.result = outcome.result;
  } catch (const std::exception& ex) {
    r.status = TrialStatus::failed;
    r.reason = ex.what();
    r.error_kind = error_kind_of(ex);
    save_json_file(r.dir / "failure.json", json{{"digest", r.digest}, {"reason", r.reason}, {"kind", r.error_kind}});
  }
  return r;
}

}  // namespace detail

// Runs every config, `parallel` at a time. Each trial writes only its own
// directory; configs whose directory already holds trial.json are loaded
// instead of rerun. A failing trial is recorded with its reason and the rest
// continue. Results come back ordered by digest, duplicates collapsed.
inline std::vector<TrialRecord> run_trials(const std::vector<Experiment>& configs, const data::SplitTriple& splits,
                                           const fs::path& out_dir, std::size_t parallel = 1) {
  std::vector<Experiment> todo;
  {
    std::vector<std::string> seen;
    for (const auto& e : configs) {
      auto d = config_digest(e);
      if (std::find(seen.begin(), seen.end(), d) != seen.end()) continue;
      seen.push_back(d);
      todo.push_back(e);
    }
  }
  fs::create_directories(out_dir);
  const json provenance = data_provenance(splits);
  std::vector<TrialRecord> out(todo.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < todo.size();) {
      try {
        out[i] = detail::run_one(todo[i], splits, provenance, out_dir);
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(parallel, todo.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);
  std::sort(out.begin(), out.end(), [](const TrialRecord& a, const TrialRecord& b) { return a.digest < b.digest; });
  return out;
}

// True when `a` beats `b` on the validation value of a's monitor; ties go to
// the smaller digest.
inline bool better_on_validation(const TrialRecord& a, const TrialRecord& b) {
  const bool auc = a.experiment.train.monitor == train::Monitor::auc;
  const double va = auc ? a.result.val_auc : a.result.val_logloss;
  const double vb = auc ? b.result.val_auc : b.result.val_logloss;
  if (va != vb) return auc ? va > vb : va < vb;
  return a.digest < b.digest;
}

inline std::optional<TrialRecord> best_trial(const std::vector<TrialRecord>& trials) {
  std::optional<TrialRecord> best;
  for (const auto& t : trials)
    if (t.ok() && (!best || better_on_validation(t, *best))) best = t;
  return best;
}

struct SweepResult {
  std::vector<TrialRecord> trials;         // every distinct trial, by digest
  std::vector<std::string> stage_best;     // best digest after each stage
};

// Full grid, or stage by stage with each stage centred on the previous best.
// Writes <out>/sweep.json once all trials are done.
inline SweepResult run_sweep(const SearchSpace& space, const data::SplitTriple& splits, const fs::path& out_dir,
                             std::size_t parallel = 1) {
  SweepResult sweep;
  auto merge = [&](const std::vector<TrialRecord>& batch) {
    for (const auto& t : batch) {
      auto it = std::find_if(sweep.trials.begin(), sweep.trials.end(),
                             [&](const TrialRecord& x) { return x.digest == t.digest; });
      if (it == sweep.trials.end()) sweep.trials.push_back(t);
    }
  };
  if (space.stages.empty()) {
    auto batch = run_trials(expand_grid(space), splits, out_dir, parallel);
    merge(batch);
    if (auto b = best_trial(batch)) sweep.stage_best.push_back(b->digest);
  } else {
    json center = detail::resolve(space.base);
    for (std::size_t k = 0; k < space.stages.size(); ++k) {
      auto batch = run_trials(expand_stage(space, k, center), splits, out_dir, parallel);
      merge(batch);
      auto b = best_trial(batch);
      if (!b) throw NumericError("every trial of search stage " + std::to_string(k) + " failed");
      sweep.stage_best.push_back(b->digest);
      center = to_json(b->experiment);
    }
  }
  std::sort(sweep.trials.begin(), sweep.trials.end(),
            [](const TrialRecord& a, const TrialRecord& b) { return a.digest < b.digest; });
  json index = json::array();
  for (const auto& t : sweep.trials)
    index.push_back({{"digest", t.digest}, {"status", t.ok() ? "ok" : "failed"}, {"reason", t.reason}});
  save_json_file(out_dir / "sweep.json", json{{"trials", index}, {"stage_best", sweep.stage_best}});
  return sweep;
}

// Every trial directory (one holding config.json) directly under `runs_dir`,
// ordered by digest.
inline std::vector<TrialRecord> load_runs(const fs::path& runs_dir) {
  if (!fs::is_directory(runs_dir)) throw DataError("runs directory '" + runs_dir.string() + "' does not exist");
  std::vector<TrialRecord> out;
  for (const auto& entry : fs::directory_iterator(runs_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "config.json")) out.push_back(detail::load_trial_dir(entry.path()));
  }
  std::sort(out.begin(), out.end(), [](const TrialRecord& a, const TrialRecord& b) { return a.digest < b.digest; });
  return out;
}

// Checks a completed trial directory against itself and, if given, the data
// directory it claims to come from. Returns the problems found.
inline std::vector<std::string> verify_trial(const fs::path& dir, const std::optional<fs::path>& data_dir = std::nullopt) {
  std::vector<std::string> problems;
  const json cfg = load_json_file(dir / "config.json");
  const std::string digest = cfg.at("digest").get<std::string>();
  if (config_digest(experiment_from_json(cfg.at("experiment"))) != digest) problems.push_back("config digest mismatch");
  if (dir.filename().string() != digest) problems.push_back("directory name is not the config digest");
  if (!fs::exists(dir / "trial.json")) {
    problems.push_back("no trial.json");
    return problems;
  }
  const json trial = load_json_file(dir / "trial.json");
  if (md5_hex(untimed_runlog(read_file(dir / "runlog.jsonl"))) != trial.at("runlog_md5").get<std::string>())
    problems.push_back("runlog does not match trial.json");
  try {
    const json snap = load_json_file(dir / "snapshot" / "snapshot.json");
    if (snap.at("md5") != trial.at("snapshot_md5")) problems.push_back("snapshot md5 differs from trial.json");
    train::load_snapshot(dir / "snapshot");
  } catch (const std::exception& e) {
    problems.push_back(std::string("snapshot: ") + e.what());
  }
  if (data_dir) {
    const json manifest = load_json_file(*data_dir / "manifest.json");
    const json& d = cfg.at("data");
    for (const char* part : {"train", "validation", "test"})
      if (manifest.at("files").at(part).at("md5") != d.at("files").at(part)) problems.push_back(std::string(part) + " md5 differs from the data manifest");
    if (manifest.at("feature_map_digest") != d.at("feature_map_digest")) problems.push_back("feature map digest differs");
    if (manifest.at("source_md5") != d.at("source_md5")) problems.push_back("source md5 differs");
  }
  return problems;
}

}  // namespace barsctr::bench

#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "barsctr/bench/grid.hpp"
#include "barsctr/bench/leaderboard.hpp"
#include "barsctr/bench/trials.hpp"
#include "barsctr/data/pipeline.hpp"
#include "barsctr/error.hpp"
#include "barsctr/json_util.hpp"
#include "barsctr/models/diagnostics.hpp"
#include "barsctr/synth/generator.hpp"

namespace barsctr::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kConfig = 1, kData = 2, kNumeric = 3 };

inline int exit_code_for(const std::string& kind) {
  if (kind == "data") return kData;
  if (kind == "numeric") return kNumeric;
  return kConfig;
}

namespace detail {

struct Streams {
  std::ostream& out;
  std::ostream& err;

  // Resolved configuration goes to stderr so stdout carries only results.
  void resolved(const json& cfg) const { err << "resolved config: " << cfg.dump() << "\n"; }
};

// A missing or unreadable config file is a configuration problem, not a data one.
inline json load_config(const fs::path& file) {
  if (!fs::is_regular_file(file)) throw ConfigError("config file '" + file.string() + "' not found");
  return load_json_file(file);
}

inline int preprocess(const Streams& io, const fs::path& recipe_file, const fs::path& in, const fs::path& out,
                      std::optional<std::uint64_t> seed) {
  data::DatasetRecipe recipe = data::recipe_from_json(load_config(recipe_file));
  if (seed) recipe.split_seed = *seed;
  io.resolved(data::to_json(recipe));
  auto result = data::preprocess_files(recipe, in, out);
  io.out << result.summary.dump(2) << "\n";
  return kOk;
}

inline int split(const Streams& io, const fs::path& data_dir, std::optional<std::uint64_t> seed) {
  const auto recipe = data::recipe_from_json(load_json_file(data_dir / "recipe.json"));
  io.resolved(json{{"data", data_dir.string()}, {"seed", seed.value_or(recipe.split_seed)}, {"ratios", recipe.ratios}});
  auto splits = data::prepare_splits(data_dir, seed);
  json summary = json::object();
  for (const char* part : {"train", "validation", "test"}) summary[part] = splits.manifest.at("files").at(part);
  summary["feature_map_digest"] = splits.manifest.at("feature_map_digest");
  summary["total_features"] = splits.feature_map.total_features;
  io.out << summary.dump(2) << "\n";
  return kOk;
}

inline int train(const Streams& io, const fs::path& config, const fs::path& data_dir, const fs::path& out,
                 std::optional<std::uint64_t> seed) {
  bench::Experiment e = bench::experiment_from_json(load_config(config));
  if (seed) e.train.seed = *seed;
  io.resolved(bench::to_json(e));
  for (const auto& w : train::protocol_warnings(e.train)) io.err << "warning: " << w << "\n";
  const auto splits = data::load_splits(data_dir);
  auto trials = bench::run_trials({e}, splits, out);
  const auto& t = trials.front();
  if (!t.ok()) {
    io.err << "error: trial " << t.digest << " failed: " << t.reason << "\n";
    return exit_code_for(t.error_kind);
  }
  json report = t.result.to_json(false);
  report["digest"] = t.digest;
  report["dir"] = t.dir.string();
  report["resumed"] = t.resumed;
  io.out << report.dump(2) << "\n";
  return kOk;
}

inline std::size_t planned_trials(const bench::SearchSpace& s) {
  if (s.stages.empty()) {
    std::vector<std::string> keys;
    for (const auto& [k, _] : s.options) keys.push_back(k);
    return bench::grid_size(s, keys);
  }
  std::size_t n = 0;
  for (const auto& stage : s.stages) n += bench::grid_size(s, stage);
  return n;
}

inline int tune(const Streams& io, const fs::path& space_file, const fs::path& data_dir, const fs::path& out,
                std::size_t parallel, std::optional<std::uint64_t> seed) {
  json j = load_config(space_file);
  if (seed) {
    if (!j.contains("base") || !j["base"].is_object()) throw ConfigError("search: missing 'base'");
    j["base"]["train"]["seed"] = *seed;
  }
  const bench::SearchSpace space = bench::search_space_from_json(j);
  json resolved{{"base", bench::detail::resolve(space.base)}, {"space", space.options}, {"parallel", parallel},
                {"planned_trials", planned_trials(space)}};
  if (!space.stages.empty()) resolved["stages"] = space.stages;
  io.resolved(resolved);
  const auto splits = data::load_splits(data_dir);
  const auto sweep = bench::run_sweep(space, splits, out, parallel);
  std::size_t ok = 0;
  std::string first_failure;
  for (const auto& t : sweep.trials) {
    io.err << t.digest << (t.ok() ? (t.resumed ? " resumed" : " done") : " failed: " + t.reason) << "\n";
    if (t.ok()) ++ok;
    else if (first_failure.empty()) first_failure = t.error_kind;
  }
  if (ok == 0) {
    io.err << "error: every trial failed\n";
    return exit_code_for(first_failure);
  }
  io.out << bench::emit_leaderboard(sweep.trials, bench::ReportFormat::markdown);
  return kOk;
}

inline int report(const Streams& io, const fs::path& runs, const std::string& format, std::optional<std::uint64_t> seed) {
  const auto fmt = bench::parse_report_format(format);
  json resolved{{"runs", runs.string()}, {"format", format}};
  if (seed) resolved["seed"] = *seed;
  io.resolved(resolved);
  auto trials = bench::load_runs(runs);
  if (seed) std::erase_if(trials, [&](const bench::TrialRecord& t) { return t.experiment.train.seed != *seed; });
  io.out << bench::emit_leaderboard(trials, fmt);
  return kOk;
}

inline int gradcheck(const Streams& io, const std::string& model, std::uint64_t seed, double tol) {
  if (!models::is_model_name(model)) throw ConfigError("unknown model '" + model + "'");
  io.resolved(json{{"model", model}, {"seed", seed}, {"tolerance", tol}});
  const auto check = models::model_grad_check(model, seed, tol);
  for (const auto& e : check.report.entries) {
    io.out << (e.flagged ? "FAIL " : "ok   ") << e.name << " max_rel_error=" << e.max_rel_error;
    if (e.flagged) io.out << " at index " << e.worst_index << " analytic=" << e.analytic << " numeric=" << e.numeric;
    io.out << "\n";
  }
  io.out << model << ": " << check.param_count << " params, max relative error " << check.report.max_error()
         << (check.report.passed() ? " (pass)" : " (FAIL)") << "\n";
  return check.report.passed() ? kOk : kNumeric;
}

inline int synth(const Streams& io, const fs::path& spec_file, const fs::path& out, std::optional<std::uint64_t> seed) {
  synth::SynthSpec spec = synth::synth_spec_from_json(load_config(spec_file));
  if (seed) spec.seed = *seed;
  io.resolved(synth::to_json(spec));
  io.out << synth::write_synthetic(spec, out).dump(2) << "\n";
  return kOk;
}

}  // namespace detail

// Parses argv and runs one subcommand. Returns the process exit code:
// 0 success, 1 usage or configuration error, 2 data error, 3 numeric failure.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"CTR prediction benchmark: preprocess, split, train, tune and report", "barsctr"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  std::string recipe, in, out_dir, data_dir, config, space, runs, format = "md", model, spec;
  std::size_t parallel = 1;
  double tol = 1e-4;

  auto* pre = app.add_subcommand("preprocess", "Raw CSV to a tokenized, filtered table");
  pre->add_option("--recipe", recipe, "dataset recipe (JSON)")->required();
  pre->add_option("--in", in, "raw CSV file")->required();
  pre->add_option("--out", out_dir, "output data directory")->required();

  auto* spl = app.add_subcommand("split", "Seeded 8:1:1 split, feature map and binary encoding");
  spl->add_option("--data", data_dir, "preprocessed data directory")->required();

  auto* trn = app.add_subcommand("train", "Train one configuration");
  trn->add_option("--config", config, "experiment config (JSON)")->required();
  trn->add_option("--data", data_dir, "split data directory")->required();
  trn->add_option("--out", out_dir, "runs directory")->required();

  auto* tun = app.add_subcommand("tune", "Grid search over a search space");
  tun->add_option("--space", space, "search space (JSON)")->required();
  tun->add_option("--data", data_dir, "split data directory")->required();
  tun->add_option("--out", out_dir, "runs directory")->required();
  tun->add_option("--parallel", parallel, "trials run at once")->check(CLI::PositiveNumber);

  auto* rep = app.add_subcommand("report", "Leaderboard over a runs directory");
  rep->add_option("--runs", runs, "runs directory")->required();
  rep->add_option("--format", format, "md or csv")->check(CLI::IsMember({"md", "markdown", "csv"}));

  auto* grd = app.add_subcommand("gradcheck", "Finite-difference gradient check of one model");
  grd->add_option("--model", model, "model name")->required();
  grd->add_option("--tol", tol, "relative error tolerance");

  auto* syn = app.add_subcommand("synth", "Synthetic dataset with a known click model");
  syn->add_option("--spec", spec, "synthetic spec (JSON)")->required();
  syn->add_option("--out", out_dir, "output directory")->required();

  for (auto* sub : {pre, spl, trn, tun, rep, grd, syn}) sub->add_option("--seed", seed, "seed override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfig;
  }

  const detail::Streams io{out, err};
  try {
    if (*pre) return detail::preprocess(io, recipe, in, out_dir, seed);
    if (*spl) return detail::split(io, data_dir, seed);
    if (*trn) return detail::train(io, config, data_dir, out_dir, seed);
    if (*tun) return detail::tune(io, space, data_dir, out_dir, parallel, seed);
    if (*rep) return detail::report(io, runs, format, seed);
    if (*grd) return detail::gradcheck(io, model, seed.value_or(7), tol);
    if (*syn) return detail::synth(io, spec, out_dir, seed);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const json::exception& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfig;
  }
  return kConfig;
}

}  // namespace barsctr::cli

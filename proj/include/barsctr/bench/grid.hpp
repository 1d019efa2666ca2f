#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "barsctr/bench/experiment.hpp"
#include "barsctr/json_util.hpp"

namespace barsctr::bench {

// Search space file: {"base": <experiment>, "space": {"model.l2": [0, 1e-5],
// "train.learning_rate": [1e-3, 1e-2]}, "stages": [["model.l2"], [...]]}.
// Keys are "<section>.<key>" paths into the experiment config.
struct SearchSpace {
  json base;
  std::map<std::string, std::vector<json>> options;  // ordered by key name
  std::vector<std::vector<std::string>> stages;      // empty = one full grid
};

namespace detail {

inline std::pair<std::string, std::string> split_key(const std::string& key) {
  const auto dot = key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == key.size()) {
    throw ConfigError("search key '" + key + "' must look like <section>.<key>");
  }
  return {key.substr(0, dot), key.substr(dot + 1)};
}

inline json with_value(json cfg, const std::string& key, const json& value) {
  auto [section, name] = split_key(key);
  cfg[section][name] = value;
  return cfg;
}

// Parses through the strict config readers, so unknown keys and bad values
// fail here; returns the canonical resolved form.
inline json resolve(const json& cfg) { return to_json(experiment_from_json(cfg)); }

}  // namespace detail

inline void validate(const SearchSpace& s) {
  Experiment base = experiment_from_json(s.base);
  for (const auto& [key, opts] : s.options) {
    if (opts.empty()) throw ConfigError("search key '" + key + "' has an empty option list");
    auto [section, name] = detail::split_key(key);
    if (section != "model" && section != "train" && section != "dataset") {
      throw ConfigError("search key '" + key + "': unknown section '" + section + "'");
    }
    // every option must resolve on top of the base
    for (const auto& v : opts) detail::resolve(detail::with_value(to_json(base), key, v));
  }
  if (s.stages.empty()) return;
  std::set<std::string> covered;
  for (const auto& stage : s.stages) {
    if (stage.empty()) throw ConfigError("search stage with no keys");
    for (const auto& k : stage) {
      if (!s.options.count(k)) throw ConfigError("stage key '" + k + "' is not in the search space");
      if (!covered.insert(k).second) throw ConfigError("stage key '" + k + "' appears in two stages");
    }
  }
  for (const auto& [key, _] : s.options)
    if (!covered.count(key)) throw ConfigError("search key '" + key + "' belongs to no stage");
}

inline SearchSpace search_space_from_json(const json& j) {
  require_known_keys(j, {"base", "space", "stages"}, "search");
  SearchSpace s;
  if (!j.contains("base")) throw ConfigError("search: missing 'base'");
  s.base = j["base"];
  if (j.contains("space")) {
    if (!j["space"].is_object()) throw ConfigError("search.space must be an object");
    for (const auto& [k, v] : j["space"].items()) {
      if (!v.is_array()) throw ConfigError("search key '" + k + "' needs a list of options");
      s.options[k] = std::vector<json>(v.begin(), v.end());
    }
  }
  if (j.contains("stages")) s.stages = j["stages"].get<std::vector<std::vector<std::string>>>();
  validate(s);
  return s;
}

inline std::size_t grid_size(const SearchSpace& s, const std::vector<std::string>& keys) {
  std::size_t n = 1;
  for (const auto& k : keys) n *= s.options.at(k).size();
  return n;
}

// Cartesian product over `keys` on top of `center`; keys in name order, the
// first key varying slowest, options in listed order.
inline std::vector<Experiment> expand_keys(const SearchSpace& s, const json& center, std::vector<std::string> keys) {
  std::sort(keys.begin(), keys.end());
  std::vector<Experiment> out;
  std::vector<std::size_t> pick(keys.size(), 0);
  const std::size_t total = grid_size(s, keys);
  for (std::size_t n = 0; n < total; ++n) {
    json cfg = center;
    for (std::size_t i = 0; i < keys.size(); ++i) cfg = detail::with_value(cfg, keys[i], s.options.at(keys[i])[pick[i]]);
    out.push_back(experiment_from_json(cfg));
    for (std::size_t i = keys.size(); i-- > 0;) {
      if (++pick[i] < s.options.at(keys[i]).size()) break;
      pick[i] = 0;
    }
  }
  return out;
}

// Full grid over every key (non-staged spaces).
inline std::vector<Experiment> expand_grid(const SearchSpace& s) {
  std::vector<std::string> keys;
  for (const auto& [k, _] : s.options) keys.push_back(k);
  return expand_keys(s, detail::resolve(s.base), keys);
}

// Stage k's grid around `center`, the best config of stage k-1 (or the base).
inline std::vector<Experiment> expand_stage(const SearchSpace& s, std::size_t stage, const json& center) {
  if (stage >= s.stages.size()) throw ConfigError("no search stage " + std::to_string(stage));
  return expand_keys(s, center, s.stages[stage]);
}

}  // namespace barsctr::bench

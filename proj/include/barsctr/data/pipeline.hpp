#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "barsctr/data/csv.hpp"
#include "barsctr/data/dataset.hpp"
#include "barsctr/data/feature_map.hpp"
#include "barsctr/data/recipe.hpp"
#include "barsctr/data/split.hpp"
#include "barsctr/digest.hpp"
#include "barsctr/json_util.hpp"
#include "barsctr/rng.hpp"

namespace barsctr::data {

namespace fs = std::filesystem;

inline constexpr const char* kBarsFormat = "BARS1";
inline constexpr const char* kSplitFiles[3] = {"train.bars", "valid.bars", "test.bars"};

inline std::vector<std::string> split_tokens(const std::string& cell, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= cell.size()) {
    const std::size_t end = cell.find(sep, start);
    const std::string item = cell.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!item.empty()) out.push_back(item);
    if (end == std::string::npos) break;
    start = end + sep.size();
  }
  return out;
}

inline std::uint8_t parse_label(const std::string& cell, std::size_t row, const std::string& name) {
  if (cell == "0") return 0;
  if (cell == "1") return 1;
  throw ParseError(row, name, "label must be 0 or 1, got '" + cell + "'");
}

// Applies the recipe's per-field transforms to a raw CSV with a header row.
// Every column must be the label or a non-derived recipe field, and every
// non-derived recipe field must be present.
inline TokenTable preprocess_stream(const DatasetRecipe& recipe, std::istream& in) {
  CsvReader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw DataError("preprocess: input is empty");
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!column.emplace(header[i], i).second) throw DataError("preprocess: duplicate column '" + header[i] + "'");
  }
  if (!column.contains(recipe.label)) throw DataError("preprocess: label column '" + recipe.label + "' is missing");
  for (const auto& name : header) {
    if (name == recipe.label) continue;
    auto it = std::find_if(recipe.fields.begin(), recipe.fields.end(),
                           [&](const FieldSpec& f) { return f.name == name && !f.is_derived(); });
    if (it == recipe.fields.end()) throw DataError("preprocess: column '" + name + "' is not described by the recipe");
  }
  for (const auto& f : recipe.fields) {
    if (!f.is_derived() && !column.contains(f.name)) throw DataError("preprocess: recipe field '" + f.name + "' has no column");
  }

  const auto outputs = recipe.output_fields();
  TokenTable table(outputs);
  std::vector<std::string> cells;
  std::vector<std::vector<std::string>> tokens(outputs.size());
  const std::size_t label_col = column.at(recipe.label);
  while (reader.next(cells)) {
    const std::size_t row = reader.record_number() - 1;  // data rows count from 1
    if (cells.size() == 1 && cells[0].empty()) continue;  // blank line
    if (cells.size() != header.size()) {
      throw ParseError(row, "<record>", "expected " + std::to_string(header.size()) + " cells, got " +
                                            std::to_string(cells.size()));
    }
    for (std::size_t f = 0; f < outputs.size(); ++f) {
      const FieldSpec& spec = outputs[f];
      auto& out = tokens[f];
      out.clear();
      if (spec.is_derived()) {
        const std::string& raw = cells[column.at(*spec.derived_from)];
        try {
          out.push_back(timestamp_part(expand_timestamp(raw, recipe.timestamp_format), *spec.derive));
        } catch (const ConfigError&) {
          throw;
        } catch (const DataError& e) {
          throw ParseError(row, *spec.derived_from, e.what());
        }
        continue;
      }
      const std::string& raw = cells[column.at(spec.name)];
      switch (spec.kind) {
        case FieldKind::categorical:
          out.push_back(raw.empty() ? std::string(kMissingToken) : raw);
          break;
        case FieldKind::numeric:
          if (spec.numeric_transform == NumericTransform::none) {
            out.push_back(raw.empty() ? std::string(kMissingToken) : raw);
          } else {
            out.push_back(discretize_numeric(parse_numeric(raw, row, spec.name), spec.numeric_transform));
          }
          break;
        case FieldKind::sequence:
          out = split_tokens(raw, spec.separator);
          break;
      }
    }
    table.append(tokens, parse_label(cells[label_col], row, recipe.label));
  }
  if (table.rows() == 0) throw DataError("preprocess: no data rows");
  return table;
}

inline std::string join_tokens(const TokenTable& t, std::size_t f, std::size_t row) {
  std::string s;
  const auto items = t.row_items(f, row);
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k) s += t.fields[f].separator;
    s += t.columns[f].dictionary[items[k]];
  }
  return s;
}

inline void write_token_table(std::ostream& out, const TokenTable& t, const std::string& label) {
  std::vector<std::string> cells;
  for (const auto& f : t.fields) cells.push_back(f.name);
  cells.push_back(label);
  write_csv_row(out, cells);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    cells.clear();
    for (std::size_t f = 0; f < t.fields.size(); ++f) cells.push_back(join_tokens(t, f, r));
    cells.push_back(t.labels[r] ? "1" : "0");
    write_csv_row(out, cells);
  }
}

inline TokenTable read_token_table(std::istream& in, const DatasetRecipe& recipe) {
  CsvReader reader(in);
  const auto outputs = recipe.output_fields();
  std::vector<std::string> cells;
  if (!reader.next(cells) || cells.size() != outputs.size() + 1) throw DataError("token table: bad header");
  for (std::size_t f = 0; f < outputs.size(); ++f)
    if (cells[f] != outputs[f].name) throw DataError("token table: column '" + cells[f] + "' does not match the recipe");
  TokenTable table(outputs);
  std::vector<std::vector<std::string>> tokens(outputs.size());
  while (reader.next(cells)) {
    const std::size_t row = reader.record_number() - 1;
    if (cells.size() == 1 && cells[0].empty()) continue;
    if (cells.size() != outputs.size() + 1) throw ParseError(row, "<record>", "wrong cell count in token table");
    for (std::size_t f = 0; f < outputs.size(); ++f) {
      tokens[f] = outputs[f].is_sequence() ? split_tokens(cells[f], outputs[f].separator)
                                           : std::vector<std::string>{cells[f]};
    }
    table.append(tokens, parse_label(cells.back(), row, recipe.label));
  }
  return table;
}

struct PreprocessResult {
  json summary;
  TokenTable table;
};

// raw CSV -> <out>/tokens.csv, <out>/recipe.json, <out>/preprocess.json
inline PreprocessResult preprocess_files(const DatasetRecipe& recipe, const fs::path& csv_path, const fs::path& out_dir) {
  const std::string raw = read_file(csv_path);
  std::istringstream in(raw);
  TokenTable table = preprocess_stream(recipe, in);
  std::ostringstream tokens;
  write_token_table(tokens, table, recipe.label);
  const std::string token_bytes = tokens.str();
  write_file(out_dir / "tokens.csv", token_bytes);
  save_json_file(out_dir / "recipe.json", to_json(recipe));
  json summary{{"source", csv_path.filename().string()},
               {"source_md5", md5_hex(raw)},
               {"recipe_digest", json_digest(to_json(recipe))},
               {"rows", table.rows()},
               {"tokens_md5", md5_hex(token_bytes)}};
  save_json_file(out_dir / "preprocess.json", summary);
  return {summary, std::move(table)};
}

struct SplitTriple {
  EncodedDataset train, validation, test;
  FeatureMap feature_map;
  json manifest;

  const EncodedDataset& part(std::size_t k) const { return k == 0 ? train : k == 1 ? validation : test; }
};

// Splits a preprocessed directory, builds the feature map from the training
// rows, encodes all three parts and writes them with a manifest.
inline SplitTriple prepare_splits(const fs::path& data_dir, std::optional<std::uint64_t> seed_override = std::nullopt) {
  const DatasetRecipe recipe = recipe_from_json(load_json_file(data_dir / "recipe.json"));
  const json pre = load_json_file(data_dir / "preprocess.json");
  const std::string token_bytes = read_file(data_dir / "tokens.csv");
  if (md5_hex(token_bytes) != pre.at("tokens_md5").get<std::string>()) {
    throw DataError("tokens.csv does not match the md5 in preprocess.json");
  }
  std::istringstream in(token_bytes);
  const TokenTable table = read_token_table(in, recipe);
  const std::uint64_t seed = seed_override.value_or(recipe.split_seed);
  const SplitIndices idx = split_dataset(table.rows(), seed, recipe.ratios);

  SplitTriple out;
  out.feature_map = build_feature_map(table, idx.train);
  out.train = encode_rows(table, idx.train, out.feature_map);
  out.validation = encode_rows(table, idx.validation, out.feature_map);
  out.test = encode_rows(table, idx.test, out.feature_map);

  json files = json::object();
  json partitions = json::object();
  const char* names[3] = {"train", "validation", "test"};
  EncodedDataset* parts[3] = {&out.train, &out.validation, &out.test};
  for (int k = 0; k < 3; ++k) {
    write_bars1(data_dir / kSplitFiles[k], *parts[k]);
    files[names[k]] = {{"path", kSplitFiles[k]}, {"md5", parts[k]->md5}, {"samples", parts[k]->size()}};
    partitions[names[k]] = partition_digest(idx.part(k));
  }
  out.manifest = {{"format", kBarsFormat},
                  {"prng", kPrngId},
                  {"split_seed", seed},
                  {"ratios", recipe.ratios},
                  {"recipe_digest", pre.at("recipe_digest")},
                  {"source_md5", pre.at("source_md5")},
                  {"feature_map", out.feature_map.to_json()},
                  {"feature_map_digest", out.feature_map.digest()},
                  {"files", files},
                  {"partition_digests", partitions}};
  save_json_file(data_dir / "manifest.json", out.manifest);
  return out;
}

// Loads the three encoded parts and checks them against the manifest.
inline SplitTriple load_splits(const fs::path& data_dir) {
  SplitTriple out;
  if (!fs::exists(data_dir / "manifest.json")) {
    throw DataError("no manifest.json in '" + data_dir.string() + "'; run split first");
  }
  out.manifest = load_json_file(data_dir / "manifest.json");
  out.feature_map = FeatureMap::from_json(out.manifest.at("feature_map"));
  const std::string map_digest = out.feature_map.digest();
  if (map_digest != out.manifest.at("feature_map_digest").get<std::string>()) {
    throw DataError("manifest feature map digest mismatch");
  }
  const char* names[3] = {"train", "validation", "test"};
  EncodedDataset* parts[3] = {&out.train, &out.validation, &out.test};
  for (int k = 0; k < 3; ++k) {
    const json& entry = out.manifest.at("files").at(names[k]);
    *parts[k] = read_bars1(data_dir / entry.at("path").get<std::string>());
    if (parts[k]->md5 != entry.at("md5").get<std::string>()) {
      throw DataError(std::string("md5 mismatch for ") + names[k] + " split");
    }
    auto expected = layout_of(out.feature_map);
    for (std::size_t f = 0; f < expected.size() && f < parts[k]->fields.size(); ++f)
      parts[k]->fields[f].pooling = expected[f].pooling;  // pooling lives in the feature map only
    if (expected != parts[k]->fields) {
      throw DataError(std::string("field layout of ") + names[k] + " split does not match the feature map");
    }
    parts[k]->feature_map_digest = map_digest;
  }
  return out;
}

}  // namespace barsctr::data

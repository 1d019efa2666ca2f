#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "barsctr/data/recipe.hpp"
#include "barsctr/json_util.hpp"

namespace barsctr::data {

inline constexpr std::uint32_t kPaddingIndex = 0;
inline constexpr std::uint32_t kOovIndex = 1;

// One field's tokens after per-field transforms, interned. Scalar fields hold
// exactly one item per row; sequence fields carry row offsets.
struct TokenColumn {
  std::vector<std::string> dictionary;
  std::unordered_map<std::string, std::uint32_t> lookup;
  std::vector<std::uint32_t> items;
  std::vector<std::size_t> row_offsets;  // sequence only, rows + 1 entries

  std::uint32_t intern(const std::string& token) {
    auto [it, inserted] = lookup.try_emplace(token, static_cast<std::uint32_t>(dictionary.size()));
    if (inserted) dictionary.push_back(token);
    return it->second;
  }
};

struct TokenTable {
  std::vector<FieldSpec> fields;
  std::vector<TokenColumn> columns;
  std::vector<std::uint8_t> labels;

  explicit TokenTable(std::vector<FieldSpec> specs = {}) : fields(std::move(specs)), columns(fields.size()) {
    for (std::size_t f = 0; f < fields.size(); ++f)
      if (fields[f].is_sequence()) columns[f].row_offsets.push_back(0);
  }

  std::size_t rows() const { return labels.size(); }

  // Item ids of one row in one field.
  std::span<const std::uint32_t> row_items(std::size_t field, std::size_t row) const {
    const TokenColumn& c = columns[field];
    if (!fields[field].is_sequence()) return {c.items.data() + row, 1};
    return {c.items.data() + c.row_offsets[row], c.row_offsets[row + 1] - c.row_offsets[row]};
  }

  // Appends a row given per-field token lists (scalar fields: exactly one).
  void append(const std::vector<std::vector<std::string>>& tokens, std::uint8_t label) {
    for (std::size_t f = 0; f < fields.size(); ++f) {
      TokenColumn& c = columns[f];
      for (const auto& t : tokens[f]) c.items.push_back(c.intern(t));
      if (fields[f].is_sequence()) c.row_offsets.push_back(c.items.size());
    }
    labels.push_back(label);
  }
};

struct FieldVocab {
  FieldSpec spec;
  std::vector<std::string> tokens;  // tokens[k] has index k + 2
  std::unordered_map<std::string, std::uint32_t> index;
  std::uint64_t offset = 0;  // start in the global feature space

  std::uint32_t size() const { return static_cast<std::uint32_t>(tokens.size() + 2); }
  std::uint32_t encode(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? kOovIndex : it->second;
  }
};

struct FeatureMap {
  std::vector<FieldVocab> fields;
  std::uint64_t total_features = 0;

  const FieldVocab& field(std::string_view name) const {
    for (const auto& f : fields)
      if (f.spec.name == name) return f;
    throw ConfigError("feature map has no field '" + std::string(name) + "'");
  }

  json to_json() const {
    json fj = json::array();
    for (const auto& f : fields) {
      json j = data::to_json(f.spec);
      j["vocab_size"] = f.size();
      j["offset"] = f.offset;
      j["tokens"] = f.tokens;
      fj.push_back(std::move(j));
    }
    return json{{"fields", fj}, {"total_features", total_features}};
  }

  std::string digest() const { return json_digest(to_json()); }

  static FeatureMap from_json(const json& j) {
    FeatureMap m;
    for (const auto& fj : j.at("fields")) {
      json spec = fj;
      spec.erase("vocab_size");
      spec.erase("offset");
      spec.erase("tokens");
      FieldVocab v;
      v.spec = field_spec_from_json(spec, 1);
      v.tokens = fj.at("tokens").get<std::vector<std::string>>();
      for (std::size_t k = 0; k < v.tokens.size(); ++k) v.index.emplace(v.tokens[k], static_cast<std::uint32_t>(k + 2));
      v.offset = fj.at("offset").get<std::uint64_t>();
      if (fj.at("vocab_size").get<std::uint32_t>() != v.size()) {
        throw DataError("feature map field '" + v.spec.name + "' has inconsistent vocab_size");
      }
      m.fields.push_back(std::move(v));
    }
    m.total_features = j.at("total_features").get<std::uint64_t>();
    return m;
  }
};

// Builds vocabularies from the rows in `rows` (normally the training split).
// Per field, tokens seen at least min_count times get indices 2.. ordered by
// descending count then token text; everything else encodes to OOV (1);
// index 0 is padding.
inline FeatureMap build_feature_map(const TokenTable& table, std::span<const std::size_t> rows) {
  if (table.fields.empty()) throw ConfigError("build_feature_map: no fields");
  if (rows.empty()) throw ConfigError("build_feature_map: empty input");
  std::set<std::string> names;
  for (const auto& f : table.fields)
    if (!names.insert(f.name).second) throw ConfigError("build_feature_map: duplicate field name '" + f.name + "'");

  FeatureMap map;
  std::uint64_t offset = 0;
  for (std::size_t f = 0; f < table.fields.size(); ++f) {
    const TokenColumn& col = table.columns[f];
    std::vector<std::uint64_t> counts(col.dictionary.size(), 0);
    for (std::size_t r : rows)
      for (std::uint32_t id : table.row_items(f, r)) ++counts[id];
    std::vector<std::uint32_t> kept;
    for (std::uint32_t id = 0; id < counts.size(); ++id) {
      if (counts[id] > 0 && counts[id] >= table.fields[f].min_count) kept.push_back(id);
    }
    std::sort(kept.begin(), kept.end(), [&](std::uint32_t a, std::uint32_t b) {
      if (counts[a] != counts[b]) return counts[a] > counts[b];
      return col.dictionary[a] < col.dictionary[b];
    });
    FieldVocab v;
    v.spec = table.fields[f];
    v.offset = offset;
    for (std::uint32_t id : kept) {
      v.index.emplace(col.dictionary[id], static_cast<std::uint32_t>(v.tokens.size() + 2));
      v.tokens.push_back(col.dictionary[id]);
    }
    offset += v.size();
    map.fields.push_back(std::move(v));
  }
  map.total_features = offset;
  return map;
}

inline FeatureMap build_feature_map(const TokenTable& table) {
  std::vector<std::size_t> all(table.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return build_feature_map(table, all);
}

}  // namespace barsctr::data

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "barsctr/data/transforms.hpp"
#include "barsctr/json_util.hpp"

namespace barsctr::data {

enum class FieldKind : std::uint8_t { categorical = 0, numeric = 1, sequence = 2 };
enum class Pooling { mean, sum };

inline std::string to_string(FieldKind k) {
  switch (k) {
    case FieldKind::categorical: return "categorical";
    case FieldKind::numeric: return "numeric";
    case FieldKind::sequence: return "sequence";
  }
  return "?";
}

inline FieldKind field_kind_from(const std::string& s) {
  if (s == "categorical") return FieldKind::categorical;
  if (s == "numeric") return FieldKind::numeric;
  if (s == "sequence") return FieldKind::sequence;
  throw ConfigError("unknown field kind '" + s + "'");
}

inline std::string to_string(Pooling p) { return p == Pooling::mean ? "mean" : "sum"; }

inline Pooling pooling_from(const std::string& s) {
  if (s == "mean") return Pooling::mean;
  if (s == "sum") return Pooling::sum;
  throw ConfigError("unknown pooling '" + s + "'");
}

inline std::string to_string(NumericTransform t) {
  switch (t) {
    case NumericTransform::none: return "none";
    case NumericTransform::log_squared_floor: return "log_squared_floor";
    case NumericTransform::log2_squared_floor: return "log2_squared_floor";
    case NumericTransform::log_squared_floor_collapse: return "log_squared_floor_collapse";
  }
  return "?";
}

inline NumericTransform numeric_transform_from(const std::string& s) {
  if (s == "none") return NumericTransform::none;
  if (s == "log_squared_floor") return NumericTransform::log_squared_floor;
  if (s == "log2_squared_floor") return NumericTransform::log2_squared_floor;
  if (s == "log_squared_floor_collapse") return NumericTransform::log_squared_floor_collapse;
  throw ConfigError("unknown numeric_transform '" + s + "'");
}

inline std::string to_string(TimestampPart p) {
  switch (p) {
    case TimestampPart::hour: return "hour";
    case TimestampPart::weekday: return "weekday";
    case TimestampPart::is_weekend: return "is_weekend";
  }
  return "?";
}

inline TimestampPart timestamp_part_from(const std::string& s) {
  if (s == "hour") return TimestampPart::hour;
  if (s == "weekday") return TimestampPart::weekday;
  if (s == "is_weekend") return TimestampPart::is_weekend;
  throw ConfigError("unknown timestamp part '" + s + "'");
}

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::categorical;
  std::uint32_t min_count = 1;
  NumericTransform numeric_transform = NumericTransform::none;
  std::uint16_t max_len = 0;  // sequence only
  Pooling pooling = Pooling::mean;  // sequence only
  std::string separator = "^";      // sequence only
  bool drop = false;
  std::optional<std::string> derived_from;  // timestamp expansion source
  std::optional<TimestampPart> derive;

  bool is_sequence() const { return kind == FieldKind::sequence; }
  bool is_derived() const { return derived_from.has_value(); }
};

struct DatasetRecipe {
  std::string dataset_id = "dataset";
  std::string label = "label";
  std::string timestamp_format = "%y%m%d%H";
  std::uint64_t split_seed = 2018;
  std::array<std::uint32_t, 3> ratios{8, 1, 1};
  std::vector<FieldSpec> fields;

  // Fields that survive into the encoded data, in recipe order.
  std::vector<FieldSpec> output_fields() const {
    std::vector<FieldSpec> out;
    for (const auto& f : fields)
      if (!f.drop) out.push_back(f);
    return out;
  }
};

inline json to_json(const FieldSpec& f) {
  json j{{"name", f.name}, {"kind", to_string(f.kind)}, {"min_count", f.min_count}};
  if (f.kind == FieldKind::numeric) j["numeric_transform"] = to_string(f.numeric_transform);
  if (f.is_sequence()) {
    j["max_len"] = f.max_len;
    j["pooling"] = to_string(f.pooling);
    j["separator"] = f.separator;
  }
  if (f.drop) j["drop"] = true;
  if (f.derived_from) {
    j["derived_from"] = *f.derived_from;
    j["derive"] = to_string(*f.derive);
  }
  return j;
}

inline void validate(const FieldSpec& f) {
  if (f.name.empty()) throw ConfigError("field with empty name");
  if (f.is_sequence()) {
    if (f.max_len == 0) throw ConfigError("sequence field '" + f.name + "' needs max_len >= 1");
    if (f.separator.empty()) throw ConfigError("sequence field '" + f.name + "' needs a separator");
  }
  if (f.derived_from.has_value() != f.derive.has_value()) {
    throw ConfigError("field '" + f.name + "': derived_from and derive go together");
  }
  if (f.is_derived() && f.kind != FieldKind::categorical) {
    throw ConfigError("derived field '" + f.name + "' must be categorical");
  }
}

inline FieldSpec field_spec_from_json(const json& j, std::uint32_t default_min_count) {
  require_known_keys(j,
                     {"name", "kind", "min_count", "numeric_transform", "max_len", "pooling", "separator", "drop",
                      "derived_from", "derive"},
                     "field");
  FieldSpec f;
  f.name = get_required<std::string>(j, "name", "field");
  const std::string ctx = "field '" + f.name + "'";
  f.kind = field_kind_from(get_or<std::string>(j, "kind", "categorical", ctx));
  f.min_count = get_or<std::uint32_t>(j, "min_count", default_min_count, ctx);
  if (j.contains("numeric_transform")) {
    if (f.kind != FieldKind::numeric) throw ConfigError(ctx + ": numeric_transform on a non-numeric field");
    f.numeric_transform = numeric_transform_from(j["numeric_transform"].get<std::string>());
  } else if (f.kind == FieldKind::numeric) {
    f.numeric_transform = NumericTransform::log_squared_floor;
  }
  const bool seq_keys = j.contains("max_len") || j.contains("pooling") || j.contains("separator");
  if (seq_keys && f.kind != FieldKind::sequence) {
    throw ConfigError(ctx + ": max_len/pooling/separator only apply to sequence fields");
  }
  f.max_len = get_or<std::uint16_t>(j, "max_len", 0, ctx);
  f.pooling = pooling_from(get_or<std::string>(j, "pooling", "mean", ctx));
  f.separator = get_or<std::string>(j, "separator", "^", ctx);
  f.drop = get_or<bool>(j, "drop", false, ctx);
  if (j.contains("derived_from")) f.derived_from = j["derived_from"].get<std::string>();
  if (j.contains("derive")) f.derive = timestamp_part_from(j["derive"].get<std::string>());
  validate(f);
  return f;
}

inline DatasetRecipe recipe_from_json(const json& j) {
  require_known_keys(j, {"dataset_id", "label", "min_count", "timestamp_format", "split", "fields"}, "recipe");
  DatasetRecipe r;
  r.dataset_id = get_or<std::string>(j, "dataset_id", r.dataset_id, "recipe");
  r.label = get_or<std::string>(j, "label", r.label, "recipe");
  r.timestamp_format = get_or<std::string>(j, "timestamp_format", r.timestamp_format, "recipe");
  const auto default_min_count = get_or<std::uint32_t>(j, "min_count", 1, "recipe");
  if (j.contains("split")) {
    const json& s = j["split"];
    require_known_keys(s, {"seed", "ratios"}, "recipe.split");
    r.split_seed = get_or<std::uint64_t>(s, "seed", r.split_seed, "recipe.split");
    if (s.contains("ratios")) {
      auto v = s["ratios"].get<std::vector<std::uint32_t>>();
      if (v.size() != 3 || v[0] + v[1] + v[2] == 0) throw ConfigError("recipe.split.ratios needs three parts");
      r.ratios = {v[0], v[1], v[2]};
    }
  }
  if (!j.contains("fields") || !j["fields"].is_array() || j["fields"].empty()) {
    throw ConfigError("recipe: 'fields' must be a non-empty list");
  }
  std::set<std::string> names;
  for (const auto& fj : j["fields"]) {
    FieldSpec f = field_spec_from_json(fj, default_min_count);
    if (!names.insert(f.name).second) throw ConfigError("recipe: duplicate field name '" + f.name + "'");
    if (f.name == r.label) throw ConfigError("recipe: field '" + f.name + "' clashes with the label column");
    r.fields.push_back(std::move(f));
  }
  for (const auto& f : r.fields) {
    if (!f.derived_from) continue;
    auto src = std::find_if(r.fields.begin(), r.fields.end(), [&](const auto& g) { return g.name == *f.derived_from; });
    if (src == r.fields.end() || src->is_derived()) {
      throw ConfigError("field '" + f.name + "' derives from unknown source '" + *f.derived_from + "'");
    }
  }
  if (r.output_fields().empty()) throw ConfigError("recipe: every field is dropped");
  return r;
}

inline json to_json(const DatasetRecipe& r) {
  json fields = json::array();
  for (const auto& f : r.fields) fields.push_back(to_json(f));
  return json{{"dataset_id", r.dataset_id},
              {"label", r.label},
              {"timestamp_format", r.timestamp_format},
              {"split", {{"seed", r.split_seed}, {"ratios", r.ratios}}},
              {"fields", fields}};
}

}  // namespace barsctr::data

#pragma once

#include <algorithm>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "barsctr/digest.hpp"
#include "barsctr/error.hpp"

namespace barsctr {

using json = nlohmann::json;

// Rejects keys outside `allowed`; configuration typos are hard errors.
inline void require_known_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                               std::string_view context) {
  if (!obj.is_object()) throw ConfigError(std::string(context) + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(std::string(context) + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, std::string_view context) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(context) + "." + key + ": " + e.what());
  }
}

template <class T>
T get_required(const json& obj, const char* key, std::string_view context) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(std::string(context) + ": missing required key '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(context) + "." + key + ": " + e.what());
  }
}

// Canonical text: keys sorted (nlohmann's default map), no whitespace.
inline std::string canonical_dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::strict); }

inline std::string json_digest(const json& j) { return md5_hex(canonical_dump(j)); }

inline json load_json_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void save_json_file(const std::filesystem::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

}  // namespace barsctr

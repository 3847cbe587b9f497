#pragma once

#include <string>

#include <json.hpp>

#include "cdid/error.hpp"

namespace cdid::jsonu {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, path + ": expected object");
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::SchemaError, path + "." + key + ": missing");
  return *it;
}

template <typename T>
T get_as(const nlohmann::json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::SchemaError, path + ": wrong type");
  }
}

/// Reads `key` into `out` when present; leaves `out` untouched otherwise.
template <typename T>
bool read_optional(const nlohmann::json& j, const char* key, const std::string& path, T& out) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, path + ": expected object");
  auto it = j.find(key);
  if (it == j.end()) return false;
  out = get_as<T>(*it, path + "." + key);
  return true;
}

}  // namespace cdid::jsonu

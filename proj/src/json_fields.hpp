#pragma once

// Field accessors that turn schema violations into DataError messages naming
// the offending field path.

#include "echogrid/error.hpp"
#include "echogrid/geometry.hpp"

#include <json.hpp>

#include <cmath>
#include <string>
#include <string_view>

namespace echogrid::detail {

using nlohmann::json;

inline std::string join_path(std::string_view parent, std::string_view key) {
  if (parent.empty()) return std::string(key);
  return std::string(parent) + "." + std::string(key);
}

[[noreturn]] inline void field_error(std::string_view path, std::string_view what) {
  throw DataError("field '" + std::string(path) + "': " + std::string(what));
}

inline const json& require(const json& obj, std::string_view key, std::string_view parent) {
  if (!obj.is_object()) field_error(parent.empty() ? "<root>" : parent, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) field_error(join_path(parent, key), "missing");
  return *it;
}

inline double as_number(const json& v, std::string_view path) {
  if (!v.is_number()) field_error(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) field_error(path, "expected a finite number");
  return d;
}

inline double number_field(const json& obj, std::string_view key, std::string_view parent) {
  return as_number(require(obj, key, parent), join_path(parent, key));
}

inline std::string string_field(const json& obj, std::string_view key, std::string_view parent) {
  const json& v = require(obj, key, parent);
  if (!v.is_string()) field_error(join_path(parent, key), "expected a string");
  return v.get<std::string>();
}

inline Vec3 as_vec3(const json& v, std::string_view path) {
  if (!v.is_array() || v.size() != 3) field_error(path, "expected an array of 3 numbers");
  Vec3 out;
  for (int i = 0; i < 3; ++i) out[i] = as_number(v[static_cast<std::size_t>(i)], path);
  return out;
}

inline Vec3 vec3_field(const json& obj, std::string_view key, std::string_view parent) {
  return as_vec3(require(obj, key, parent), join_path(parent, key));
}

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

/// Parses text, rethrowing syntax errors as DataError (the message carries
/// line and column).
inline json parse_document(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(e.what());
  }
}

}  // namespace echogrid::detail

#pragma once

#include <charconv>
#include <cmath>
#include <string>

#include <json.hpp>

namespace cdid {

/// Shortest round-trip decimal; "nan" for NaN so CSV cells stay parseable.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// JSON has no NaN; undefined values become null.
inline nlohmann::json json_number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace cdid

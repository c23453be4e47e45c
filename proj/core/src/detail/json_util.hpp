#pragma once

#include <initializer_list>
#include <set>
#include <string>

#include "gridgin/errors.hpp"
#include "json.hpp"

namespace gridgin::detail {

using nlohmann::json;

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

inline json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line_of(text, e.byte));
  }
}

// Rejects keys outside `fields`; with `all_required`, also missing ones.
inline void check_keys(const json& j, const std::string& where,
                       std::initializer_list<const char*> fields, bool all_required) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  const std::set<std::string> allowed(fields.begin(), fields.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ParseError(where + ": unknown field '" + key + "'");
  }
  if (!all_required) return;
  for (const char* f : fields) {
    if (!j.contains(f)) throw ParseError(where + ": missing field '" + std::string(f) + "'");
  }
}

template <typename T>
T get_field(const json& j, const char* field, const std::string& where) {
  try {
    return j.at(field).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": bad value for '" + field + "': " + e.what());
  }
}

// Overwrites `out` only when the key is present.
template <typename T>
void get_optional(const json& j, const char* field, const std::string& where, T& out) {
  if (j.contains(field)) out = get_field<T>(j, field, where);
}

}  // namespace gridgin::detail

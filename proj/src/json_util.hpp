#pragma once

// Shared nlohmann/json helpers for the line-delimited formats.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlagen/errors.hpp"
#include "vlagen/geodesy.hpp"

namespace vlagen::jsonu {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Thrown by the accessors below; callers rewrap it with line context.
struct FieldError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class J>
const J& field(const J& obj, const char* key) {
  if (!obj.is_object()) throw FieldError("record is not a JSON object");
  auto it = obj.find(key);
  if (it == obj.end()) throw FieldError(std::string("missing key '") + key + "'");
  return *it;
}

template <class J>
double number(const J& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_number()) throw FieldError(std::string("'") + key + "' is not a number");
  return v.template get<double>();
}

template <class J>
std::int64_t integer(const J& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_number_integer())
    throw FieldError(std::string("'") + key + "' is not an integer");
  return v.template get<std::int64_t>();
}

template <class J>
bool boolean(const J& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_boolean()) throw FieldError(std::string("'") + key + "' is not a boolean");
  return v.template get<bool>();
}

template <class J>
std::string string(const J& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_string()) throw FieldError(std::string("'") + key + "' is not a string");
  return v.template get<std::string>();
}

template <class J>
double number_or(const J& obj, const char* key, double fallback) {
  return obj.contains(key) ? number(obj, key) : fallback;
}

template <class J>
bool boolean_or(const J& obj, const char* key, bool fallback) {
  return obj.contains(key) ? boolean(obj, key) : fallback;
}

template <class J>
Vec3 vec3(const J& v, const char* what) {
  if (!v.is_array() || v.size() != 3)
    throw FieldError(std::string("'") + what + "' is not a 3-vector");
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    if (!v[i].is_number())
      throw FieldError(std::string("'") + what + "' has a non-numeric component");
    out[i] = v[i].template get<double>();
  }
  return out;
}

template <class J>
Vec3 vec3_at(const J& obj, const char* key) {
  return vec3(field(obj, key), key);
}

template <class J = ordered_json>
J to_json(const Vec3& v) {
  return J::array({v.x(), v.y(), v.z()});
}

template <class J, class M>
J matrix_to_json(const M& m) {
  J rows = J::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    J row = J::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class M, class J>
M matrix_from_json(const J& v, const char* what) {
  M m;
  if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != m.rows())
    throw FieldError(std::string("'") + what + "' has the wrong row count");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto& row = v[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols())
      throw FieldError(std::string("'") + what + "' has the wrong column count");
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!row[c].is_number())
        throw FieldError(std::string("'") + what + "' has a non-numeric entry");
      m(r, c) = row[c].template get<double>();
    }
  }
  return m;
}

/// Reads a whole file; throws IoError.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Splits on '\n'; a trailing empty line is dropped.
std::vector<std::string> split_lines(const std::string& text);

std::string dump_line(const ordered_json& j);

}  // namespace vlagen::jsonu

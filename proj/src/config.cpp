#include "epikit/config.hpp"

#include <cmath>

namespace epikit {

std::string child_pointer(const std::string& base, const std::string& key) {
  std::string esc;
  for (char c : key) {
    if (c == '~') esc += "~0";
    else if (c == '/') esc += "~1";
    else esc += c;
  }
  return base + "/" + esc;
}

std::string child_pointer(const std::string& base, std::size_t index) { return base + "/" + std::to_string(index); }

void require_object(const nlohmann::json& j, const std::string& ptr, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(ptr.empty() ? "/" : ptr, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) known = known || it.key() == a;
    if (!known) throw ConfigError(child_pointer(ptr, it.key()), "unknown field");
  }
}

const nlohmann::json& require_member(const nlohmann::json& j, const std::string& ptr, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(child_pointer(ptr, key), "missing required field");
  return *it;
}

double read_number(const nlohmann::json& j, const std::string& ptr) {
  if (!j.is_number()) throw ConfigError(ptr, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(ptr, "expected a finite number");
  return v;
}

double read_positive(const nlohmann::json& j, const std::string& ptr) {
  const double v = read_number(j, ptr);
  if (!(v > 0.0)) throw ConfigError(ptr, "expected a positive number");
  return v;
}

std::size_t read_index(const nlohmann::json& j, const std::string& ptr) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError(ptr, "expected a nonnegative integer");
  return j.get<std::size_t>();
}

std::string read_string(const nlohmann::json& j, const std::string& ptr) {
  if (!j.is_string()) throw ConfigError(ptr, "expected a string");
  return j.get<std::string>();
}

bool read_bool(const nlohmann::json& j, const std::string& ptr) {
  if (!j.is_boolean()) throw ConfigError(ptr, "expected true or false");
  return j.get<bool>();
}

std::vector<double> read_numbers(const nlohmann::json& j, const std::string& ptr) {
  if (!j.is_array()) throw ConfigError(ptr, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_number(j[i], child_pointer(ptr, i)));
  return out;
}

std::vector<std::size_t> read_indices(const nlohmann::json& j, const std::string& ptr) {
  if (!j.is_array()) throw ConfigError(ptr, "expected an array of indices");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_index(j[i], child_pointer(ptr, i)));
  return out;
}

}  // namespace epikit

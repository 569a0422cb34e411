// Strict JSON reading: every error names the JSON pointer of the offending
// value, and unknown keys are rejected.
#ifndef EPIKIT_CONFIG_HPP
#define EPIKIT_CONFIG_HPP

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace epikit {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string pointer, const std::string& what)
      : std::runtime_error(pointer + ": " + what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

/// JSON pointer of `key` below `base` ("~" and "/" escaped).
std::string child_pointer(const std::string& base, const std::string& key);
std::string child_pointer(const std::string& base, std::size_t index);

/// Throws ConfigError unless j is an object whose keys all appear in `allowed`.
void require_object(const nlohmann::json& j, const std::string& ptr, std::initializer_list<const char*> allowed);

/// Member lookup; throws ConfigError if missing.
const nlohmann::json& require_member(const nlohmann::json& j, const std::string& ptr, const char* key);

double read_number(const nlohmann::json& j, const std::string& ptr);
double read_positive(const nlohmann::json& j, const std::string& ptr);
std::size_t read_index(const nlohmann::json& j, const std::string& ptr);
std::string read_string(const nlohmann::json& j, const std::string& ptr);
bool read_bool(const nlohmann::json& j, const std::string& ptr);
std::vector<double> read_numbers(const nlohmann::json& j, const std::string& ptr);
std::vector<std::size_t> read_indices(const nlohmann::json& j, const std::string& ptr);

/// Reads an optional member into `out` through `read`, leaving the default when absent.
template <typename T, typename Read>
void read_optional(const nlohmann::json& j, const std::string& ptr, const char* key, T& out, Read read) {
  auto it = j.find(key);
  if (it != j.end()) out = read(*it, child_pointer(ptr, key));
}

}  // namespace epikit

#endif  // EPIKIT_CONFIG_HPP

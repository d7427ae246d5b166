#pragma once

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "saferoa/poly.hpp"

namespace saferoa {

using Json = nlohmann::ordered_json;

/// Configuration problem located at a JSON path such as "learn.kernel.sigma_f".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& what);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

std::string join_path(const std::string& base, const std::string& key);

/// Rejects j unless it is an object whose keys all appear in `allowed`.
void check_object(const Json& j, const std::string& path, std::initializer_list<const char*> allowed);

double get_number(const Json& j, const char* key, const std::string& path);
double get_number(const Json& j, const char* key, const std::string& path, double fallback);
int get_int(const Json& j, const char* key, const std::string& path);
int get_int(const Json& j, const char* key, const std::string& path, int fallback);
bool get_bool(const Json& j, const char* key, const std::string& path, bool fallback);
std::string get_string(const Json& j, const char* key, const std::string& path);
std::string get_string(const Json& j, const char* key, const std::string& path, const std::string& fallback);
std::vector<double> get_numbers(const Json& j, const char* key, const std::string& path);
std::vector<double> get_numbers(const Json& j, const char* key, const std::string& path, std::vector<double> fallback);

/// Polynomial as a list of {"exponents": [...], "coeff": c} records.
Json polynomial_to_json(const Polynomial& p);
Polynomial polynomial_from_json(const Json& j, int nvars, const std::string& path);

}  // namespace saferoa

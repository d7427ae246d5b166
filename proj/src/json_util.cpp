#include "saferoa/json_util.hpp"

#include <fmt/format.h>

namespace saferoa {

ConfigError::ConfigError(const std::string& path, const std::string& what)
    : std::runtime_error(path.empty() ? what : fmt::format("{}: {}", path, what)), path_(path) {}

std::string join_path(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

void check_object(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError(join_path(path, key), "unknown key");
  }
}

namespace {

const Json& require(const Json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError(join_path(path, key), "missing required key");
  return j.at(key);
}

double as_number(const Json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

}  // namespace

double get_number(const Json& j, const char* key, const std::string& path) {
  return as_number(require(j, key, path), join_path(path, key));
}

double get_number(const Json& j, const char* key, const std::string& path, double fallback) {
  return j.contains(key) ? get_number(j, key, path) : fallback;
}

int get_int(const Json& j, const char* key, const std::string& path) {
  const Json& v = require(j, key, path);
  if (!v.is_number_integer()) throw ConfigError(join_path(path, key), "expected an integer");
  return v.get<int>();
}

int get_int(const Json& j, const char* key, const std::string& path, int fallback) {
  return j.contains(key) ? get_int(j, key, path) : fallback;
}

bool get_bool(const Json& j, const char* key, const std::string& path, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) throw ConfigError(join_path(path, key), "expected true or false");
  return j.at(key).get<bool>();
}

std::string get_string(const Json& j, const char* key, const std::string& path) {
  const Json& v = require(j, key, path);
  if (!v.is_string()) throw ConfigError(join_path(path, key), "expected a string");
  return v.get<std::string>();
}

std::string get_string(const Json& j, const char* key, const std::string& path, const std::string& fallback) {
  return j.contains(key) ? get_string(j, key, path) : fallback;
}

std::vector<double> get_numbers(const Json& j, const char* key, const std::string& path) {
  const Json& v = require(j, key, path);
  const std::string p = join_path(path, key);
  if (!v.is_array()) throw ConfigError(p, "expected an array of numbers");
  std::vector<double> out;
  for (size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], fmt::format("{}[{}]", p, i)));
  return out;
}

std::vector<double> get_numbers(const Json& j, const char* key, const std::string& path, std::vector<double> fallback) {
  return j.contains(key) ? get_numbers(j, key, path) : fallback;
}

Json polynomial_to_json(const Polynomial& p) {
  Json arr = Json::array();
  for (const auto& [m, c] : p.terms()) arr.push_back({{"exponents", m.exponents()}, {"coeff", c}});
  return arr;
}

Polynomial polynomial_from_json(const Json& j, int nvars, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected a list of terms");
  Polynomial p(nvars);
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string tp = fmt::format("{}[{}]", path, i);
    check_object(j[i], tp, {"exponents", "coeff"});
    const Json& e = require(j[i], "exponents", tp);
    if (!e.is_array() || static_cast<int>(e.size()) != nvars) {
      throw ConfigError(join_path(tp, "exponents"), fmt::format("expected {} exponents", nvars));
    }
    std::vector<int> ex;
    for (const auto& v : e) {
      if (!v.is_number_integer() || v.get<int>() < 0) throw ConfigError(join_path(tp, "exponents"), "expected non-negative integers");
      ex.push_back(v.get<int>());
    }
    p.add_term(Monomial(std::move(ex)), get_number(j[i], "coeff", tp));
  }
  return p;
}

}  // namespace saferoa

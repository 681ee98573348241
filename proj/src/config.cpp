#include "tetherkit/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "tetherkit/errors.hpp"

namespace tetherkit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, text));
  }
  if (trim(text.substr(used)) != "" || !std::isfinite(v)) {
    throw ConfigError(fmt::format("{}: '{}' is not a finite number", key, text));
  }
  return v;
}

}  // namespace

const std::vector<std::string>& Config::known_keys() {
  static const std::vector<std::string> keys = {
      // plant
      "m0", "m1", "m2", "J0", "rho1", "rho2", "l1", "l2", "g",
      // estimation
      "Qk_scale", "Rk_scale", "gate", "init_cov_nominal", "init_cov_disturbance",
      // measurement synthesis
      "meas_variance",
      // timing
      "dt_truth", "dt_filter", "duration",
      // controller
      "kp", "ki", "kd", "integral_limit", "max_thrust",
      // disturbances
      "d_p1", "d_p2", "d_p0", "d_q0", "pulse_d_p0", "pulse_start", "pulse_end",
      // initial state
      "p0_init", "q1_tilt", "initial_error",
      // metrics
      "rmse_window", "settle_window", "convergence_threshold",
      // observability sweep
      "obs_samples", "obs_seed",
      // statistical check
      "nees_runs", "nees_duration"};
  return keys;
}

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("line {}: expected key = value", lineno));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError(fmt::format("line {}: empty key or value", lineno));
    }
    if (cfg.has(key)) throw ConfigError(fmt::format("line {}: duplicate key '{}'", lineno, key));
    cfg.set(key, value);
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void Config::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw ConfigError(fmt::format("unknown config key '{}'", key));
  }
  values_[key] = value;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number(key, it->second);
}

int Config::get_int(const std::string& key, int fallback) const {
  const double v = get_double(key, fallback);
  if (v != std::floor(v)) throw ConfigError(fmt::format("{}: expected an integer", key));
  return static_cast<int>(v);
}

Vec3 Config::get_vec3(const std::string& key, const Vec3& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::istringstream in(it->second);
  std::string part;
  std::vector<double> parts;
  while (std::getline(in, part, ',')) parts.push_back(parse_number(key, trim(part)));
  if (parts.size() != 3) throw ConfigError(fmt::format("{}: expected three components", key));
  return {parts[0], parts[1], parts[2]};
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t Config::hash() const { return fnv1a64(dump()); }

std::string Config::hash_hex() const { return fmt::format("{:016x}", hash()); }

}  // namespace tetherkit

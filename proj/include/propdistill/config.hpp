#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace propdistill {

// Key-value run configuration with file < environment < command-line
// precedence. Every key is validated against the schema; unknown keys are
// rejected. The resolved map is echoed into each command's output
// directory.
class RunConfig {
 public:
  static const std::set<std::string>& schema() {
    static const std::set<std::string> keys = {
        "data",        "out",           "scenario",      "teacher",
        "loss",        "alpha",         "gamma",         "steps",
        "kl_direction", "temperature",  "lr",            "weight_decay",
        "dropout",     "epochs",        "patience",      "batch_size",
        "hidden",      "teacher_hidden", "seed",         "seeds",
        "ind_fraction", "per_class_train", "per_class_val", "self_loops",
        "appnp_gamma", "appnp_steps",   "teacher_dir",   "losses",
        "gammas",      "steps_list",    "chains",        "length",
        "classes",     "noise",         "n",             "d",
        "h",           "feature_dim",   "sep",           "threads"};
    return keys;
  }

  void set(const std::string& key, const std::string& value) {
    if (!schema().count(key))
      throw std::invalid_argument("unknown config key: " + key);
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  // "key = value" lines, '#' comments
  void load_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read config file: " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        if (trim(line).empty()) continue;
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": expected key = value");
      }
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  // PROPDISTILL_<KEY> environment variables override the file layer.
  void load_env() {
    for (const std::string& key : schema()) {
      std::string env_name = "PROPDISTILL_";
      for (char c : key)
        env_name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (const char* v = std::getenv(env_name.c_str())) values_[key] = v;
    }
  }

  std::string get_str(const std::string& key,
                      const std::string& fallback = "") const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config key '" + key +
                                  "' expects a number, got '" + it->second +
                                  "'");
    }
  }

  int get_int(const std::string& key, int fallback) const {
    const double v = get_double(key, fallback);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
      throw std::invalid_argument("config key '" + key + "' expects an integer");
    return i;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw std::invalid_argument("config key '" + key + "' expects a boolean");
  }

  std::vector<std::uint64_t> get_seeds(
      const std::vector<std::uint64_t>& fallback) const {
    if (has("seeds")) {
      std::vector<std::uint64_t> out;
      for (const std::string& tok : split_list(get_str("seeds")))
        out.push_back(std::stoull(tok));
      if (out.empty()) throw std::invalid_argument("empty seeds list");
      return out;
    }
    if (has("seed")) return {static_cast<std::uint64_t>(get_int("seed", 0))};
    return fallback;
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& tok : split_list(get_str(key)))
      out.push_back(std::stod(tok));
    return out;
  }

  std::vector<std::string> get_str_list(const std::string& key) const {
    return split_list(get_str(key));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

  void dump(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream f(dir / "resolved_config.json");
    f << to_json().dump(2) << '\n';
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string tok;
    std::istringstream ss(s);
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (!tok.empty()) out.push_back(tok);
    }
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace propdistill

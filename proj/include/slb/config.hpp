#pragma once

// Flat key=value experiment configuration. '#' starts a comment, keys are
// dotted paths, unknown keys are errors so sweep typos fail loudly.
// Serialization is canonical (sorted keys, %.17g floats) and round-trips
// losslessly through parse().

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "slb/env.hpp"
#include "slb/errors.hpp"

namespace slb {

struct BetaConfig {
  std::string scheme = "setup1";  // setup1 | setup2
  int sparsity = 1;
  std::uint64_t seed = 1;
};

struct DatasetConfig {
  std::string path;
  std::string label_col = "label";
  bool log2 = false;
};

struct EnvConfig {
  int num_arms = 2;
  int dim = 10;
  std::string context = "ec";  // ec | ar1 | truncgauss | dataset
  double rho = 0.3;
  double phi = 0.3;
  double x_max = 1.0;
  std::optional<double> clip_x_max;
  double noise_sigma = 1.0;
  std::string noise = "gaussian";  // gaussian | uniform | rademacher
  BetaConfig beta;
  std::optional<DatasetConfig> dataset;
};

struct PolicyConfig {
  std::string name;  // block name; also the trace label
  std::string kind;  // registered policy kind
  std::map<std::string, std::string> params;
};

struct ExperimentConfig {
  int horizon = 100;
  int replications = 1;
  std::uint64_t base_seed = 1;
  int log_cadence = 0;
  int parallelism = 1;
  bool trace_timing = false;  // when false the trace micros column is zeroed
  std::string output_dir = "out";
  EnvConfig env;
  std::vector<PolicyConfig> policies;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct KvReader {
  std::map<std::string, std::string> entries;
  std::map<std::string, bool> consumed;

  static KvReader from_text(const std::string& text) {
    KvReader kv;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
      ++line_no;
      size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
      if (kv.entries.count(key))
        throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      kv.entries[key] = value;
      kv.consumed[key] = false;
    }
    return kv;
  }

  std::optional<std::string> take(const std::string& key) {
    auto it = entries.find(key);
    if (it == entries.end()) return std::nullopt;
    consumed[key] = true;
    return it->second;
  }

  double take_double(const std::string& key, double fallback) {
    auto v = take(key);
    if (!v) return fallback;
    char* end = nullptr;
    double parsed = std::strtod(v->c_str(), &end);
    if (end == v->c_str() || *end != '\0')
      throw ConfigError("config key '" + key + "': expected a number, got '" + *v + "'");
    return parsed;
  }

  long long take_int(const std::string& key, long long fallback) {
    auto v = take(key);
    if (!v) return fallback;
    try {
      size_t used = 0;
      long long parsed = std::stoll(*v, &used);
      if (used != v->size()) throw std::invalid_argument("trailing");
      return parsed;
    } catch (...) {
      throw ConfigError("config key '" + key + "': expected an integer, got '" + *v + "'");
    }
  }

  bool take_bool(const std::string& key, bool fallback) {
    auto v = take(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + *v + "'");
  }

  std::string take_string(const std::string& key, const std::string& fallback) {
    auto v = take(key);
    return v ? *v : fallback;
  }

  void fail_on_unconsumed() const {
    for (const auto& [key, used] : consumed)
      if (!used) throw ConfigError("unknown config key '" + key + "'");
  }
};

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  auto kv = detail::KvReader::from_text(text);
  ExperimentConfig cfg;
  cfg.horizon = static_cast<int>(kv.take_int("horizon", cfg.horizon));
  cfg.replications = static_cast<int>(kv.take_int("replications", cfg.replications));
  cfg.base_seed = static_cast<std::uint64_t>(kv.take_int("base_seed", 1));
  cfg.log_cadence = static_cast<int>(kv.take_int("log_cadence", cfg.log_cadence));
  cfg.parallelism = static_cast<int>(kv.take_int("parallelism", cfg.parallelism));
  cfg.trace_timing = kv.take_bool("trace_timing", cfg.trace_timing);
  cfg.output_dir = kv.take_string("output_dir", cfg.output_dir);

  cfg.env.num_arms = static_cast<int>(kv.take_int("env.num_arms", cfg.env.num_arms));
  cfg.env.dim = static_cast<int>(kv.take_int("env.dim", cfg.env.dim));
  cfg.env.context = kv.take_string("env.context", cfg.env.context);
  cfg.env.rho = kv.take_double("env.rho", cfg.env.rho);
  cfg.env.phi = kv.take_double("env.phi", cfg.env.phi);
  cfg.env.x_max = kv.take_double("env.x_max", cfg.env.x_max);
  if (auto clip = kv.take("env.clip_x_max")) cfg.env.clip_x_max = std::stod(*clip);
  cfg.env.noise_sigma = kv.take_double("env.noise_sigma", cfg.env.noise_sigma);
  cfg.env.noise = kv.take_string("env.noise", cfg.env.noise);
  cfg.env.beta.scheme = kv.take_string("env.beta.scheme", cfg.env.beta.scheme);
  cfg.env.beta.sparsity = static_cast<int>(kv.take_int("env.beta.sparsity", cfg.env.beta.sparsity));
  cfg.env.beta.seed = static_cast<std::uint64_t>(kv.take_int("env.beta.seed", 1));
  if (auto path = kv.take("env.dataset.path")) {
    DatasetConfig ds;
    ds.path = *path;
    ds.label_col = kv.take_string("env.dataset.label_col", ds.label_col);
    ds.log2 = kv.take_bool("env.dataset.log2", ds.log2);
    cfg.env.dataset = ds;
  }

  // policy blocks: policy.<name>.<key>
  std::map<std::string, std::vector<std::string>> policy_keys;
  for (const auto& [key, value] : kv.entries) {
    if (key.rfind("policy.", 0) != 0) continue;
    size_t dot = key.find('.', 7);
    if (dot == std::string::npos)
      throw ConfigError("config key '" + key + "': expected policy.<name>.<param>");
    policy_keys[key.substr(7, dot - 7)].push_back(key.substr(dot + 1));
  }
  for (auto& [name, keys] : policy_keys) {
    PolicyConfig pc;
    pc.name = name;
    pc.kind = kv.take_string("policy." + name + ".kind", name);
    for (const auto& param : keys) {
      if (param == "kind") continue;
      pc.params[param] = *kv.take("policy." + name + "." + param);
    }
    cfg.policies.push_back(std::move(pc));
  }
  std::sort(cfg.policies.begin(), cfg.policies.end(),
            [](const PolicyConfig& a, const PolicyConfig& b) { return a.name < b.name; });

  kv.fail_on_unconsumed();

  if (cfg.horizon < 1) throw ConfigError("horizon must be >= 1");
  if (cfg.replications < 1) throw ConfigError("replications must be >= 1");
  if (cfg.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (cfg.policies.empty()) throw ConfigError("config must name at least one policy block");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> out;
  out["horizon"] = std::to_string(cfg.horizon);
  out["replications"] = std::to_string(cfg.replications);
  out["base_seed"] = std::to_string(cfg.base_seed);
  out["log_cadence"] = std::to_string(cfg.log_cadence);
  out["parallelism"] = std::to_string(cfg.parallelism);
  out["trace_timing"] = cfg.trace_timing ? "true" : "false";
  out["output_dir"] = cfg.output_dir;
  out["env.num_arms"] = std::to_string(cfg.env.num_arms);
  out["env.dim"] = std::to_string(cfg.env.dim);
  out["env.context"] = cfg.env.context;
  out["env.rho"] = detail::format_double(cfg.env.rho);
  out["env.phi"] = detail::format_double(cfg.env.phi);
  out["env.x_max"] = detail::format_double(cfg.env.x_max);
  if (cfg.env.clip_x_max) out["env.clip_x_max"] = detail::format_double(*cfg.env.clip_x_max);
  out["env.noise_sigma"] = detail::format_double(cfg.env.noise_sigma);
  out["env.noise"] = cfg.env.noise;
  out["env.beta.scheme"] = cfg.env.beta.scheme;
  out["env.beta.sparsity"] = std::to_string(cfg.env.beta.sparsity);
  out["env.beta.seed"] = std::to_string(cfg.env.beta.seed);
  if (cfg.env.dataset) {
    out["env.dataset.path"] = cfg.env.dataset->path;
    out["env.dataset.label_col"] = cfg.env.dataset->label_col;
    out["env.dataset.log2"] = cfg.env.dataset->log2 ? "true" : "false";
  }
  for (const auto& pc : cfg.policies) {
    out["policy." + pc.name + ".kind"] = pc.kind;
    for (const auto& [param, value] : pc.params) out["policy." + pc.name + "." + param] = value;
  }
  std::string text;
  for (const auto& [key, value] : out) text += key + " = " + value + "\n";
  return text;
}

// Apply a single "key = value" override, reusing the parser so unknown keys
// still fail. Used by the sweep subcommand.
inline ExperimentConfig override_config(const ExperimentConfig& cfg, const std::string& key,
                                        const std::string& value) {
  std::string text = serialize_config(cfg);
  std::string prefix = key + " = ";
  std::stringstream ss(text);
  std::string line, rebuilt;
  bool replaced = false;
  while (std::getline(ss, line)) {
    if (line.rfind(prefix, 0) == 0) {
      rebuilt += prefix + value + "\n";
      replaced = true;
    } else {
      rebuilt += line + "\n";
    }
  }
  if (!replaced) rebuilt += prefix + value + "\n";
  return parse_config(rebuilt);
}

}  // namespace slb

#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "macsim/error.hpp"
#include "macsim/instances.hpp"
#include "macsim/trainer.hpp"

namespace macsim {

// Flat key -> raw value text. Section headers prefix keys as "section.key".
using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string unquote(const std::string& v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) return v.substr(1, v.size() - 2);
  return v;
}

inline std::string strip_comment(const std::string& line) {
  bool in_str = false;
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_str) {
      if (c == quote) in_str = false;
    } else if (c == '"' || c == '\'') {
      in_str = true;
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

inline void flatten_json(const Json& j, const std::string& prefix, ConfigMap& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) flatten_json(*it, key, out);
    else if (it->is_string()) out[key] = it->get<std::string>();
    else out[key] = it->dump();
  }
}

}  // namespace detail

/// Subset of TOML: `[section]` headers, `key = value` pairs with string,
/// integer, float or boolean values, and `#` comments.
inline ConfigMap parse_toml(std::istream& in) {
  ConfigMap out;
  std::string section;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = detail::trim(detail::strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section header");
      section = detail::trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string val = detail::unquote(detail::trim(s.substr(eq + 1)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out[section.empty() ? key : section + "." + key] = val;
  }
  return out;
}

inline ConfigMap parse_config_text(const std::string& text, bool json) {
  if (json) {
    Json j;
    try {
      j = Json::parse(text);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("malformed JSON config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("JSON config must be an object");
    ConfigMap out;
    detail::flatten_json(j, "", out);
    return out;
  }
  std::istringstream in(text);
  return parse_toml(in);
}

inline ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const bool json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  return parse_config_text(ss.str(), json);
}

// Parses "key=value".
inline std::pair<std::string, std::string> parse_override(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + kv + "' is not of the form key=value");
  return {detail::trim(kv.substr(0, eq)), detail::unquote(detail::trim(kv.substr(eq + 1)))};
}

namespace detail {

inline long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  if (!parse_int_token(v, out)) throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

inline double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

}  // namespace detail

inline void apply_setting(TrainConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  const auto i = [&] { return static_cast<int>(to_int(key, v)); };
  if (key == "problem") {
    c.problem.problem = parse_problem_kind(v);
    c.model.problem = c.problem.problem;
  } else if (key == "jobs") c.problem.num_jobs = i();
  else if (key == "machines") c.problem.num_machines = i();
  else if (key == "stages") c.problem.num_stages = i();
  else if (key == "epochs") c.epochs = i();
  else if (key == "instances_per_epoch") c.instances_per_epoch = i();
  else if (key == "beta") c.beta = i();
  else if (key == "batch_size") c.batch_size = i();
  else if (key == "lr") c.lr = to_real(key, v);
  else if (key == "lr_min") c.lr_min = to_real(key, v);
  else if (key == "grad_clip") c.grad_clip = to_real(key, v);
  else if (key == "loss") c.loss = parse_loss_kind(v);
  else if (key == "penalty") c.penalty = to_bool(key, v);
  else if (key == "lambda0") c.lambda0 = to_real(key, v);
  else if (key == "gamma") c.gamma = to_real(key, v);
  else if (key == "val_size") c.val_size = i();
  else if (key == "gen_decode") c.gen_decode = parse_decode_mode(v);
  else if (key == "val_decode") c.val_decode = parse_decode_mode(v);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_int(key, v));
  else if (key == "threads") c.threads = i();
  else if (key == "model.d") c.model.d = i();
  else if (key == "model.heads") c.model.heads = i();
  else if (key == "model.layers") c.model.layers = i();
  else if (key == "model.ffn_hidden") c.model.ffn_hidden = i();
  else if (key == "model.mix_hidden") c.model.mix_hidden = i();
  else if (key == "model.clip") c.model.clip = to_real(key, v);
  else if (key == "model.dropout") c.model.dropout = to_real(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

// "problem" is applied first so problem-dependent keys see the right kind.
inline TrainConfig make_train_config(const ConfigMap& settings, const std::vector<std::string>& overrides = {}) {
  ConfigMap all = settings;
  for (const auto& o : overrides) {
    auto [k, v] = parse_override(o);
    all[k] = v;
  }
  TrainConfig c;
  if (auto it = all.find("problem"); it != all.end()) apply_setting(c, it->first, it->second);
  for (const auto& [k, v] : all)
    if (k != "problem") apply_setting(c, k, v);
  validate(c);
  return c;
}

inline Json config_to_json(const TrainConfig& c) {
  Json j;
  j["problem"] = std::string(to_string(c.problem.problem));
  j["jobs"] = c.problem.num_jobs;
  j["machines"] = c.problem.num_machines;
  j["stages"] = c.problem.num_stages;
  j["epochs"] = c.epochs;
  j["instances_per_epoch"] = c.instances_per_epoch;
  j["beta"] = c.beta;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["lr_min"] = c.lr_min;
  j["grad_clip"] = c.grad_clip;
  j["loss"] = std::string(to_string(c.loss));
  j["penalty"] = c.penalty;
  if (c.lambda0) j["lambda0"] = *c.lambda0;
  if (c.gamma) j["gamma"] = *c.gamma;
  j["val_size"] = c.val_size;
  j["gen_decode"] = std::string(to_string(c.gen_decode));
  j["val_decode"] = std::string(to_string(c.val_decode));
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["model"] = {{"d", c.model.d},           {"heads", c.model.heads},   {"layers", c.model.layers},
                {"ffn_hidden", c.model.ffn_hidden}, {"mix_hidden", c.model.mix_hidden},
                {"clip", c.model.clip},     {"dropout", c.model.dropout}};
  return j;
}

}  // namespace macsim

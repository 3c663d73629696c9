#include "dbm/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace dbm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t as_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

double as_real(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(std::size_t v) { return std::to_string(v); }

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(T RunConfig::*outer, std::size_t T::*inner) {
  return {[=](RunConfig& c, const std::string& k, const std::string& v) {
            (c.*outer).*inner = as_size(k, v);
          },
          [=](const RunConfig& c) { return fmt((c.*outer).*inner); }};
}

template <typename T>
Field real_field(T RunConfig::*outer, double T::*inner) {
  return {[=](RunConfig& c, const std::string& k, const std::string& v) {
            (c.*outer).*inner = as_real(k, v);
          },
          [=](const RunConfig& c) { return fmt((c.*outer).*inner); }};
}

template <typename T>
Field bool_field(T RunConfig::*outer, bool T::*inner) {
  return {[=](RunConfig& c, const std::string& k, const std::string& v) {
            (c.*outer).*inner = as_bool(k, v);
          },
          [=](const RunConfig& c) { return fmt((c.*outer).*inner); }};
}

template <typename E>
Field enum_field(E ModelConfig::*member, E (*parse)(const std::string&),
                 std::string (*name)(E)) {
  return {[=](RunConfig& c, const std::string&, const std::string& v) { c.model.*member = parse(v); },
          [=](const RunConfig& c) { return name(c.model.*member); }};
}

Field top_size(std::size_t RunConfig::*m) {
  return {[=](RunConfig& c, const std::string& k, const std::string& v) { c.*m = as_size(k, v); },
          [=](const RunConfig& c) { return fmt(c.*m); }};
}

ssm::Discretization parse_disc(const std::string& s) {
  if (s == "zoh") return ssm::Discretization::zoh;
  if (s == "euler") return ssm::Discretization::euler;
  throw ConfigError("unknown discretization '" + s + "' (expected zoh or euler)");
}
std::string disc_name(ssm::Discretization d) {
  return d == ssm::Discretization::zoh ? "zoh" : "euler";
}
Precision parse_prec(const std::string& s) {
  try {
    return parse_precision(s);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}
std::string prec_name(Precision p) { return precision_name(p); }

const std::vector<std::pair<std::string, Field>>& fields() {
  using M = ModelConfig;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"architecture", enum_field(&M::architecture, parse_architecture, to_string)},
      {"layers", size_field(&RunConfig::model, &M::layers)},
      {"dim", size_field(&RunConfig::model, &M::dim)},
      {"state_dim", size_field(&RunConfig::model, &M::state_dim)},
      {"expand", size_field(&RunConfig::model, &M::expand)},
      {"conv_width", size_field(&RunConfig::model, &M::conv_width)},
      {"dt_rank", size_field(&RunConfig::model, &M::dt_rank)},
      {"frames_branch1", size_field(&RunConfig::model, &M::frames_branch1)},
      {"frames_branch2", size_field(&RunConfig::model, &M::frames_branch2)},
      {"image_height", size_field(&RunConfig::model, &M::image_height)},
      {"image_width", size_field(&RunConfig::model, &M::image_width)},
      {"patch_t", {[](RunConfig& c, const std::string& k, const std::string& v) {
                     c.model.patch.t = as_size(k, v);
                   },
                   [](const RunConfig& c) { return fmt(c.model.patch.t); }}},
      {"patch_h", {[](RunConfig& c, const std::string& k, const std::string& v) {
                     c.model.patch.h = as_size(k, v);
                   },
                   [](const RunConfig& c) { return fmt(c.model.patch.h); }}},
      {"patch_w", {[](RunConfig& c, const std::string& k, const std::string& v) {
                     c.model.patch.w = as_size(k, v);
                   },
                   [](const RunConfig& c) { return fmt(c.model.patch.w); }}},
      {"num_classes", size_field(&RunConfig::model, &M::num_classes)},
      {"fusion", enum_field(&M::fusion, parse_fusion_variant, to_string)},
      {"lateral_placement", enum_field(&M::placement, parse_lateral_placement, to_string)},
      {"lateral", bool_field(&RunConfig::model, &M::lateral)},
      {"final_fusion", enum_field(&M::final_fusion, parse_final_fusion, to_string)},
      {"skips", bool_field(&RunConfig::model, &M::skips)},
      {"cropping", bool_field(&RunConfig::model, &M::cropping)},
      {"attention_keys", enum_field(&M::attention_keys, parse_attention_keys, to_string)},
      {"gate_bank", enum_field(&M::gate_bank, parse_gate_bank, to_string)},
      {"discretization", enum_field(&M::discretization, parse_disc, disc_name)},
      {"precision", enum_field(&M::precision, parse_prec, prec_name)},
      {"epochs", real_field(&RunConfig::schedule, &Schedule::total_epochs)},
      {"warmup_epochs", real_field(&RunConfig::schedule, &Schedule::warmup_epochs)},
      {"base_lr", real_field(&RunConfig::schedule, &Schedule::base_lr)},
      {"min_lr", real_field(&RunConfig::schedule, &Schedule::min_lr)},
      {"beta1", real_field(&RunConfig::adamw, &AdamWConfig::beta1)},
      {"beta2", real_field(&RunConfig::adamw, &AdamWConfig::beta2)},
      {"adam_eps", real_field(&RunConfig::adamw, &AdamWConfig::eps)},
      {"weight_decay", real_field(&RunConfig::adamw, &AdamWConfig::weight_decay)},
      {"batch_size", top_size(&RunConfig::batch_size)},
      {"synth_train", top_size(&RunConfig::synth_train)},
      {"synth_val", top_size(&RunConfig::synth_val)},
      {"synth_test", top_size(&RunConfig::synth_test)},
      {"synth_frames", size_field(&RunConfig::synth_dims, &SynthDims::frames)},
      {"synth_height", size_field(&RunConfig::synth_dims, &SynthDims::height)},
      {"synth_width", size_field(&RunConfig::synth_dims, &SynthDims::width)},
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [k, f] : fields())
    if (k == key) return &f;
  return nullptr;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : fields()) out.push_back(k);
  out.insert(out.end(), {"frames", "image_size"});
  return out;
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  // shorthands
  if (key == "frames") {
    c.model.frames_branch1 = c.model.frames_branch2 = as_size(key, value);
    return;
  }
  if (key == "image_size") {
    c.model.image_height = c.model.image_width = as_size(key, value);
    return;
  }
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  f->set(c, key, value);
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string at = origin + ":" + std::to_string(n) + ": ";
    if (eq == std::string::npos) throw ConfigError(at + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(at + "missing key");
    if (!seen.insert(key).second) throw ConfigError(at + "key '" + key + "' given twice");
    try {
      set_config_value(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(at + e.what());
    }
  }
  if (!seen.count("min_lr")) c.schedule.min_lr = c.schedule.base_lr / 100.0;
  c.model.validate();
  c.schedule.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string format_config(const RunConfig& c) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(c) + "\n";
  return out;
}

}  // namespace dbm
